#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "plume/alertd/store.hpp"

namespace plume::alertd {

inline constexpr std::array<std::string_view, 5> kLayerNames = {"rgb", "mbmp", "dch4", "prob", "mask"};

struct Image {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> rgba;  // row-major, 4 bytes per pixel
};

std::string encode_png(const Image& img);
Image decode_png(std::string_view bytes);

/// Renders one layer of a stored scene. BadRequest for unknown layers,
/// NotFound when the scene has no products.
Image render_layer(const Store& store, const std::string& scene_id, std::string_view layer);

}  // namespace plume::alertd
