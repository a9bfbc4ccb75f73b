#include "plume/alertd/layers.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>

#include "plume/errors.hpp"
#include "plume/raster/geotiff.hpp"

namespace plume::alertd {

namespace fs = std::filesystem;

namespace {

void write_cb(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), n);
}

struct ReadCursor {
    std::string_view bytes;
    std::size_t pos = 0;
};

void read_cb(png_structp png, png_bytep data, png_size_t n) {
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cur->pos + n > cur->bytes.size()) png_error(png, "truncated PNG");
    std::memcpy(data, cur->bytes.data() + cur->pos, n);
    cur->pos += n;
}

void warning_cb(png_structp, png_const_charp) {}
[[noreturn]] void error_cb(png_structp png, png_const_charp) { png_longjmp(png, 1); }

struct Rgb {
    double r, g, b;
};

// sequential ramp, dark purple through orange to pale yellow
Rgb ramp(double t) {
    static constexpr Rgb stops[] = {{0.0, 0.0, 0.02}, {0.34, 0.06, 0.43}, {0.73, 0.21, 0.33},
                                    {0.98, 0.55, 0.04}, {0.99, 1.0, 0.64}};
    t = std::clamp(t, 0.0, 1.0) * 4.0;
    const int i = std::min(static_cast<int>(t), 3);
    const double f = t - i;
    return {stops[i].r + f * (stops[i + 1].r - stops[i].r), stops[i].g + f * (stops[i + 1].g - stops[i].g),
            stops[i].b + f * (stops[i + 1].b - stops[i].b)};
}

std::uint8_t byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

void put(Image& img, std::size_t i, Rgb c, double alpha = 1.0) {
    img.rgba[4 * i] = byte(c.r);
    img.rgba[4 * i + 1] = byte(c.g);
    img.rgba[4 * i + 2] = byte(c.b);
    img.rgba[4 * i + 3] = byte(alpha);
}

Image blank(int rows, int cols) { return {rows, cols, std::vector<std::uint8_t>(4u * rows * cols, 0)}; }

Image sequential(const raster::Raster& r, double lo, double hi) {
    Image img = blank(r.rows(), r.cols());
    const double span = hi > lo ? hi - lo : 1.0;
    for (std::size_t i = 0; i < r.size(); ++i)
        if (std::isfinite(r[i])) put(img, i, ramp((r[i] - lo) / span));
    return img;
}

Image diverging(const raster::Raster& r) {
    double m = 0.0;
    for (double v : r)
        if (std::isfinite(v)) m = std::max(m, std::abs(v));
    if (m == 0.0) m = 1.0;
    Image img = blank(r.rows(), r.cols());
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (!std::isfinite(r[i])) continue;
        const double t = std::clamp(r[i] / m, -1.0, 1.0);
        // negative delta R (absorption) in red
        put(img, i, t < 0 ? Rgb{1.0, 1.0 + t, 1.0 + t} : Rgb{1.0 - t, 1.0 - t, 1.0});
    }
    return img;
}

raster::Raster read_layer(const fs::path& p) {
    if (!fs::exists(p)) throw NotFound("missing layer file " + p.filename().string());
    return raster::read_geotiff(p).grid;
}

}  // namespace

std::string encode_png(const Image& img) {
    if (img.rows <= 0 || img.cols <= 0 || img.rgba.size() != 4u * img.rows * img.cols)
        throw BadRequest("image buffer does not match its shape");
    std::string out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, error_cb, warning_cb);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("png encoding failed");
    }
    {
        png_set_write_fn(png, &out, write_cb, nullptr);
        png_set_IHDR(png, info, img.cols, img.rows, 8, PNG_COLOR_TYPE_RGBA, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (int r = 0; r < img.rows; ++r)
            png_write_row(png, const_cast<png_bytep>(img.rgba.data() + 4u * r * img.cols));
        png_write_end(png, nullptr);
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

Image decode_png(std::string_view bytes) {
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8))
        throw FormatError("not a PNG");
    ReadCursor cur{bytes};
    Image img;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, error_cb, warning_cb);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("malformed PNG");
    }
    {
        png_set_read_fn(png, &cur, read_cb);
        png_read_info(png, info);
        png_set_expand(png);
        png_set_strip_16(png);
        png_set_gray_to_rgb(png);
        png_set_add_alpha(png, 0xff, PNG_FILLER_AFTER);
        png_read_update_info(png, info);
        img.rows = static_cast<int>(png_get_image_height(png, info));
        img.cols = static_cast<int>(png_get_image_width(png, info));
        img.rgba.assign(4u * img.rows * img.cols, 0);
        for (int r = 0; r < img.rows; ++r) png_read_row(png, img.rgba.data() + 4u * r * img.cols, nullptr);
        png_read_end(png, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

Image render_layer(const Store& store, const std::string& scene_id, std::string_view layer) {
    if (std::find(kLayerNames.begin(), kLayerNames.end(), layer) == kLayerNames.end())
        throw BadRequest("unknown layer '" + std::string(layer) + "'");
    const auto rec = store.scene(scene_id);
    if (!rec) throw NotFound("unknown scene " + scene_id);

    if (layer == "rgb") {
        const auto scene = raster::load_scene(rec->bundle);
        Image img = blank(scene.rows(), scene.cols());
        const auto& r = scene.band(raster::Band::Red);
        const auto& g = scene.band(raster::Band::Green);
        const auto& b = scene.band(raster::Band::Blue);
        for (std::size_t i = 0; i < r.size(); ++i) {
            const auto tone = [](double v) { return std::isfinite(v) ? std::pow(std::clamp(v / 0.3, 0.0, 1.0), 0.8) : 0.0; };
            put(img, i, {tone(r[i]), tone(g[i]), tone(b[i])});
        }
        return img;
    }

    const auto pred = store.prediction(scene_id);
    if (!pred) throw NotFound("scene " + scene_id + " has no prediction");
    const fs::path dir = pred->product_dir;
    if (layer == "mbmp") return diverging(read_layer(dir / "mbmp.tif"));
    if (layer == "dch4") {
        const auto d = read_layer(dir / "dch4.tif");
        double hi = 0.0;
        for (double v : d)
            if (std::isfinite(v)) hi = std::max(hi, v);
        return sequential(d, 0.0, hi);
    }
    if (layer == "prob") return sequential(read_layer(dir / "prob.tif"), 0.0, 1.0);

    const fs::path override_path = dir / "override_mask.tif";
    const auto m = read_layer(fs::exists(override_path) ? override_path : dir / "mask.tif");
    Image img = blank(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i] > 0.5) put(img, i, {1.0, 0.85, 0.0});
    return img;
}

}  // namespace plume::alertd
