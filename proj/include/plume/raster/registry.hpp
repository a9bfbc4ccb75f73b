#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace plume::raster {

enum class Sector { OilGas, Coal, Landfill, Offshore };

std::string_view sector_name(Sector s);
Sector parse_sector(std::string_view s);

struct SiteRecord {
    std::string site_id;
    double lon = 0.0;
    double lat = 0.0;
    std::string country;
    Sector sector = Sector::OilGas;
    bool offshore = false;
    bool active = true;
    std::optional<std::string> film_bank_id;  // assigned by the detector, not persisted in the CSV

    friend bool operator==(const SiteRecord&, const SiteRecord&) = default;
};

/// CSV with header `site_id,lon,lat,country,sector,offshore,active`.
/// Throws RegistryConflict on duplicate ids, FormatError on malformed rows.
std::vector<SiteRecord> load_site_registry(const std::filesystem::path& path);
void save_site_registry(const std::vector<SiteRecord>& sites, const std::filesystem::path& path);

std::vector<SiteRecord> parse_site_registry(const std::string& csv_text);
std::string format_site_registry(const std::vector<SiteRecord>& sites);

}  // namespace plume::raster
