#include "plume/raster/registry.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "plume/errors.hpp"

namespace plume::raster {

std::string_view sector_name(Sector s) {
    switch (s) {
        case Sector::OilGas: return "oil_gas";
        case Sector::Coal: return "coal";
        case Sector::Landfill: return "landfill";
        case Sector::Offshore: return "offshore";
    }
    return "?";
}

Sector parse_sector(std::string_view s) {
    if (s == "oil_gas") return Sector::OilGas;
    if (s == "coal") return Sector::Coal;
    if (s == "landfill") return Sector::Landfill;
    if (s == "offshore") return Sector::Offshore;
    throw FormatError("unknown sector '" + std::string(s) + "'");
}

namespace {

constexpr std::string_view kHeader = "site_id,lon,lat,country,sector,offshore,active";

std::vector<std::string> split_csv_line(const std::string& line, std::size_t lineno) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (quoted) throw FormatError("registry line " + std::to_string(lineno) + ": unterminated quote");
    fields.push_back(std::move(cur));
    return fields;
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += "\"\"";
        else out.push_back(ch);
    }
    return out + "\"";
}

double parse_double(const std::string& s, std::size_t lineno, const char* what) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || p != end)
        throw FormatError("registry line " + std::to_string(lineno) + ": bad " + what + " '" + s + "'");
    return v;
}

bool parse_bool(const std::string& s, std::size_t lineno) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw FormatError("registry line " + std::to_string(lineno) + ": bad boolean '" + s + "'");
}

std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

}  // namespace

std::vector<SiteRecord> parse_site_registry(const std::string& text) {
    std::vector<SiteRecord> out;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != kHeader) throw FormatError("registry header must be '" + std::string(kHeader) + "'");
            header_seen = true;
            continue;
        }
        const auto f = split_csv_line(line, lineno);
        if (f.size() != 7) throw FormatError("registry line " + std::to_string(lineno) + ": expected 7 fields");
        SiteRecord rec;
        rec.site_id = f[0];
        if (rec.site_id.empty()) throw FormatError("registry line " + std::to_string(lineno) + ": empty site_id");
        rec.lon = parse_double(f[1], lineno, "lon");
        rec.lat = parse_double(f[2], lineno, "lat");
        if (rec.lon < -180 || rec.lon > 180 || rec.lat < -90 || rec.lat > 90)
            throw FormatError("registry line " + std::to_string(lineno) + ": coordinates out of range");
        rec.country = f[3];
        rec.sector = parse_sector(f[4]);
        rec.offshore = parse_bool(f[5], lineno);
        rec.active = parse_bool(f[6], lineno);
        if (!seen.insert(rec.site_id).second) throw RegistryConflict("duplicate site_id '" + rec.site_id + "'");
        out.push_back(std::move(rec));
    }
    return out;
}

std::string format_site_registry(const std::vector<SiteRecord>& sites) {
    std::set<std::string> seen;
    std::string out(kHeader);
    out.push_back('\n');
    for (const auto& s : sites) {
        if (!seen.insert(s.site_id).second) throw RegistryConflict("duplicate site_id '" + s.site_id + "'");
        out += quote_if_needed(s.site_id) + ',' + format_double(s.lon) + ',' + format_double(s.lat) + ',' +
               quote_if_needed(s.country) + ',' + std::string(sector_name(s.sector)) + ',' +
               (s.offshore ? "true" : "false") + ',' + (s.active ? "true" : "false") + '\n';
    }
    return out;
}

std::vector<SiteRecord> load_site_registry(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_site_registry(ss.str());
}

void save_site_registry(const std::vector<SiteRecord>& sites, const std::filesystem::path& path) {
    const std::string text = format_site_registry(sites);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out << text;
}

}  // namespace plume::raster
