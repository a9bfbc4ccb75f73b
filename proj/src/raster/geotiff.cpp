#include "plume/raster/geotiff.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <vector>

#include "plume/errors.hpp"

namespace plume::raster {
namespace {

constexpr std::uint16_t kImageWidth = 256;
constexpr std::uint16_t kImageLength = 257;
constexpr std::uint16_t kBitsPerSample = 258;
constexpr std::uint16_t kCompression = 259;
constexpr std::uint16_t kPhotometric = 262;
constexpr std::uint16_t kStripOffsets = 273;
constexpr std::uint16_t kSamplesPerPixel = 277;
constexpr std::uint16_t kRowsPerStrip = 278;
constexpr std::uint16_t kStripByteCounts = 279;
constexpr std::uint16_t kPlanarConfig = 284;
constexpr std::uint16_t kSampleFormat = 339;
constexpr std::uint16_t kModelPixelScale = 33550;
constexpr std::uint16_t kModelTiepoint = 33922;
constexpr std::uint16_t kGeoKeyDirectory = 34735;
constexpr std::uint16_t kGdalNoData = 42113;

constexpr std::uint16_t kProjectedCsTypeKey = 3072;
constexpr std::uint16_t kGeographicTypeKey = 2048;

enum class FieldType : std::uint16_t {
    Byte = 1, Ascii = 2, Short = 3, Long = 4, Rational = 5,
    SByte = 6, Undefined = 7, SShort = 8, SLong = 9, SRational = 10,
    Float = 11, Double = 12,
};

std::size_t type_size(std::uint16_t t) {
    switch (static_cast<FieldType>(t)) {
        case FieldType::Byte: case FieldType::Ascii: case FieldType::SByte: case FieldType::Undefined: return 1;
        case FieldType::Short: case FieldType::SShort: return 2;
        case FieldType::Long: case FieldType::SLong: case FieldType::Float: return 4;
        case FieldType::Rational: case FieldType::SRational: case FieldType::Double: return 8;
    }
    return 0;
}

class Reader {
public:
    Reader(std::vector<unsigned char> bytes, const std::string& name)
        : bytes_(std::move(bytes)), name_(name) {
        if (bytes_.size() < 8) fail("file too short");
        if (bytes_[0] == 'I' && bytes_[1] == 'I') little_ = true;
        else if (bytes_[0] == 'M' && bytes_[1] == 'M') little_ = false;
        else fail("bad byte-order mark");
        if (u16(2) != 42) fail("not a classic TIFF (BigTIFF unsupported)");
    }

    [[noreturn]] void fail(const std::string& msg) const { throw FormatError(name_ + ": " + msg); }

    void need(std::size_t off, std::size_t n) const {
        if (off + n > bytes_.size() || off + n < off) fail("truncated at offset " + std::to_string(off));
    }

    std::uint16_t u16(std::size_t off) const {
        need(off, 2);
        return little_ ? static_cast<std::uint16_t>(bytes_[off] | (bytes_[off + 1] << 8))
                       : static_cast<std::uint16_t>((bytes_[off] << 8) | bytes_[off + 1]);
    }
    std::uint32_t u32(std::size_t off) const {
        need(off, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            const std::uint32_t b = bytes_[off + (little_ ? i : 3 - i)];
            v |= b << (8 * i);
        }
        return v;
    }
    std::uint64_t u64(std::size_t off) const {
        need(off, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            const std::uint64_t b = bytes_[off + (little_ ? i : 7 - i)];
            v |= b << (8 * i);
        }
        return v;
    }
    float f32(std::size_t off) const { return std::bit_cast<float>(u32(off)); }
    double f64(std::size_t off) const { return std::bit_cast<double>(u64(off)); }

    struct Entry {
        std::uint16_t type = 0;
        std::uint32_t count = 0;
        std::size_t value_offset = 0;
    };

    std::map<std::uint16_t, Entry> read_ifd() const {
        const std::size_t ifd = u32(4);
        const std::uint16_t n = u16(ifd);
        std::map<std::uint16_t, Entry> out;
        for (std::uint16_t i = 0; i < n; ++i) {
            const std::size_t e = ifd + 2 + 12 * static_cast<std::size_t>(i);
            Entry entry{u16(e + 2), u32(e + 4), 0};
            const std::size_t bytes = type_size(entry.type) * entry.count;
            entry.value_offset = bytes <= 4 ? e + 8 : u32(e + 8);
            need(entry.value_offset, bytes);
            out[u16(e)] = entry;
        }
        return out;
    }

    std::vector<double> values(const Entry& e) const {
        std::vector<double> v;
        v.reserve(e.count);
        const std::size_t sz = type_size(e.type);
        for (std::uint32_t i = 0; i < e.count; ++i) {
            const std::size_t off = e.value_offset + i * sz;
            switch (static_cast<FieldType>(e.type)) {
                case FieldType::Byte: case FieldType::Undefined: v.push_back(bytes_[off]); break;
                case FieldType::Short: v.push_back(u16(off)); break;
                case FieldType::SShort: v.push_back(static_cast<std::int16_t>(u16(off))); break;
                case FieldType::Long: v.push_back(u32(off)); break;
                case FieldType::SLong: v.push_back(static_cast<std::int32_t>(u32(off))); break;
                case FieldType::Float: v.push_back(f32(off)); break;
                case FieldType::Double: v.push_back(f64(off)); break;
                case FieldType::Rational: v.push_back(static_cast<double>(u32(off)) / u32(off + 4)); break;
                default: fail("unsupported field type " + std::to_string(e.type));
            }
        }
        return v;
    }

    std::string ascii(const Entry& e) const {
        std::string s(reinterpret_cast<const char*>(&bytes_[e.value_offset]), e.count);
        while (!s.empty() && s.back() == '\0') s.pop_back();
        return s;
    }

    double sample(std::size_t off, int bits, int format) const {
        if (format == 3 && bits == 32) return f32(off);
        if (format == 3 && bits == 64) return f64(off);
        if (format == 1 && bits == 16) return u16(off);
        if (format == 2 && bits == 16) return static_cast<std::int16_t>(u16(off));
        if (format == 1 && bits == 8) { need(off, 1); return bytes_[off]; }
        if (format == 1 && bits == 32) return u32(off);
        fail("unsupported sample layout");
    }

private:
    std::vector<unsigned char> bytes_;
    std::string name_;
    bool little_ = true;
};

class Writer {
public:
    void u16(std::uint16_t v) { put(&v, 2); }
    void u32(std::uint32_t v) { put(&v, 4); }
    void f64(double v) { put(&v, 8); }
    void put(const void* p, std::size_t n) {
        static_assert(std::endian::native == std::endian::little, "writer assumes little-endian host");
        const auto* b = static_cast<const unsigned char*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    void pad_to_word() { if (buf.size() % 2) buf.push_back(0); }
    std::vector<unsigned char> buf;
};

struct OutEntry {
    std::uint16_t tag;
    std::uint16_t type;
    std::uint32_t count;
    std::vector<unsigned char> payload;
};

template <typename T>
OutEntry make_entry(std::uint16_t tag, FieldType type, const std::vector<T>& vals) {
    OutEntry e{tag, static_cast<std::uint16_t>(type), static_cast<std::uint32_t>(vals.size()), {}};
    const auto* p = reinterpret_cast<const unsigned char*>(vals.data());
    e.payload.assign(p, p + vals.size() * sizeof(T));
    return e;
}

}  // namespace

GeoRaster read_geotiff(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(std::move(bytes), path.string());
    const auto ifd = r.read_ifd();

    auto scalar = [&](std::uint16_t tag, double def) {
        auto it = ifd.find(tag);
        return it == ifd.end() ? def : r.values(it->second).at(0);
    };
    auto required = [&](std::uint16_t tag) {
        auto it = ifd.find(tag);
        if (it == ifd.end()) r.fail("missing tag " + std::to_string(tag));
        return r.values(it->second);
    };

    const int width = static_cast<int>(required(kImageWidth).at(0));
    const int height = static_cast<int>(required(kImageLength).at(0));
    const int bits = static_cast<int>(scalar(kBitsPerSample, 1));
    const int format = static_cast<int>(scalar(kSampleFormat, 1));
    if (scalar(kCompression, 1) != 1) r.fail("compressed rasters are not supported");
    if (scalar(kSamplesPerPixel, 1) != 1) r.fail("only single-band rasters are supported");
    if (!ifd.contains(kStripOffsets)) r.fail("tiled layout is not supported");
    const int rows_per_strip = static_cast<int>(scalar(kRowsPerStrip, height));
    const auto offsets = required(kStripOffsets);

    GeoRaster out;
    out.grid = Raster(height, width);
    const std::size_t bps = static_cast<std::size_t>(bits / 8);
    for (int row = 0; row < height; ++row) {
        const std::size_t strip = static_cast<std::size_t>(row / rows_per_strip);
        if (strip >= offsets.size()) r.fail("strip table too short");
        const std::size_t base = static_cast<std::size_t>(offsets[strip]) +
                                 static_cast<std::size_t>(row % rows_per_strip) * width * bps;
        for (int col = 0; col < width; ++col) out.grid(row, col) = r.sample(base + col * bps, bits, format);
    }

    double nodata = std::numeric_limits<double>::quiet_NaN();
    bool has_nodata = false;
    if (auto it = ifd.find(kGdalNoData); it != ifd.end()) {
        const std::string s = r.ascii(it->second);
        if (s != "nan" && s != "NaN" && !s.empty()) {
            nodata = std::stod(s);
            has_nodata = true;
        }
    }
    if (has_nodata)
        for (auto& v : out.grid) if (v == nodata) v = kNoData;

    if (auto it = ifd.find(kModelPixelScale); it != ifd.end()) {
        const auto scale = r.values(it->second);
        out.geo.pixel_size = scale.at(0);
    }
    if (auto it = ifd.find(kModelTiepoint); it != ifd.end()) {
        const auto tie = r.values(it->second);
        if (tie.size() >= 6) {
            out.geo.origin_x = tie[3] - tie[0] * out.geo.pixel_size;
            out.geo.origin_y = tie[4] + tie[1] * out.geo.pixel_size;
        }
    }
    if (auto it = ifd.find(kGeoKeyDirectory); it != ifd.end()) {
        const auto keys = r.values(it->second);
        for (std::size_t k = 4; k + 3 < keys.size(); k += 4) {
            const auto id = static_cast<std::uint16_t>(keys[k]);
            if ((id == kProjectedCsTypeKey || id == kGeographicTypeKey) && keys[k + 1] == 0)
                out.geo.epsg = static_cast<int>(keys[k + 3]);
        }
    }
    return out;
}

void write_geotiff(const std::filesystem::path& path, const GeoRaster& raster) {
    const auto& g = raster.grid;
    const auto width = static_cast<std::uint32_t>(g.cols());
    const auto height = static_cast<std::uint32_t>(g.rows());

    std::vector<float> pixels(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) pixels[i] = static_cast<float>(g[i]);

    std::vector<OutEntry> entries;
    entries.push_back(make_entry<std::uint32_t>(kImageWidth, FieldType::Long, {width}));
    entries.push_back(make_entry<std::uint32_t>(kImageLength, FieldType::Long, {height}));
    entries.push_back(make_entry<std::uint16_t>(kBitsPerSample, FieldType::Short, {32}));
    entries.push_back(make_entry<std::uint16_t>(kCompression, FieldType::Short, {1}));
    entries.push_back(make_entry<std::uint16_t>(kPhotometric, FieldType::Short, {1}));
    entries.push_back(make_entry<std::uint32_t>(kStripOffsets, FieldType::Long, {0}));  // patched below
    entries.push_back(make_entry<std::uint16_t>(kSamplesPerPixel, FieldType::Short, {1}));
    entries.push_back(make_entry<std::uint32_t>(kRowsPerStrip, FieldType::Long, {height}));
    entries.push_back(make_entry<std::uint32_t>(kStripByteCounts, FieldType::Long,
                                                {static_cast<std::uint32_t>(pixels.size() * 4)}));
    entries.push_back(make_entry<std::uint16_t>(kPlanarConfig, FieldType::Short, {1}));
    entries.push_back(make_entry<std::uint16_t>(kSampleFormat, FieldType::Short, {3}));
    const auto& geo = raster.geo;
    entries.push_back(make_entry<double>(kModelPixelScale, FieldType::Double, {geo.pixel_size, geo.pixel_size, 0.0}));
    entries.push_back(make_entry<double>(kModelTiepoint, FieldType::Double, {0, 0, 0, geo.origin_x, geo.origin_y, 0}));
    // GTModelType=projected, GTRasterType=PixelIsArea, ProjectedCSType=EPSG
    entries.push_back(make_entry<std::uint16_t>(
        kGeoKeyDirectory, FieldType::Short,
        {1, 1, 0, 3, 1024, 0, 1, 1, 1025, 0, 1, 1, kProjectedCsTypeKey, 0, 1, static_cast<std::uint16_t>(geo.epsg)}));
    const std::string nd = "nan";
    std::vector<char> nd_bytes(nd.begin(), nd.end());
    nd_bytes.push_back('\0');
    entries.push_back(make_entry<char>(kGdalNoData, FieldType::Ascii, nd_bytes));

    Writer w;
    w.put("II", 2);
    w.u16(42);
    w.u32(8);
    const std::size_t ifd_size = 2 + entries.size() * 12 + 4;
    std::size_t extra = 8 + ifd_size;
    std::vector<std::uint32_t> payload_offsets(entries.size(), 0);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].payload.size() > 4) {
            payload_offsets[i] = static_cast<std::uint32_t>(extra);
            extra += entries[i].payload.size() + (entries[i].payload.size() % 2);
        }
    }
    const auto pixel_offset = static_cast<std::uint32_t>(extra);
    for (auto& e : entries) {
        if (e.tag == kStripOffsets) std::memcpy(e.payload.data(), &pixel_offset, 4);
    }

    w.u16(static_cast<std::uint16_t>(entries.size()));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        w.u16(e.tag);
        w.u16(e.type);
        w.u32(e.count);
        if (e.payload.size() > 4) {
            w.u32(payload_offsets[i]);
        } else {
            unsigned char inline_val[4] = {0, 0, 0, 0};
            std::memcpy(inline_val, e.payload.data(), e.payload.size());
            w.put(inline_val, 4);
        }
    }
    w.u32(0);
    for (const auto& e : entries) {
        if (e.payload.size() > 4) {
            w.put(e.payload.data(), e.payload.size());
            w.pad_to_word();
        }
    }
    w.put(pixels.data(), pixels.size() * 4);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
}

}  // namespace plume::raster
