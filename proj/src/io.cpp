#include "vrec/io.hpp"

#include <png.h>
#include <zlib.h>

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are not supported");

namespace vrec {
namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Raw byte plumbing

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError(path + ": cannot open for reading");
    f.seekg(0, std::ios::end);
    std::streamoff len = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(len));
    if (len > 0) f.read(reinterpret_cast<char*>(bytes.data()), len);
    if (!f) throw IoError(path + ": read failed");
    return bytes;
}

void write_file_bytes(const std::string& path, const void* data, std::size_t n) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(path + ": cannot open for writing");
    if (n > 0) f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!f) throw IoError(path + ": write failed");
}

struct ByteWriter {
    std::vector<unsigned char> buf;
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    template <class T>
    void put(T v) {
        raw(&v, sizeof v);
    }
    void save(const std::string& path) const { write_file_bytes(path, buf.data(), buf.size()); }
};

struct ByteReader {
    const unsigned char* p = nullptr;
    std::size_t n = 0, off = 0;
    std::string origin;

    ByteReader(const std::vector<unsigned char>& bytes, std::string origin_)
        : p(bytes.data()), n(bytes.size()), origin(std::move(origin_)) {}

    void raw(void* dst, std::size_t k) {
        if (off + k > n) throw IoError(origin + ": unexpected end of file");
        std::memcpy(dst, p + off, k);
        off += k;
    }
    template <class T>
    T get() {
        T v;
        raw(&v, sizeof v);
        return v;
    }
    void expect_magic(const char (&magic)[9]) {
        char m[8];
        raw(m, 8);
        if (std::memcmp(m, magic, 8) != 0)
            throw IoError(origin + ": unknown version tag (expected " + std::string(magic, 8) + ")");
    }
    void expect_exhausted() {
        if (off != n) throw IoError(origin + ": trailing bytes after payload");
    }
};

// ---------------------------------------------------------------------------
// JSON sidecars

json load_sidecar(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError(path + ": cannot open sidecar");
    try {
        json j;
        f >> j;
        return j;
    } catch (const std::exception& e) {
        throw IoError(path + ": invalid JSON (" + std::string(e.what()) + ")");
    }
}

const json& field_of(const json& j, const char* name) {
    auto it = j.find(name);
    if (it == j.end()) throw IoError(std::string("sidecar field ") + name + ": missing");
    return *it;
}

template <class T>
T scalar_field(const json& j, const char* name) {
    try {
        return field_of(j, name).get<T>();
    } catch (const IoError&) {
        throw;
    } catch (const std::exception&) {
        throw IoError(std::string("sidecar field ") + name + ": wrong type");
    }
}

template <class T>
std::vector<T> array_field(const json& j, const char* name, std::size_t len) {
    const json& v = field_of(j, name);
    if (!v.is_array() || v.size() != len)
        throw IoError(std::string("sidecar field ") + name + ": expected an array of " +
                      std::to_string(len) + " entries");
    try {
        return v.get<std::vector<T>>();
    } catch (const std::exception&) {
        throw IoError(std::string("sidecar field ") + name + ": wrong element type");
    }
}

void check_version(const json& j) {
    int v = scalar_field<int>(j, "format_version");
    if (v != 1)
        throw IoError("sidecar field format_version: unsupported value " + std::to_string(v));
}

void write_sidecar(const std::string& path, const json& j) {
    std::string text = j.dump(2);
    text.push_back('\n');
    write_file_bytes(path, text.data(), text.size());
}

// ---------------------------------------------------------------------------
// zlib

std::vector<unsigned char> inflate_all(const unsigned char* src, std::size_t n,
                                       const std::string& origin) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 32) != Z_OK)  // accepts both zlib and gzip streams
        throw IoError(origin + ": zlib initialization failed");
    std::vector<unsigned char> out;
    out.reserve(n * 4);
    unsigned char buf[1 << 16];
    zs.next_in = const_cast<unsigned char*>(src);
    zs.avail_in = static_cast<uInt>(n);
    int ret = Z_OK;
    do {
        zs.next_out = buf;
        zs.avail_out = sizeof buf;
        ret = inflate(&zs, Z_NO_FLUSH);
        if (ret != Z_OK && ret != Z_STREAM_END) {
            inflateEnd(&zs);
            throw IoError(origin + ": corrupt compressed payload");
        }
        out.insert(out.end(), buf, buf + (sizeof buf - zs.avail_out));
    } while (ret != Z_STREAM_END && (zs.avail_in > 0 || zs.avail_out == 0));
    inflateEnd(&zs);
    if (ret != Z_STREAM_END) throw IoError(origin + ": truncated compressed payload");
    return out;
}

// ---------------------------------------------------------------------------
// PNG

struct FileHandle {
    std::FILE* f = nullptr;
    explicit FileHandle(const std::string& path, const char* mode) : f(std::fopen(path.c_str(), mode)) {}
    ~FileHandle() {
        if (f) std::fclose(f);
    }
    FileHandle(const FileHandle&) = delete;
    FileHandle& operator=(const FileHandle&) = delete;
};

}  // namespace

// ---------------------------------------------------------------------------
// Volumes

void save_volume(const std::string& path, const VolumeGrid& vol, VolumeDtype dtype) {
    vol.validate();
    const bool binary = vol.is_binary();
    if (dtype == VolumeDtype::uint8 && !binary)
        throw IoError("sidecar field dtype: uint8 payload requires a binary volume");

    if (dtype == VolumeDtype::float32) {
        write_file_bytes(path, vol.data.data(), vol.data.size() * sizeof(float));
    } else {
        std::vector<unsigned char> bytes(vol.data.size());
        for (std::size_t i = 0; i < vol.data.size(); ++i)
            bytes[i] = vol.data[i] != 0.0f ? 1 : 0;
        write_file_bytes(path, bytes.data(), bytes.size());
    }

    json j{{"format_version", 1},
           {"kind", "volume"},
           {"dimensions", {vol.nx, vol.ny, vol.nz}},
           {"spacing_mm", {vol.sx, vol.sy, vol.sz}},
           {"value_kind", binary ? "binary" : "continuous"},
           {"dtype", dtype == VolumeDtype::float32 ? "float32" : "uint8"},
           {"order", "x-fastest"}};
    write_sidecar(path + ".json", j);
}

VolumeGrid load_volume(const std::string& path) {
    json j = load_sidecar(path + ".json");
    check_version(j);
    auto dims = array_field<int64_t>(j, "dimensions", 3);
    auto spacing = array_field<double>(j, "spacing_mm", 3);
    for (int64_t d : dims)
        if (d < 1 || d > (1 << 24))
            throw IoError("sidecar field dimensions: entries must be in [1, 2^24]");
    for (double s : spacing)
        if (!(s > 0.0) || !std::isfinite(s))
            throw IoError("sidecar field spacing_mm: entries must be finite and > 0");
    std::string dtype = scalar_field<std::string>(j, "dtype");
    std::string kind = scalar_field<std::string>(j, "value_kind");
    if (dtype != "float32" && dtype != "uint8")
        throw IoError("sidecar field dtype: unknown value \"" + dtype + "\"");
    if (kind != "binary" && kind != "continuous")
        throw IoError("sidecar field value_kind: unknown value \"" + kind + "\"");
    if (dtype == "uint8" && kind != "binary")
        throw IoError("sidecar field value_kind: uint8 payload requires \"binary\"");

    const std::size_t count = static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
                              static_cast<std::size_t>(dims[2]);
    const std::size_t elem = dtype == "float32" ? 4 : 1;
    std::vector<unsigned char> bytes = read_file_bytes(path);
    if (bytes.size() != count * elem)
        throw IoError("payload: expected " + std::to_string(count * elem) + " bytes, found " +
                      std::to_string(bytes.size()) + " (truncated or inconsistent with dimensions)");

    VolumeGrid vol(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]),
                   spacing[0], spacing[1], spacing[2]);
    if (dtype == "float32") {
        std::memcpy(vol.data.data(), bytes.data(), bytes.size());
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            if (bytes[i] > 1)
                throw IoError("payload: uint8 volume contains values other than 0/1");
            vol.data[i] = static_cast<float>(bytes[i]);
        }
    }
    if (kind == "binary" && !vol.is_binary())
        throw IoError("sidecar field value_kind: payload contains non-binary values");
    return vol;
}

// ---------------------------------------------------------------------------
// Projections

void save_projection(const std::string& path, const ProjectionImage& img) {
    img.geometry.validate();
    const std::size_t count =
        static_cast<std::size_t>(img.geometry.det_u) * static_cast<std::size_t>(img.geometry.det_v);
    if (img.data.size() != count) throw IoError("projection payload: length != det_u * det_v");
    write_file_bytes(path, img.data.data(), img.data.size() * sizeof(float));

    json j{{"format_version", 1},
           {"kind", "projection"},
           {"view_id", img.view_id},
           {"detector", {img.geometry.det_u, img.geometry.det_v}},
           {"pixel_spacing_mm", {img.geometry.du_mm, img.geometry.dv_mm}},
           {"source_to_detector_mm", img.geometry.dsd_mm},
           {"source_to_origin_mm", img.geometry.dso_mm},
           {"primary_deg", img.geometry.primary_deg},
           {"secondary_deg", img.geometry.secondary_deg},
           {"order", "u-fastest"}};
    write_sidecar(path + ".json", j);
}

ProjectionImage load_projection(const std::string& path) {
    json j = load_sidecar(path + ".json");
    check_version(j);
    if (scalar_field<std::string>(j, "kind") != "projection")
        throw IoError("sidecar field kind: expected \"projection\"");
    auto det = array_field<int64_t>(j, "detector", 2);
    auto pitch = array_field<double>(j, "pixel_spacing_mm", 2);
    ProjectionGeometry g;
    g.det_u = static_cast<int>(det[0]);
    g.det_v = static_cast<int>(det[1]);
    g.du_mm = pitch[0];
    g.dv_mm = pitch[1];
    g.dsd_mm = scalar_field<double>(j, "source_to_detector_mm");
    g.dso_mm = scalar_field<double>(j, "source_to_origin_mm");
    g.primary_deg = scalar_field<double>(j, "primary_deg");
    g.secondary_deg = scalar_field<double>(j, "secondary_deg");
    g.validate();

    ProjectionImage img(scalar_field<int>(j, "view_id"), g);
    std::vector<unsigned char> bytes = read_file_bytes(path);
    if (bytes.size() != img.data.size() * sizeof(float))
        throw IoError("payload: expected " + std::to_string(img.data.size() * sizeof(float)) +
                      " bytes, found " + std::to_string(bytes.size()) +
                      " (truncated or inconsistent with detector)");
    std::memcpy(img.data.data(), bytes.data(), bytes.size());
    return img;
}

void write_projection_png(const std::string& path, const ProjectionImage& img) {
    const int w = img.geometry.det_u, h = img.geometry.det_v;
    if (img.data.size() != static_cast<std::size_t>(w) * static_cast<std::size_t>(h))
        throw IoError("projection payload: length != det_u * det_v");
    float lo = img.data.empty() ? 0.0f : img.data[0];
    float hi = lo;
    for (float v : img.data) {
        if (!std::isfinite(v)) throw IoError("projection payload: non-finite pixel value");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = static_cast<double>(hi) - static_cast<double>(lo);

    FileHandle fh(path, "wb");
    if (!fh.f) throw IoError(path + ": cannot open for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError(path + ": PNG writer allocation failed");
    png_infop pinfo = png_create_info_struct(png);
    if (!pinfo) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError(path + ": PNG writer allocation failed");
    }
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 2);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &pinfo);
        throw IoError(path + ": PNG encode failed");
    }
    png_init_io(png, fh.f);
    png_set_IHDR(png, pinfo, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 16,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, pinfo);
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            double x = static_cast<double>(img.at(u, v));
            unsigned q = span > 0.0
                             ? static_cast<unsigned>(std::lround((x - lo) / span * 65535.0))
                             : 0u;
            row[static_cast<std::size_t>(u) * 2] = static_cast<unsigned char>(q >> 8);
            row[static_cast<std::size_t>(u) * 2 + 1] = static_cast<unsigned char>(q & 0xFF);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, pinfo);
    png_destroy_write_struct(&png, &pinfo);

    json j{{"format_version", 1},
           {"kind", "projection_png"},
           {"bit_depth", 16},
           {"min_value", lo},
           {"max_value", hi},
           {"mapping", "pixel = round((value - min_value) / (max_value - min_value) * 65535)"}};
    write_sidecar(path + ".json", j);
}

Png16 read_png16(const std::string& path) {
    FileHandle fh(path, "rb");
    if (!fh.f) throw IoError(path + ": cannot open for reading");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError(path + ": PNG reader allocation failed");
    png_infop pinfo = png_create_info_struct(png);
    if (!pinfo) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError(path + ": PNG reader allocation failed");
    }
    std::vector<unsigned char> raster;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &pinfo, nullptr);
        throw IoError(path + ": PNG decode failed");
    }
    png_init_io(png, fh.f);
    png_read_info(png, pinfo);
    const int w = static_cast<int>(png_get_image_width(png, pinfo));
    const int h = static_cast<int>(png_get_image_height(png, pinfo));
    const int depth = png_get_bit_depth(png, pinfo);
    const int color = png_get_color_type(png, pinfo);
    if (depth != 16 || color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &pinfo, nullptr);
        throw IoError(path + ": expected 16-bit grayscale PNG");
    }
    raster.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 2);
    rows.resize(static_cast<std::size_t>(h));
    for (int v = 0; v < h; ++v)
        rows[static_cast<std::size_t>(v)] = raster.data() + static_cast<std::size_t>(v) * w * 2;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &pinfo, nullptr);

    Png16 out;
    out.width = w;
    out.height = h;
    out.pixels.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = static_cast<uint16_t>((raster[i * 2] << 8) | raster[i * 2 + 1]);
    return out;
}

// ---------------------------------------------------------------------------
// Parameter checkpoints

namespace {

constexpr char kThetaMagic[9] = "VRTHETA1";
constexpr char kPhiMagic[9] = "VRECPHI1";
constexpr char kSnapMagic[9] = "VRSNAP01";

void put_theta_section(ByteWriter& w, const HashEncoderConfig& cfg,
                       const HashEncoderParams<float>& params) {
    cfg.validate();
    const std::size_t per_level = static_cast<std::size_t>(cfg.table_size) * cfg.features;
    if (params.tables.size() != static_cast<std::size_t>(cfg.levels))
        throw ConfigError("theta", "level count does not match the encoder configuration");
    for (const auto& t : params.tables)
        if (t.size() != per_level)
            throw ConfigError("theta", "table length does not match the encoder configuration");
    w.put<uint32_t>(static_cast<uint32_t>(cfg.levels));
    w.put<uint32_t>(cfg.table_size);
    w.put<uint32_t>(static_cast<uint32_t>(cfg.features));
    w.put<uint32_t>(static_cast<uint32_t>(cfg.coarsest_resolution));
    w.put<double>(cfg.growth_factor);
    w.put<uint32_t>(static_cast<uint32_t>(cfg.input_dim));
    w.put<uint64_t>(params.count());
    for (const auto& t : params.tables) w.raw(t.data(), t.size() * sizeof(float));
}

std::pair<HashEncoderConfig, HashEncoderParams<float>> get_theta_section(ByteReader& r) {
    HashEncoderConfig cfg;
    cfg.levels = static_cast<int>(r.get<uint32_t>());
    cfg.table_size = r.get<uint32_t>();
    cfg.features = static_cast<int>(r.get<uint32_t>());
    cfg.coarsest_resolution = static_cast<int>(r.get<uint32_t>());
    cfg.growth_factor = r.get<double>();
    cfg.input_dim = static_cast<int>(r.get<uint32_t>());
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw IoError(r.origin + ": corrupt header (" + std::string(e.what()) + ")");
    }
    const uint64_t count = r.get<uint64_t>();
    const uint64_t expected =
        static_cast<uint64_t>(cfg.levels) * cfg.table_size * static_cast<uint64_t>(cfg.features);
    if (count != expected)
        throw IoError(r.origin + ": parameter count " + std::to_string(count) +
                      " does not match the header (expected " + std::to_string(expected) + ")");
    HashEncoderParams<float> params;
    params.tables.resize(static_cast<std::size_t>(cfg.levels));
    const std::size_t per_level = static_cast<std::size_t>(cfg.table_size) * cfg.features;
    for (auto& t : params.tables) {
        t.resize(per_level);
        r.raw(t.data(), per_level * sizeof(float));
    }
    return {cfg, std::move(params)};
}

void put_phi_section(ByteWriter& w, const MlpParams<float>& params) {
    if (params.W.size() != params.b.size() || params.W.empty())
        throw ConfigError("phi", "layer lists are empty or inconsistent");
    w.put<uint32_t>(static_cast<uint32_t>(params.W.size()));
    for (std::size_t i = 0; i < params.W.size(); ++i) {
        if (params.b[i].size() != params.W[i].rows())
            throw ConfigError("phi", "bias length does not match weight rows");
        w.put<uint32_t>(static_cast<uint32_t>(params.W[i].rows()));
        w.put<uint32_t>(static_cast<uint32_t>(params.W[i].cols()));
    }
    for (std::size_t i = 0; i < params.W.size(); ++i) {
        // Eigen's default storage: column-major.
        w.raw(params.W[i].data(), static_cast<std::size_t>(params.W[i].size()) * sizeof(float));
        w.raw(params.b[i].data(), static_cast<std::size_t>(params.b[i].size()) * sizeof(float));
    }
}

MlpParams<float> get_phi_section(ByteReader& r) {
    const uint32_t n_layers = r.get<uint32_t>();
    if (n_layers == 0 || n_layers > 1024) throw IoError(r.origin + ": implausible layer count");
    std::vector<std::pair<uint32_t, uint32_t>> shapes(n_layers);
    for (auto& s : shapes) {
        s.first = r.get<uint32_t>();
        s.second = r.get<uint32_t>();
        if (s.first == 0 || s.second == 0 || s.first > (1u << 20) || s.second > (1u << 20))
            throw IoError(r.origin + ": implausible layer shape");
    }
    MlpParams<float> params;
    params.W.resize(n_layers);
    params.b.resize(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) {
        params.W[i].resize(shapes[i].first, shapes[i].second);
        r.raw(params.W[i].data(), static_cast<std::size_t>(params.W[i].size()) * sizeof(float));
        params.b[i].resize(shapes[i].first);
        r.raw(params.b[i].data(), static_cast<std::size_t>(params.b[i].size()) * sizeof(float));
    }
    return params;
}

void check_phi_shapes(const MlpParams<float>& params, const MlpConfig& cfg,
                      const std::string& origin) {
    if (params.W.size() != static_cast<std::size_t>(cfg.n_layers))
        throw IoError(origin + ": layer count does not match the MLP configuration");
    for (int i = 1; i <= cfg.n_layers; ++i) {
        const auto& w = params.W[static_cast<std::size_t>(i - 1)];
        if (w.rows() != cfg.layer_out(i) || w.cols() != cfg.layer_in(i))
            throw IoError(origin + ": layer " + std::to_string(i) +
                          " shape does not match the MLP configuration");
    }
}

}  // namespace

void save_theta(const std::string& path, const HashEncoderConfig& cfg,
                const HashEncoderParams<float>& params) {
    ByteWriter w;
    w.raw(kThetaMagic, 8);
    put_theta_section(w, cfg, params);
    w.save(path);
}

std::pair<HashEncoderConfig, HashEncoderParams<float>> load_theta(const std::string& path) {
    std::vector<unsigned char> bytes = read_file_bytes(path);
    ByteReader r(bytes, path);
    r.expect_magic(kThetaMagic);
    auto result = get_theta_section(r);
    r.expect_exhausted();
    return result;
}

void save_phi(const std::string& path, const MlpParams<float>& params) {
    ByteWriter w;
    w.raw(kPhiMagic, 8);
    put_phi_section(w, params);
    w.save(path);
}

MlpParams<float> load_phi(const std::string& path) {
    std::vector<unsigned char> bytes = read_file_bytes(path);
    ByteReader r(bytes, path);
    r.expect_magic(kPhiMagic);
    MlpParams<float> params = get_phi_section(r);
    r.expect_exhausted();
    return params;
}

void save_snapshot(const std::string& path, const FieldSpec& spec, const TrainSnapshot& snap) {
    spec.validate();
    if (snap.iteration < 0) throw ConfigError("snapshot.iteration", "must be >= 0");
    std::size_t total = snap.params.theta.count() + snap.params.phi.count();
    if (!snap.adam.m.empty() && (snap.adam.m.size() != total || snap.adam.v.size() != total))
        throw ConfigError("snapshot.adam", "moment length does not match the parameter count");
    if (snap.adam.m.size() != snap.adam.v.size())
        throw ConfigError("snapshot.adam", "first/second moment lengths differ");

    ByteWriter w;
    w.raw(kSnapMagic, 8);
    w.put<uint8_t>(spec.kind == EncoderKind::hash ? 0 : 1);
    w.put<int64_t>(snap.iteration);
    w.put<int64_t>(snap.adam.t);
    if (spec.kind == EncoderKind::hash) {
        put_theta_section(w, spec.hash, snap.params.theta);
    } else if (snap.params.theta.count() != 0) {
        throw ConfigError("snapshot.params", "frequency-encoder fields carry no encoder tables");
    }
    put_phi_section(w, snap.params.phi);
    w.put<uint64_t>(snap.adam.m.size());
    w.raw(snap.adam.m.data(), snap.adam.m.size() * sizeof(float));
    w.raw(snap.adam.v.data(), snap.adam.v.size() * sizeof(float));
    w.save(path);
}

TrainSnapshot load_snapshot(const std::string& path, const FieldSpec& spec) {
    spec.validate();
    std::vector<unsigned char> bytes = read_file_bytes(path);
    ByteReader r(bytes, path);
    r.expect_magic(kSnapMagic);
    const uint8_t kind = r.get<uint8_t>();
    if ((kind == 0) != (spec.kind == EncoderKind::hash))
        throw IoError(path + ": snapshot encoder kind does not match the field spec");
    TrainSnapshot snap;
    snap.iteration = r.get<int64_t>();
    snap.adam.t = r.get<int64_t>();
    if (snap.iteration < 0 || snap.adam.t < 0)
        throw IoError(path + ": negative iteration or optimizer step counter");
    if (kind == 0) {
        auto [cfg, theta] = get_theta_section(r);
        const HashEncoderConfig& e = spec.hash;
        if (cfg.levels != e.levels || cfg.table_size != e.table_size ||
            cfg.features != e.features || cfg.coarsest_resolution != e.coarsest_resolution ||
            cfg.growth_factor != e.growth_factor || cfg.input_dim != e.input_dim)
            throw IoError(path + ": snapshot encoder configuration does not match the field spec");
        snap.params.theta = std::move(theta);
    }
    snap.params.phi = get_phi_section(r);
    check_phi_shapes(snap.params.phi, spec.mlp, path);
    const uint64_t mlen = r.get<uint64_t>();
    const std::size_t total = snap.params.theta.count() + snap.params.phi.count();
    if (mlen != 0 && mlen != total)
        throw IoError(path + ": optimizer moment length does not match the parameter count");
    snap.adam.m.resize(mlen);
    r.raw(snap.adam.m.data(), mlen * sizeof(float));
    snap.adam.v.resize(mlen);
    r.raw(snap.adam.v.data(), mlen * sizeof(float));
    r.expect_exhausted();
    return snap;
}

// ---------------------------------------------------------------------------
// Medical volume import (read-only convenience)

namespace {

enum class MedDtype { u8, i16, u16, f32 };

std::size_t med_elem_size(MedDtype t) {
    return t == MedDtype::u8 ? 1 : t == MedDtype::f32 ? 4 : 2;
}

float med_value(MedDtype t, const unsigned char* p) {
    switch (t) {
        case MedDtype::u8:
            return static_cast<float>(*p);
        case MedDtype::i16: {
            int16_t v;
            std::memcpy(&v, p, 2);
            return static_cast<float>(v);
        }
        case MedDtype::u16: {
            uint16_t v;
            std::memcpy(&v, p, 2);
            return static_cast<float>(v);
        }
        case MedDtype::f32: {
            float v;
            std::memcpy(&v, p, 4);
            return v;
        }
    }
    return 0.0f;
}

VolumeGrid import_nifti(std::vector<unsigned char> bytes, const std::string& path) {
    if (bytes.size() >= 2 && bytes[0] == 0x1F && bytes[1] == 0x8B)
        bytes = inflate_all(bytes.data(), bytes.size(), path);
    if (bytes.size() < 352) throw IoError(path + ": nifti header: file too short");
    auto i32 = [&](std::size_t off) {
        int32_t v;
        std::memcpy(&v, &bytes[off], 4);
        return v;
    };
    auto i16at = [&](std::size_t off) {
        int16_t v;
        std::memcpy(&v, &bytes[off], 2);
        return v;
    };
    auto f32at = [&](std::size_t off) {
        float v;
        std::memcpy(&v, &bytes[off], 4);
        return v;
    };
    if (i32(0) != 348)
        throw IoError(path + ": nifti sizeof_hdr: expected 348 (little-endian NIfTI-1); "
                             "big-endian or non-NIfTI input rejected");
    if (std::memcmp(&bytes[344], "n+1\0", 4) != 0)
        throw IoError(path + ": nifti magic: only single-file \"n+1\" supported");
    const int dim0 = i16at(40);
    if (dim0 < 3 || dim0 > 7) throw IoError(path + ": nifti dim[0]: only 3-D volumes supported");
    int64_t nx = i16at(42), ny = i16at(44), nz = i16at(46);
    for (int k = 4; k <= dim0; ++k)
        if (i16at(40 + 2 * static_cast<std::size_t>(k)) > 1)
            throw IoError(path + ": nifti dim: higher dimensions must be singleton");
    if (nx < 1 || ny < 1 || nz < 1) throw IoError(path + ": nifti dim: nonpositive size");

    const int16_t datatype = i16at(70);
    const int16_t bitpix = i16at(72);
    MedDtype t;
    switch (datatype) {
        case 2: t = MedDtype::u8; break;
        case 4: t = MedDtype::i16; break;
        case 16: t = MedDtype::f32; break;
        case 512: t = MedDtype::u16; break;
        default:
            throw IoError(path + ": nifti datatype: unsupported code " + std::to_string(datatype));
    }
    if (static_cast<std::size_t>(bitpix) != med_elem_size(t) * 8)
        throw IoError(path + ": nifti bitpix: inconsistent with datatype");

    double sx = f32at(80), sy = f32at(84), sz = f32at(88);  // pixdim[1..3]
    if (!(sx > 0.0)) sx = 1.0;
    if (!(sy > 0.0)) sy = 1.0;
    if (!(sz > 0.0)) sz = 1.0;

    const float slope = f32at(112), inter = f32at(116);
    if (!((slope == 0.0f || slope == 1.0f) && inter == 0.0f))
        throw IoError(path + ": nifti scl_slope/scl_inter: value scaling not supported");

    std::size_t off = static_cast<std::size_t>(f32at(108));
    if (off < 352) off = 352;
    const std::size_t count = static_cast<std::size_t>(nx * ny * nz);
    const std::size_t need = count * med_elem_size(t);
    if (bytes.size() < off || bytes.size() - off < need)
        throw IoError(path + ": nifti payload: truncated (need " + std::to_string(need) +
                      " bytes at offset " + std::to_string(off) + ")");

    VolumeGrid vol(static_cast<int>(nx), static_cast<int>(ny), static_cast<int>(nz), sx, sy, sz);
    const unsigned char* p = bytes.data() + off;
    const std::size_t es = med_elem_size(t);
    for (std::size_t i = 0; i < count; ++i) vol.data[i] = med_value(t, p + i * es);
    return vol;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

VolumeGrid import_nrrd(const std::vector<unsigned char>& bytes, const std::string& path) {
    // Header: text lines up to the first blank line; payload attached after it.
    std::size_t header_end = 0;
    for (std::size_t i = 0; i + 1 < bytes.size(); ++i) {
        if (bytes[i] == '\n' && (bytes[i + 1] == '\n' || (bytes[i + 1] == '\r' && i + 2 < bytes.size() && bytes[i + 2] == '\n'))) {
            header_end = i + (bytes[i + 1] == '\n' ? 2 : 3);
            break;
        }
    }
    if (header_end == 0) throw IoError(path + ": nrrd header: missing blank separator line");
    std::istringstream head(std::string(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(header_end)));
    std::string line;
    if (!std::getline(head, line) || trim(line).rfind("NRRD000", 0) != 0)
        throw IoError(path + ": nrrd magic: not an NRRD file");

    std::map<std::string, std::string> kv;
    while (std::getline(head, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::size_t colon = line.find(": ");
        if (colon == std::string::npos) {
            if (line.find(":=") != std::string::npos) continue;  // key-value comments
            throw IoError(path + ": nrrd header: malformed line \"" + line + "\"");
        }
        kv[lower(trim(line.substr(0, colon)))] = trim(line.substr(colon + 2));
    }
    auto want = [&](const char* key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw IoError(path + ": nrrd " + key + ": missing");
        return it->second;
    };
    if (kv.count("data file") || kv.count("datafile"))
        throw IoError(path + ": nrrd data file: detached payloads not supported");
    for (const char* k : {"byte skip", "line skip"})
        if (kv.count(k) && kv[k] != "0")
            throw IoError(path + ": nrrd " + std::string(k) + ": must be 0");
    if (want("dimension") != "3") throw IoError(path + ": nrrd dimension: only 3 supported");

    const std::string type = lower(want("type"));
    MedDtype t;
    if (type == "uchar" || type == "unsigned char" || type == "uint8" || type == "uint8_t")
        t = MedDtype::u8;
    else if (type == "short" || type == "short int" || type == "signed short" || type == "int16" ||
             type == "int16_t")
        t = MedDtype::i16;
    else if (type == "ushort" || type == "unsigned short" || type == "uint16" || type == "uint16_t")
        t = MedDtype::u16;
    else if (type == "float")
        t = MedDtype::f32;
    else
        throw IoError(path + ": nrrd type: unsupported \"" + type + "\"");
    if (med_elem_size(t) > 1) {
        if (!kv.count("endian") || lower(kv["endian"]) != "little")
            throw IoError(path + ": nrrd endian: must be declared \"little\"");
    }

    int64_t sizes[3];
    {
        std::istringstream ss(want("sizes"));
        for (auto& s : sizes)
            if (!(ss >> s) || s < 1) throw IoError(path + ": nrrd sizes: need three positive integers");
    }

    // Axis mapping: data axis i -> world axis perm[i], with optional flip.
    int perm[3] = {0, 1, 2};
    bool flip[3] = {false, false, false};
    double spacing_world[3] = {1.0, 1.0, 1.0};
    if (kv.count("space directions")) {
        std::string sd = kv["space directions"];
        std::vector<std::array<double, 3>> rows;
        std::size_t pos = 0;
        while ((pos = sd.find('(', pos)) != std::string::npos) {
            std::size_t close = sd.find(')', pos);
            if (close == std::string::npos)
                throw IoError(path + ": nrrd space directions: malformed vector");
            std::string body = sd.substr(pos + 1, close - pos - 1);
            for (char& c : body)
                if (c == ',') c = ' ';
            std::istringstream vs(body);
            std::array<double, 3> v{};
            if (!(vs >> v[0] >> v[1] >> v[2]))
                throw IoError(path + ": nrrd space directions: malformed vector");
            rows.push_back(v);
            pos = close + 1;
        }
        if (rows.size() != 3 || sd.find("none") != std::string::npos)
            throw IoError(path + ": nrrd space directions: need three spatial vectors");
        bool world_used[3] = {false, false, false};
        for (int i = 0; i < 3; ++i) {
            int nonzero = -1;
            for (int a = 0; a < 3; ++a)
                if (rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] != 0.0) {
                    if (nonzero >= 0)
                        throw IoError(path +
                                      ": nrrd space directions: only axis-aligned orientations supported");
                    nonzero = a;
                }
            if (nonzero < 0)
                throw IoError(path + ": nrrd space directions: zero vector");
            double val = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(nonzero)];
            perm[i] = nonzero;
            flip[i] = val < 0.0;
            spacing_world[nonzero] = std::abs(val);
            if (world_used[nonzero])
                throw IoError(path + ": nrrd space directions: repeated world axis");
            world_used[nonzero] = true;
        }
    } else if (kv.count("spacings")) {
        std::istringstream ss(kv["spacings"]);
        for (double& s : spacing_world)
            if (!(ss >> s) || !(s > 0.0))
                throw IoError(path + ": nrrd spacings: need three positive numbers");
    }

    const std::string encoding = lower(want("encoding"));
    std::vector<unsigned char> payload(bytes.begin() + static_cast<std::ptrdiff_t>(header_end), bytes.end());
    if (encoding == "gzip" || encoding == "gz")
        payload = inflate_all(payload.data(), payload.size(), path);
    else if (encoding != "raw")
        throw IoError(path + ": nrrd encoding: only raw and gzip supported");

    const std::size_t count =
        static_cast<std::size_t>(sizes[0]) * static_cast<std::size_t>(sizes[1]) * static_cast<std::size_t>(sizes[2]);
    if (payload.size() != count * med_elem_size(t))
        throw IoError(path + ": nrrd payload: expected " + std::to_string(count * med_elem_size(t)) +
                      " bytes, found " + std::to_string(payload.size()));

    int64_t n_world[3];
    for (int i = 0; i < 3; ++i) n_world[perm[i]] = sizes[i];
    VolumeGrid vol(static_cast<int>(n_world[0]), static_cast<int>(n_world[1]),
                   static_cast<int>(n_world[2]), spacing_world[0], spacing_world[1],
                   spacing_world[2]);
    const std::size_t es = med_elem_size(t);
    std::size_t k = 0;
    for (int64_t d2 = 0; d2 < sizes[2]; ++d2)
        for (int64_t d1 = 0; d1 < sizes[1]; ++d1)
            for (int64_t d0 = 0; d0 < sizes[0]; ++d0, ++k) {
                int64_t di[3] = {d0, d1, d2};
                int64_t wi[3];
                for (int i = 0; i < 3; ++i)
                    wi[perm[i]] = flip[i] ? sizes[i] - 1 - di[i] : di[i];
                vol.at(static_cast<int>(wi[0]), static_cast<int>(wi[1]), static_cast<int>(wi[2])) =
                    med_value(t, payload.data() + k * es);
            }
    return vol;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

VolumeGrid import_medical_volume(const std::string& path) {
    std::vector<unsigned char> bytes = read_file_bytes(path);
    const std::string name = lower(path);
    if (ends_with(name, ".nii") || ends_with(name, ".nii.gz"))
        return import_nifti(std::move(bytes), path);
    if (ends_with(name, ".nrrd")) return import_nrrd(bytes, path);
    // No known extension: sniff the magic.
    if (bytes.size() >= 7 && std::memcmp(bytes.data(), "NRRD000", 7) == 0)
        return import_nrrd(bytes, path);
    if (bytes.size() >= 4) {
        int32_t first;
        std::memcpy(&first, bytes.data(), 4);
        if (first == 348 || (bytes[0] == 0x1F && bytes[1] == 0x8B))
            return import_nifti(std::move(bytes), path);
    }
    throw IoError(path + ": unrecognized medical volume format (expected NIfTI-1 or NRRD)");
}

// ---------------------------------------------------------------------------
// Input simulation

std::vector<ProjectionImage> simulate_inputs(const VolumeGrid& vol,
                                             const std::vector<ProjectionGeometry>& geoms,
                                             const ProjectorConfig& cfg,
                                             const std::string& out_dir) {
    vol.validate();
    if (geoms.size() != 2)
        throw ConfigError("geometry.views", "exactly two views are required");
    for (const auto& g : geoms) g.validate();
    cfg.validate();

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError(out_dir + ": cannot create output directory (" + ec.message() + ")");

    std::vector<ProjectionImage> imgs = forward_project(vol, geoms, cfg);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        const std::string stem = out_dir + "/view_" + std::to_string(i);
        save_projection(stem + ".raw", imgs[i]);
        write_projection_png(stem + ".png", imgs[i]);
    }
    return imgs;
}

}  // namespace vrec
