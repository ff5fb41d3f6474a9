#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dentalign/errors.hpp"
#include "dentalign/pointcloud.hpp"
#include "dentalign/volume.hpp"

namespace dentalign {

// ---- volume format -----------------------------------------------------
//
// 64-byte header (8-byte magic, u32 version, zero padding), then a u64
// length-prefixed UTF-8 JSON metadata block, then the little-endian f64 voxel
// payload, then an optional little-endian u16 label payload. Round-trips are
// bitwise lossless.

namespace detail {

constexpr char kVolumeMagic[8] = {'D', 'L', 'G', 'N', 'V', 'O', 'L', '1'};
constexpr std::uint32_t kVolumeVersion = 1;

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

struct ByteReader {
    std::string bytes;
    std::size_t pos = 0;

    void need(std::size_t n, const std::string& what) const {
        if (pos + n > bytes.size()) {
            throw FormatError(what + " truncated at byte offset " + std::to_string(pos));
        }
    }
    void read(void* p, std::size_t n, const std::string& what) {
        need(n, what);
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    }
};

inline std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace detail

inline void write_volume(const VoxelVolume& v, const std::string& path) {
    v.validate();
    nlohmann::json meta;
    meta["dims"] = v.dims;
    meta["spacing"] = v.spacing;
    meta["orientation"] = v.orientation.code;
    meta["has_labels"] = v.labels.has_value();
    const std::string meta_str = meta.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    char header[64] = {};
    std::memcpy(header, detail::kVolumeMagic, 8);
    std::memcpy(header + 8, &detail::kVolumeVersion, 4);
    detail::write_bytes(os, header, 64);
    const std::uint64_t len = meta_str.size();
    detail::write_bytes(os, &len, 8);
    detail::write_bytes(os, meta_str.data(), meta_str.size());
    detail::write_bytes(os, v.values.data(), v.values.size() * sizeof(double));
    if (v.labels) detail::write_bytes(os, v.labels->data(), v.labels->size() * sizeof(std::uint16_t));
    if (!os) throw FormatError("short write to " + path);
}

inline VoxelVolume read_volume(const std::string& path) {
    detail::ByteReader r{detail::slurp(path)};
    char header[64];
    r.read(header, 64, "volume header");
    if (std::memcmp(header, detail::kVolumeMagic, 8) != 0) {
        throw FormatError("bad magic in " + path + " at byte offset 0");
    }
    std::uint32_t version;
    std::memcpy(&version, header + 8, 4);
    if (version != detail::kVolumeVersion) {
        throw FormatError("unsupported volume version " + std::to_string(version) + " at byte offset 8");
    }
    std::uint64_t meta_len;
    r.read(&meta_len, 8, "metadata length");
    r.need(meta_len, "metadata block");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(r.bytes.substr(r.pos, meta_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad metadata JSON at byte offset " + std::to_string(r.pos) + ": " + e.what());
    }
    r.pos += meta_len;

    VoxelVolume v;
    try {
        meta.at("dims").get_to(v.dims);
        meta.at("spacing").get_to(v.spacing);
        meta.at("orientation").get_to(v.orientation.code);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("metadata missing field: ") + e.what());
    }
    const bool has_labels = meta.value("has_labels", false);

    const auto n = v.dims[0] * v.dims[1] * v.dims[2];
    if (n < 0) throw FormatError("negative dims in metadata");
    const std::size_t value_bytes = static_cast<std::size_t>(n) * sizeof(double);
    const std::size_t label_bytes = has_labels ? static_cast<std::size_t>(n) * sizeof(std::uint16_t) : 0;
    if (r.bytes.size() - r.pos != value_bytes + label_bytes) {
        throw FormatError("header dims disagree with payload length at byte offset " +
                          std::to_string(r.pos) + " (expected " + std::to_string(value_bytes + label_bytes) +
                          " payload bytes, found " + std::to_string(r.bytes.size() - r.pos) + ")");
    }
    v.values.resize(static_cast<std::size_t>(n));
    r.read(v.values.data(), value_bytes, "voxel payload");
    if (has_labels) {
        v.labels = std::vector<std::uint16_t>(static_cast<std::size_t>(n));
        r.read(v.labels->data(), label_bytes, "label payload");
    }
    v.validate();
    return v;
}

// ---- point clouds as ASCII PLY -------------------------------------------
//
// element vertex with properties x y z nx ny nz and an optional ushort label.
// Doubles print with 17 significant digits so write-read-write is
// byte-identical.

inline void write_cloud(const PointCloud& pc, const std::string& path) {
    pc.validate();
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    os << "ply\nformat ascii 1.0\ncomment dentalign point cloud\n";
    os << "element vertex " << pc.points.size() << "\n";
    for (const char* p : {"x", "y", "z", "nx", "ny", "nz"}) os << "property double " << p << "\n";
    if (pc.labels) os << "property ushort label\n";
    os << "end_header\n";
    char buf[400];
    for (std::size_t i = 0; i < pc.points.size(); ++i) {
        const auto& p = pc.points[i];
        const auto& nrm = pc.normals[i];
        int len = std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g %.17g", p[0], p[1], p[2],
                                nrm[0], nrm[1], nrm[2]);
        os.write(buf, len);
        if (pc.labels) os << " " << (*pc.labels)[i];
        os << "\n";
    }
    if (!os) throw FormatError("short write to " + path);
}

inline PointCloud read_cloud(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open " + path);
    std::string line;
    auto next_line = [&](const char* what) {
        if (!std::getline(is, line)) throw FormatError(std::string(what) + ": unexpected end of " + path);
        return line;
    };
    if (next_line("ply magic") != "ply") throw FormatError("not a PLY file: " + path);
    if (next_line("format").rfind("format ascii", 0) != 0) {
        throw FormatError("only ASCII PLY supported: " + path);
    }

    std::size_t vertex_count = 0;
    std::vector<std::string> properties;
    bool in_vertex_element = false;
    while (next_line("header") != "end_header") {
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "comment") continue;
        if (tok == "element") {
            std::string name;
            ss >> name >> vertex_count;
            if (name != "vertex") throw FormatError("unsupported element '" + name + "' in " + path);
            in_vertex_element = true;
        } else if (tok == "property") {
            if (!in_vertex_element) throw FormatError("property outside vertex element in " + path);
            std::string type, name;
            ss >> type >> name;
            properties.push_back(name);
        }
    }

    const std::vector<std::string> required = {"x", "y", "z", "nx", "ny", "nz"};
    bool labeled = false;
    if (properties == required) {
        labeled = false;
    } else {
        auto with_label = required;
        with_label.push_back("label");
        if (properties == with_label) {
            labeled = true;
        } else {
            throw FormatError("vertex schema must be x y z nx ny nz [label] in " + path);
        }
    }

    PointCloud pc;
    pc.points.resize(vertex_count);
    pc.normals.resize(vertex_count);
    if (labeled) pc.labels = std::vector<std::uint16_t>(vertex_count);
    for (std::size_t i = 0; i < vertex_count; ++i) {
        next_line("vertex data");
        std::istringstream ss(line);
        auto& p = pc.points[i];
        auto& n = pc.normals[i];
        if (!(ss >> p[0] >> p[1] >> p[2] >> n[0] >> n[1] >> n[2])) {
            throw FormatError("bad vertex line " + std::to_string(i) + " in " + path);
        }
        if (labeled) {
            int lab;
            if (!(ss >> lab)) throw FormatError("missing label on vertex line " + std::to_string(i));
            (*pc.labels)[i] = static_cast<std::uint16_t>(lab);
        }
    }
    pc.validate();
    return pc;
}

// ---- dataset manifest ------------------------------------------------------

struct ManifestEntry {
    std::string id;
    std::string volume_path;  // relative to the manifest file
    std::string cloud_path;
    std::uint64_t seed = 0;
    std::string role;  // pretrain | train | val
};

struct Manifest {
    std::vector<ManifestEntry> samples;
    std::string base_dir;  // set on load

    std::string resolve(const std::string& rel) const {
        return (std::filesystem::path(base_dir) / rel).string();
    }
};

inline void write_manifest(const Manifest& m, const std::string& path) {
    nlohmann::json j;
    j["samples"] = nlohmann::json::array();
    for (const auto& s : m.samples) {
        j["samples"].push_back({{"id", s.id},
                                {"volume", s.volume_path},
                                {"cloud", s.cloud_path},
                                {"seed", s.seed},
                                {"role", s.role}});
    }
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    os << j.dump(2) << "\n";
}

inline Manifest read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("manifest not found: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad manifest JSON in " + path + ": " + e.what());
    }
    Manifest m;
    m.base_dir = std::filesystem::path(path).parent_path().string();
    try {
        for (const auto& s : j.at("samples")) {
            ManifestEntry e;
            e.id = s.at("id").get<std::string>();
            e.volume_path = s.at("volume").get<std::string>();
            e.cloud_path = s.at("cloud").get<std::string>();
            e.seed = s.at("seed").get<std::uint64_t>();
            e.role = s.at("role").get<std::string>();
            m.samples.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest schema error in " + path + ": " + e.what());
    }
    return m;
}

}  // namespace dentalign
