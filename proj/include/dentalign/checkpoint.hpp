#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "dentalign/errors.hpp"
#include "dentalign/tensor.hpp"

namespace dentalign {

// Sorted by name so identical contents always serialize identically.
using NamedTensors = std::map<std::string, ad::Tensor>;

namespace detail {
constexpr char kCkptMagic[8] = {'D', 'L', 'G', 'N', 'C', 'K', 'P', '1'};
}

inline void save_checkpoint(const NamedTensors& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open " + path + " for writing");
    os.write(detail::kCkptMagic, 8);
    const std::uint64_t count = params.size();
    os.write(reinterpret_cast<const char*>(&count), 8);
    for (const auto& [name, t] : params) {
        const std::uint32_t name_len = static_cast<std::uint32_t>(name.size());
        os.write(reinterpret_cast<const char*>(&name_len), 4);
        os.write(name.data(), name_len);
        const std::uint32_t rank = static_cast<std::uint32_t>(t.shape.size());
        os.write(reinterpret_cast<const char*>(&rank), 4);
        for (auto d : t.shape) {
            const std::uint64_t dim = static_cast<std::uint64_t>(d);
            os.write(reinterpret_cast<const char*>(&dim), 8);
        }
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!os) throw CheckpointError("short write to " + path);
}

inline NamedTensors load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    const std::string bytes = ss.str();
    std::size_t pos = 0;
    auto read = [&](void* p, std::size_t n, const char* what) {
        if (pos + n > bytes.size()) {
            throw CheckpointError(std::string(what) + " truncated at byte offset " + std::to_string(pos) +
                                  " in " + path);
        }
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    };

    char magic[8];
    read(magic, 8, "magic");
    if (std::memcmp(magic, detail::kCkptMagic, 8) != 0) throw CheckpointError("bad magic in " + path);
    std::uint64_t count;
    read(&count, 8, "entry count");

    NamedTensors out;
    for (std::uint64_t e = 0; e < count; ++e) {
        std::uint32_t name_len;
        read(&name_len, 4, "name length");
        std::string name(name_len, '\0');
        read(name.data(), name_len, "name");
        std::uint32_t rank;
        read(&rank, 4, "rank");
        if (rank > 8) throw CheckpointError("implausible rank " + std::to_string(rank) + " for " + name);
        ad::Shape shape(rank);
        for (auto& d : shape) {
            std::uint64_t dim;
            read(&dim, 8, "dim");
            d = static_cast<std::int64_t>(dim);
        }
        const auto numel = ad::shape_numel(shape);
        std::vector<double> data(static_cast<std::size_t>(numel));
        read(data.data(), data.size() * sizeof(double), name.c_str());
        out.emplace(std::move(name), ad::Tensor(std::move(shape), std::move(data)));
    }
    if (pos != bytes.size()) {
        throw CheckpointError("trailing bytes after entry " + std::to_string(count) + " in " + path);
    }
    return out;
}

// Shape-checked merge of loaded values into an existing parameter set.
inline void apply_checkpoint(NamedTensors& dst, const NamedTensors& src) {
    for (auto& [name, t] : dst) {
        auto it = src.find(name);
        if (it == src.end()) throw CheckpointError("checkpoint missing parameter " + name);
        if (it->second.shape != t.shape) {
            throw CheckpointError("shape mismatch for " + name + ": expected " + ad::shape_str(t.shape) +
                                  ", checkpoint has " + ad::shape_str(it->second.shape));
        }
        const bool rg = t.requires_grad;
        t = it->second;
        t.requires_grad = rg;
    }
}

}  // namespace dentalign
