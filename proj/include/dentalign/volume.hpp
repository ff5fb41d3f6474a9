#pragma once

#include <array>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "dentalign/errors.hpp"

namespace dentalign {

// Signed axis permutation relative to RAS. code[k] in {+-1,+-2,+-3}: volume
// index axis k runs along RAS axis |code[k]|-1, reversed when negative.
// Identity (already RAS) is {1,2,3}.
struct Orientation {
    std::array<int, 3> code{1, 2, 3};

    bool is_identity() const { return code == std::array<int, 3>{1, 2, 3}; }

    void validate() const {
        std::array<bool, 3> seen{false, false, false};
        for (int c : code) {
            const int a = std::abs(c);
            if (a < 1 || a > 3 || seen[static_cast<std::size_t>(a - 1)]) {
                throw DataError("invalid orientation code", "orientation");
            }
            seen[static_cast<std::size_t>(a - 1)] = true;
        }
    }
};

// Scalar voxel grid with physical spacing (mm). Values are Hounsfield units
// before clip_normalize and unitless [0,1] after. Flat layout: index (i,j,k)
// -> (i*ny + j)*nz + k.
struct VoxelVolume {
    std::array<std::int64_t, 3> dims{0, 0, 0};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    Orientation orientation;
    std::vector<double> values;
    std::optional<std::vector<std::uint16_t>> labels;

    std::int64_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }

    std::int64_t flat(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return (i * dims[1] + j) * dims[2] + k;
    }

    double& at(std::int64_t i, std::int64_t j, std::int64_t k) {
        return values[static_cast<std::size_t>(flat(i, j, k))];
    }
    double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return values[static_cast<std::size_t>(flat(i, j, k))];
    }

    std::uint16_t label_at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return (*labels)[static_cast<std::size_t>(flat(i, j, k))];
    }

    void validate() const {
        for (double s : spacing) {
            if (s <= 0) throw DataError("spacing must be strictly positive", "volume");
        }
        for (auto d : dims) {
            if (d < 0) throw DataError("negative dimension", "volume");
        }
        orientation.validate();
        if (static_cast<std::int64_t>(values.size()) != voxel_count()) {
            throw DataError("value payload does not match dims", "volume");
        }
        if (labels && static_cast<std::int64_t>(labels->size()) != voxel_count()) {
            throw DataError("label payload does not match dims", "volume");
        }
    }

    static VoxelVolume filled(std::array<std::int64_t, 3> d, std::array<double, 3> sp, double v,
                              bool with_labels = false) {
        VoxelVolume out;
        out.dims = d;
        out.spacing = sp;
        out.values.assign(static_cast<std::size_t>(d[0] * d[1] * d[2]), v);
        if (with_labels) out.labels = std::vector<std::uint16_t>(out.values.size(), 0);
        return out;
    }
};

}  // namespace dentalign
