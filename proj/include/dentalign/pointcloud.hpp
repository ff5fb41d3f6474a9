#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "dentalign/errors.hpp"

namespace dentalign {

using Vec3 = std::array<double, 3>;

inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double dist2(const Vec3& a, const Vec3& b) { return dot(a - b, a - b); }

// Surface points in mm with unit normals and optional per-point FDI codes.
struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    std::optional<std::vector<std::uint16_t>> labels;

    std::size_t size() const { return points.size(); }

    void validate() const {
        if (normals.size() != points.size()) {
            throw DataError("normal count does not match point count", "point cloud");
        }
        for (const auto& n : normals) {
            if (std::abs(norm(n) - 1.0) > 1e-6) {
                throw DataError("normal is not unit length", "point cloud");
            }
        }
        if (labels && labels->size() != points.size()) {
            throw DataError("label count does not match point count", "point cloud");
        }
    }

    Vec3 centroid() const {
        Vec3 c{0, 0, 0};
        for (const auto& p : points) c = c + p;
        const double n = points.empty() ? 1.0 : static_cast<double>(points.size());
        return (1.0 / n) * c;
    }
};

}  // namespace dentalign
