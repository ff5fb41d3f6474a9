#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dentalign/errors.hpp"
#include "dentalign/rng.hpp"

namespace dentalign::ad {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

// Dense row-major double tensor. Rank 0 is a scalar.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d, bool rg = false)
        : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
        for (auto dim : shape) {
            if (dim <= 0) throw ShapeError("non-positive dimension in " + shape_str(shape));
        }
        if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
            throw ShapeError("shape " + shape_str(shape) + " does not match data length " +
                             std::to_string(data.size()));
        }
    }

    static Tensor zeros(Shape s, bool rg = false) {
        auto n = shape_numel(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0), rg);
    }

    static Tensor full(Shape s, double v, bool rg = false) {
        auto n = shape_numel(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), v), rg);
    }

    static Tensor scalar(double v, bool rg = false) { return Tensor({}, {v}, rg); }

    // Uniform(-bound, bound) fill, used for weight init.
    static Tensor uniform(Shape s, double bound, Rng& rng, bool rg = false) {
        auto t = zeros(std::move(s), rg);
        for (auto& v : t.data) v = rng.uniform(-bound, bound);
        return t;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    bool is_scalar() const { return numel() == 1; }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }

    std::int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::int64_t cols() const {
        if (shape.size() < 2) throw ShapeError("cols() on tensor of rank " + std::to_string(rank()));
        return shape[1];
    }

    double& at2(std::int64_t i, std::int64_t j) { return data[static_cast<std::size_t>(i * shape[1] + j)]; }
    double at2(std::int64_t i, std::int64_t j) const { return data[static_cast<std::size_t>(i * shape[1] + j)]; }
};

}  // namespace dentalign::ad
