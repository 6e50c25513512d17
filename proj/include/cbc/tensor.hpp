#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cbc/errors.hpp"

namespace cbc {

struct Dims4 {
    std::size_t n = 0, c = 0, h = 0, w = 0;

    std::size_t total() const { return n * c * h * w; }
    bool operator==(const Dims4&) const = default;
};

/// Dense (N,C,H,W) tensor of doubles, row-major with w fastest.
class Tensor4 {
public:
    Tensor4() = default;  // empty sentinel; every op rejects it

    Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w)
        : dims_{n, c, h, w}, data_(n * c * h * w, 0.0) {
        if (n == 0 || c == 0 || h == 0 || w == 0)
            throw ShapeError("tensor dims must all be >= 1");
    }

    explicit Tensor4(const Dims4& d) : Tensor4(d.n, d.c, d.h, d.w) {}

    const Dims4& dims() const { return dims_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * dims_.c + c) * dims_.h + h) * dims_.w + w];
    }
    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * dims_.c + c) * dims_.h + h) * dims_.w + w];
    }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    void fill(double v) { data_.assign(data_.size(), v); }

    bool all_finite() const;

    bool operator==(const Tensor4&) const = default;

private:
    Dims4 dims_{};
    std::vector<double> data_;
};

}  // namespace cbc
