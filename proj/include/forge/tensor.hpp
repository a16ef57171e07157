// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "forge/errors.hpp"

namespace forge {

/// Dense 2-D grid, row-major so that (row, col) matches image (y, x).
template <typename Scalar>
using Grid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MaskGrid = Grid<std::uint8_t>;

/// Channel-major C x H x W tensor. Used for latents, noise predictions and images.
template <typename Scalar>
class Tensor3 {
public:
    using scalar_type = Scalar;

    Tensor3() = default;
    Tensor3(Eigen::Index channels, Eigen::Index rows, Eigen::Index cols, Scalar fill = Scalar(0))
        : planes_(static_cast<std::size_t>(channels), Grid<Scalar>::Constant(rows, cols, fill)) {}
    explicit Tensor3(std::vector<Grid<Scalar>> planes) : planes_(std::move(planes)) {
        for (const auto& p : planes_) {
            if (p.rows() != rows() || p.cols() != cols()) {
                throw PreconditionError("Tensor3: channel planes differ in shape");
            }
        }
    }

    static Tensor3 Constant(Eigen::Index c, Eigen::Index h, Eigen::Index w, Scalar v) { return Tensor3(c, h, w, v); }

    Eigen::Index channels() const noexcept { return static_cast<Eigen::Index>(planes_.size()); }
    Eigen::Index rows() const noexcept { return planes_.empty() ? 0 : planes_.front().rows(); }
    Eigen::Index cols() const noexcept { return planes_.empty() ? 0 : planes_.front().cols(); }
    Eigen::Index size() const noexcept { return channels() * rows() * cols(); }
    bool empty() const noexcept { return size() == 0; }

    Grid<Scalar>& operator[](Eigen::Index c) { return planes_[static_cast<std::size_t>(c)]; }
    const Grid<Scalar>& operator[](Eigen::Index c) const { return planes_[static_cast<std::size_t>(c)]; }
    Scalar& operator()(Eigen::Index c, Eigen::Index y, Eigen::Index x) { return (*this)[c](y, x); }
    Scalar operator()(Eigen::Index c, Eigen::Index y, Eigen::Index x) const { return (*this)[c](y, x); }

    bool same_shape(const Tensor3& o) const noexcept {
        return channels() == o.channels() && rows() == o.rows() && cols() == o.cols();
    }

    bool all_finite() const {
        for (const auto& p : planes_) {
            if (!p.isFinite().all()) return false;
        }
        return true;
    }

    /// Applies `fn(out_plane, plane_a, plane_b, ...)`-style elementwise expressions channel by channel.
    template <typename Fn>
    Tensor3 unary(Fn&& fn) const {
        Tensor3 out;
        out.planes_.reserve(planes_.size());
        for (const auto& p : planes_) out.planes_.push_back(fn(p));
        return out;
    }

    template <typename Fn>
    Tensor3 binary(const Tensor3& o, Fn&& fn) const {
        require_same(o);
        Tensor3 out;
        out.planes_.reserve(planes_.size());
        for (std::size_t c = 0; c < planes_.size(); ++c) out.planes_.push_back(fn(planes_[c], o.planes_[c]));
        return out;
    }

    Tensor3 operator+(const Tensor3& o) const {
        return binary(o, [](const auto& a, const auto& b) -> Grid<Scalar> { return a + b; });
    }
    Tensor3 operator-(const Tensor3& o) const {
        return binary(o, [](const auto& a, const auto& b) -> Grid<Scalar> { return a - b; });
    }
    Tensor3 operator*(Scalar s) const {
        return unary([s](const auto& a) -> Grid<Scalar> { return a * s; });
    }

    Scalar sum() const {
        Scalar s(0);
        for (const auto& p : planes_) s += p.sum();
        return s;
    }
    Scalar abs_max() const {
        Scalar m(0);
        for (const auto& p : planes_) m = std::max(m, p.abs().maxCoeff());
        return m;
    }

    bool operator==(const Tensor3& o) const {
        if (!same_shape(o)) return false;
        for (std::size_t c = 0; c < planes_.size(); ++c) {
            if ((planes_[c] != o.planes_[c]).any()) return false;
        }
        return true;
    }

    void require_same(const Tensor3& o) const {
        if (!same_shape(o)) throw PreconditionError("Tensor3: shape mismatch");
    }

private:
    std::vector<Grid<Scalar>> planes_;
};

/// RGB image, channel values nominally in [0, 1]. Values are not clamped until written to disk.
using Image = Tensor3<double>;

} // namespace forge
