// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "forge/errors.hpp"
#include "forge/tensor.hpp"

namespace forge {

inline constexpr double kDefaultBinarizeFactor = 0.8125;

/// Soft localization map for one prompt token. Entries are non-negative.
template <typename Scalar>
struct AttentionMap {
    Grid<Scalar> values;
    std::string token;

    void validate() const {
        if (values.size() == 0) throw PreconditionError("attention map is empty");
        if (!values.isFinite().all() || (values < Scalar(0)).any()) {
            throw ValidationError("values", "attention entries must be finite and non-negative");
        }
    }
};

/// A {0,1} grid. Construction rejects any other value.
class BinaryMask {
public:
    BinaryMask() = default;
    explicit BinaryMask(MaskGrid values) : values_(std::move(values)) {
        if ((values_ > std::uint8_t(1)).any()) throw ValidationError("values", "mask entries must be 0 or 1");
    }

    static BinaryMask zeros(Eigen::Index rows, Eigen::Index cols) { return BinaryMask(MaskGrid::Zero(rows, cols)); }
    static BinaryMask ones(Eigen::Index rows, Eigen::Index cols) { return BinaryMask(MaskGrid::Ones(rows, cols)); }

    const MaskGrid& grid() const noexcept { return values_; }
    Eigen::Index rows() const noexcept { return values_.rows(); }
    Eigen::Index cols() const noexcept { return values_.cols(); }
    bool empty() const noexcept { return values_.size() == 0; }
    std::uint8_t operator()(Eigen::Index y, Eigen::Index x) const { return values_(y, x); }

    std::int64_t area() const { return values_.template cast<std::int64_t>().sum(); }
    bool none() const { return area() == 0; }
    bool same_shape(const BinaryMask& o) const noexcept { return rows() == o.rows() && cols() == o.cols(); }
    bool operator==(const BinaryMask& o) const { return same_shape(o) && (values_ == o.values_).all(); }

    /// True when every set pixel of `other` is also set here.
    bool contains(const BinaryMask& other) const {
        if (!same_shape(other)) throw PreconditionError("mask shape mismatch");
        return ((other.values_ == 1) && (values_ == 0)).count() == 0;
    }

private:
    MaskGrid values_;
};

/// Cumulative signal levels abar_0..abar_T of a diffusion forward process.
template <typename Scalar>
class NoiseSchedule {
public:
    NoiseSchedule() : NoiseSchedule(std::vector<Scalar>{Scalar(1)}) {}

    /// `alpha_bars[0]` must be 1; the sequence must be non-increasing and stay in (0, 1].
    explicit NoiseSchedule(std::vector<Scalar> alpha_bars) : alpha_bars_(std::move(alpha_bars)) {
        if (alpha_bars_.empty() || alpha_bars_.front() != Scalar(1)) {
            throw ValidationError("alphas", "schedule must start at abar_0 = 1");
        }
        for (std::size_t t = 1; t < alpha_bars_.size(); ++t) {
            const Scalar a = alpha_bars_[t];
            if (!(a > Scalar(0) && a <= Scalar(1))) throw ValidationError("alphas", "abar_t must lie in (0, 1]");
            if (a > alpha_bars_[t - 1]) throw ValidationError("alphas", "abar_t must be non-increasing in t");
        }
    }

    /// Builds abar from per-step betas. With `cumulative` false each entry is read as 1 - beta_t
    /// directly instead of the running product.
    static NoiseSchedule from_betas(std::span<const Scalar> betas, bool cumulative = true) {
        std::vector<Scalar> abar{Scalar(1)};
        Scalar running(1);
        for (Scalar b : betas) {
            running = cumulative ? running * (Scalar(1) - b) : Scalar(1) - b;
            abar.push_back(running);
        }
        return NoiseSchedule(std::move(abar));
    }

    /// The latent-diffusion "scaled linear" schedule over `train_steps`, subsampled at
    /// `steps` evenly spaced timesteps.
    static NoiseSchedule scaled_linear(int steps, int train_steps = 1000, Scalar beta_start = Scalar(0.00085),
                                       Scalar beta_end = Scalar(0.012)) {
        if (steps < 1 || train_steps < steps) throw ValidationError("T", "need 1 <= steps <= train_steps");
        std::vector<Scalar> full(static_cast<std::size_t>(train_steps) + 1);
        full[0] = Scalar(1);
        const Scalar s0 = std::sqrt(beta_start), s1 = std::sqrt(beta_end);
        for (int i = 0; i < train_steps; ++i) {
            const Scalar frac = train_steps == 1 ? Scalar(0) : Scalar(i) / Scalar(train_steps - 1);
            const Scalar root = s0 + (s1 - s0) * frac;
            full[static_cast<std::size_t>(i) + 1] = full[static_cast<std::size_t>(i)] * (Scalar(1) - root * root);
        }
        std::vector<Scalar> abar{Scalar(1)};
        for (int k = 1; k <= steps; ++k) {
            const auto idx = static_cast<std::size_t>(std::llround(double(k) * train_steps / steps));
            abar.push_back(full[idx]);
        }
        return NoiseSchedule(std::move(abar));
    }

    int T() const noexcept { return static_cast<int>(alpha_bars_.size()) - 1; }
    Scalar alpha_bar(int t) const {
        if (t < 0 || t > T()) throw PreconditionError("timestep out of range");
        return alpha_bars_[static_cast<std::size_t>(t)];
    }
    const std::vector<Scalar>& alpha_bars() const noexcept { return alpha_bars_; }

private:
    std::vector<Scalar> alpha_bars_;
};

template <typename Scalar>
struct LatentState {
    Tensor3<Scalar> z;
    int t = 0;
};

template <typename Scalar>
struct GuidanceConfig {
    Scalar s_image = Scalar(1.5);
    Scalar s_text = Scalar(7.5);

    void validate() const {
        if (!std::isfinite(s_image) || s_image < 0) throw ValidationError("s_I", "must be finite and >= 0");
        if (!std::isfinite(s_text) || s_text < 0) throw ValidationError("s_T", "must be finite and >= 0");
    }
};

/// Everything the refinement denoiser needs: the noisy latent, target prompt, identity
/// feature of the original image and the edge map of the target image.
struct RefinementRequest {
    LatentState<double> z_t;
    std::string y_tar;
    Eigen::VectorXd f_ori;
    MaskGrid canny;
};

// ---------------------------------------------------------------------------------------
// Masks

/// 1 where the map exceeds `factor` times its mean, 0 elsewhere.
template <typename Scalar>
BinaryMask binarize_attention(const AttentionMap<Scalar>& map, Scalar factor = Scalar(kDefaultBinarizeFactor)) {
    map.validate();
    const Scalar threshold = factor * map.values.mean();
    return BinaryMask((map.values > threshold).template cast<std::uint8_t>());
}

inline BinaryMask union_masks(std::span<const BinaryMask> masks) {
    if (masks.empty()) throw PreconditionError("union of an empty mask list");
    MaskGrid acc = masks.front().grid();
    for (const auto& m : masks.subspan(1)) {
        if (!m.same_shape(masks.front())) throw PreconditionError("union: mask shape mismatch");
        acc = acc.max(m.grid());
    }
    return BinaryMask(std::move(acc));
}

inline std::int64_t mask_overlap(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_shape(b)) throw PreconditionError("overlap: mask shape mismatch");
    return (a.grid() * b.grid()).template cast<std::int64_t>().sum();
}

/// Index of the candidate with maximal overlap with `ref`; ties go to the larger area,
/// then to the earlier index.
inline std::size_t select_max_overlap_index(std::span<const BinaryMask> candidates, const BinaryMask& ref) {
    if (candidates.empty()) throw PreconditionError("select_max_overlap: no candidates");
    std::size_t best = 0;
    std::int64_t best_overlap = mask_overlap(candidates[0], ref);
    std::int64_t best_area = candidates[0].area();
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const std::int64_t ov = mask_overlap(candidates[i], ref);
        const std::int64_t area = candidates[i].area();
        if (ov > best_overlap || (ov == best_overlap && area > best_area)) {
            best = i;
            best_overlap = ov;
            best_area = area;
        }
    }
    return best;
}

inline BinaryMask select_max_overlap(std::span<const BinaryMask> candidates, const BinaryMask& ref) {
    return candidates[select_max_overlap_index(candidates, ref)];
}

/// Nearest-neighbour resampling: output pixel (y, x) reads source (floor(y*H/h'), floor(x*W/w')).
inline BinaryMask resample_mask(const BinaryMask& mask, Eigen::Index rows, Eigen::Index cols) {
    if (rows < 1 || cols < 1) throw PreconditionError("resample target must be at least 1x1");
    if (mask.empty()) throw PreconditionError("resample of an empty mask");
    if (rows == mask.rows() && cols == mask.cols()) return mask;
    MaskGrid out(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y) {
        const Eigen::Index sy = (y * mask.rows()) / rows;
        for (Eigen::Index x = 0; x < cols; ++x) out(y, x) = mask(sy, (x * mask.cols()) / cols);
    }
    return BinaryMask(std::move(out));
}

/// Morphological dilation with a Euclidean disc of the given radius.
inline BinaryMask dilate_mask(const BinaryMask& mask, int radius) {
    if (radius <= 0) return mask;
    const Eigen::Index h = mask.rows(), w = mask.cols();
    MaskGrid out = MaskGrid::Zero(h, w);
    for (Eigen::Index y = 0; y < h; ++y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            if (!mask(y, x)) continue;
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    if (dy * dy + dx * dx > radius * radius) continue;
                    const Eigen::Index yy = y + dy, xx = x + dx;
                    if (yy >= 0 && yy < h && xx >= 0 && xx < w) out(yy, xx) = 1;
                }
            }
        }
    }
    return BinaryMask(std::move(out));
}

inline BinaryMask invert_mask(const BinaryMask& mask) {
    return BinaryMask((mask.grid() == 0).template cast<std::uint8_t>());
}

/// Erosion is the complement of dilating the complement; pixels beyond the border count as set.
inline BinaryMask erode_mask(const BinaryMask& mask, int radius) {
    return invert_mask(dilate_mask(invert_mask(mask), radius));
}

struct EditRegion {
    BinaryMask mask;
    bool fell_back = false;
};

/// Binarizes each keyword map, unions them, resamples to the target grid and optionally
/// dilates. An empty union falls back to the full grid when `full_fallback` is set.
template <typename Scalar>
EditRegion edit_region_from_attention(std::span<const AttentionMap<Scalar>> maps, Eigen::Index rows,
                                      Eigen::Index cols, Scalar factor = Scalar(kDefaultBinarizeFactor),
                                      int dilation = 0, bool full_fallback = true) {
    std::vector<BinaryMask> binary;
    binary.reserve(maps.size());
    for (const auto& m : maps) binary.push_back(binarize_attention(m, factor));
    BinaryMask merged = resample_mask(union_masks(binary), rows, cols);
    if (merged.none()) {
        if (full_fallback) return {BinaryMask::ones(rows, cols), true};
        return {std::move(merged), false};
    }
    return {dilate_mask(merged, dilation), false};
}

// ---------------------------------------------------------------------------------------
// Latent arithmetic

/// Standard normal tensor drawn from mt19937_64 seeded with `seed`.
template <typename Scalar>
Tensor3<Scalar> standard_normal(Eigen::Index channels, Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor3<Scalar> out(channels, rows, cols);
    for (Eigen::Index c = 0; c < channels; ++c) {
        for (Eigen::Index y = 0; y < rows; ++y) {
            for (Eigen::Index x = 0; x < cols; ++x) out(c, y, x) = static_cast<Scalar>(normal(rng));
        }
    }
    return out;
}

/// sqrt(abar) * z + sqrt(1 - abar) * noise, for any abar in [0, 1].
template <typename Scalar>
Tensor3<Scalar> add_noise(const Tensor3<Scalar>& z, Scalar alpha_bar, const Tensor3<Scalar>& noise) {
    if (!(alpha_bar >= Scalar(0) && alpha_bar <= Scalar(1))) throw PreconditionError("abar must lie in [0, 1]");
    const Scalar signal = std::sqrt(alpha_bar), spread = std::sqrt(Scalar(1) - alpha_bar);
    return z.binary(noise, [&](const auto& a, const auto& n) -> Grid<Scalar> { return signal * a + spread * n; });
}

template <typename Scalar>
LatentState<Scalar> forward_noise(const LatentState<Scalar>& z_ori, int t, const NoiseSchedule<Scalar>& schedule,
                                  std::uint64_t seed) {
    const Scalar abar = schedule.alpha_bar(t);
    const auto& z = z_ori.z;
    return {add_noise(z, abar, standard_normal<Scalar>(z.channels(), z.rows(), z.cols(), seed)), t};
}

/// z_t inside the mask, z_ori_t outside. Values are copied, never mixed arithmetically.
template <typename Scalar>
LatentState<Scalar> blend_latents(const LatentState<Scalar>& z_t, const LatentState<Scalar>& z_ori_t,
                                  const BinaryMask& mask) {
    if (z_t.t != z_ori_t.t) throw PreconditionError("blend: timestep mismatch");
    if (!z_t.z.same_shape(z_ori_t.z)) throw PreconditionError("blend: latent shape mismatch");
    if (mask.rows() != z_t.z.rows() || mask.cols() != z_t.z.cols()) throw PreconditionError("blend: mask shape mismatch");
    const auto inside = mask.grid() != 0;
    return {z_t.z.binary(z_ori_t.z, [&](const auto& a, const auto& b) -> Grid<Scalar> { return inside.select(a, b); }),
            z_t.t};
}

/// Two-scale classifier-free guidance over image and text conditioning.
template <typename Scalar>
Tensor3<Scalar> cfg_compose(const Tensor3<Scalar>& eps_uncond, const Tensor3<Scalar>& eps_img,
                            const Tensor3<Scalar>& eps_full, const GuidanceConfig<Scalar>& g) {
    if (!eps_uncond.same_shape(eps_img) || !eps_img.same_shape(eps_full)) throw PreconditionError("cfg: shape mismatch");
    Tensor3<Scalar> out = eps_uncond;
    for (Eigen::Index c = 0; c < out.channels(); ++c) {
        out[c] = eps_uncond[c] + g.s_image * (eps_img[c] - eps_uncond[c]) + g.s_text * (eps_full[c] - eps_img[c]);
    }
    return out;
}

/// Packages the refinement call. `encoder` maps an image to a feature vector, `edges` maps
/// an image to a binary edge grid; their failures are rethrown as AdapterError with context.
template <typename Encoder, typename EdgeExtractor>
RefinementRequest build_refinement_request(const Image& i_ori, const Image& i_tar, std::string y_tar,
                                           LatentState<double> z_t, Encoder&& encoder, EdgeExtractor&& edges) {
    if (!i_ori.same_shape(i_tar)) throw PreconditionError("refinement: images differ in size");
    RefinementRequest req{std::move(z_t), std::move(y_tar), {}, {}};
    try {
        req.f_ori = encoder(i_ori);
    } catch (const std::exception& e) {
        throw AdapterError(std::string("image encoder failed on I_ori: ") + e.what());
    }
    try {
        req.canny = edges(i_tar);
    } catch (const std::exception& e) {
        throw AdapterError(std::string("edge extractor failed on I_tar: ") + e.what());
    }
    if (!req.f_ori.allFinite()) throw ValidationError("f_ori", "feature vector must be finite");
    if ((req.canny > std::uint8_t(1)).any()) throw ValidationError("canny", "edge map must be binary");
    return req;
}

} // namespace forge
