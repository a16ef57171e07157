// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "forge/editmath.hpp"
#include "forge/hash.hpp"

namespace forge {

/// Deterministic DDIM update from timestep t to t-1. The clean-latent estimate is clipped
/// to [-clip, clip] so that small abar_t cannot blow up the trajectory.
template <typename Scalar>
Tensor3<Scalar> ddim_step(const Tensor3<Scalar>& z_t, const Tensor3<Scalar>& eps, Scalar abar_t, Scalar abar_prev,
                          Scalar clip = Scalar(1)) {
    const Scalar sig_t = std::sqrt(abar_t), noise_t = std::sqrt(Scalar(1) - abar_t);
    const Scalar sig_p = std::sqrt(abar_prev), noise_p = std::sqrt(Scalar(1) - abar_prev);
    return z_t.binary(eps, [&](const auto& z, const auto& e) -> Grid<Scalar> {
        const Grid<Scalar> x0 = ((z - noise_t * e) / sig_t).max(-clip).min(clip);
        return sig_p * x0 + noise_p * e;
    });
}

inline std::uint64_t initial_noise_seed(std::uint64_t seed) { return mix_seed(seed, "init-noise"); }

/// Seed of the forward-noised original used as the out-of-mask reference at step t.
inline std::uint64_t blend_reference_seed(std::uint64_t seed, int t) {
    return mix_seed(mix_seed(seed, "blend-ref"), static_cast<std::uint64_t>(t));
}

template <typename Scalar>
struct BlendStep {
    int t = 0;
    Tensor3<Scalar> blended;
};

template <typename Scalar>
struct SamplingResult {
    Tensor3<Scalar> latent;
    std::vector<BlendStep<Scalar>> trace;
};

/// Plain text-to-latent sampling. `predict(z_t_state) -> eps`.
template <typename Scalar, typename Predictor>
SamplingResult<Scalar> sample(Eigen::Index channels, Eigen::Index rows, Eigen::Index cols,
                              const NoiseSchedule<Scalar>& schedule, std::uint64_t seed, Predictor&& predict,
                              bool record_trace = false) {
    SamplingResult<Scalar> out;
    Tensor3<Scalar> z = standard_normal<Scalar>(channels, rows, cols, initial_noise_seed(seed));
    for (int t = schedule.T(); t >= 1; --t) {
        if (record_trace) out.trace.push_back({t, z});
        const Tensor3<Scalar> eps = predict(LatentState<Scalar>{z, t});
        z = ddim_step(z, eps, schedule.alpha_bar(t), schedule.alpha_bar(t - 1));
    }
    if (record_trace) out.trace.push_back({0, z});
    out.latent = std::move(z);
    return out;
}

/// Masked inpainting loop: before every prediction, and once more at t = 0, the latent is
/// replaced outside `mask` with the original forward-noised to the same timestep.
/// With an all-ones mask this is exactly `sample` with the same seed.
template <typename Scalar, typename Predictor>
SamplingResult<Scalar> blended_sample(const Tensor3<Scalar>& z_ori, const BinaryMask& mask,
                                      const NoiseSchedule<Scalar>& schedule, std::uint64_t seed, Predictor&& predict,
                                      bool record_trace = false) {
    SamplingResult<Scalar> out;
    const LatentState<Scalar> original{z_ori, 0};
    Tensor3<Scalar> z = standard_normal<Scalar>(z_ori.channels(), z_ori.rows(), z_ori.cols(), initial_noise_seed(seed));
    for (int t = schedule.T(); t >= 0; --t) {
        const auto reference = forward_noise(original, t, schedule, blend_reference_seed(seed, t));
        z = blend_latents(LatentState<Scalar>{std::move(z), t}, reference, mask).z;
        if (record_trace) out.trace.push_back({t, z});
        if (t == 0) break;
        const Tensor3<Scalar> eps = predict(LatentState<Scalar>{z, t});
        z = ddim_step(z, eps, schedule.alpha_bar(t), schedule.alpha_bar(t - 1));
    }
    out.latent = std::move(z);
    return out;
}

} // namespace forge
