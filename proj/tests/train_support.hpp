// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <random>

#include "forge/trainer.hpp"

namespace forge::testing {

inline Tensor3<double> normal_tensor(std::mt19937_64& rng, int c, int h, int w) {
    std::normal_distribution<double> n;
    Tensor3<double> t(c, h, w);
    for (int k = 0; k < c; ++k)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) t(k, y, x) = n(rng);
    return t;
}

inline TrainBatch random_batch(std::uint64_t seed, int n, int c, int h, int w, int text_dims, int steps) {
    std::mt19937_64 rng(seed);
    TrainBatch b;
    for (int i = 0; i < n; ++i) {
        TrainSample s;
        s.z_t = normal_tensor(rng, c, h, w);
        s.z_cond = normal_tensor(rng, c, h, w);
        s.eps = normal_tensor(rng, c, h, w);
        s.t = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(steps));
        s.text = Eigen::VectorXd::Random(text_dims);
        b.push_back(std::move(s));
    }
    return b;
}

inline std::vector<TrainExample> random_examples(std::uint64_t seed, int n, int c, int size) {
    std::mt19937_64 rng(seed);
    std::vector<TrainExample> out;
    for (int i = 0; i < n; ++i) {
        out.push_back({"ex" + std::to_string(i), normal_tensor(rng, c, size, size), normal_tensor(rng, c, size, size),
                       "instruction " + std::to_string(i)});
    }
    return out;
}

/// Largest relative error between the analytic gradient and central differences with step h.
inline double gradient_check(const TrainBatch& batch, TrainableDenoiser& model, double h = 1e-6) {
    Eigen::VectorXd grad;
    compute_loss_and_gradient(batch, model, grad);
    const Eigen::VectorXd p0 = model.parameters();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < p0.size(); ++i) {
        Eigen::VectorXd p = p0;
        p(i) += h;
        model.set_parameters(p);
        const double up = compute_loss(batch, model);
        p(i) -= 2 * h;
        model.set_parameters(p);
        const double down = compute_loss(batch, model);
        const double fd = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(fd - grad(i)) / std::max(1e-8, std::abs(fd) + std::abs(grad(i))));
    }
    model.set_parameters(p0);
    return worst;
}

} // namespace forge::testing
