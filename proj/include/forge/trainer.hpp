// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "forge/adapters.hpp"
#include "forge/schema.hpp"

namespace forge {

struct ConditionDropout {
    double image = 0.05;
    double text = 0.05;
    double both = 0.05;

    void validate() const;
};

struct TrainConfig {
    int epochs = 100;
    int batch_size = 64;
    int resolution = 512;
    double learning_rate = 5e-6;
    ConditionDropout dropout;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int train_steps = 1000;      ///< diffusion timesteps sampled from [1, train_steps]
    int checkpoint_every = 0;    ///< optimizer steps between checkpoints; 0 = once per epoch
    int text_dims = 8;

    void validate() const;
    static TrainConfig from_json(const Json& j);
    Json to_json() const;
};

/// One training example: the noisy target latent, its timestep, the input-image latent and
/// the instruction embedding (zeroed when dropped), and the noise that was added.
struct TrainSample {
    Tensor3<double> z_t;
    int t = 0;
    Tensor3<double> z_cond;
    Eigen::VectorXd text;
    Tensor3<double> eps;
    bool image_dropped = false;
    bool text_dropped = false;
};

using TrainBatch = std::vector<TrainSample>;

/// Trainable noise predictor eps_theta(z_t, z_ori, y_instr, t) with a flat parameter vector.
class TrainableDenoiser {
public:
    virtual ~TrainableDenoiser() = default;
    virtual std::string version() const = 0;
    virtual const Eigen::VectorXd& parameters() const = 0;
    virtual void set_parameters(const Eigen::VectorXd& p) = 0;
    virtual Tensor3<double> predict(const TrainSample& s) const = 0;
    /// Gradient of <upstream, predict(s)> with respect to the parameters.
    virtual Eigen::VectorXd vjp(const TrainSample& s, const Tensor3<double>& upstream) const = 0;
};

/// eps = tanh(A z_t + B z_cond + U e + b + v t / T) per pixel, with channel-mixing matrices
/// A, B (C x C), text projection U (C x E), bias b and time gain v.
class TinyDenoiser final : public TrainableDenoiser {
public:
    TinyDenoiser(int channels, int text_dims, int train_steps, std::uint64_t seed);
    std::string version() const override { return "tiny-tanh-denoiser/1"; }
    const Eigen::VectorXd& parameters() const override { return params_; }
    void set_parameters(const Eigen::VectorXd& p) override;
    Tensor3<double> predict(const TrainSample& s) const override;
    Eigen::VectorXd vjp(const TrainSample& s, const Tensor3<double>& upstream) const override;

    static Eigen::Index parameter_count(int channels, int text_dims) {
        return Eigen::Index(2 * channels * channels + channels * text_dims + 2 * channels);
    }

private:
    Tensor3<double> preactivation(const TrainSample& s) const;
    int c_, e_, steps_;
    Eigen::VectorXd params_;
};

/// Deterministic hashed embedding of an instruction in [-1, 1]^dims.
Eigen::VectorXd text_embedding(const std::string& instruction, int dims);

/// Mean over batch and elements of (eps - eps_theta)^2.
double compute_loss(const TrainBatch& batch, const TrainableDenoiser& denoiser);
/// Loss and its gradient with respect to the denoiser parameters.
double compute_loss_and_gradient(const TrainBatch& batch, const TrainableDenoiser& denoiser, Eigen::VectorXd& grad);

/// Per sample, independent draws drop the image condition, the text condition, or both.
TrainBatch apply_condition_dropout(TrainBatch batch, const ConditionDropout& probs, std::uint64_t seed);

class Adam {
public:
    Adam(Eigen::Index n, double lr, double beta1, double beta2, double eps);
    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
    Json state() const;
    void load(const Json& j);
    long steps() const { return t_; }

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    Eigen::VectorXd m_, v_;
};

/// Encoded (input latent, output latent, instruction) triple.
struct TrainExample {
    std::string id;
    Tensor3<double> z_input;
    Tensor3<double> z_output;
    std::string instruction;
};

/// Loads both images of each record, resizes them to resolution x resolution and encodes them.
std::vector<TrainExample> load_examples(std::span<const TripletRecord> records, const std::filesystem::path& root,
                                        int resolution, const LatentCodec& codec);

struct FinetuneResult {
    std::filesystem::path checkpoint;
    std::vector<double> losses; ///< one per optimizer step
    long steps = 0;
    bool diverged = false;
    std::vector<std::filesystem::path> checkpoints;
};

/// Adam on the mean squared noise error. Writes step-indexed checkpoints and the loss curve to
/// `out_dir`. A non-finite loss stops training and returns the last good checkpoint.
FinetuneResult finetune(std::span<const TrainExample> examples, const TrainConfig& cfg, TrainableDenoiser& denoiser,
                        const std::filesystem::path& out_dir);

/// Restores parameters from a checkpoint file written by finetune.
void load_checkpoint(const std::filesystem::path& path, TrainableDenoiser& denoiser);

} // namespace forge
