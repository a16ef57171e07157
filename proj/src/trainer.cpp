// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "forge/hash.hpp"
#include "forge/image.hpp"

namespace forge {

namespace {

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

void require_sample_shapes(const TrainSample& s, int channels, int text_dims) {
    if (!s.z_t.same_shape(s.z_cond) || !s.z_t.same_shape(s.eps)) throw PreconditionError("train sample: latent shapes differ");
    if (s.z_t.channels() != channels) throw PreconditionError("train sample: channel count differs from the denoiser");
    if (s.text.size() != text_dims) throw PreconditionError("train sample: text embedding has the wrong size");
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_json_vector(const Json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace

void ConditionDropout::validate() const {
    if (!is_probability(image)) throw ValidationError("dropout.image", "must lie in [0, 1]");
    if (!is_probability(text)) throw ValidationError("dropout.text", "must lie in [0, 1]");
    if (!is_probability(both)) throw ValidationError("dropout.both", "must lie in [0, 1]");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ValidationError("epochs", "must be >= 1");
    if (batch_size < 1) throw ValidationError("batch_size", "must be >= 1");
    if (resolution < 1) throw ValidationError("resolution", "must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning_rate", "must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValidationError("beta1", "must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("beta2", "must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ValidationError("adam_eps", "must be > 0");
    if (train_steps < 1) throw ValidationError("train_steps", "must be >= 1");
    if (checkpoint_every < 0) throw ValidationError("checkpoint_every", "must be >= 0");
    if (text_dims < 1) throw ValidationError("text_dims", "must be >= 1");
    dropout.validate();
}

TrainConfig TrainConfig::from_json(const Json& j) {
    TrainConfig c;
    if (j.is_null()) return c;
    if (!j.is_object()) throw ValidationError("trainer", "must be an object");
    auto read = [&](const char* key, auto& field) {
        if (!j.contains(key)) return;
        try {
            field = j.at(key).get<std::decay_t<decltype(field)>>();
        } catch (const Json::exception&) {
            throw ValidationError(key, "has the wrong type");
        }
    };
    read("epochs", c.epochs);
    read("batch_size", c.batch_size);
    read("resolution", c.resolution);
    read("learning_rate", c.learning_rate);
    read("seed", c.seed);
    read("beta1", c.beta1);
    read("beta2", c.beta2);
    read("adam_eps", c.adam_eps);
    read("train_steps", c.train_steps);
    read("checkpoint_every", c.checkpoint_every);
    read("text_dims", c.text_dims);
    if (j.contains("condition_dropout")) {
        const Json& d = j.at("condition_dropout");
        if (!d.is_object()) throw ValidationError("condition_dropout", "must be an object");
        c.dropout.image = d.value("image", c.dropout.image);
        c.dropout.text = d.value("text", c.dropout.text);
        c.dropout.both = d.value("both", c.dropout.both);
    }
    for (const auto& [key, _] : j.items()) {
        static const std::set<std::string> known{"epochs", "batch_size", "resolution", "learning_rate", "seed",
                                                 "beta1", "beta2", "adam_eps", "train_steps", "checkpoint_every",
                                                 "text_dims", "condition_dropout"};
        if (!known.contains(key)) throw ValidationError(key, "unknown trainer option");
    }
    c.validate();
    return c;
}

Json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"resolution", resolution},
            {"learning_rate", learning_rate},
            {"seed", seed},
            {"beta1", beta1},
            {"beta2", beta2},
            {"adam_eps", adam_eps},
            {"train_steps", train_steps},
            {"checkpoint_every", checkpoint_every},
            {"text_dims", text_dims},
            {"condition_dropout", {{"image", dropout.image}, {"text", dropout.text}, {"both", dropout.both}}}};
}

// ---------------------------------------------------------------------------------------

TinyDenoiser::TinyDenoiser(int channels, int text_dims, int train_steps, std::uint64_t seed)
    : c_(channels), e_(text_dims), steps_(train_steps) {
    if (channels < 1 || text_dims < 1 || train_steps < 1) throw ValidationError("denoiser", "sizes must be >= 1");
    params_.resize(parameter_count(channels, text_dims));
    std::mt19937_64 rng(mix_seed(seed, "tiny-denoiser-init"));
    std::normal_distribution<double> normal(0.0, 0.1);
    for (Eigen::Index i = 0; i < params_.size(); ++i) params_(i) = normal(rng);
}

void TinyDenoiser::set_parameters(const Eigen::VectorXd& p) {
    if (p.size() != params_.size()) throw PreconditionError("parameter vector has the wrong length");
    params_ = p;
}

Tensor3<double> TinyDenoiser::preactivation(const TrainSample& s) const {
    require_sample_shapes(s, c_, e_);
    const Eigen::Index cc = c_ * c_;
    const Eigen::Index u0 = 2 * cc, b0 = u0 + Eigen::Index(c_) * e_, v0 = b0 + c_;
    const double tau = double(s.t) / double(steps_);
    Tensor3<double> pre(c_, s.z_t.rows(), s.z_t.cols());
    for (int c = 0; c < c_; ++c) {
        double bias = params_(b0 + c) + params_(v0 + c) * tau;
        for (int e = 0; e < e_; ++e) bias += params_(u0 + c * e_ + e) * s.text(e);
        pre[c].setConstant(bias);
        for (int k = 0; k < c_; ++k) {
            pre[c] += params_(c * c_ + k) * s.z_t[k] + params_(cc + c * c_ + k) * s.z_cond[k];
        }
    }
    return pre;
}

Tensor3<double> TinyDenoiser::predict(const TrainSample& s) const {
    return preactivation(s).unary([](const auto& g) -> Grid<double> { return g.tanh(); });
}

Eigen::VectorXd TinyDenoiser::vjp(const TrainSample& s, const Tensor3<double>& upstream) const {
    const Tensor3<double> out = predict(s);
    if (!upstream.same_shape(out)) throw PreconditionError("vjp: upstream shape differs from the prediction");
    const Eigen::Index cc = c_ * c_;
    const Eigen::Index u0 = 2 * cc, b0 = u0 + Eigen::Index(c_) * e_, v0 = b0 + c_;
    const double tau = double(s.t) / double(steps_);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(params_.size());
    for (int c = 0; c < c_; ++c) {
        const Grid<double> d = upstream[c] * (1.0 - out[c].square());
        const double dsum = d.sum();
        for (int k = 0; k < c_; ++k) {
            g(c * c_ + k) = (d * s.z_t[k]).sum();
            g(cc + c * c_ + k) = (d * s.z_cond[k]).sum();
        }
        for (int e = 0; e < e_; ++e) g(u0 + c * e_ + e) = dsum * s.text(e);
        g(b0 + c) = dsum;
        g(v0 + c) = dsum * tau;
    }
    return g;
}

Eigen::VectorXd text_embedding(const std::string& instruction, int dims) {
    if (dims < 1) throw PreconditionError("text embedding needs dims >= 1");
    Eigen::VectorXd e(dims);
    const std::uint64_t h = fnv1a(instruction);
    for (int i = 0; i < dims; ++i) e(i) = 2.0 * unit_from_hash(mix_seed(h, static_cast<std::uint64_t>(i))) - 1.0;
    return e;
}

double compute_loss(const TrainBatch& batch, const TrainableDenoiser& denoiser) {
    if (batch.empty()) throw PreconditionError("compute_loss: empty batch");
    double total = 0.0;
    Eigen::Index count = 0;
    for (const auto& s : batch) {
        const Tensor3<double> pred = denoiser.predict(s);
        if (!pred.same_shape(s.eps)) throw PreconditionError("compute_loss: prediction shape differs from eps");
        for (Eigen::Index c = 0; c < pred.channels(); ++c) total += (s.eps[c] - pred[c]).square().sum();
        count += pred.size();
    }
    return count == 0 ? 0.0 : total / double(count);
}

double compute_loss_and_gradient(const TrainBatch& batch, const TrainableDenoiser& denoiser, Eigen::VectorXd& grad) {
    if (batch.empty()) throw PreconditionError("compute_loss: empty batch");
    Eigen::Index count = 0;
    std::vector<Tensor3<double>> preds;
    preds.reserve(batch.size());
    for (const auto& s : batch) {
        preds.push_back(denoiser.predict(s));
        if (!preds.back().same_shape(s.eps)) throw PreconditionError("compute_loss: prediction shape differs from eps");
        count += preds.back().size();
    }
    grad = Eigen::VectorXd::Zero(denoiser.parameters().size());
    if (count == 0) return 0.0;
    const double scale = 1.0 / double(count);
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Tensor3<double> residual = batch[i].eps - preds[i];
        total += residual.unary([](const auto& g) -> Grid<double> { return g.square(); }).sum();
        grad += denoiser.vjp(batch[i], residual * (-2.0 * scale));
    }
    return total * scale;
}

TrainBatch apply_condition_dropout(TrainBatch batch, const ConditionDropout& probs, std::uint64_t seed) {
    probs.validate();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
        const double u_image = unit(rng), u_text = unit(rng), u_both = unit(rng);
        const bool both = u_both < probs.both;
        auto& s = batch[i];
        if (both || u_image < probs.image) {
            s.z_cond = s.z_cond * 0.0;
            s.image_dropped = true;
        }
        if (both || u_text < probs.text) {
            s.text.setZero();
            s.text_dropped = true;
        }
    }
    return batch;
}

// ---------------------------------------------------------------------------------------

Adam::Adam(Eigen::Index n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    if (grad.size() != m_.size() || params.size() != m_.size()) throw PreconditionError("Adam: size mismatch");
    ++t_;
    m_ = b1_ * m_ + (1.0 - b1_) * grad;
    v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1_, double(t_)), c2 = 1.0 - std::pow(b2_, double(t_));
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

Json Adam::state() const { return {{"t", t_}, {"m", to_vector(m_)}, {"v", to_vector(v_)}}; }

void Adam::load(const Json& j) {
    t_ = j.at("t").get<long>();
    m_ = from_json_vector(j.at("m"));
    v_ = from_json_vector(j.at("v"));
}

// ---------------------------------------------------------------------------------------

std::vector<TrainExample> load_examples(std::span<const TripletRecord> records, const std::filesystem::path& root,
                                        int resolution, const LatentCodec& codec) {
    if (resolution % codec.factor() != 0) {
        throw ValidationError("resolution", "must be a multiple of the codec factor " + std::to_string(codec.factor()));
    }
    std::vector<TrainExample> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        const Image in = resize_nearest(load_png(root / r.input_image), resolution, resolution);
        const Image tar = resize_nearest(load_png(root / r.output_image), resolution, resolution);
        out.push_back({r.id, codec.encode(in), codec.encode(tar), r.instruction});
    }
    return out;
}

FinetuneResult finetune(std::span<const TrainExample> examples, const TrainConfig& cfg, TrainableDenoiser& denoiser,
                        const std::filesystem::path& out_dir) {
    cfg.validate();
    if (examples.empty()) throw PreconditionError("finetune: the train split is empty");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create checkpoint directory " + out_dir.string() + ": " + ec.message());

    const auto schedule = NoiseSchedule<double>::scaled_linear(cfg.train_steps, cfg.train_steps);
    Adam adam(denoiser.parameters().size(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
    FinetuneResult result;
    long saved_step = -1;

    auto save = [&](long step, int epoch, std::optional<double> loss) {
        saved_step = step;
        char name[48];
        std::snprintf(name, sizeof name, "ckpt_step_%08ld.json", step);
        const auto path = out_dir / name;
        Json j{{"step", step},
               {"epoch", epoch},
               {"version", denoiser.version()},
               {"parameters", to_vector(denoiser.parameters())},
               {"adam", adam.state()},
               {"loss", loss ? Json(*loss) : Json(nullptr)},
               {"config", cfg.to_json()}};
        write_text(path, j.dump() + "\n");
        result.checkpoint = path;
        result.checkpoints.push_back(path);
    };
    save(0, 0, std::nullopt);

    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, "shuffle"));
    const std::uint64_t sample_base = mix_seed(cfg.seed, "sample");
    std::vector<std::size_t> order(examples.size());
    std::uint64_t drawn = 0;
    long step = 0;
    const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 1; epoch <= cfg.epochs && !result.diverged; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng() % i]);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            TrainBatch batch;
            for (std::size_t k = start; k < std::min(order.size(), start + batch_size); ++k) {
                const TrainExample& ex = examples[order[k]];
                const std::uint64_t s = mix_seed(sample_base, drawn++);
                const int t = 1 + static_cast<int>(s % static_cast<std::uint64_t>(cfg.train_steps));
                TrainSample sample;
                sample.eps = standard_normal<double>(ex.z_output.channels(), ex.z_output.rows(), ex.z_output.cols(),
                                                     mix_seed(s, "eps"));
                sample.z_t = add_noise(ex.z_output, schedule.alpha_bar(t), sample.eps);
                sample.t = t;
                sample.z_cond = ex.z_input;
                sample.text = text_embedding(ex.instruction, cfg.text_dims);
                batch.push_back(std::move(sample));
            }
            batch = apply_condition_dropout(std::move(batch), cfg.dropout,
                                            mix_seed(mix_seed(cfg.seed, "dropout"), static_cast<std::uint64_t>(step)));
            Eigen::VectorXd grad;
            const double loss = compute_loss_and_gradient(batch, denoiser, grad);
            if (!std::isfinite(loss) || !grad.allFinite()) {
                result.diverged = true;
                break;
            }
            Eigen::VectorXd params = denoiser.parameters();
            adam.step(params, grad);
            denoiser.set_parameters(params);
            ++step;
            result.losses.push_back(loss);
            if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) save(step, epoch, loss);
        }
        if (!result.diverged && cfg.checkpoint_every == 0 && saved_step != step) save(step, epoch, result.losses.back());
    }
    result.steps = step;
    if (result.diverged) {
        load_checkpoint(result.checkpoint, denoiser);
    } else if (saved_step != step) {
        save(step, cfg.epochs, result.losses.empty() ? std::nullopt : std::optional<double>(result.losses.back()));
    }

    Json curve{{"losses", result.losses}, {"steps", step}, {"diverged", result.diverged},
               {"checkpoint", result.checkpoint.filename().string()}};
    write_text(out_dir / "loss_curve.json", curve.dump(2) + "\n");
    std::string csv = "step,loss\n";
    char line[64];
    for (std::size_t i = 0; i < result.losses.size(); ++i) {
        std::snprintf(line, sizeof line, "%zu,%.17g\n", i + 1, result.losses[i]);
        csv += line;
    }
    write_text(out_dir / "loss_curve.csv", csv);
    return result;
}

void load_checkpoint(const std::filesystem::path& path, TrainableDenoiser& denoiser) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("checkpoint not found: " + path.string());
    const Json j = Json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("parameters")) throw ParseError({}, "malformed checkpoint " + path.string());
    denoiser.set_parameters(from_json_vector(j.at("parameters")));
}

} // namespace forge
