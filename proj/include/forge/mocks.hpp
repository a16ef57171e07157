// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

// Deterministic stand-ins for every pretrained model. Each mock is a pure function of its
// inputs and seed, except the scripted playback mocks which consume their script in order.

#pragma once

#include <cstdint>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "forge/adapters.hpp"

namespace forge {

/// Smooth, bounded stand-in for a denoiser's noise prediction:
///   0.5 * tanh(g_c * z) + 0.5 * sin(fx_c * x + fy_c * y + phi_c + 0.05 * t)
/// with per-channel (g, fx, fy, phi) derived from hash(conditioning, seed). |output| <= 1.
Tensor3<double> mock_denoiser_step(const Tensor3<double>& z_t, int t, const std::string& conditioning,
                                   std::uint64_t seed);

/// Derivative of mock_denoiser_step with respect to each latent entry (it is elementwise).
Tensor3<double> mock_denoiser_step_dz(const Tensor3<double>& z_t, int t, const std::string& conditioning,
                                      std::uint64_t seed);

/// 2x2 average pooling to latent, value mapping p -> 2p - 1; decode is nearest upsampling.
class PoolingCodec final : public LatentCodec {
public:
    explicit PoolingCodec(int factor = 2);
    std::string version() const override;
    Tensor3<double> encode(const Image& image) const override;
    Image decode(const Tensor3<double>& latent) const override;
    int factor() const override { return factor_; }

private:
    int factor_;
};

/// Generative mock LLM. Understands the quadruple-synthesis and instruction-rewrite prompts
/// built by the branch pipelines and answers with well-formed JSON.
class MockTextLlm final : public TextLlm {
public:
    explicit MockTextLlm(std::uint64_t seed) : seed_(seed) {}
    std::string version() const override { return "mock-llm/1"; }
    std::string complete(const std::string& prompt, std::uint64_t seed) override;

private:
    std::uint64_t seed_;
};

/// Plays back a fixed list of strings, one per call. Single consumer.
class ScriptedPlayback {
public:
    explicit ScriptedPlayback(std::vector<std::string> script, bool cycle = false)
        : script_(std::move(script)), cycle_(cycle) {}
    std::string next();
    std::size_t calls() const;

private:
    mutable std::mutex mu_;
    std::vector<std::string> script_;
    bool cycle_;
    std::size_t pos_ = 0;
};

class ScriptedTextLlm final : public TextLlm {
public:
    explicit ScriptedTextLlm(std::vector<std::string> script, bool cycle = false) : playback_(std::move(script), cycle) {}
    std::string version() const override { return "scripted-llm/1"; }
    std::string complete(const std::string& prompt, std::uint64_t) override {
        prompts.push_back(prompt);
        return playback_.next();
    }
    std::vector<std::string> prompts;

private:
    ScriptedPlayback playback_;
};

struct MockT2IOptions {
    int image_size = 64;
    int attention_size = 16;
    int steps = 20;
    /// Keywords whose attention is zero everywhere; exercises the empty-mask fallback.
    std::set<std::string> blind_keywords;
    std::string version_tag = "mock-t2i/1";
};

/// Samples a latent with mock_denoiser_step conditioned on the prompt. Attention for each
/// keyword is the mean over three pseudo-layers of a Gaussian bump whose centre is a hash
/// of the keyword.
class MockT2IDenoiser final : public T2IDenoiser {
public:
    MockT2IDenoiser(std::uint64_t seed, MockT2IOptions options = {});
    std::string version() const override { return options_.version_tag; }
    T2IResult generate(const std::string& prompt, std::span<const std::string> keywords, std::uint64_t seed) override;
    AttentionMap<double> attention_for(const std::string& keyword) const;
    const NoiseSchedule<double>& schedule() const { return schedule_; }

private:
    std::uint64_t seed_;
    MockT2IOptions options_;
    NoiseSchedule<double> schedule_;
    PoolingCodec codec_;
};

/// Latent inpainting with mock_denoiser_step; region inpainting returns the reference image.
class MockInpaintDenoiser final : public InpaintDenoiser {
public:
    explicit MockInpaintDenoiser(std::uint64_t seed, bool fail = false) : seed_(seed), fail_(fail) {}
    std::string version() const override { return "mock-inpaint/1"; }
    SamplingResult<double> inpaint(const InpaintJob& job, const NoiseSchedule<double>& schedule) override;
    Image inpaint_region(const RegionInpaintJob& job) override;

private:
    std::uint64_t seed_;
    bool fail_;
};

/// Returns I_tar unchanged.
class MockRefineDenoiser final : public RefineDenoiser {
public:
    explicit MockRefineDenoiser(bool fail = false) : fail_(fail) {}
    std::string version() const override { return "mock-refine/1"; }
    Image refine(const RefinementRequest& request, const Image& i_tar, std::uint64_t seed) override;

private:
    bool fail_;
};

/// Image-conditioned branch predicts noise that denoises toward the original latent; the
/// instruction branch additionally shifts one quadrant (chosen by hashing the instruction)
/// by a hashed per-channel offset, and its attention is hot on that quadrant.
class MockEditDenoiser final : public EditDenoiser {
public:
    explicit MockEditDenoiser(std::uint64_t seed, int attention_size = 16)
        : seed_(seed), attention_size_(attention_size) {}
    std::string version() const override { return "mock-edit/1"; }
    EditPrediction predict(const EditQuery& query) override;

    /// Quadrant index (0 = top-left, 1 = top-right, 2 = bottom-left, 3 = bottom-right).
    static int quadrant_for(const std::string& instruction);

private:
    std::uint64_t seed_;
    int attention_size_;
};

/// Fixed 2x2 partition of the image into quadrant masks.
class QuadrantSegmenter final : public Segmenter {
public:
    std::string version() const override { return "mock-quadrant-seg/1"; }
    std::vector<BinaryMask> segment(const Image& image) override;
};

class MockCaptioner final : public Captioner {
public:
    explicit MockCaptioner(std::uint64_t seed) : seed_(seed) {}
    std::string version() const override { return "mock-captioner/1"; }
    std::string caption(std::span<const Image> frames, std::uint64_t seed) override;

private:
    std::uint64_t seed_;
};

class ScriptedCaptioner final : public Captioner {
public:
    explicit ScriptedCaptioner(std::vector<std::string> script, bool cycle = true) : playback_(std::move(script), cycle) {}
    std::string version() const override { return "scripted-captioner/1"; }
    std::string caption(std::span<const Image>, std::uint64_t) override { return playback_.next(); }

private:
    ScriptedPlayback playback_;
};

/// Always answers the same text.
class FixedJudge final : public Judge {
public:
    explicit FixedJudge(std::string answer = "1") : answer_(std::move(answer)) {}
    std::string version() const override { return "mock-judge/1"; }
    std::string judge(std::span<const Image>, const std::string&, std::uint64_t) override { return answer_; }

private:
    std::string answer_;
};

class ScriptedJudge final : public Judge {
public:
    explicit ScriptedJudge(std::vector<std::string> script, bool cycle = false) : playback_(std::move(script), cycle) {}
    std::string version() const override { return "scripted-judge/1"; }
    std::string judge(std::span<const Image>, const std::string& prompt, std::uint64_t) override {
        std::lock_guard lock(mu_);
        prompts.push_back(prompt);
        return playback_.next();
    }
    std::vector<std::string> prompts;

private:
    std::mutex mu_;
    ScriptedPlayback playback_;
};

/// Per-channel mean of the image.
class ChannelMeanEncoder final : public ImageEncoder {
public:
    std::string version() const override { return "mock-channel-mean/1"; }
    Eigen::VectorXd encode(const Image& image) override;
};

/// Thresholded Sobel magnitude; a stand-in for Canny.
class SobelEdgeExtractor final : public EdgeExtractor {
public:
    explicit SobelEdgeExtractor(double threshold = 0.1) : threshold_(threshold) {}
    std::string version() const override { return "sobel-edges/1"; }
    MaskGrid edges(const Image& image) override;

private:
    double threshold_;
};

/// Returns `fixed` when set, else a hash of (text, quantized channel means) mapped to [0.15, 0.30).
class MockClip final : public MetricClip {
public:
    explicit MockClip(std::uint64_t seed, std::optional<double> fixed = std::nullopt) : seed_(seed), fixed_(fixed) {}
    std::string version() const override { return "mock-clip/1"; }
    double score(const Image& image, const std::string& text) override;

private:
    std::uint64_t seed_;
    std::optional<double> fixed_;
};

/// Mean absolute pixel difference.
class MeanAbsLpips final : public MetricLpips {
public:
    std::string version() const override { return "mock-lpips-mad/1"; }
    double distance(const Image& a, const Image& b) override;
};

} // namespace forge
