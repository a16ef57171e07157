// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "forge/editmath.hpp"
#include "forge/sampler.hpp"
#include "forge/tensor.hpp"

namespace forge {

using Json = nlohmann::json;

/// Every adapter reports a version string that ends up in record provenance.
class Adapter {
public:
    virtual ~Adapter() = default;
    virtual std::string version() const = 0;
};

class TextLlm : public Adapter {
public:
    virtual std::string complete(const std::string& prompt, std::uint64_t seed) = 0;
};

struct T2IResult {
    Image image;
    /// One map per requested keyword, same order.
    std::vector<AttentionMap<double>> attention;
    std::vector<BlendStep<double>> trace;
    std::uint64_t seed = 0;
};

class T2IDenoiser : public Adapter {
public:
    virtual T2IResult generate(const std::string& prompt, std::span<const std::string> keywords, std::uint64_t seed) = 0;
};

/// Latent <-> pixel mapping of the diffusion backbone.
class LatentCodec : public Adapter {
public:
    virtual Tensor3<double> encode(const Image& image) const = 0;
    virtual Image decode(const Tensor3<double>& latent) const = 0;
    /// Pixels per latent cell along each axis.
    virtual int factor() const = 0;
};

struct InpaintJob {
    Tensor3<double> z_ori;
    BinaryMask mask; ///< on the latent grid
    std::string prompt;
    std::uint64_t seed = 0;
    bool record_trace = false;
};

/// Post-edit inpainting inputs, all on the image grid.
struct RegionInpaintJob {
    Image reference; ///< I_gen
    Image original;  ///< I_ori
    BinaryMask mask; ///< M_edit
    MaskGrid canny;  ///< edges of I_gen
    Eigen::VectorXd features;
    std::string prompt;
    std::uint64_t seed = 0;
};

class InpaintDenoiser : public Adapter {
public:
    /// Runs the masked denoising loop; implementations must apply `blend_latents` at every step.
    virtual SamplingResult<double> inpaint(const InpaintJob& job, const NoiseSchedule<double>& schedule) = 0;
    virtual Image inpaint_region(const RegionInpaintJob& job) = 0;
};

class RefineDenoiser : public Adapter {
public:
    virtual Image refine(const RefinementRequest& request, const Image& i_tar, std::uint64_t seed) = 0;
};

struct EditQuery {
    const LatentState<double>& z_t;
    double alpha_bar;
    const Tensor3<double>& z_image; ///< latent of I_ori
    const std::string& instruction;
};

/// Noise predictions of the three conditioning branches at one step, plus the
/// instruction-token cross-attention from the (I_ori, y_instr) branch when available.
struct EditPrediction {
    Tensor3<double> eps_uncond;
    Tensor3<double> eps_img;
    Tensor3<double> eps_full;
    std::optional<Grid<double>> instruction_attention;
};

class EditDenoiser : public Adapter {
public:
    virtual EditPrediction predict(const EditQuery& query) = 0;
};

class Segmenter : public Adapter {
public:
    virtual std::vector<BinaryMask> segment(const Image& image) = 0;
};

class Captioner : public Adapter {
public:
    virtual std::string caption(std::span<const Image> frames, std::uint64_t seed) = 0;
};

class Judge : public Adapter {
public:
    virtual std::string judge(std::span<const Image> images, const std::string& prompt, std::uint64_t seed) = 0;
};

class ImageEncoder : public Adapter {
public:
    virtual Eigen::VectorXd encode(const Image& image) = 0;
};

class EdgeExtractor : public Adapter {
public:
    virtual MaskGrid edges(const Image& image) = 0;
};

class MetricClip : public Adapter {
public:
    virtual double score(const Image& image, const std::string& text) = 0;
};

class MetricLpips : public Adapter {
public:
    virtual double distance(const Image& a, const Image& b) = 0;
};

enum class AdapterKind {
    TextLlm,
    T2IDenoiser,
    T2IAlternate,
    InpaintDenoiser,
    RefineDenoiser,
    EditDenoiser,
    Segmenter,
    Captioner,
    Judge,
    Scorer,
    ImageEncoder,
    EdgeExtractor,
    MetricClip,
    MetricLpips,
    Codec,
};

std::string_view to_string(AdapterKind kind);
AdapterKind adapter_kind_from_string(std::string_view name);
std::span<const AdapterKind> all_adapter_kinds();

/// Per-kind configuration as it appears in the config file's "adapters" object.
struct AdapterConfig {
    std::string implementation = "mock"; ///< "mock" or "endpoint"
    std::string endpoint;
    std::string credentials_env; ///< name of the environment variable holding a bearer token
    std::uint64_t seed = 0;
    double rate_limit = 0.0; ///< requests per second, 0 = unlimited
    int max_attempts = 4;
    Json options = Json::object(); ///< implementation-specific knobs

    static AdapterConfig from_json(const Json& j);
    Json to_json() const;
};

using AnyAdapter = std::variant<std::shared_ptr<TextLlm>, std::shared_ptr<T2IDenoiser>,
                                std::shared_ptr<InpaintDenoiser>, std::shared_ptr<RefineDenoiser>,
                                std::shared_ptr<EditDenoiser>, std::shared_ptr<Segmenter>, std::shared_ptr<Captioner>,
                                std::shared_ptr<Judge>, std::shared_ptr<ImageEncoder>, std::shared_ptr<EdgeExtractor>,
                                std::shared_ptr<MetricClip>, std::shared_ptr<MetricLpips>,
                                std::shared_ptr<LatentCodec>>;

/// Builds one adapter. Throws ValidationError for an unknown implementation and
/// AdapterError when the kind has no endpoint protocol.
AnyAdapter get_adapter(AdapterKind kind, const AdapterConfig& config);

/// The full roster used by the pipelines. Members may be replaced with plugins.
struct AdapterRegistry {
    std::shared_ptr<TextLlm> text_llm;
    std::shared_ptr<T2IDenoiser> t2i_denoiser;
    std::shared_ptr<T2IDenoiser> t2i_alternate;
    std::shared_ptr<InpaintDenoiser> inpaint_denoiser;
    std::shared_ptr<RefineDenoiser> refine_denoiser;
    std::shared_ptr<EditDenoiser> edit_denoiser;
    std::shared_ptr<Segmenter> segmenter;
    std::shared_ptr<Captioner> captioner;
    std::shared_ptr<Judge> judge;  ///< data discriminator
    std::shared_ptr<Judge> scorer; ///< MLLM-score judge
    std::shared_ptr<ImageEncoder> image_encoder;
    std::shared_ptr<EdgeExtractor> edge_extractor;
    std::shared_ptr<MetricClip> metric_clip;
    std::shared_ptr<MetricLpips> metric_lpips;
    std::shared_ptr<LatentCodec> codec;

    /// Kinds missing from `adapters` default to mocks seeded with `default_seed`.
    static AdapterRegistry from_config(const Json& adapters, std::uint64_t default_seed);
    static AdapterRegistry mocks(std::uint64_t seed);

    void set(AdapterKind kind, AnyAdapter adapter);
    /// kind -> version, for provenance.
    Json versions() const;
};

// ---------------------------------------------------------------------------------------
// Judge verdict parsing

/// First standalone 0 or 1 token in `text`: not adjacent to a letter or digit and not
/// the integer part of a decimal like "0.5".
std::optional<int> parse_verdict(std::string_view text);

struct Verdict {
    std::optional<int> value; ///< empty when unevaluable
    int attempts = 0;
    std::vector<std::string> raw;
};

/// Queries the judge, retrying once when the answer cannot be parsed.
Verdict query_verdict(Judge& judge, std::span<const Image> images, const std::string& prompt, std::uint64_t seed);

} // namespace forge
