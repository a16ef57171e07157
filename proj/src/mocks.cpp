// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/mocks.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "forge/hash.hpp"
#include "forge/image.hpp"
#include "forge/schema.hpp"

namespace forge {

namespace {

struct ChannelParams {
    double gain, fx, fy, phase;
};

ChannelParams channel_params(std::uint64_t h, Eigen::Index c) {
    const auto base = static_cast<std::uint64_t>(c) * 4;
    return {0.5 + 1.5 * unit_from_hash(mix_seed(h, base)), 0.1 + 0.5 * unit_from_hash(mix_seed(h, base + 1)),
            0.1 + 0.5 * unit_from_hash(mix_seed(h, base + 2)),
            2.0 * std::numbers::pi * unit_from_hash(mix_seed(h, base + 3))};
}

/// Reads the value of a "Key: value" line from a prompt.
std::string prompt_field(const std::string& prompt, const std::string& key) {
    std::istringstream in(prompt);
    std::string line;
    const std::string prefix = key + ":";
    while (std::getline(in, line)) {
        if (line.rfind(prefix, 0) == 0) {
            auto v = line.substr(prefix.size());
            const auto first = v.find_first_not_of(' ');
            return first == std::string::npos ? std::string() : v.substr(first);
        }
    }
    return {};
}

struct QuadrupleTemplate {
    const char* input_prompt;
    const char* instruction;
    const char* output_prompt;
    std::array<const char*, 2> keywords;
};

const std::vector<QuadrupleTemplate>& templates_for(Category c) {
    static const std::vector<QuadrupleTemplate> long_term{
        {"A young girl reading a book at a wooden desk",
         "What would have happened if the girl had kept on reading for twenty years?",
         "An elderly woman reading a book at a wooden desk surrounded by shelves", {"girl", nullptr}},
        {"A small sapling in a sunny garden", "What would the garden look like after fifty years?",
         "A towering oak tree in an overgrown garden", {"sapling", nullptr}},
        {"A new red bicycle leaning on a fence", "What would the bicycle look like after decades outdoors?",
         "A rusty bicycle covered in vines leaning on a fence", {"bicycle", nullptr}},
    };
    static const std::vector<QuadrupleTemplate> physical{
        {"A red balloon floating in a living room", "Popping the balloon.",
         "Scraps of a burst red balloon on the floor of a living room", {"balloon", nullptr}},
        {"A snowman standing in a winter garden", "What would happen if the sun came out for a week?",
         "A melted snowman leaving a puddle of water in a garden", {"snowman", nullptr}},
        {"A glass vase on a marble table", "What happens if the vase falls?",
         "Shattered glass vase pieces on a marble floor", {"vase", "table"}},
    };
    static const std::vector<QuadrupleTemplate> implicit{
        {"A child standing in a tidy toy room", "What would happen if an impatient child looked for a specific toy?",
         "A child standing in a messy toy room with toys scattered everywhere", {"toy room", nullptr}},
        {"A cup of hot coffee on a desk in the morning", "What would happen if it was forgotten until evening?",
         "A cold cup of coffee on a desk at dusk", {"coffee", nullptr}},
        {"A dog next to a full food bowl", "What would happen if the dog was very hungry?",
         "A happy dog next to an empty food bowl", {"food bowl", nullptr}},
    };
    static const std::vector<QuadrupleTemplate> story{
        {"Snow White holding a red apple in a forest cottage", "What would happen if Snow White ate a poisoned apple?",
         "Snow White asleep on the floor of a forest cottage beside a bitten apple", {"apple", "Snow White"}},
        {"A wooden puppet boy standing in a workshop", "What would happen if the puppet told a lie?",
         "A wooden puppet boy with a very long nose in a workshop", {"puppet", nullptr}},
        {"A pumpkin in a moonlit garden", "What would happen at the stroke of the fairy's wand?",
         "A golden carriage in a moonlit garden", {"pumpkin", nullptr}},
    };
    static const std::vector<QuadrupleTemplate> virtual_world{
        {"A cartoon cat with smooth fur in a living room", "What would happen if there was strong static electricity?",
         "A cartoon cat with fur standing on end and sparks in a living room", {"cat", nullptr}},
        {"An animated castle under a clear sky", "What would happen if a thunderstorm hit?",
         "An animated castle struck by lightning under dark storm clouds", {"castle", "sky"}},
        {"A pixel-art village by a calm lake", "What would happen during a flood?",
         "A pixel-art village half underwater from a flooded lake", {"village", nullptr}},
    };
    static const std::vector<QuadrupleTemplate> generic{
        {"A cat sitting on a wall", "What would the cat look like after falling to the ground?",
         "A flattened cartoonish cat lying on the ground below a wall", {"cat", nullptr}},
        {"A traffic light showing red at a crossing", "The traffic light becomes passable.",
         "A traffic light showing green at a crossing", {"traffic light", nullptr}},
    };
    switch (c) {
    case Category::LongTerm: return long_term;
    case Category::PhysicalTrans: return physical;
    case Category::ImplicitLogic: return implicit;
    case Category::StoryType: return story;
    case Category::RealToVirtual: return virtual_world;
    default: return generic;
    }
}

std::string quantized_means(const Image& image) {
    std::string out;
    const auto m = channel_means(image);
    char buf[32];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.3f,", m(i));
        out += buf;
    }
    return out;
}

} // namespace

Tensor3<double> mock_denoiser_step(const Tensor3<double>& z_t, int t, const std::string& conditioning,
                                   std::uint64_t seed) {
    const std::uint64_t h = mix_seed(seed, fnv1a(conditioning));
    Tensor3<double> out(z_t.channels(), z_t.rows(), z_t.cols());
    for (Eigen::Index c = 0; c < z_t.channels(); ++c) {
        const auto p = channel_params(h, c);
        for (Eigen::Index y = 0; y < z_t.rows(); ++y) {
            for (Eigen::Index x = 0; x < z_t.cols(); ++x) {
                out(c, y, x) = 0.5 * std::tanh(p.gain * z_t(c, y, x)) +
                               0.5 * std::sin(p.fx * double(x) + p.fy * double(y) + p.phase + 0.05 * t);
            }
        }
    }
    return out;
}

Tensor3<double> mock_denoiser_step_dz(const Tensor3<double>& z_t, int, const std::string& conditioning,
                                      std::uint64_t seed) {
    const std::uint64_t h = mix_seed(seed, fnv1a(conditioning));
    Tensor3<double> out(z_t.channels(), z_t.rows(), z_t.cols());
    for (Eigen::Index c = 0; c < z_t.channels(); ++c) {
        const double g = channel_params(h, c).gain;
        out[c] = 0.5 * g * (1.0 - (g * z_t[c]).tanh().square());
    }
    return out;
}

// ---------------------------------------------------------------------------------------

PoolingCodec::PoolingCodec(int factor) : factor_(factor) {
    if (factor < 1) throw ValidationError("factor", "codec factor must be >= 1");
}

std::string PoolingCodec::version() const { return "mock-pool-codec/" + std::to_string(factor_); }

Tensor3<double> PoolingCodec::encode(const Image& image) const {
    if (image.rows() % factor_ != 0 || image.cols() % factor_ != 0) {
        throw PreconditionError("image size must be a multiple of the codec factor");
    }
    const Eigen::Index h = image.rows() / factor_, w = image.cols() / factor_;
    Tensor3<double> z(image.channels(), h, w);
    const double inv = 1.0 / double(factor_ * factor_);
    for (Eigen::Index c = 0; c < image.channels(); ++c) {
        for (Eigen::Index y = 0; y < h; ++y) {
            for (Eigen::Index x = 0; x < w; ++x) {
                const double mean = image[c].block(y * factor_, x * factor_, factor_, factor_).sum() * inv;
                z(c, y, x) = 2.0 * mean - 1.0;
            }
        }
    }
    return z;
}

Image PoolingCodec::decode(const Tensor3<double>& latent) const {
    Image out(latent.channels(), latent.rows() * factor_, latent.cols() * factor_);
    for (Eigen::Index c = 0; c < latent.channels(); ++c) {
        for (Eigen::Index y = 0; y < out.rows(); ++y) {
            for (Eigen::Index x = 0; x < out.cols(); ++x) out(c, y, x) = 0.5 * (latent(c, y / factor_, x / factor_) + 1.0);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------------------

std::string MockTextLlm::complete(const std::string& prompt, std::uint64_t seed) {
    const std::uint64_t h = mix_seed(mix_seed(seed_, seed), fnv1a(prompt));
    const std::string task = prompt_field(prompt, "Task");
    if (task == "rewrite") {
        const std::string description = prompt_field(prompt, "Description");
        const auto cats = categories_for(Branch::Video);
        const Category cat = cats[h % cats.size()];
        std::vector<std::string> keywords;
        std::istringstream words(description);
        for (std::string w; words >> w && keywords.size() < 2;) {
            while (!w.empty() && !std::isalpha(static_cast<unsigned char>(w.back()))) w.pop_back();
            if (w.size() > 4) keywords.push_back(w);
        }
        Json reply{{"instruction", "What would happen by the end of this scene: " + description + "?"},
                   {"output_description", "The final moment of the scene: " + description},
                   {"category", to_string(cat)},
                   {"keywords", keywords}};
        return reply.dump();
    }
    Category cat = Category::LongTerm;
    try {
        cat = parse_category(prompt_field(prompt, "Category"));
    } catch (const ValidationError&) {
    }
    const auto& options = templates_for(cat);
    const auto& tpl = options[h % options.size()];
    std::vector<std::string> keywords;
    for (const char* k : tpl.keywords) {
        if (k) keywords.emplace_back(k);
    }
    Json reply{{"input_prompt", tpl.input_prompt},
               {"instruction", tpl.instruction},
               {"output_prompt", tpl.output_prompt},
               {"keywords", keywords}};
    return reply.dump();
}

std::string ScriptedPlayback::next() {
    std::lock_guard lock(mu_);
    if (script_.empty()) throw AdapterError("scripted adapter has an empty script");
    if (pos_ >= script_.size()) {
        if (!cycle_) throw AdapterError("scripted adapter exhausted after " + std::to_string(pos_) + " calls");
        return script_[pos_++ % script_.size()];
    }
    return script_[pos_++];
}

std::size_t ScriptedPlayback::calls() const {
    std::lock_guard lock(mu_);
    return pos_;
}

// ---------------------------------------------------------------------------------------

MockT2IDenoiser::MockT2IDenoiser(std::uint64_t seed, MockT2IOptions options)
    : seed_(seed), options_(std::move(options)), schedule_(NoiseSchedule<double>::scaled_linear(options_.steps)),
      codec_(2) {
    if (options_.image_size < 2 || options_.image_size % 2 != 0) throw ValidationError("image_size", "must be even and >= 2");
    if (options_.attention_size < 1) throw ValidationError("attention_size", "must be >= 1");
}

AttentionMap<double> MockT2IDenoiser::attention_for(const std::string& keyword) const {
    const int n = options_.attention_size;
    AttentionMap<double> map{Grid<double>::Zero(n, n), keyword};
    if (options_.blind_keywords.contains(keyword)) return map;
    const std::uint64_t h = mix_seed(seed_, fnv1a(keyword));
    const double cy = (0.2 + 0.6 * unit_from_hash(mix_seed(h, 1))) * n;
    const double cx = (0.2 + 0.6 * unit_from_hash(mix_seed(h, 2))) * n;
    const double sigma = n * (0.1 + 0.08 * unit_from_hash(mix_seed(h, 3)));
    constexpr int kLayers = 3;
    for (int layer = 0; layer < kLayers; ++layer) {
        const double jy = unit_from_hash(mix_seed(h, 10 + 2 * layer)) - 0.5;
        const double jx = unit_from_hash(mix_seed(h, 11 + 2 * layer)) - 0.5;
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                const double dy = y + 0.5 - cy - jy, dx = x + 0.5 - cx - jx;
                map.values(y, x) += std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma)) / kLayers;
            }
        }
    }
    return map;
}

T2IResult MockT2IDenoiser::generate(const std::string& prompt, std::span<const std::string> keywords,
                                    std::uint64_t seed) {
    const Eigen::Index side = options_.image_size / codec_.factor();
    auto predictor = [&](const LatentState<double>& s) { return mock_denoiser_step(s.z, s.t, prompt, seed_); };
    auto sampled = sample<double>(3, side, side, schedule_, seed, predictor, true);
    T2IResult out;
    out.image = codec_.decode(sampled.latent);
    out.trace = std::move(sampled.trace);
    out.seed = seed;
    for (const auto& k : keywords) out.attention.push_back(attention_for(k));
    return out;
}

SamplingResult<double> MockInpaintDenoiser::inpaint(const InpaintJob& job, const NoiseSchedule<double>& schedule) {
    if (fail_) throw AdapterError("mock inpaint denoiser: injected failure");
    auto predictor = [&](const LatentState<double>& s) { return mock_denoiser_step(s.z, s.t, job.prompt, seed_); };
    return blended_sample(job.z_ori, job.mask, schedule, job.seed, predictor, job.record_trace);
}

Image MockInpaintDenoiser::inpaint_region(const RegionInpaintJob& job) {
    if (fail_) throw AdapterError("mock inpaint denoiser: injected failure");
    return job.reference;
}

Image MockRefineDenoiser::refine(const RefinementRequest&, const Image& i_tar, std::uint64_t) {
    if (fail_) throw AdapterError("mock refine denoiser: injected failure");
    return i_tar;
}

// ---------------------------------------------------------------------------------------

int MockEditDenoiser::quadrant_for(const std::string& instruction) {
    return static_cast<int>(fnv1a(instruction) % 4);
}

EditPrediction MockEditDenoiser::predict(const EditQuery& q) {
    const auto& z = q.z_t.z;
    if (!z.same_shape(q.z_image)) throw PreconditionError("mock edit denoiser: conditioning latent shape mismatch");
    if (!(q.alpha_bar > 0.0 && q.alpha_bar < 1.0)) throw PreconditionError("mock edit denoiser: needs 0 < abar < 1");
    const double sig = std::sqrt(q.alpha_bar), spread = std::sqrt(1.0 - q.alpha_bar);

    EditPrediction p;
    p.eps_uncond = mock_denoiser_step(z, q.z_t.t, "", seed_);
    // Noise whose clean-latent estimate is exactly `target`.
    auto toward = [&](const Tensor3<double>& target) {
        return z.binary(target, [&](const auto& a, const auto& b) -> Grid<double> { return (a - sig * b) / spread; });
    };
    p.eps_img = toward(q.z_image);
    if (q.instruction.empty()) {
        p.eps_full = p.eps_img;
        return p;
    }

    const int quad = quadrant_for(q.instruction);
    const std::uint64_t h = mix_seed(seed_, fnv1a(q.instruction));
    Tensor3<double> target = q.z_image;
    const Eigen::Index h2 = z.rows() / 2, w2 = z.cols() / 2;
    const Eigen::Index y0 = quad >= 2 ? h2 : 0, x0 = quad % 2 ? w2 : 0;
    const Eigen::Index bh = quad >= 2 ? z.rows() - h2 : h2, bw = quad % 2 ? z.cols() - w2 : w2;
    for (Eigen::Index c = 0; c < z.channels(); ++c) {
        const double delta = (unit_from_hash(mix_seed(h, static_cast<std::uint64_t>(c))) - 0.5) * 1.2;
        target[c].block(y0, x0, bh, bw) += delta;
    }
    p.eps_full = toward(target);

    const int n = attention_size_;
    Grid<double> attn = Grid<double>::Constant(n, n, 0.05);
    const int a2 = n / 2;
    attn.block(quad >= 2 ? a2 : 0, quad % 2 ? a2 : 0, quad >= 2 ? n - a2 : a2, quad % 2 ? n - a2 : a2).setConstant(1.0);
    p.instruction_attention = std::move(attn);
    return p;
}

std::vector<BinaryMask> QuadrantSegmenter::segment(const Image& image) {
    const Eigen::Index h = image.rows(), w = image.cols(), h2 = h / 2, w2 = w / 2;
    std::vector<BinaryMask> out;
    for (int q = 0; q < 4; ++q) {
        MaskGrid m = MaskGrid::Zero(h, w);
        const Eigen::Index y0 = q >= 2 ? h2 : 0, x0 = q % 2 ? w2 : 0;
        m.block(y0, x0, q >= 2 ? h - h2 : h2, q % 2 ? w - w2 : w2).setOnes();
        out.emplace_back(std::move(m));
    }
    return out;
}

std::string MockCaptioner::caption(std::span<const Image> frames, std::uint64_t seed) {
    if (frames.empty()) throw PreconditionError("captioner needs at least one frame");
    static constexpr std::array<const char*, 6> kActions{
        "walks across the street", "turns toward the camera", "melts in the afternoon sun",
        "is lifted into the air",  "falls from the table",    "is carried out of the room"};
    static constexpr std::array<const char*, 5> kSubjects{"a man", "a dog", "an ice sculpture", "a glass lantern",
                                                          "a red ball"};
    const std::uint64_t h =
        mix_seed(mix_seed(seed_, seed), quantized_means(frames.front()) + "|" + quantized_means(frames.back()));
    return std::string("In this video ") + kSubjects[h % kSubjects.size()] + " " +
           kActions[mix_seed(h, 1) % kActions.size()] + " over " + std::to_string(frames.size()) + " frames";
}

Eigen::VectorXd ChannelMeanEncoder::encode(const Image& image) { return channel_means(image); }

MaskGrid SobelEdgeExtractor::edges(const Image& image) { return edge_map(image, threshold_); }

double MockClip::score(const Image& image, const std::string& text) {
    if (fixed_) return *fixed_;
    return 0.15 + 0.15 * unit_from_hash(mix_seed(seed_, text + "|" + quantized_means(image)));
}

double MeanAbsLpips::distance(const Image& a, const Image& b) { return mean_abs_diff(a, b); }

} // namespace forge
