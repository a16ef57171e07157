// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/adapters.hpp"

#include <array>
#include <cctype>

#include "forge/endpoint.hpp"
#include "forge/hash.hpp"
#include "forge/mocks.hpp"

namespace forge {

namespace {

struct KindName {
    AdapterKind kind;
    std::string_view name;
};

constexpr std::array<KindName, 15> kKinds{{
    {AdapterKind::TextLlm, "text_llm"},
    {AdapterKind::T2IDenoiser, "t2i_denoiser"},
    {AdapterKind::T2IAlternate, "t2i_alternate"},
    {AdapterKind::InpaintDenoiser, "inpaint_denoiser"},
    {AdapterKind::RefineDenoiser, "refine_denoiser"},
    {AdapterKind::EditDenoiser, "edit_denoiser"},
    {AdapterKind::Segmenter, "segmenter"},
    {AdapterKind::Captioner, "captioner"},
    {AdapterKind::Judge, "judge"},
    {AdapterKind::Scorer, "scorer"},
    {AdapterKind::ImageEncoder, "image_encoder"},
    {AdapterKind::EdgeExtractor, "edge_extractor"},
    {AdapterKind::MetricClip, "metric_clip"},
    {AdapterKind::MetricLpips, "metric_lpips"},
    {AdapterKind::Codec, "codec"},
}};

constexpr std::array<AdapterKind, 15> kAllKinds{
    AdapterKind::TextLlm,      AdapterKind::T2IDenoiser,   AdapterKind::T2IAlternate, AdapterKind::InpaintDenoiser,
    AdapterKind::RefineDenoiser, AdapterKind::EditDenoiser, AdapterKind::Segmenter,    AdapterKind::Captioner,
    AdapterKind::Judge,        AdapterKind::Scorer,        AdapterKind::ImageEncoder, AdapterKind::EdgeExtractor,
    AdapterKind::MetricClip,   AdapterKind::MetricLpips,   AdapterKind::Codec};

std::vector<std::string> script_of(const Json& options) {
    std::vector<std::string> script;
    for (const auto& s : options.at("script")) script.push_back(s.is_string() ? s.get<std::string>() : s.dump());
    return script;
}

MockT2IOptions t2i_options(const Json& o, bool alternate) {
    MockT2IOptions opt;
    opt.image_size = o.value("image_size", opt.image_size);
    opt.attention_size = o.value("attention_size", opt.attention_size);
    opt.steps = o.value("steps", opt.steps);
    if (o.contains("blind_keywords")) {
        for (const auto& k : o.at("blind_keywords")) opt.blind_keywords.insert(k.get<std::string>());
    }
    if (alternate) opt.version_tag = "mock-t2i-alt/1";
    return opt;
}

std::shared_ptr<Judge> mock_judge(const Json& o) {
    if (o.contains("script")) return std::make_shared<ScriptedJudge>(script_of(o), o.value("cycle", false));
    return std::make_shared<FixedJudge>(o.value("answer", std::string("1")));
}

AnyAdapter make_mock(AdapterKind kind, const AdapterConfig& cfg) {
    const Json& o = cfg.options;
    switch (kind) {
    case AdapterKind::TextLlm:
        if (o.contains("script")) return std::shared_ptr<TextLlm>(std::make_shared<ScriptedTextLlm>(script_of(o), o.value("cycle", false)));
        return std::shared_ptr<TextLlm>(std::make_shared<MockTextLlm>(cfg.seed));
    case AdapterKind::T2IDenoiser:
    case AdapterKind::T2IAlternate:
        return std::shared_ptr<T2IDenoiser>(
            std::make_shared<MockT2IDenoiser>(cfg.seed, t2i_options(o, kind == AdapterKind::T2IAlternate)));
    case AdapterKind::InpaintDenoiser:
        return std::shared_ptr<InpaintDenoiser>(std::make_shared<MockInpaintDenoiser>(cfg.seed, o.value("fail", false)));
    case AdapterKind::RefineDenoiser:
        return std::shared_ptr<RefineDenoiser>(std::make_shared<MockRefineDenoiser>(o.value("fail", false)));
    case AdapterKind::EditDenoiser:
        return std::shared_ptr<EditDenoiser>(std::make_shared<MockEditDenoiser>(cfg.seed, o.value("attention_size", 16)));
    case AdapterKind::Segmenter: return std::shared_ptr<Segmenter>(std::make_shared<QuadrantSegmenter>());
    case AdapterKind::Captioner:
        if (o.contains("script")) return std::shared_ptr<Captioner>(std::make_shared<ScriptedCaptioner>(script_of(o), o.value("cycle", true)));
        return std::shared_ptr<Captioner>(std::make_shared<MockCaptioner>(cfg.seed));
    case AdapterKind::Judge:
    case AdapterKind::Scorer: return mock_judge(o);
    case AdapterKind::ImageEncoder: return std::shared_ptr<ImageEncoder>(std::make_shared<ChannelMeanEncoder>());
    case AdapterKind::EdgeExtractor:
        return std::shared_ptr<EdgeExtractor>(std::make_shared<SobelEdgeExtractor>(o.value("threshold", 0.1)));
    case AdapterKind::MetricClip: {
        std::optional<double> fixed;
        if (o.contains("fixed")) fixed = o.at("fixed").get<double>();
        return std::shared_ptr<MetricClip>(std::make_shared<MockClip>(cfg.seed, fixed));
    }
    case AdapterKind::MetricLpips: return std::shared_ptr<MetricLpips>(std::make_shared<MeanAbsLpips>());
    case AdapterKind::Codec: return std::shared_ptr<LatentCodec>(std::make_shared<PoolingCodec>(o.value("factor", 2)));
    }
    throw ValidationError("kind", "unhandled adapter kind");
}

AnyAdapter make_endpoint(AdapterKind kind, const AdapterConfig& cfg) {
    if (cfg.endpoint.empty()) throw ValidationError("endpoint", std::string(to_string(kind)) + ": endpoint URL required");
    auto client = make_client(cfg);
    switch (kind) {
    case AdapterKind::TextLlm: return std::shared_ptr<TextLlm>(std::make_shared<EndpointTextLlm>(client));
    case AdapterKind::Captioner: return std::shared_ptr<Captioner>(std::make_shared<EndpointCaptioner>(client));
    case AdapterKind::Judge:
    case AdapterKind::Scorer: return std::shared_ptr<Judge>(std::make_shared<EndpointJudge>(client));
    case AdapterKind::ImageEncoder: return std::shared_ptr<ImageEncoder>(std::make_shared<EndpointImageEncoder>(client));
    case AdapterKind::MetricClip: return std::shared_ptr<MetricClip>(std::make_shared<EndpointClip>(client));
    case AdapterKind::MetricLpips: return std::shared_ptr<MetricLpips>(std::make_shared<EndpointLpips>(client));
    default:
        throw AdapterError(std::string(to_string(kind)) +
                           ": no endpoint protocol for this kind; register a plugin implementation instead");
    }
}

template <typename T>
void assign(std::shared_ptr<T>& slot, const AnyAdapter& a, AdapterKind kind) {
    if (!std::holds_alternative<std::shared_ptr<T>>(a)) {
        throw ValidationError("kind", std::string(to_string(kind)) + ": adapter has the wrong interface");
    }
    slot = std::get<std::shared_ptr<T>>(a);
}

} // namespace

std::string_view to_string(AdapterKind kind) {
    for (const auto& k : kKinds) {
        if (k.kind == kind) return k.name;
    }
    return "unknown";
}

AdapterKind adapter_kind_from_string(std::string_view name) {
    for (const auto& k : kKinds) {
        if (k.name == name) return k.kind;
    }
    throw ValidationError("kind", "unknown adapter kind '" + std::string(name) + "'");
}

std::span<const AdapterKind> all_adapter_kinds() { return kAllKinds; }

AdapterConfig AdapterConfig::from_json(const Json& j) {
    if (!j.is_object()) throw ValidationError("adapters", "adapter entry must be an object");
    AdapterConfig c;
    try {
        c.implementation = j.value("implementation", c.implementation);
        c.endpoint = j.value("endpoint", c.endpoint);
        c.credentials_env = j.value("credentials_env", c.credentials_env);
        c.seed = j.value("seed", c.seed);
        c.rate_limit = j.value("rate_limit", c.rate_limit);
        c.max_attempts = j.value("max_attempts", c.max_attempts);
        c.options = j.value("options", Json::object());
    } catch (const Json::exception& e) {
        throw ValidationError("adapters", e.what());
    }
    if (c.rate_limit < 0) throw ValidationError("rate_limit", "must be >= 0");
    if (c.max_attempts < 1) throw ValidationError("max_attempts", "must be >= 1");
    return c;
}

Json AdapterConfig::to_json() const {
    return {{"implementation", implementation}, {"endpoint", endpoint},      {"credentials_env", credentials_env},
            {"seed", seed},                     {"rate_limit", rate_limit}, {"max_attempts", max_attempts},
            {"options", options}};
}

AnyAdapter get_adapter(AdapterKind kind, const AdapterConfig& config) {
    if (config.implementation == "mock") return make_mock(kind, config);
    if (config.implementation == "endpoint") return make_endpoint(kind, config);
    throw ValidationError("implementation", "expected 'mock' or 'endpoint', got '" + config.implementation + "'");
}

void AdapterRegistry::set(AdapterKind kind, AnyAdapter a) {
    switch (kind) {
    case AdapterKind::TextLlm: assign(text_llm, a, kind); break;
    case AdapterKind::T2IDenoiser: assign(t2i_denoiser, a, kind); break;
    case AdapterKind::T2IAlternate: assign(t2i_alternate, a, kind); break;
    case AdapterKind::InpaintDenoiser: assign(inpaint_denoiser, a, kind); break;
    case AdapterKind::RefineDenoiser: assign(refine_denoiser, a, kind); break;
    case AdapterKind::EditDenoiser: assign(edit_denoiser, a, kind); break;
    case AdapterKind::Segmenter: assign(segmenter, a, kind); break;
    case AdapterKind::Captioner: assign(captioner, a, kind); break;
    case AdapterKind::Judge: assign(judge, a, kind); break;
    case AdapterKind::Scorer: assign(scorer, a, kind); break;
    case AdapterKind::ImageEncoder: assign(image_encoder, a, kind); break;
    case AdapterKind::EdgeExtractor: assign(edge_extractor, a, kind); break;
    case AdapterKind::MetricClip: assign(metric_clip, a, kind); break;
    case AdapterKind::MetricLpips: assign(metric_lpips, a, kind); break;
    case AdapterKind::Codec: assign(codec, a, kind); break;
    }
}

AdapterRegistry AdapterRegistry::from_config(const Json& adapters, std::uint64_t default_seed) {
    if (!adapters.is_null() && !adapters.is_object()) throw ValidationError("adapters", "must be an object");
    if (adapters.is_object()) {
        for (const auto& [name, _] : adapters.items()) adapter_kind_from_string(name);
    }
    AdapterRegistry reg;
    for (AdapterKind kind : all_adapter_kinds()) {
        const std::string name(to_string(kind));
        AdapterConfig cfg;
        if (adapters.is_object() && adapters.contains(name)) cfg = AdapterConfig::from_json(adapters.at(name));
        if (!(adapters.is_object() && adapters.contains(name) && adapters.at(name).contains("seed"))) {
            cfg.seed = mix_seed(default_seed, name);
        }
        reg.set(kind, get_adapter(kind, cfg));
    }
    return reg;
}

AdapterRegistry AdapterRegistry::mocks(std::uint64_t seed) { return from_config(Json::object(), seed); }

Json AdapterRegistry::versions() const {
    Json v = Json::object();
    auto put = [&](AdapterKind k, const auto& p) {
        if (p) v[std::string(to_string(k))] = p->version();
    };
    put(AdapterKind::TextLlm, text_llm);
    put(AdapterKind::T2IDenoiser, t2i_denoiser);
    put(AdapterKind::T2IAlternate, t2i_alternate);
    put(AdapterKind::InpaintDenoiser, inpaint_denoiser);
    put(AdapterKind::RefineDenoiser, refine_denoiser);
    put(AdapterKind::EditDenoiser, edit_denoiser);
    put(AdapterKind::Segmenter, segmenter);
    put(AdapterKind::Captioner, captioner);
    put(AdapterKind::Judge, judge);
    put(AdapterKind::Scorer, scorer);
    put(AdapterKind::ImageEncoder, image_encoder);
    put(AdapterKind::EdgeExtractor, edge_extractor);
    put(AdapterKind::MetricClip, metric_clip);
    put(AdapterKind::MetricLpips, metric_lpips);
    put(AdapterKind::Codec, codec);
    return v;
}

std::optional<int> parse_verdict(std::string_view text) {
    auto digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
    auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c != '0' && c != '1') continue;
        if (i > 0) {
            const char p = text[i - 1];
            if (alnum(p)) continue;
            if (p == '.' && i > 1 && digit(text[i - 2])) continue;
        }
        if (i + 1 < text.size()) {
            const char n = text[i + 1];
            if (alnum(n)) continue;
            if (n == '.' && i + 2 < text.size() && digit(text[i + 2])) continue;
        }
        return c - '0';
    }
    return std::nullopt;
}

Verdict query_verdict(Judge& judge, std::span<const Image> images, const std::string& prompt, std::uint64_t seed) {
    Verdict v;
    for (int attempt = 0; attempt < 2; ++attempt) {
        ++v.attempts;
        v.raw.push_back(judge.judge(images, prompt, mix_seed(seed, static_cast<std::uint64_t>(attempt))));
        if (auto parsed = parse_verdict(v.raw.back())) {
            v.value = parsed;
            break;
        }
    }
    return v;
}

} // namespace forge
