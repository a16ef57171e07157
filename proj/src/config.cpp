// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/config.hpp"

#include <fstream>
#include <set>

#include "forge/hash.hpp"

namespace forge {

namespace {

/// Reads typed keys from one section and rejects keys it was not asked about.
class Section {
public:
    Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_null() && !j_.is_object()) throw ValidationError(path_, "must be an object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        known_.insert(key);
        if (j_.is_null() || !j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const Json::exception&) {
            throw ValidationError(field(key), "has the wrong type");
        }
    }

    const Json* child(const char* key) {
        known_.insert(key);
        if (j_.is_null() || !j_.contains(key)) return nullptr;
        return &j_.at(key);
    }

    void finish() const {
        if (!j_.is_object()) return;
        for (const auto& [key, _] : j_.items()) {
            if (!known_.contains(key)) throw ValidationError(field(key), "unknown key");
        }
    }

    std::string field(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> known_;
};

void require(bool ok, const std::string& field, const char* what) {
    if (!ok) throw ValidationError(field, what);
}

std::string_view feature_name(FeatureSource f) {
    return f == FeatureSource::Original ? "original" : "original_and_generated";
}

} // namespace

ForgeConfig ForgeConfig::from_json(const Json& j) {
    ForgeConfig c;
    Section root(j, "");
    root.read("seed", c.seed);

    if (const Json* a = root.child("adapters")) {
        require(a->is_object(), "adapters", "must be an object");
        for (const auto& [name, entry] : a->items()) {
            try {
                adapter_kind_from_string(name);
                AdapterConfig::from_json(entry);
            } catch (const ValidationError& e) {
                throw ValidationError("adapters." + name + (e.field() == name ? "" : "." + e.field()), e.what());
            }
        }
        c.adapters = *a;
    }

    {
        Section s(root.child("t2i") ? *root.child("t2i") : Json(), "t2i");
        if (const Json* q = s.child("quotas")) {
            require(q->is_object(), "t2i.quotas", "must be an object");
            for (const auto& [name, n] : q->items()) {
                Category cat;
                try {
                    cat = parse_category(name);
                } catch (const ValidationError&) {
                    throw ValidationError("t2i.quotas." + name, "unknown category");
                }
                require(branch_allows(Branch::TextToImage, cat), "t2i.quotas." + name,
                        "category is not produced by the text-to-image branch");
                require(n.is_number_unsigned(), "t2i.quotas." + name, "must be a non-negative integer");
                c.t2i.quotas.emplace_back(cat, n.get<std::size_t>());
            }
        }
        s.read("steps", c.t2i.steps);
        s.read("refine_strength", c.t2i.refine_strength);
        s.read("discriminator_min_votes", c.t2i.discriminator_min_votes);
        s.read("retry_budget", c.t2i.retry_budget);
        s.read("workers", c.t2i.workers);
        s.finish();
        require(c.t2i.steps >= 1, "t2i.steps", "must be >= 1");
        require(c.t2i.refine_strength >= 0.0 && c.t2i.refine_strength <= 1.0, "t2i.refine_strength",
                "must lie in [0, 1]");
        require(c.t2i.discriminator_min_votes >= 0 && c.t2i.discriminator_min_votes <= 3,
                "t2i.discriminator_min_votes", "must lie in [0, 3]");
        require(c.t2i.retry_budget >= 0, "t2i.retry_budget", "must be >= 0");
        require(c.t2i.workers >= 1, "t2i.workers", "must be >= 1");
    }

    {
        Section s(root.child("video") ? *root.child("video") : Json(), "video");
        s.read("identity_min", c.video.pair.identity_min);
        s.read("window", c.video.pair.window);
        s.read("feature_weight", c.video.pair.weights.feature);
        s.read("pixel_weight", c.video.pair.weights.pixel);
        s.read("sharpness_floor", c.video.sharpness_floor);
        s.read("retry_budget", c.video.retry_budget);
        s.read("workers", c.video.workers);
        s.finish();
        require(c.video.pair.identity_min >= 0.0 && c.video.pair.identity_min <= 1.0, "video.identity_min",
                "must lie in [0, 1]");
        require(c.video.pair.window >= 1, "video.window", "must be >= 1");
        require(c.video.pair.weights.feature >= 0.0, "video.feature_weight", "must be >= 0");
        require(c.video.pair.weights.pixel >= 0.0, "video.pixel_weight", "must be >= 0");
        require(c.video.sharpness_floor >= 0.0, "video.sharpness_floor", "must be >= 0");
        require(c.video.retry_budget >= 0, "video.retry_budget", "must be >= 0");
        require(c.video.workers >= 1, "video.workers", "must be >= 1");
    }

    {
        Section s(root.child("editmath") ? *root.child("editmath") : Json(), "editmath");
        s.read("binarize_factor", c.editmath.binarize_factor);
        s.read("s_image", c.editmath.s_image);
        s.read("s_text", c.editmath.s_text);
        s.read("dilation_px", c.editmath.dilation_px);
        s.read("dilation_enabled", c.editmath.dilation_enabled);
        s.read("full_fallback", c.editmath.full_fallback);
        s.finish();
        require(c.editmath.binarize_factor > 0.0, "editmath.binarize_factor", "must be > 0");
        require(c.editmath.s_image >= 0.0, "editmath.s_image", "must be >= 0");
        require(c.editmath.s_text >= 0.0, "editmath.s_text", "must be >= 0");
        require(c.editmath.dilation_px >= 0, "editmath.dilation_px", "must be >= 0");
    }

    {
        Section s(root.child("edit") ? *root.child("edit") : Json(), "edit");
        s.read("steps", c.edit.steps);
        s.read("attention_tail", c.edit.attention_tail);
        std::string features(feature_name(c.edit.features));
        s.read("features", features);
        s.read("post_edit", c.edit.post_edit);
        s.finish();
        if (features == "original") {
            c.edit.features = FeatureSource::Original;
        } else if (features == "original_and_generated") {
            c.edit.features = FeatureSource::OriginalAndGenerated;
        } else {
            throw ValidationError("edit.features", "must be \"original\" or \"original_and_generated\"");
        }
        require(c.edit.steps >= 1, "edit.steps", "must be >= 1");
        require(c.edit.attention_tail > 0.0 && c.edit.attention_tail <= 1.0, "edit.attention_tail",
                "must lie in (0, 1]");
    }

    if (const Json* t = root.child("trainer")) {
        try {
            c.trainer = TrainConfig::from_json(*t);
        } catch (const ValidationError& e) {
            throw ValidationError("trainer." + e.field(), e.what());
        }
    }

    {
        Section s(root.child("eval") ? *root.child("eval") : Json(), "eval");
        s.read("lpips", c.eval.lpips);
        s.read("test_t2i", c.eval.test_t2i);
        s.read("test_video", c.eval.test_video);
        s.finish();
    }

    {
        Section s(root.child("review") ? *root.child("review") : Json(), "review");
        s.read("compact_every", c.review.compact_every);
        s.read("token_env", c.review.token_env);
        s.read("rescore_revised", c.review.rescore_revised);
        s.finish();
    }

    {
        Section s(root.child("paths") ? *root.child("paths") : Json(), "paths");
        std::string dataset = c.dataset.string();
        s.read("dataset", dataset);
        s.finish();
        c.dataset = dataset;
    }

    root.finish();
    c.set_seed(c.seed);
    return c;
}

ForgeConfig ForgeConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ValidationError("config", std::string("malformed JSON: ") + e.what());
    }
    return from_json(j);
}

Json ForgeConfig::to_json() const {
    Json quotas = Json::object();
    for (const auto& [cat, n] : t2i.quotas) quotas[std::string(to_string(cat))] = n;
    return {{"seed", seed},
            {"adapters", adapters},
            {"t2i",
             {{"quotas", quotas},
              {"steps", t2i.steps},
              {"refine_strength", t2i.refine_strength},
              {"discriminator_min_votes", t2i.discriminator_min_votes},
              {"retry_budget", t2i.retry_budget},
              {"workers", t2i.workers}}},
            {"video",
             {{"identity_min", video.pair.identity_min},
              {"window", video.pair.window},
              {"feature_weight", video.pair.weights.feature},
              {"pixel_weight", video.pair.weights.pixel},
              {"sharpness_floor", video.sharpness_floor},
              {"retry_budget", video.retry_budget},
              {"workers", video.workers}}},
            {"editmath",
             {{"binarize_factor", editmath.binarize_factor},
              {"s_image", editmath.s_image},
              {"s_text", editmath.s_text},
              {"dilation_px", editmath.dilation_px},
              {"dilation_enabled", editmath.dilation_enabled},
              {"full_fallback", editmath.full_fallback}}},
            {"edit",
             {{"steps", edit.steps},
              {"attention_tail", edit.attention_tail},
              {"features", feature_name(edit.features)},
              {"post_edit", edit.post_edit}}},
            {"trainer", trainer.to_json()},
            {"eval", {{"lpips", eval.lpips}, {"test_t2i", eval.test_t2i}, {"test_video", eval.test_video}}},
            {"review",
             {{"compact_every", review.compact_every},
              {"token_env", review.token_env},
              {"rescore_revised", review.rescore_revised}}},
            {"paths", {{"dataset", dataset.generic_string()}}}};
}

std::string ForgeConfig::hash() const { return hex64(fnv1a(to_json().dump())); }

void ForgeConfig::set_seed(std::uint64_t s) {
    seed = s;
    t2i.seed = mix_seed(s, "t2i");
    video.seed = mix_seed(s, "video");
    trainer.seed = mix_seed(s, "trainer");
}

MaskOptions ForgeConfig::mask_options() const {
    return {editmath.binarize_factor, editmath.dilation_enabled ? editmath.dilation_px : 0, editmath.full_fallback};
}

EditOptions ForgeConfig::edit_options() const { return {editmath.binarize_factor, edit.attention_tail, edit.features}; }

T2IBranchConfig ForgeConfig::t2i_config() const {
    T2IBranchConfig c = t2i;
    c.mask = mask_options();
    c.config_provenance = {{"hash", hash()}, {"seed", seed}};
    return c;
}

VideoBranchConfig ForgeConfig::video_config() const {
    VideoBranchConfig c = video;
    c.config_provenance = {{"hash", hash()}, {"seed", seed}};
    return c;
}

} // namespace forge
