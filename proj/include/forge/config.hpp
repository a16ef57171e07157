// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "forge/edit_engine.hpp"
#include "forge/t2i_branch.hpp"
#include "forge/trainer.hpp"
#include "forge/video_branch.hpp"

namespace forge {

struct EditMathConfig {
    double binarize_factor = kDefaultBinarizeFactor;
    double s_image = 1.5;
    double s_text = 7.5;
    int dilation_px = 3;
    bool dilation_enabled = false;
    bool full_fallback = true;
};

struct EditStageConfig {
    int steps = 20;
    double attention_tail = 0.5;
    FeatureSource features = FeatureSource::Original;
    bool post_edit = false;
};

struct EvalConfig {
    bool lpips = true;
    std::size_t test_t2i = 300;
    std::size_t test_video = 200;
};

struct ReviewConfig {
    std::size_t compact_every = 20;
    std::string token_env; ///< environment variable holding the reviewer token
    bool rescore_revised = false;
};

/// Top-level configuration file. Every section is optional; unknown keys are errors.
///
///   {"seed": 0,
///    "adapters": {"<kind>": {"implementation": "mock"|"endpoint", ...}},
///    "t2i": {"quotas": {"<Category>": N}, "steps", "refine_strength", "discriminator_min_votes",
///            "retry_budget", "workers"},
///    "video": {"identity_min", "window", "feature_weight", "pixel_weight", "sharpness_floor",
///              "retry_budget", "workers"},
///    "editmath": {"binarize_factor", "s_image", "s_text", "dilation_px", "dilation_enabled", "full_fallback"},
///    "edit": {"steps", "attention_tail", "features": "original"|"original_and_generated", "post_edit"},
///    "trainer": {...},
///    "eval": {"lpips", "test_t2i", "test_video"},
///    "review": {"compact_every", "token_env", "rescore_revised"},
///    "paths": {"dataset"}}
struct ForgeConfig {
    std::uint64_t seed = 0;
    Json adapters = Json::object();
    T2IBranchConfig t2i;
    VideoBranchConfig video;
    EditMathConfig editmath;
    EditStageConfig edit;
    TrainConfig trainer;
    EvalConfig eval;
    ReviewConfig review;
    std::filesystem::path dataset = "dataset";

    /// Throws ValidationError whose field is the dotted path of the offending key.
    static ForgeConfig from_json(const Json& j);
    static ForgeConfig load(const std::filesystem::path& path);
    Json to_json() const;
    /// 16 hex digits of the hash of the canonical JSON dump.
    std::string hash() const;

    /// Overrides the global seed and re-derives the per-section seeds from it.
    void set_seed(std::uint64_t s);
    MaskOptions mask_options() const;
    EditOptions edit_options() const;
    /// Branch configs with provenance filled in.
    T2IBranchConfig t2i_config() const;
    VideoBranchConfig video_config() const;
};

} // namespace forge
