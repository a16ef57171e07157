// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "forge/adapters.hpp"
#include "forge/schema.hpp"

namespace forge {

/// Judge prompt for the MLLM score. The three placeholders are substituted verbatim.
inline constexpr std::string_view kMllmScorePrompt =
    "The input description <input text>, the editing instruction <instruction>, and the output description "
    "<output text>. Please evaluate if the given edited image has been successfully edited. if you think editing "
    "is successful, just give me 1, else if you think editing fails, just give me 0";

std::string render_mllm_prompt(std::string_view input_text, std::string_view instruction, std::string_view output_text);

/// nullopt when the adapter fails or returns a non-finite value.
std::optional<double> clip_score(const Image& edited, const std::string& output_description, MetricClip& metric);

/// 0 or 1, or nullopt when the verdict stays unparseable after one retry.
std::optional<int> mllm_score(const Image& edited, const std::string& input_text, const std::string& instruction,
                              const std::string& output_text, Judge& judge, std::uint64_t seed);

/// Throws PreconditionError when the images differ in size.
double lpips_score(const Image& a, const Image& b, MetricLpips& metric);

/// One report cell. total == counted + unevaluable + missing.
struct MetricCell {
    std::size_t total = 0;
    std::size_t counted = 0;
    std::size_t unevaluable = 0;
    std::size_t missing = 0;
    double sum = 0.0;

    void add(std::optional<double> v) {
        ++total;
        if (v) {
            ++counted;
            sum += *v;
        } else {
            ++unevaluable;
        }
    }
    void add_missing() {
        ++total;
        ++missing;
    }
    std::optional<double> mean() const {
        if (counted == 0) return std::nullopt;
        return sum / double(counted);
    }
    Json to_json() const;
};

using CellKey = std::pair<Branch, Category>;

struct EvalReport {
    std::map<CellKey, MetricCell> clip;
    std::map<CellKey, MetricCell> mllm_by_category;
    std::map<Branch, MetricCell> mllm;
    std::optional<std::map<Branch, MetricCell>> lpips;
    Json per_record = Json::object();
    Json adapter_versions = Json::object();

    Json to_json() const;
    /// CLIP rows by branch and category, then MLLM by branch, then LPIPS when present.
    std::string table() const;
};

/// Looks up an image for a record; nullopt means the output is missing.
using ImageLookup = std::function<std::optional<Image>(const TripletRecord&)>;

struct EvalOptions {
    bool lpips = true;
    std::uint64_t seed = 0;
};

/// Scores each record's edited output. Records whose output is missing are counted as missing
/// in every cell they belong to and excluded from means.
EvalReport evaluate_run(std::span<const TripletRecord> records, const ImageLookup& edited, const ImageLookup& inputs,
                        const AdapterRegistry& adapters, const EvalOptions& options = {});

/// Description of the input image: provenance.input_description, falling back to the storyline.
std::string input_description(const TripletRecord& r);

} // namespace forge
