// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/adapters.hpp"
#include "forge/pipeline.hpp"
#include "forge/schema.hpp"

namespace forge {

struct PairWeights {
    double feature = 0.5; ///< weight of 1 - identity
    double pixel = 0.5;   ///< weight of the mean absolute pixel difference
};

struct FramePairScore {
    double identity = 0.0; ///< clamped cosine, in [0, 1]
    double dynamics = 0.0;
    std::size_t i = 0;
    std::size_t j = 1;
};

/// Cosine similarity; two zero vectors count as identical, one zero vector as orthogonal.
double feature_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

FramePairScore score_frame_pair(const Image& a, const Image& b, ImageEncoder& encoder, PairWeights weights = {});

struct PairSelectOptions {
    double identity_min = 0.6;
    std::size_t window = 3;
    PairWeights weights;
};

/// Best pair from the first-k x last-k window with identity >= identity_min. Ties keep the
/// earliest (i, j). Returns nothing for fewer than 2 frames or an empty feasible set.
std::optional<FramePairScore> select_pair(std::span<const Image> frames, ImageEncoder& encoder,
                                          const PairSelectOptions& options = {});

std::string describe_storyline(std::span<const Image> frames, Captioner& captioner, std::uint64_t seed);

struct RewriteResult {
    std::string instruction;
    std::string output_description;
    Category category = Category::SpatialTrans;
    std::vector<std::string> keywords;
    int attempts = 0;
};

std::string rewrite_prompt(std::string_view description, std::string_view hint = {});

/// Rejects replies with an empty instruction, output description or keyword list, or with a
/// category the video branch cannot produce, and re-queries up to `retry_budget` times.
/// Throws AdapterError once the budget is spent.
RewriteResult rewrite_instruction(const std::string& description, TextLlm& llm, std::uint64_t seed,
                                  int retry_budget = 3, std::string_view hint = {});

/// Yields clips as ordered frame lists.
class VideoSource {
public:
    virtual ~VideoSource() = default;
    virtual std::vector<std::string> clip_ids() const = 0;
    virtual std::vector<Image> frames(const std::string& clip_id) const = 0;
    virtual std::vector<std::string> frame_names(const std::string& clip_id) const = 0;
};

/// One sub-directory per clip; frames are its PNG files in lexicographic order.
class FrameDirectorySource final : public VideoSource {
public:
    explicit FrameDirectorySource(std::filesystem::path root);
    std::vector<std::string> clip_ids() const override;
    std::vector<Image> frames(const std::string& clip_id) const override;
    std::vector<std::string> frame_names(const std::string& clip_id) const override;

private:
    std::vector<std::filesystem::path> frame_files(const std::string& clip_id) const;
    std::filesystem::path root_;
};

class InMemoryVideoSource final : public VideoSource {
public:
    void add(std::string clip_id, std::vector<Image> frames) { clips_[std::move(clip_id)] = std::move(frames); }
    std::vector<std::string> clip_ids() const override;
    std::vector<Image> frames(const std::string& clip_id) const override;
    std::vector<std::string> frame_names(const std::string& clip_id) const override;

private:
    std::map<std::string, std::vector<Image>> clips_;
};

struct VideoBranchConfig {
    std::uint64_t seed = 0;
    PairSelectOptions pair;
    double sharpness_floor = 0.0; ///< frames with Laplacian variance below this are dropped
    int retry_budget = 3;
    unsigned workers = 1;
    Json config_provenance = Json::object();
};

struct VideoRunResult {
    std::vector<TripletRecord> records;
    RunSummary summary;
};

VideoRunResult run_video_branch(const VideoSource& source, const VideoBranchConfig& cfg,
                                const AdapterRegistry& adapters, const DatasetLayout& layout);

/// Re-runs the instruction rewrite with `hint`, keeping the original frame pair.
TripletRecord regenerate_video_record(const TripletRecord& old, const std::string& hint,
                                      const VideoBranchConfig& cfg, const AdapterRegistry& adapters);

} // namespace forge
