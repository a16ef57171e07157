// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "forge/adapters.hpp"

namespace forge {

struct EditRequest {
    Image input_image;
    std::string instruction;
    GuidanceConfig<double> guidance;
    std::uint64_t seed = 0;
    int steps = 20;
    bool post_edit = false;

    void validate() const;
};

struct EditTraceStep {
    int t = 0;
    std::optional<Grid<double>> attention; ///< instruction-token attention at this step
};

struct EditTrace {
    std::vector<EditTraceStep> steps;
    std::vector<Tensor3<double>> latents; ///< z_T .. z_0
};

enum class FeatureSource { Original, OriginalAndGenerated };

struct EditOptions {
    double binarize_factor = kDefaultBinarizeFactor;
    double attention_tail = 0.5; ///< fraction of the last steps averaged into the instruction mask
    FeatureSource features = FeatureSource::Original;
};

struct EditResult {
    Image generated;
    Image final_image;
    std::optional<BinaryMask> instruction_mask;
    std::optional<BinaryMask> edit_mask;
    EditTrace trace;
    std::vector<std::string> warnings;
    Json provenance = Json::object();
};

/// CFG sampling: every step composes the adapter's three predictions with `req.guidance`.
/// The result has final_image == generated; post-editing is a separate stage.
EditResult edit(const EditRequest& req, EditDenoiser& denoiser, const LatentCodec& codec,
                const NoiseSchedule<double>& schedule);

/// Mean of the instruction attention over the last `tail` fraction of recorded steps,
/// binarized and resampled to rows x cols. Throws PreconditionError when no attention was recorded.
BinaryMask extract_instruction_mask(const EditTrace& trace, Eigen::Index rows, Eigen::Index cols,
                                    double factor = kDefaultBinarizeFactor, double tail = 0.5);

struct PostEditResult {
    Image final_image;
    BinaryMask edit_mask;
    std::optional<BinaryMask> m_gen;
    std::optional<BinaryMask> m_ori;
    std::vector<std::string> warnings;
};

struct PostEditAdapters {
    Segmenter& segmenter;
    InpaintDenoiser& inpaint;
    ImageEncoder& encoder;
    EdgeExtractor& edges;
};

/// Segment both images, keep the segment of each that best overlaps m_instr, inpaint inside
/// their union and paste I_ori everywhere else.
PostEditResult post_edit(const Image& i_ori, const Image& i_gen, const BinaryMask& m_instr, PostEditAdapters adapters,
                         const std::string& prompt, std::uint64_t seed,
                         FeatureSource features = FeatureSource::Original);

/// edit() followed, when req.post_edit is set, by mask extraction and post_edit().
EditResult run_edit(const EditRequest& req, const AdapterRegistry& adapters, const EditOptions& options = {});

} // namespace forge
