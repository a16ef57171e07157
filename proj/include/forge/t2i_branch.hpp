// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/adapters.hpp"
#include "forge/pipeline.hpp"
#include "forge/schema.hpp"

namespace forge {

struct TextQuadruple {
    std::string y_ori;
    std::string y_instr;
    std::string y_tar;
    std::vector<std::string> keywords;
    Category category = Category::LongTerm;

    bool operator==(const TextQuadruple&) const = default;
};

/// Throws ValidationError when a text is blank, keywords are empty, or a keyword is not a
/// substring of y_ori or y_tar.
void validate(const TextQuadruple& q);
Json to_json(const TextQuadruple& q);

/// LLM prompt for one quadruple. Embeds the category description and exemplar.
std::string quadruple_prompt(Category category, std::size_t variation, std::string_view hint = {});

/// Parses a JSON reply with input_prompt, instruction, output_prompt and keywords, then validates it.
TextQuadruple parse_quadruple(std::string_view reply, Category category);

struct ProposalResult {
    std::vector<TextQuadruple> quadruples;
    std::size_t rejected = 0;
    std::vector<std::string> warnings;
};

/// Asks for `count` quadruples; each slot gets up to `retry_budget` extra queries.
ProposalResult propose_quadruples(Category category, std::size_t count, TextLlm& llm, std::uint64_t seed,
                                  int retry_budget = 3, std::string_view hint = {});

struct GenerationTrace {
    Image image;
    std::map<std::string, AttentionMap<double>> attention_maps;
    std::uint64_t seed = 0;
    std::vector<BlendStep<double>> latent_trace;
};

/// Generates I_ori from y_ori. An adapter failure is retried once with the same seed.
GenerationTrace synth_input(const TextQuadruple& q, T2IDenoiser& t2i, std::uint64_t seed,
                            std::string_view prompt_suffix = {});

struct MaskOptions {
    double binarize_factor = kDefaultBinarizeFactor;
    int dilation = 0;
    bool full_fallback = true;
};

struct OutputSynthesis {
    Image image;
    BinaryMask latent_mask;
    bool fell_back = false;
    std::vector<BlendStep<double>> trace;
    Tensor3<double> z_ori;
};

/// Inpaints y_tar inside the keyword mask of `trace`, keeping the rest of I_ori.
OutputSynthesis synth_output(const GenerationTrace& trace, const TextQuadruple& q,
                             const NoiseSchedule<double>& schedule, InpaintDenoiser& inpaint,
                             const LatentCodec& codec, std::uint64_t seed, const MaskOptions& options = {},
                             bool record_trace = false, std::string_view prompt_suffix = {});

struct RefineOutcome {
    Image image;
    std::string request_hash;
    bool refined = false;
    std::optional<std::string> warning;
};

/// Builds the refinement request (f from I_ori, edges from I_tar, I_tar noised to
/// round(strength * T)) and runs the refiner. On any adapter failure returns I_tar unchanged.
RefineOutcome refine_output(const Image& i_ori, const Image& i_tar, const std::string& y_tar,
                            RefineDenoiser& refine, ImageEncoder& encoder, EdgeExtractor& edges,
                            const LatentCodec& codec, const NoiseSchedule<double>& schedule, std::uint64_t seed,
                            double strength = 0.5);

struct CandidateTriplet {
    const Image& input;
    const Image& output;
    const TextQuadruple& quadruple;
};

inline constexpr std::array<std::string_view, 3> kCriteria{"semantic_alignment", "identity_consistency",
                                                          "image_quality"};

std::string criterion_prompt(std::string_view criterion, const TextQuadruple& q);

struct Discrimination {
    bool keep = false;
    bool unevaluable = false;
    std::array<std::optional<int>, 3> scores{};
    int retries = 0;
    std::vector<std::string> raw;

    Json to_json() const;
};

/// Queries the judge once per criterion. keep iff at least `min_votes` criteria score 1 and none
/// is unevaluable; min_votes = 3 is strict AND.
Discrimination discriminate(const CandidateTriplet& c, Judge& judge, std::uint64_t seed, int min_votes = 3);

struct T2IBranchConfig {
    std::vector<std::pair<Category, std::size_t>> quotas;
    std::uint64_t seed = 0;
    int steps = 20;
    MaskOptions mask;
    double refine_strength = 0.5;
    int discriminator_min_votes = 3;
    int retry_budget = 3;
    unsigned workers = 1;
    Json config_provenance = Json::object();
};

struct T2IRunResult {
    std::vector<TripletRecord> records;
    RunSummary summary;
};

/// One record attempt; `record` is empty when a stage dropped it.
struct T2IJobOutcome {
    std::optional<TripletRecord> record;
    std::string dropped_at;
    std::vector<std::string> warnings;
    Image input_image;
    Image output_image;
};

struct T2IJob {
    TextQuadruple quadruple;
    std::uint64_t record_seed = 0;
    std::string id;
    std::string hint;
    bool use_alternate = false;
};

T2IJobOutcome run_t2i_job(const T2IJob& job, const T2IBranchConfig& cfg, const AdapterRegistry& adapters);

/// Writes the job's images under layout.images() and fixes the record's image paths.
void store_t2i_images(T2IJobOutcome& outcome, const DatasetLayout& layout);

/// Full branch: proposals per quota, per-record jobs, image files and manifest append.
T2IRunResult run_t2i_branch(const T2IBranchConfig& cfg, const AdapterRegistry& adapters, const DatasetLayout& layout);

/// Re-runs the branch for the category of `old` with `hint` appended to the LLM and
/// t2i prompts. The new record links back through provenance.parent.
TripletRecord regenerate_t2i_record(const TripletRecord& old, const std::string& hint, bool use_alternate,
                                    const T2IBranchConfig& cfg, const AdapterRegistry& adapters,
                                    const DatasetLayout& layout);

} // namespace forge
