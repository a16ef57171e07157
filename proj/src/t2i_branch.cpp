// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/t2i_branch.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "forge/hash.hpp"
#include "forge/image.hpp"

namespace forge {

namespace {

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

/// The outermost {...} of a reply that may wrap its JSON in prose or code fences.
Json extract_json_object(std::string_view reply) {
    const auto open = reply.find('{');
    const auto close = reply.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
        throw ValidationError("reply", "no JSON object in LLM reply");
    }
    Json j = Json::parse(reply.substr(open, close - open + 1), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ValidationError("reply", "LLM reply is not valid JSON");
    return j;
}

std::string text_field(const Json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string()) throw ValidationError(key, "missing or not a string");
    return j.at(key).get<std::string>();
}

std::string suffix_for(std::string_view hint) { return hint.empty() ? std::string() : ", " + std::string(hint); }

std::uint64_t grid_hash(const MaskGrid& g) {
    std::uint64_t h = fnv1a(std::to_string(g.rows()) + "x" + std::to_string(g.cols()));
    for (Eigen::Index i = 0; i < g.size(); ++i) h = mix_seed(h, g.data()[i]);
    return h;
}

std::uint64_t tensor_hash(const Tensor3<double>& z) {
    std::uint64_t h = fnv1a("tensor");
    for (Eigen::Index c = 0; c < z.channels(); ++c) {
        for (Eigen::Index i = 0; i < z[c].size(); ++i) {
            h = fnv1a(std::string_view(reinterpret_cast<const char*>(&z[c].data()[i]), sizeof(double)), h);
        }
    }
    return h;
}

Json grid_to_json(const Grid<double>& g) {
    Json rows = Json::array();
    for (Eigen::Index y = 0; y < g.rows(); ++y) {
        Json row = Json::array();
        for (Eigen::Index x = 0; x < g.cols(); ++x) row.push_back(g(y, x));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string record_id(Category c, std::uint64_t record_seed) {
    return "t2i-" + lower(to_string(c)) + "-" + hex64(record_seed).substr(0, 12);
}

std::uint64_t slot_seed(std::uint64_t seed, Category c, std::size_t index) {
    return mix_seed(mix_seed(seed, to_string(c)), static_cast<std::uint64_t>(index));
}

} // namespace

void validate(const TextQuadruple& q) {
    if (blank(q.y_ori)) throw ValidationError("y_ori", "must be non-empty");
    if (blank(q.y_instr)) throw ValidationError("y_instr", "must be non-empty");
    if (blank(q.y_tar)) throw ValidationError("y_tar", "must be non-empty");
    if (q.keywords.empty()) throw ValidationError("keywords", "at least one keyword is required");
    for (const auto& k : q.keywords) {
        if (blank(k)) throw ValidationError("keywords", "keywords must be non-empty");
        if (q.y_ori.find(k) == std::string::npos && q.y_tar.find(k) == std::string::npos) {
            throw ValidationError("keywords", "keyword '" + k + "' occurs in neither prompt");
        }
    }
}

Json to_json(const TextQuadruple& q) {
    return {{"input_prompt", q.y_ori},
            {"instruction", q.y_instr},
            {"output_prompt", q.y_tar},
            {"keywords", q.keywords},
            {"category", to_string(q.category)}};
}

std::string quadruple_prompt(Category category, std::size_t variation, std::string_view hint) {
    const auto& ci = info(category);
    std::string p;
    p += "Task: quadruple\n";
    p += "Category: " + std::string(ci.name) + "\n";
    p += "Category description: " + std::string(ci.description) + "\n";
    p += "Example instruction: " + std::string(ci.exemplar) + "\n";
    p += "Variation: " + std::to_string(variation) + "\n";
    if (!hint.empty()) p += "Adjustment: " + std::string(hint) + "\n";
    p += "Write a prompt for an input image, an editing instruction of this category, a prompt for the edited "
         "image, and the keywords naming the parts that change. Every keyword must appear verbatim in one of "
         "the two image prompts.\n";
    p += "Reply with one JSON object with keys input_prompt, instruction, output_prompt, keywords.\n";
    return p;
}

TextQuadruple parse_quadruple(std::string_view reply, Category category) {
    const Json j = extract_json_object(reply);
    TextQuadruple q;
    q.y_ori = text_field(j, "input_prompt");
    q.y_instr = text_field(j, "instruction");
    q.y_tar = text_field(j, "output_prompt");
    q.category = category;
    if (!j.contains("keywords") || !j.at("keywords").is_array()) throw ValidationError("keywords", "missing list");
    for (const auto& k : j.at("keywords")) {
        if (!k.is_string()) throw ValidationError("keywords", "keywords must be strings");
        q.keywords.push_back(k.get<std::string>());
    }
    validate(q);
    return q;
}

ProposalResult propose_quadruples(Category category, std::size_t count, TextLlm& llm, std::uint64_t seed,
                                  int retry_budget, std::string_view hint) {
    if (count < 1) throw PreconditionError("propose_quadruples: count must be >= 1");
    if (retry_budget < 0) throw PreconditionError("propose_quadruples: negative retry budget");
    ProposalResult out;
    for (std::size_t i = 0; i < count; ++i) {
        const std::string prompt = quadruple_prompt(category, i, hint);
        bool ok = false;
        std::string last_error;
        for (int attempt = 0; attempt <= retry_budget && !ok; ++attempt) {
            try {
                const std::string reply =
                    llm.complete(prompt, mix_seed(mix_seed(seed, i), static_cast<std::uint64_t>(attempt)));
                out.quadruples.push_back(parse_quadruple(reply, category));
                ok = true;
            } catch (const ValidationError& e) {
                ++out.rejected;
                last_error = e.what();
            } catch (const AdapterError& e) {
                ++out.rejected;
                last_error = e.what();
            }
        }
        if (!ok) {
            out.warnings.push_back(std::string(to_string(category)) + " quadruple " + std::to_string(i) +
                                   ": retry budget exhausted (" + last_error + ")");
        }
    }
    return out;
}

GenerationTrace synth_input(const TextQuadruple& q, T2IDenoiser& t2i, std::uint64_t seed,
                            std::string_view prompt_suffix) {
    validate(q);
    const std::string prompt = q.y_ori + std::string(prompt_suffix);
    T2IResult res;
    try {
        res = t2i.generate(prompt, q.keywords, seed);
    } catch (const std::exception&) {
        try {
            res = t2i.generate(prompt, q.keywords, seed);
        } catch (const std::exception& second) {
            throw AdapterError(std::string("t2i generation failed twice: ") + second.what());
        }
    }
    if (res.attention.size() != q.keywords.size()) {
        throw AdapterError("t2i adapter returned " + std::to_string(res.attention.size()) + " attention maps for " +
                           std::to_string(q.keywords.size()) + " keywords");
    }
    GenerationTrace trace;
    trace.image = std::move(res.image);
    trace.seed = seed;
    trace.latent_trace = std::move(res.trace);
    for (std::size_t i = 0; i < q.keywords.size(); ++i) {
        res.attention[i].validate();
        trace.attention_maps.emplace(q.keywords[i], std::move(res.attention[i]));
    }
    return trace;
}

OutputSynthesis synth_output(const GenerationTrace& trace, const TextQuadruple& q,
                             const NoiseSchedule<double>& schedule, InpaintDenoiser& inpaint,
                             const LatentCodec& codec, std::uint64_t seed, const MaskOptions& options,
                             bool record_trace, std::string_view prompt_suffix) {
    std::vector<AttentionMap<double>> maps;
    for (const auto& k : q.keywords) {
        const auto it = trace.attention_maps.find(k);
        if (it == trace.attention_maps.end()) throw PreconditionError("no attention map for keyword '" + k + "'");
        maps.push_back(it->second);
    }
    OutputSynthesis out;
    out.z_ori = codec.encode(trace.image);
    auto region = edit_region_from_attention<double>(maps, out.z_ori.rows(), out.z_ori.cols(), options.binarize_factor,
                                                     options.dilation, options.full_fallback);
    out.latent_mask = std::move(region.mask);
    out.fell_back = region.fell_back;
    InpaintJob job{out.z_ori, out.latent_mask, q.y_tar + std::string(prompt_suffix), seed, record_trace};
    auto sampled = inpaint.inpaint(job, schedule);
    out.image = codec.decode(sampled.latent);
    out.trace = std::move(sampled.trace);
    return out;
}

RefineOutcome refine_output(const Image& i_ori, const Image& i_tar, const std::string& y_tar,
                            RefineDenoiser& refine, ImageEncoder& encoder, EdgeExtractor& edges,
                            const LatentCodec& codec, const NoiseSchedule<double>& schedule, std::uint64_t seed,
                            double strength) {
    if (!i_ori.same_shape(i_tar)) throw PreconditionError("refine_output: images differ in size");
    if (!(strength >= 0.0 && strength <= 1.0)) throw PreconditionError("refine_output: strength must lie in [0, 1]");
    RefineOutcome out;
    out.image = i_tar;
    try {
        const int t = static_cast<int>(std::lround(strength * schedule.T()));
        auto z_t = forward_noise(LatentState<double>{codec.encode(i_tar), 0}, t, schedule, mix_seed(seed, "refine-noise"));
        RefinementRequest req = build_refinement_request(
            i_ori, i_tar, y_tar, std::move(z_t), [&](const Image& im) { return encoder.encode(im); },
            [&](const Image& im) { return edges.edges(im); });
        Json summary{{"y_tar", req.y_tar},
                     {"f_ori", std::vector<double>(req.f_ori.data(), req.f_ori.data() + req.f_ori.size())},
                     {"canny", hex64(grid_hash(req.canny))},
                     {"t", req.z_t.t},
                     {"z_t", hex64(tensor_hash(req.z_t.z))}};
        out.request_hash = hex64(fnv1a(summary.dump()));
        Image refined = refine.refine(req, i_tar, seed);
        if (!refined.same_shape(i_tar) || !refined.all_finite()) throw AdapterError("refiner returned a malformed image");
        out.image = std::move(refined);
        out.refined = true;
    } catch (const std::exception& e) {
        out.image = i_tar;
        out.refined = false;
        out.warning = std::string("refinement skipped: ") + e.what();
    }
    return out;
}

std::string criterion_prompt(std::string_view criterion, const TextQuadruple& q) {
    std::string p = "Input description: " + q.y_ori + "\nInstruction: " + q.y_instr +
                    "\nOutput description: " + q.y_tar + "\nThe first image is the input, the second is the output.\n";
    if (criterion == "semantic_alignment") {
        p += "Does the output image match the output description and carry out the instruction?";
    } else if (criterion == "identity_consistency") {
        p += "Apart from the change the instruction asks for, do both images show the same subjects and scene?";
    } else if (criterion == "image_quality") {
        p += "Is the output image clear, free of artifacts and visually plausible?";
    } else {
        throw PreconditionError("unknown criterion " + std::string(criterion));
    }
    p += " Answer 1 for yes or 0 for no.";
    return p;
}

Json Discrimination::to_json() const {
    Json s = Json::object();
    for (std::size_t i = 0; i < kCriteria.size(); ++i) {
        s[std::string(kCriteria[i])] = scores[i] ? Json(*scores[i]) : Json(nullptr);
    }
    return {{"keep", keep}, {"unevaluable", unevaluable}, {"scores", s}, {"retries", retries}, {"raw", raw}};
}

Discrimination discriminate(const CandidateTriplet& c, Judge& judge, std::uint64_t seed, int min_votes) {
    if (min_votes < 1 || min_votes > 3) throw PreconditionError("discriminate: min_votes must be 1..3");
    if (c.input.empty() || c.output.empty()) throw PreconditionError("discriminate: incomplete candidate");
    const Image pair[2] = {c.input, c.output};
    Discrimination d;
    int votes = 0;
    for (std::size_t k = 0; k < kCriteria.size(); ++k) {
        try {
            const Verdict v = query_verdict(judge, pair, criterion_prompt(kCriteria[k], c.quadruple), mix_seed(seed, k));
            d.retries += v.attempts - 1;
            d.raw.insert(d.raw.end(), v.raw.begin(), v.raw.end());
            d.scores[k] = v.value;
        } catch (const AdapterError& e) {
            d.raw.push_back(std::string("error: ") + e.what());
        }
        if (!d.scores[k]) d.unevaluable = true;
        else votes += *d.scores[k];
    }
    d.keep = !d.unevaluable && votes >= min_votes;
    return d;
}

T2IJobOutcome run_t2i_job(const T2IJob& job, const T2IBranchConfig& cfg, const AdapterRegistry& a) {
    T2IJobOutcome out;
    const auto& t2i = job.use_alternate ? a.t2i_alternate : a.t2i_denoiser;
    if (!t2i || !a.inpaint_denoiser || !a.refine_denoiser || !a.judge || !a.codec || !a.image_encoder ||
        !a.edge_extractor) {
        throw PreconditionError("t2i branch: adapter registry is incomplete");
    }
    const std::string suffix = suffix_for(job.hint);
    const auto schedule = NoiseSchedule<double>::scaled_linear(cfg.steps);
    const std::uint64_t s_in = mix_seed(job.record_seed, "synth_input");
    const std::uint64_t s_out = mix_seed(job.record_seed, "synth_output");
    const std::uint64_t s_ref = mix_seed(job.record_seed, "refine");
    const std::uint64_t s_judge = mix_seed(job.record_seed, "discriminate");
    const TextQuadruple& q = job.quadruple;

    GenerationTrace input;
    try {
        input = synth_input(q, *t2i, s_in, suffix);
    } catch (const std::exception& e) {
        out.dropped_at = "synth_input";
        out.warnings.push_back(job.id + ": " + e.what());
        return out;
    }
    OutputSynthesis output;
    try {
        output = synth_output(input, q, schedule, *a.inpaint_denoiser, *a.codec, s_out, cfg.mask, false, suffix);
    } catch (const std::exception& e) {
        out.dropped_at = "synth_output";
        out.warnings.push_back(job.id + ": " + e.what());
        return out;
    }
    if (output.fell_back) out.warnings.push_back(job.id + ": keyword mask was empty, inpainted the full image");

    RefineOutcome refined = refine_output(input.image, output.image, q.y_tar + suffix, *a.refine_denoiser,
                                          *a.image_encoder, *a.edge_extractor, *a.codec, schedule, s_ref,
                                          cfg.refine_strength);
    if (refined.warning) out.warnings.push_back(job.id + ": " + *refined.warning);

    Discrimination verdict;
    try {
        verdict = discriminate({input.image, refined.image, q}, *a.judge, s_judge, cfg.discriminator_min_votes);
    } catch (const std::exception& e) {
        verdict.unevaluable = true;
        verdict.raw.push_back(std::string("error: ") + e.what());
    }
    if (!verdict.keep) {
        out.dropped_at = "discrimination";
        if (verdict.unevaluable) out.warnings.push_back(job.id + ": judge output unevaluable");
        return out;
    }

    TripletRecord r;
    r.id = job.id;
    r.input_image = "images/" + job.id + "_input.png";
    r.output_image = "images/" + job.id + "_output.png";
    r.instruction = q.y_instr;
    r.output_description = q.y_tar;
    r.category = q.category;
    r.branch = Branch::TextToImage;
    r.keywords = q.keywords;

    Json attention = Json::object();
    for (const auto& [k, m] : input.attention_maps) attention[k] = grid_to_json(m.values);
    Json prov{{"generator", "t2i_branch"},
              {"record_seed", job.record_seed},
              {"seeds", {{"synth_input", s_in}, {"synth_output", s_out}, {"refine", s_ref}, {"discriminate", s_judge}}},
              {"adapters", a.versions()},
              {"input_description", q.y_ori},
              {"quadruple", to_json(q)},
              {"attention_maps", attention},
              {"mask",
               {{"rows", output.latent_mask.rows()},
                {"cols", output.latent_mask.cols()},
                {"area", output.latent_mask.area()},
                {"fell_back", output.fell_back},
                {"binarize_factor", cfg.mask.binarize_factor},
                {"dilation", cfg.mask.dilation}}},
              {"refinement",
               {{"request_hash", refined.request_hash}, {"refined", refined.refined}, {"strength", cfg.refine_strength}}},
              {"judge", verdict.to_json()},
              {"steps", cfg.steps},
              {"alternate_generator", job.use_alternate},
              {"config", cfg.config_provenance}};
    if (!job.hint.empty()) prov["regeneration_hint"] = job.hint;
    r.provenance = std::move(prov);
    try {
        validate(r);
    } catch (const ValidationError& e) {
        out.dropped_at = "record";
        out.warnings.push_back(job.id + ": " + e.what());
        return out;
    }
    out.record = std::move(r);
    out.input_image = std::move(input.image);
    out.output_image = std::move(refined.image);
    return out;
}

void store_t2i_images(T2IJobOutcome& outcome, const DatasetLayout& layout) {
    if (!outcome.record) return;
    save_png(outcome.input_image, layout.root / outcome.record->input_image);
    save_png(outcome.output_image, layout.root / outcome.record->output_image);
}

T2IRunResult run_t2i_branch(const T2IBranchConfig& cfg, const AdapterRegistry& adapters, const DatasetLayout& layout) {
    if (!adapters.text_llm) throw PreconditionError("t2i branch: no text_llm adapter");
    T2IRunResult result;
    RunSummary& summary = result.summary;

    std::set<std::string> existing;
    if (std::filesystem::exists(layout.manifest())) {
        for (const auto& r : read_manifest(layout.manifest())) existing.insert(r.id);
    }

    std::vector<T2IJob> jobs;
    for (const auto& [category, count] : cfg.quotas) {
        if (!branch_allows(Branch::TextToImage, category)) {
            throw ValidationError("quotas", std::string(to_string(category)) + " is not a text-to-image category");
        }
        if (count == 0) continue;
        summary.requested += count;
        for (std::size_t j = 0; j < count; ++j) {
            const std::string id = record_id(category, slot_seed(cfg.seed, category, j));
            if (existing.contains(id)) {
                throw ConflictError("record " + id + " already exists in " + layout.manifest().string() +
                                    "; use another seed or output directory");
            }
        }
        auto proposal = propose_quadruples(category, count, *adapters.text_llm,
                                           mix_seed(cfg.seed, "propose:" + std::string(to_string(category))),
                                           cfg.retry_budget);
        summary.drops["proposal"] += count - proposal.quadruples.size();
        summary.warnings.insert(summary.warnings.end(), proposal.warnings.begin(), proposal.warnings.end());
        for (std::size_t j = 0; j < proposal.quadruples.size(); ++j) {
            const std::uint64_t rs = slot_seed(cfg.seed, category, j);
            jobs.push_back({std::move(proposal.quadruples[j]), rs, record_id(category, rs), {}, false});
        }
    }

    auto outcomes = parallel_map(jobs.size(), cfg.workers,
                                 [&](std::size_t i) { return run_t2i_job(jobs[i], cfg, adapters); });

    layout.create();
    for (auto& o : outcomes) {
        summary.warnings.insert(summary.warnings.end(), o.warnings.begin(), o.warnings.end());
        if (!o.record) {
            ++summary.drops[o.dropped_at];
            continue;
        }
        store_t2i_images(o, layout);
        result.records.push_back(std::move(*o.record));
    }
    summary.produced = result.records.size();
    append_manifest(result.records, layout.manifest());
    return result;
}

TripletRecord regenerate_t2i_record(const TripletRecord& old, const std::string& hint, bool use_alternate,
                                    const T2IBranchConfig& cfg, const AdapterRegistry& adapters,
                                    const DatasetLayout& layout) {
    if (old.branch != Branch::TextToImage) throw PreconditionError("regenerate_t2i_record: not a text-to-image record");
    if (!adapters.text_llm) throw PreconditionError("t2i branch: no text_llm adapter");
    const std::uint64_t base = old.provenance.value("record_seed", fnv1a(old.id));
    const std::uint64_t rs = mix_seed(mix_seed(base, "regenerate:" + old.id), hint + (use_alternate ? "|alt" : ""));
    auto proposal = propose_quadruples(old.category, 1, *adapters.text_llm, mix_seed(rs, "propose"), cfg.retry_budget, hint);
    if (proposal.quadruples.empty()) throw AdapterError("regeneration: no valid quadruple from the LLM");
    T2IJob job{std::move(proposal.quadruples.front()), rs, record_id(old.category, rs), hint, use_alternate};
    auto outcome = run_t2i_job(job, cfg, adapters);
    if (!outcome.record) {
        std::string why = "regeneration dropped at " + outcome.dropped_at;
        if (!outcome.warnings.empty()) why += " (" + outcome.warnings.back() + ")";
        throw AdapterError(why);
    }
    outcome.record->provenance["parent"] = old.id;
    layout.create();
    store_t2i_images(outcome, layout);
    return std::move(*outcome.record);
}

} // namespace forge
