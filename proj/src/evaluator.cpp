// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/evaluator.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "forge/hash.hpp"

namespace forge {

namespace {

void replace_once(std::string& s, std::string_view token, std::string_view value) {
    const auto pos = s.find(token);
    if (pos != std::string::npos) s.replace(pos, token.size(), value);
}

Json optional_json(std::optional<double> v) { return v ? Json(*v) : Json(nullptr); }

std::string format_row(std::string_view label, const MetricCell& c) {
    char buf[128];
    const auto m = c.mean();
    if (m) {
        std::snprintf(buf, sizeof buf, "%-18.*s %8.4f %6zu %8zu %8zu\n", int(label.size()), label.data(), *m, c.counted,
                      c.unevaluable, c.missing);
    } else {
        std::snprintf(buf, sizeof buf, "%-18.*s %8s %6zu %8zu %8zu\n", int(label.size()), label.data(), "-", c.counted,
                      c.unevaluable, c.missing);
    }
    return buf;
}

const char* kHeader = "                       Mean      N   Uneval  Missing\n";

std::string branch_title(Branch b) { return b == Branch::TextToImage ? "text-to-image branch" : "video branch"; }

} // namespace

std::string render_mllm_prompt(std::string_view input_text, std::string_view instruction, std::string_view output_text) {
    std::string p(kMllmScorePrompt);
    replace_once(p, "<input text>", input_text);
    replace_once(p, "<instruction>", instruction);
    replace_once(p, "<output text>", output_text);
    return p;
}

std::optional<double> clip_score(const Image& edited, const std::string& output_description, MetricClip& metric) {
    if (output_description.empty()) throw PreconditionError("clip_score: empty description");
    try {
        const double v = metric.score(edited, output_description);
        if (!std::isfinite(v)) return std::nullopt;
        return v;
    } catch (const AdapterError&) {
        return std::nullopt;
    }
}

std::optional<int> mllm_score(const Image& edited, const std::string& input_text, const std::string& instruction,
                              const std::string& output_text, Judge& judge, std::uint64_t seed) {
    if (input_text.empty() || instruction.empty() || output_text.empty()) {
        throw PreconditionError("mllm_score: all three texts are required");
    }
    try {
        return query_verdict(judge, {&edited, 1}, render_mllm_prompt(input_text, instruction, output_text), seed).value;
    } catch (const AdapterError&) {
        return std::nullopt;
    }
}

double lpips_score(const Image& a, const Image& b, MetricLpips& metric) {
    if (!a.same_shape(b)) throw PreconditionError("lpips_score: images differ in size");
    return metric.distance(a, b);
}

Json MetricCell::to_json() const {
    return {{"total", total},
            {"counted", counted},
            {"unevaluable", unevaluable},
            {"missing", missing},
            {"mean", optional_json(mean())}};
}

std::string input_description(const TripletRecord& r) {
    if (r.provenance.contains("input_description") && r.provenance.at("input_description").is_string()) {
        return r.provenance.at("input_description").get<std::string>();
    }
    return r.provenance.value("storyline", std::string());
}

Json EvalReport::to_json() const {
    Json clip_j = Json::object(), mllm_cat_j = Json::object(), mllm_j = Json::object();
    for (Branch b : {Branch::TextToImage, Branch::Video}) {
        const std::string bn(to_string(b));
        clip_j[bn] = Json::object();
        mllm_cat_j[bn] = Json::object();
        for (Category c : categories_for(b)) {
            const auto it = clip.find({b, c});
            clip_j[bn][std::string(to_string(c))] = (it == clip.end() ? MetricCell{} : it->second).to_json();
            const auto jt = mllm_by_category.find({b, c});
            mllm_cat_j[bn][std::string(to_string(c))] =
                (jt == mllm_by_category.end() ? MetricCell{} : jt->second).to_json();
        }
        const auto kt = mllm.find(b);
        mllm_j[bn] = (kt == mllm.end() ? MetricCell{} : kt->second).to_json();
    }
    Json out{{"clip", clip_j},
             {"mllm", mllm_j},
             {"mllm_by_category", mllm_cat_j},
             {"records", per_record},
             {"adapters", adapter_versions}};
    if (lpips) {
        Json l = Json::object();
        for (Branch b : {Branch::TextToImage, Branch::Video}) {
            const auto it = lpips->find(b);
            l[std::string(to_string(b))] = (it == lpips->end() ? MetricCell{} : it->second).to_json();
        }
        out["lpips"] = l;
    }
    return out;
}

std::string EvalReport::table() const {
    std::ostringstream out;
    for (Branch b : {Branch::TextToImage, Branch::Video}) {
        out << "CLIP score, " << branch_title(b) << "\n" << kHeader;
        for (Category c : categories_for(b)) {
            const auto it = clip.find({b, c});
            out << format_row(info(c).display, it == clip.end() ? MetricCell{} : it->second);
        }
        out << "\n";
    }
    out << "MLLM score\n" << kHeader;
    for (Branch b : {Branch::TextToImage, Branch::Video}) {
        const auto it = mllm.find(b);
        out << format_row(branch_title(b), it == mllm.end() ? MetricCell{} : it->second);
    }
    if (lpips) {
        out << "\nLPIPS to input\n" << kHeader;
        for (Branch b : {Branch::TextToImage, Branch::Video}) {
            const auto it = lpips->find(b);
            out << format_row(branch_title(b), it == lpips->end() ? MetricCell{} : it->second);
        }
    }
    return out.str();
}

EvalReport evaluate_run(std::span<const TripletRecord> records, const ImageLookup& edited, const ImageLookup& inputs,
                        const AdapterRegistry& adapters, const EvalOptions& options) {
    if (!adapters.metric_clip || !adapters.scorer) throw PreconditionError("evaluate_run: registry lacks metric_clip or scorer");
    if (options.lpips && !adapters.metric_lpips) throw PreconditionError("evaluate_run: registry lacks metric_lpips");
    EvalReport report;
    report.adapter_versions = {{"metric_clip", adapters.metric_clip->version()},
                               {"scorer", adapters.scorer->version()}};
    if (options.lpips) {
        report.lpips.emplace();
        report.adapter_versions["metric_lpips"] = adapters.metric_lpips->version();
    }
    for (const auto& r : records) {
        const CellKey key{r.branch, r.category};
        Json entry{{"branch", to_string(r.branch)}, {"category", to_string(r.category)}};
        const std::optional<Image> out = edited(r);
        if (!out) {
            report.clip[key].add_missing();
            report.mllm_by_category[key].add_missing();
            report.mllm[r.branch].add_missing();
            if (report.lpips) (*report.lpips)[r.branch].add_missing();
            entry["missing"] = true;
            report.per_record[r.id] = entry;
            continue;
        }
        entry["missing"] = false;

        const auto clip = clip_score(*out, r.output_description, *adapters.metric_clip);
        report.clip[key].add(clip);
        entry["clip"] = optional_json(clip);

        std::optional<double> verdict;
        const std::string input_text = input_description(r);
        if (input_text.empty()) {
            entry["mllm_note"] = "record has no input description";
        } else {
            const auto v = mllm_score(*out, input_text, r.instruction, r.output_description, *adapters.scorer,
                                      mix_seed(options.seed, r.id));
            if (v) verdict = double(*v);
        }
        report.mllm_by_category[key].add(verdict);
        report.mllm[r.branch].add(verdict);
        entry["mllm"] = verdict ? Json(static_cast<int>(*verdict)) : Json(nullptr);

        if (report.lpips) {
            std::optional<double> d;
            const std::optional<Image> in = inputs ? inputs(r) : std::nullopt;
            if (!in) {
                entry["lpips_note"] = "input image unavailable";
            } else if (!in->same_shape(*out)) {
                entry["lpips_note"] = "edited image and input differ in size";
            } else {
                try {
                    d = lpips_score(*out, *in, *adapters.metric_lpips);
                    if (!std::isfinite(*d)) d.reset();
                } catch (const AdapterError& e) {
                    entry["lpips_note"] = e.what();
                }
            }
            (*report.lpips)[r.branch].add(d);
            entry["lpips"] = optional_json(d);
        }
        report.per_record[r.id] = entry;
    }
    return report;
}

} // namespace forge
