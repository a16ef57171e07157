// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/video_branch.hpp"

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

FramePairScore score_features(const Eigen::VectorXd& fa, const Eigen::VectorXd& fb, const Image& a, const Image& b,
                              const PairWeights& w) {
    FramePairScore s;
    s.identity = std::clamp(feature_cosine(fa, fb), 0.0, 1.0);
    const double pixel = std::clamp(mean_abs_diff(a, b), 0.0, 1.0);
    s.dynamics = w.feature * (1.0 - s.identity) + w.pixel * pixel;
    return s;
}

std::string sanitize(std::string_view id) {
    std::string out;
    for (char c : id) {
        out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
    }
    return out.empty() ? "clip" : out;
}

struct VideoOutcome {
    std::optional<TripletRecord> record;
    std::string dropped_at;
    std::vector<std::string> warnings;
    Image input;
    Image output;
};

} // namespace

double feature_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw PreconditionError("feature vectors differ in length");
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 && nb == 0.0) return 1.0;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

FramePairScore score_frame_pair(const Image& a, const Image& b, ImageEncoder& encoder, PairWeights weights) {
    if (!a.same_shape(b)) throw PreconditionError("score_frame_pair: frames differ in size");
    return score_features(encoder.encode(a), encoder.encode(b), a, b, weights);
}

std::optional<FramePairScore> select_pair(std::span<const Image> frames, ImageEncoder& encoder,
                                          const PairSelectOptions& options) {
    const std::size_t n = frames.size();
    if (n < 2) return std::nullopt;
    const std::size_t k = std::max<std::size_t>(options.window, 1);
    const std::size_t first_end = std::min(k, n);
    const std::size_t last_begin = n > k ? n - k : 0;

    std::map<std::size_t, Eigen::VectorXd> features;
    auto feature = [&](std::size_t idx) -> const Eigen::VectorXd& {
        auto it = features.find(idx);
        if (it == features.end()) it = features.emplace(idx, encoder.encode(frames[idx])).first;
        return it->second;
    };

    std::optional<FramePairScore> best;
    for (std::size_t i = 0; i < first_end; ++i) {
        for (std::size_t j = std::max(last_begin, i + 1); j < n; ++j) {
            if (!frames[i].same_shape(frames[j])) throw PreconditionError("select_pair: frames differ in size");
            FramePairScore s = score_features(feature(i), feature(j), frames[i], frames[j], options.weights);
            s.i = i;
            s.j = j;
            if (s.identity < options.identity_min) continue;
            if (!best || s.dynamics > best->dynamics) best = s;
        }
    }
    return best;
}

std::string describe_storyline(std::span<const Image> frames, Captioner& captioner, std::uint64_t seed) {
    if (frames.empty()) throw PreconditionError("describe_storyline: no frames");
    return captioner.caption(frames, seed);
}

std::string rewrite_prompt(std::string_view description, std::string_view hint) {
    std::string p = "Task: rewrite\n";
    p += "Description: " + std::string(description) + "\n";
    p += "Allowed categories:";
    for (Category c : categories_for(Branch::Video)) p += " " + std::string(to_string(c));
    p += "\n";
    if (!hint.empty()) p += "Adjustment: " + std::string(hint) + "\n";
    p += "Turn the description of this video storyline into an editing instruction that leads from its first "
         "frame to its last frame, describe the last frame, pick one allowed category and list the keywords "
         "naming the parts that change.\n";
    p += "Reply with one JSON object with keys instruction, output_description, category, keywords.\n";
    return p;
}

RewriteResult rewrite_instruction(const std::string& description, TextLlm& llm, std::uint64_t seed, int retry_budget,
                                  std::string_view hint) {
    if (blank(description)) throw PreconditionError("rewrite_instruction: empty description");
    const std::string prompt = rewrite_prompt(description, hint);
    std::string last_error;
    for (int attempt = 0; attempt <= retry_budget; ++attempt) {
        try {
            const std::string reply = llm.complete(prompt, mix_seed(seed, static_cast<std::uint64_t>(attempt)));
            const auto open = reply.find('{'), close = reply.rfind('}');
            if (open == std::string::npos || close == std::string::npos || close < open) {
                throw ValidationError("reply", "no JSON object");
            }
            const Json j = Json::parse(reply.substr(open, close - open + 1), nullptr, false);
            if (j.is_discarded() || !j.is_object()) throw ValidationError("reply", "invalid JSON");
            RewriteResult r;
            r.instruction = j.value("instruction", std::string());
            r.output_description = j.value("output_description", std::string());
            if (blank(r.instruction)) throw ValidationError("instruction", "empty");
            if (blank(r.output_description)) throw ValidationError("output_description", "empty");
            r.category = parse_category(j.value("category", std::string()));
            if (!branch_allows(Branch::Video, r.category)) {
                throw ValidationError("category", std::string(to_string(r.category)) + " is not a video category");
            }
            if (j.contains("keywords") && j.at("keywords").is_array()) {
                for (const auto& k : j.at("keywords")) {
                    if (k.is_string() && !blank(k.get<std::string>())) r.keywords.push_back(k.get<std::string>());
                }
            }
            if (r.keywords.empty()) throw ValidationError("keywords", "empty");
            r.attempts = attempt + 1;
            return r;
        } catch (const ValidationError& e) {
            last_error = e.what();
        } catch (const Json::exception& e) {
            last_error = e.what();
        }
    }
    throw AdapterError("instruction rewrite failed after " + std::to_string(retry_budget + 1) +
                       " attempts: " + last_error);
}

// ---------------------------------------------------------------------------------------

FrameDirectorySource::FrameDirectorySource(std::filesystem::path root) : root_(std::move(root)) {
    if (!std::filesystem::is_directory(root_)) throw NotFoundError("frames root is not a directory: " + root_.string());
}

std::vector<std::string> FrameDirectorySource::clip_ids() const {
    std::vector<std::string> ids;
    for (const auto& entry : std::filesystem::directory_iterator(root_)) {
        if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<std::filesystem::path> FrameDirectorySource::frame_files(const std::string& clip_id) const {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(root_ / clip_id)) {
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (entry.is_regular_file() && ext == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
    return files;
}

std::vector<Image> FrameDirectorySource::frames(const std::string& clip_id) const {
    std::vector<Image> out;
    for (const auto& f : frame_files(clip_id)) out.push_back(load_png(f));
    return out;
}

std::vector<std::string> FrameDirectorySource::frame_names(const std::string& clip_id) const {
    std::vector<std::string> out;
    for (const auto& f : frame_files(clip_id)) out.push_back(f.filename().string());
    return out;
}

std::vector<std::string> InMemoryVideoSource::clip_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, _] : clips_) ids.push_back(id);
    return ids;
}

std::vector<Image> InMemoryVideoSource::frames(const std::string& clip_id) const {
    const auto it = clips_.find(clip_id);
    if (it == clips_.end()) throw NotFoundError("unknown clip " + clip_id);
    return it->second;
}

std::vector<std::string> InMemoryVideoSource::frame_names(const std::string& clip_id) const {
    std::vector<std::string> names;
    char buf[32];
    for (std::size_t i = 0; i < frames(clip_id).size(); ++i) {
        std::snprintf(buf, sizeof buf, "frame_%04zu", i);
        names.emplace_back(buf);
    }
    return names;
}

// ---------------------------------------------------------------------------------------

namespace {

VideoOutcome run_clip(const std::string& clip, const VideoSource& source, const VideoBranchConfig& cfg,
                      const AdapterRegistry& a) {
    VideoOutcome out;
    const std::uint64_t clip_seed = mix_seed(cfg.seed, "video:" + clip);
    const std::string id = "video-" + sanitize(clip) + "-" + hex64(clip_seed).substr(0, 8);
    auto drop = [&](const char* stage, const std::string& why) {
        out.dropped_at = stage;
        out.warnings.push_back(id + ": " + why);
        return std::move(out);
    };

    std::vector<Image> all;
    std::vector<std::string> names;
    try {
        all = source.frames(clip);
        names = source.frame_names(clip);
    } catch (const std::exception& e) {
        return drop("frames", e.what());
    }
    std::vector<std::size_t> kept;
    std::vector<Image> frames;
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (cfg.sharpness_floor > 0.0 && laplacian_variance(all[i]) < cfg.sharpness_floor) continue;
        kept.push_back(i);
        frames.push_back(all[i]);
    }
    if (frames.size() < 2) return drop("frames", "fewer than 2 usable frames");

    std::optional<FramePairScore> pair;
    try {
        pair = select_pair(frames, *a.image_encoder, cfg.pair);
    } catch (const std::exception& e) {
        return drop("pair_selection", e.what());
    }
    if (!pair) return drop("pair_selection", "no frame pair reaches the identity threshold");

    std::string storyline;
    const std::uint64_t caption_seed = mix_seed(clip_seed, "caption");
    try {
        storyline = describe_storyline(frames, *a.captioner, caption_seed);
        if (blank(storyline)) throw AdapterError("captioner returned an empty description");
    } catch (const std::exception& e) {
        return drop("caption", e.what());
    }

    RewriteResult rw;
    const std::uint64_t rewrite_seed = mix_seed(clip_seed, "rewrite");
    try {
        rw = rewrite_instruction(storyline, *a.text_llm, rewrite_seed, cfg.retry_budget);
    } catch (const std::exception& e) {
        return drop("rewrite", e.what());
    }

    const std::size_t fi = kept[pair->i], fj = kept[pair->j];
    TripletRecord r;
    r.id = id;
    r.input_image = "images/" + id + "_input.png";
    r.output_image = "images/" + id + "_output.png";
    r.instruction = rw.instruction;
    r.output_description = rw.output_description;
    r.category = rw.category;
    r.branch = Branch::Video;
    r.keywords = rw.keywords;
    r.provenance = {{"generator", "video_branch"},
                    {"video_id", clip},
                    {"frame_indices", {fi, fj}},
                    {"frame_files", {names.at(fi), names.at(fj)}},
                    {"frames_total", all.size()},
                    {"frames_kept", frames.size()},
                    {"scores", {{"identity", pair->identity}, {"dynamics", pair->dynamics}}},
                    {"storyline", storyline},
                    {"input_description", storyline},
                    {"record_seed", clip_seed},
                    {"seeds", {{"caption", caption_seed}, {"rewrite", rewrite_seed}}},
                    {"rewrite_attempts", rw.attempts},
                    {"adapters", a.versions()},
                    {"config", cfg.config_provenance}};
    try {
        validate(r);
    } catch (const ValidationError& e) {
        return drop("record", e.what());
    }
    out.input = all[fi];
    out.output = all[fj];
    out.record = std::move(r);
    return out;
}

} // namespace

VideoRunResult run_video_branch(const VideoSource& source, const VideoBranchConfig& cfg,
                                const AdapterRegistry& adapters, const DatasetLayout& layout) {
    if (!adapters.image_encoder || !adapters.captioner || !adapters.text_llm) {
        throw PreconditionError("video branch: adapter registry is incomplete");
    }
    VideoRunResult result;
    const auto clips = source.clip_ids();
    result.summary.requested = clips.size();

    std::set<std::string> existing;
    if (std::filesystem::exists(layout.manifest())) {
        for (const auto& r : read_manifest(layout.manifest())) existing.insert(r.id);
    }

    auto outcomes = parallel_map(clips.size(), cfg.workers,
                                 [&](std::size_t i) { return run_clip(clips[i], source, cfg, adapters); });
    for (const auto& o : outcomes) {
        if (o.record && existing.contains(o.record->id)) {
            throw ConflictError("record " + o.record->id + " already exists in " + layout.manifest().string());
        }
    }

    layout.create();
    for (auto& o : outcomes) {
        result.summary.warnings.insert(result.summary.warnings.end(), o.warnings.begin(), o.warnings.end());
        if (!o.record) {
            ++result.summary.drops[o.dropped_at];
            continue;
        }
        save_png(o.input, layout.root / o.record->input_image);
        save_png(o.output, layout.root / o.record->output_image);
        result.records.push_back(std::move(*o.record));
    }
    result.summary.produced = result.records.size();
    append_manifest(result.records, layout.manifest());
    return result;
}

TripletRecord regenerate_video_record(const TripletRecord& old, const std::string& hint, const VideoBranchConfig& cfg,
                                      const AdapterRegistry& adapters) {
    if (old.branch != Branch::Video) throw PreconditionError("regenerate_video_record: not a video record");
    if (!adapters.text_llm) throw PreconditionError("video branch: no text_llm adapter");
    const std::string storyline = old.provenance.value("storyline", std::string());
    if (blank(storyline)) throw PreconditionError("regenerate_video_record: record has no storyline in provenance");
    const std::uint64_t base = old.provenance.value("record_seed", fnv1a(old.id));
    const std::uint64_t rs = mix_seed(mix_seed(base, "regenerate:" + old.id), hint);
    const RewriteResult rw = rewrite_instruction(storyline, *adapters.text_llm, mix_seed(rs, "rewrite"),
                                                 cfg.retry_budget, hint);
    TripletRecord r = old;
    const std::string clip = old.provenance.value("video_id", std::string("clip"));
    r.id = "video-" + sanitize(clip) + "-" + hex64(rs).substr(0, 8);
    r.instruction = rw.instruction;
    r.output_description = rw.output_description;
    r.category = rw.category;
    r.keywords = rw.keywords;
    r.review = ReviewStatus::Pending;
    r.review_note.reset();
    r.provenance.erase("superseded_by");
    r.provenance["record_seed"] = rs;
    r.provenance["seeds"]["rewrite"] = mix_seed(rs, "rewrite");
    r.provenance["rewrite_attempts"] = rw.attempts;
    r.provenance["regeneration_hint"] = hint;
    r.provenance["parent"] = old.id;
    r.provenance["adapters"] = adapters.versions();
    validate(r);
    return r;
}

} // namespace forge
