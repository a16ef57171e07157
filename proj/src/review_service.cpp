// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/review_service.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>

#include "forge/errors.hpp"

namespace forge {

namespace fs = std::filesystem;

namespace {

std::string normalize_token(std::string_view text) {
    std::string out;
    for (char c : text) {
        if (c == '-' || c == ' ') c = '_';
        out.push_back(char(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

bool blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string job_id_for(std::uint64_t seq) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "regen-%06llu", static_cast<unsigned long long>(seq));
    return buf;
}

bool transition_allowed(ReviewStatus from, ReviewAction a) {
    switch (a) {
    case ReviewAction::Approve:
    case ReviewAction::Reject:
        return from == ReviewStatus::Pending || from == ReviewStatus::Revised;
    case ReviewAction::ReviseInstruction:
    case ReviewAction::RequestRegeneration:
        return from == ReviewStatus::Pending;
    }
    return false;
}

Json decision_entry(const ReviewDecision& d, std::uint64_t revision) {
    Json e{{"type", "decision"},
           {"record_id", d.record_id},
           {"action", to_string(d.action)},
           {"reviewer", d.reviewer},
           {"timestamp", d.timestamp},
           {"revision", revision}};
    if (d.revised_instruction) e["revised_instruction"] = *d.revised_instruction;
    if (d.regeneration_hint) e["regeneration_hint"] = *d.regeneration_hint;
    if (d.note) e["note"] = *d.note;
    if (d.alternate_generator) e["alternate_generator"] = true;
    return e;
}

void write_line(const fs::path& path, const Json& entry) {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string());
    out << entry.dump() << '\n';
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Json> read_log(const fs::path& path) {
    std::vector<Json> entries;
    std::ifstream in(path, std::ios::binary);
    if (!in) return entries;
    std::string line;
    std::size_t n = 0;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        ++n;
        if (lines[i].empty()) continue;
        try {
            entries.push_back(Json::parse(lines[i]));
        } catch (const Json::parse_error&) {
            // A torn final line from an interrupted append is dropped; anything earlier is corruption.
            if (i + 1 == lines.size()) break;
            throw ParseError({n}, path.string() + ": malformed audit entry on line " + std::to_string(n));
        }
    }
    return entries;
}

void atomic_write_manifest(std::span<const TripletRecord> records, const fs::path& path) {
    const fs::path tmp = path.string() + ".tmp";
    fs::remove(tmp);
    write_manifest(records, tmp);
    fs::rename(tmp, path);
}

} // namespace

std::string_view to_string(ReviewAction a) {
    switch (a) {
    case ReviewAction::Approve: return "approve";
    case ReviewAction::Reject: return "reject";
    case ReviewAction::ReviseInstruction: return "revise_instruction";
    case ReviewAction::RequestRegeneration: return "request_regeneration";
    }
    return "approve";
}

ReviewAction parse_action(std::string_view text) {
    const std::string t = normalize_token(text);
    for (ReviewAction a : {ReviewAction::Approve, ReviewAction::Reject, ReviewAction::ReviseInstruction,
                           ReviewAction::RequestRegeneration}) {
        if (t == to_string(a)) return a;
    }
    throw ValidationError("action", "unknown review action '" + std::string(text) + "'");
}

void validate(const ReviewDecision& d) {
    if (d.record_id.empty()) throw ValidationError("record_id", "must not be empty");
    if (blank(d.reviewer)) throw ValidationError("reviewer", "must not be empty");
    if (d.action == ReviewAction::ReviseInstruction &&
        (!d.revised_instruction || blank(*d.revised_instruction))) {
        throw ValidationError("revised_instruction", "required for revise_instruction");
    }
}

Json to_json(const RecordView& v) {
    Json j{{"record", to_json(v.record)}, {"revision", v.revision}};
    j["pending_job"] = v.pending_job ? Json(*v.pending_job) : Json(nullptr);
    return j;
}

Json RecordPage::to_json() const {
    Json items_j = Json::array();
    for (const auto& v : items) items_j.push_back(forge::to_json(v));
    return {{"items", items_j}, {"page", page}, {"page_size", page_size}, {"total", total}, {"pages", pages}};
}

// ---------------------------------------------------------------------------------------------
// ReviewState

ReviewState::ReviewState(std::vector<TripletRecord> initial) : records_(std::move(initial)) {
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (!index_.emplace(records_[i].id, i).second) throw ValidationError("id", "duplicate id " + records_[i].id);
        revisions_[records_[i].id] = 0;
    }
}

const TripletRecord* ReviewState::find(const std::string& id) const {
    const auto it = index_.find(id);
    return it == index_.end() ? nullptr : &records_[it->second];
}

TripletRecord& ReviewState::at(const std::string& id) { return records_[index_.at(id)]; }

std::uint64_t ReviewState::revision(const std::string& id) const {
    const auto it = revisions_.find(id);
    if (it == revisions_.end()) throw NotFoundError("no record " + id);
    return it->second;
}

std::optional<RegenerationJob> ReviewState::pending_job_for(const std::string& record_id) const {
    const auto it = pending_by_record_.find(record_id);
    if (it == pending_by_record_.end()) return std::nullopt;
    return pending_.at(it->second);
}

void ReviewState::check(const Json& e) const {
    const std::string type = e.value("type", std::string());
    if (type == "decision") {
        const std::string id = e.at("record_id").get<std::string>();
        const TripletRecord* r = find(id);
        if (!r) throw NotFoundError("no record " + id);
        const ReviewAction a = parse_action(e.at("action").get<std::string>());
        if (pending_by_record_.contains(id)) throw ConflictError(id + ": regeneration in progress");
        const auto rev = e.at("revision").get<std::uint64_t>();
        if (rev != revisions_.at(id)) {
            throw ConflictError(id + ": stale revision " + std::to_string(rev) + ", current " +
                                std::to_string(revisions_.at(id)));
        }
        if (!transition_allowed(r->review, a)) {
            throw ConflictError(id + ": cannot " + std::string(to_string(a)) + " a record in state " +
                                std::string(to_string(r->review)));
        }
        if (a == ReviewAction::ReviseInstruction) {
            TripletRecord copy = *r;
            copy.instruction = e.at("revised_instruction").get<std::string>();
            validate(copy);
        }
        if (a == ReviewAction::RequestRegeneration) {
            const std::string job = e.at("job_id").get<std::string>();
            if (pending_.contains(job) || completed_.contains(job)) throw ConflictError("job " + job + " already exists");
        }
    } else if (type == "regenerated" || type == "regeneration_failed") {
        const std::string job = e.at("job_id").get<std::string>();
        const auto it = pending_.find(job);
        if (it == pending_.end()) throw ConflictError("job " + job + " is not pending");
        if (it->second.record_id != e.at("record_id").get<std::string>()) {
            throw ValidationError("record_id", "does not match job " + job);
        }
        if (type == "regenerated") {
            const TripletRecord nr = record_from_json(e.at("record"));
            validate(nr);
            if (index_.contains(nr.id)) throw ConflictError("record " + nr.id + " already exists");
        }
    } else if (type == "import") {
        const TripletRecord nr = record_from_json(e.at("record"));
        validate(nr);
        if (index_.contains(nr.id)) throw ConflictError("record " + nr.id + " already exists");
    } else {
        throw ValidationError("type", "unknown audit entry type '" + type + "'");
    }
}

void ReviewState::apply(const Json& e) {
    check(e);
    apply_unchecked(e);
}

void ReviewState::apply_unchecked(const Json& e) {
    ++entries_;
    const std::string type = e.at("type").get<std::string>();
    if (type == "decision") {
        const std::string id = e.at("record_id").get<std::string>();
        TripletRecord& r = at(id);
        const ReviewAction a = parse_action(e.at("action").get<std::string>());
        switch (a) {
        case ReviewAction::Approve: r.review = ReviewStatus::Approved; break;
        case ReviewAction::Reject: r.review = ReviewStatus::Rejected; break;
        case ReviewAction::ReviseInstruction:
            if (!r.provenance.contains("original_instruction")) r.provenance["original_instruction"] = r.instruction;
            r.instruction = e.at("revised_instruction").get<std::string>();
            r.review = ReviewStatus::Revised;
            break;
        case ReviewAction::RequestRegeneration: {
            RegenerationJob job;
            job.job_id = e.at("job_id").get<std::string>();
            job.record_id = id;
            job.hint = e.value("regeneration_hint", std::string());
            job.alternate_generator = e.value("alternate_generator", false);
            if (r.provenance.contains("seeds")) job.seeds = r.provenance.at("seeds");
            pending_by_record_[id] = job.job_id;
            pending_.emplace(job.job_id, std::move(job));
            break;
        }
        }
        if (e.contains("note")) r.review_note = e.at("note").get<std::string>();
        ++revisions_[id];
    } else if (type == "regenerated") {
        const std::string job = e.at("job_id").get<std::string>();
        const std::string id = e.at("record_id").get<std::string>();
        TripletRecord nr = record_from_json(e.at("record"));
        TripletRecord& old = at(id);
        old.review = ReviewStatus::Rejected;
        old.review_note = "superseded by " + nr.id;
        old.provenance["superseded_by"] = nr.id;
        ++revisions_[id];
        pending_.erase(job);
        pending_by_record_.erase(id);
        completed_.insert(job);
        index_[nr.id] = records_.size();
        revisions_[nr.id] = 0;
        records_.push_back(std::move(nr));
    } else if (type == "regeneration_failed") {
        const std::string job = e.at("job_id").get<std::string>();
        const std::string id = e.at("record_id").get<std::string>();
        TripletRecord& old = at(id);
        old.review_note = "regeneration failed: " + e.value("note", std::string());
        ++revisions_[id];
        pending_.erase(job);
        pending_by_record_.erase(id);
        completed_.insert(job);
    } else if (type == "import") {
        TripletRecord nr = record_from_json(e.at("record"));
        index_[nr.id] = records_.size();
        revisions_[nr.id] = 0;
        records_.push_back(std::move(nr));
    }
}

std::vector<TripletRecord> replay_audit_log(std::vector<TripletRecord> initial, const fs::path& log) {
    ReviewState state(std::move(initial));
    for (const Json& e : read_log(log)) state.apply(e);
    return state.records();
}

// ---------------------------------------------------------------------------------------------
// ReviewStore

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

fs::path review_dir(const fs::path& manifest) {
    return manifest.parent_path() / (manifest.filename().string() + ".review");
}

fs::path ReviewStore::audit_log_path() const { return review_dir(manifest_) / "audit.jsonl"; }
fs::path ReviewStore::base_manifest_path() const { return review_dir(manifest_) / "base_manifest.jsonl"; }

ReviewStore::ReviewStore(fs::path manifest, ReviewStoreOptions options)
    : manifest_(std::move(manifest)), options_(std::move(options)) {
    if (!options_.clock) options_.clock = utc_timestamp;
    if (!fs::exists(manifest_)) throw NotFoundError("manifest not found: " + manifest_.string());
    fs::create_directories(base_manifest_path().parent_path());
    if (!fs::exists(base_manifest_path())) fs::copy_file(manifest_, base_manifest_path());

    state_ = ReviewState(read_manifest(base_manifest_path()));
    const auto entries = read_log(audit_log_path());
    for (const Json& e : entries) {
        state_.apply(e);
        next_seq_ = std::max(next_seq_, e.value("seq", std::uint64_t{0}) + 1);
    }
    if (!entries.empty()) {
        // Rewrite the log without a possibly torn final line before appending to it.
        const fs::path tmp = audit_log_path().string() + ".tmp";
        fs::remove(tmp);
        for (const Json& e : entries) write_line(tmp, e);
        fs::rename(tmp, audit_log_path());
    }

    // Records appended to the manifest by later generation runs enter through import entries.
    std::unique_lock lock(mu_);
    for (const TripletRecord& r : read_manifest(manifest_)) {
        if (!state_.find(r.id)) commit(Json{{"type", "import"}, {"record", to_json(r)}});
    }
    if (read_manifest(manifest_) != state_.records()) atomic_write_manifest(state_.records(), manifest_);
    since_compaction_ = 0;
}

ReviewStore::~ReviewStore() {
    try {
        if (since_compaction_ > 0) compact();
    } catch (...) {
    }
}

void ReviewStore::commit(Json entry) {
    entry["seq"] = next_seq_;
    state_.check(entry);
    write_line(audit_log_path(), entry);
    state_.apply(entry);
    ++next_seq_;
    ++since_compaction_;
    if (options_.compact_every > 0 && since_compaction_ >= options_.compact_every) {
        atomic_write_manifest(state_.records(), manifest_);
        since_compaction_ = 0;
    }
}

void ReviewStore::compact() {
    std::unique_lock lock(mu_);
    atomic_write_manifest(state_.records(), manifest_);
    since_compaction_ = 0;
}

RecordView ReviewStore::view(const TripletRecord& r) const {
    RecordView v{r, state_.revision(r.id), std::nullopt};
    if (auto job = state_.pending_job_for(r.id)) v.pending_job = job->job_id;
    return v;
}

RecordPage ReviewStore::list(const RecordFilter& f) const {
    if (f.page == 0) throw ValidationError("page", "must be at least 1");
    if (f.page_size == 0) throw ValidationError("page_size", "must be at least 1");
    std::shared_lock lock(mu_);
    std::vector<const TripletRecord*> hits;
    for (const auto& r : state_.records()) {
        if (f.status && r.review != *f.status) continue;
        if (f.branch && r.branch != *f.branch) continue;
        if (f.category && r.category != *f.category) continue;
        hits.push_back(&r);
    }
    std::sort(hits.begin(), hits.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
    RecordPage page;
    page.page = f.page;
    page.page_size = f.page_size;
    page.total = hits.size();
    page.pages = (hits.size() + f.page_size - 1) / f.page_size;
    const std::size_t begin = std::min(hits.size(), (f.page - 1) * f.page_size);
    const std::size_t end = std::min(hits.size(), begin + f.page_size);
    for (std::size_t i = begin; i < end; ++i) page.items.push_back(view(*hits[i]));
    return page;
}

RecordPage ReviewStore::list_pending(RecordFilter filter) const {
    filter.status = ReviewStatus::Pending;
    return list(filter);
}

std::optional<RecordView> ReviewStore::get(const std::string& id) const {
    std::shared_lock lock(mu_);
    const TripletRecord* r = state_.find(id);
    if (!r) return std::nullopt;
    return view(*r);
}

std::vector<TripletRecord> ReviewStore::records() const {
    std::shared_lock lock(mu_);
    return state_.records();
}

StatsReport ReviewStore::stats(std::size_t top_k) const {
    std::shared_lock lock(mu_);
    return dataset_stats(state_.records(), top_k);
}

RecordView ReviewStore::submit(ReviewDecision d) {
    validate(d);
    if (d.timestamp.empty()) d.timestamp = options_.clock();
    std::unique_lock lock(mu_);
    if (!state_.find(d.record_id)) throw NotFoundError("no record " + d.record_id);
    const std::uint64_t current = state_.revision(d.record_id);
    if (d.expected_revision && *d.expected_revision != current) {
        throw ConflictError(d.record_id + ": stale revision " + std::to_string(*d.expected_revision) + ", current " +
                            std::to_string(current));
    }
    Json entry = decision_entry(d, current);
    if (d.action == ReviewAction::RequestRegeneration) entry["job_id"] = job_id_for(next_seq_);
    commit(std::move(entry));
    return view(*state_.find(d.record_id));
}

std::optional<RegenerationJob> ReviewStore::claim_job() {
    std::unique_lock lock(mu_);
    for (const auto& [id, job] : state_.pending_jobs()) {
        if (claimed_.insert(id).second) return job;
    }
    return std::nullopt;
}

bool ReviewStore::enqueue(const std::string& job_id) {
    std::unique_lock lock(mu_);
    if (state_.job_completed(job_id)) return false;
    if (!state_.pending_jobs().contains(job_id)) throw NotFoundError("no job " + job_id);
    return claimed_.erase(job_id) > 0;
}

bool ReviewStore::complete_job(const RegenerationJob& job, const TripletRecord& new_record) {
    std::unique_lock lock(mu_);
    claimed_.erase(job.job_id);
    if (state_.job_completed(job.job_id)) return false;
    TripletRecord nr = new_record;
    nr.review = ReviewStatus::Pending;
    nr.review_note.reset();
    if (!nr.provenance.contains("parent")) nr.provenance["parent"] = job.record_id;
    commit(Json{{"type", "regenerated"},
                {"job_id", job.job_id},
                {"record_id", job.record_id},
                {"record", to_json(nr)},
                {"timestamp", options_.clock()}});
    return true;
}

bool ReviewStore::fail_job(const RegenerationJob& job, const std::string& note) {
    std::unique_lock lock(mu_);
    claimed_.erase(job.job_id);
    if (state_.job_completed(job.job_id)) return false;
    commit(Json{{"type", "regeneration_failed"},
                {"job_id", job.job_id},
                {"record_id", job.record_id},
                {"note", note},
                {"timestamp", options_.clock()}});
    return true;
}

std::size_t ReviewStore::queued_jobs() const {
    std::shared_lock lock(mu_);
    std::size_t n = 0;
    for (const auto& [id, job] : state_.pending_jobs()) n += claimed_.contains(id) ? 0 : 1;
    return n;
}

std::size_t run_regeneration_worker(ReviewStore& store, const Regenerator& regenerate, std::size_t max_jobs) {
    std::size_t done = 0;
    while (done < max_jobs) {
        const auto job = store.claim_job();
        if (!job) break;
        const auto old = store.get(job->record_id);
        if (!old) {
            store.fail_job(*job, "record disappeared");
        } else {
            try {
                store.complete_job(*job, regenerate(old->record, *job));
            } catch (const ConflictError& e) {
                store.fail_job(*job, e.what());
            } catch (const std::exception& e) {
                store.fail_job(*job, e.what());
            }
        }
        ++done;
    }
    return done;
}

// ---------------------------------------------------------------------------------------------
// Export

std::vector<TripletRecord> export_approved(std::span<const TripletRecord> records) {
    std::vector<TripletRecord> out;
    for (const auto& r : records) {
        if (r.review == ReviewStatus::Approved || r.review == ReviewStatus::Revised) out.push_back(r);
    }
    return out;
}

std::vector<TripletRecord> load_reviewed_records(const fs::path& manifest) {
    const fs::path review = review_dir(manifest);
    const fs::path base = review / "base_manifest.jsonl";
    const fs::path log = review / "audit.jsonl";
    if (!fs::exists(base) || !fs::exists(log)) return read_manifest(manifest);
    ReviewState state(read_manifest(base));
    for (const Json& e : read_log(log)) state.apply(e);
    std::vector<TripletRecord> records = state.records();
    for (const TripletRecord& r : read_manifest(manifest)) {
        if (!state.find(r.id)) records.push_back(r);
    }
    return records;
}

std::vector<TripletRecord> export_approved(const fs::path& manifest, const fs::path& out) {
    const auto all = load_reviewed_records(manifest);
    std::vector<TripletRecord> kept = export_approved(std::span<const TripletRecord>(all));
    const fs::path src_dir = fs::absolute(manifest).parent_path();
    const fs::path dst_dir = fs::absolute(out).parent_path();
    auto rebase = [&](std::string& ref) {
        const fs::path p(ref);
        if (p.is_absolute()) return;
        ref = (src_dir / p).lexically_normal().lexically_relative(dst_dir.lexically_normal()).generic_string();
    };
    for (auto& r : kept) {
        rebase(r.input_image);
        rebase(r.output_image);
    }
    if (!dst_dir.empty()) fs::create_directories(dst_dir);
    write_manifest(kept, out);
    return kept;
}

} // namespace forge
