// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "forge/schema.hpp"

namespace forge {

enum class ReviewAction { Approve, Reject, ReviseInstruction, RequestRegeneration };

std::string_view to_string(ReviewAction a);
/// Accepts "approve", "reject", "revise_instruction" and "request_regeneration", any case,
/// with '-' or ' ' in place of '_'.
ReviewAction parse_action(std::string_view text);

struct ReviewDecision {
    std::string record_id;
    ReviewAction action = ReviewAction::Approve;
    std::optional<std::string> revised_instruction;
    std::optional<std::string> regeneration_hint;
    std::optional<std::string> note;
    std::string reviewer;
    std::string timestamp; ///< filled by the store when empty
    std::optional<std::uint64_t> expected_revision;
    bool alternate_generator = false;
};

/// Throws ValidationError for missing action-specific fields.
void validate(const ReviewDecision& d);

struct RecordView {
    TripletRecord record;
    std::uint64_t revision = 0;
    std::optional<std::string> pending_job;
};

Json to_json(const RecordView& v);

struct RecordFilter {
    std::optional<ReviewStatus> status;
    std::optional<Branch> branch;
    std::optional<Category> category;
    std::size_t page = 1; ///< 1-based
    std::size_t page_size = 20;
};

struct RecordPage {
    std::vector<RecordView> items;
    std::size_t page = 1;
    std::size_t page_size = 20;
    std::size_t total = 0;
    std::size_t pages = 0;

    Json to_json() const;
};

struct RegenerationJob {
    std::string job_id;
    std::string record_id;
    std::string hint;
    bool alternate_generator = false;
    Json seeds = Json::object(); ///< seeds copied from the original record's provenance
};

/// Dataset state as a fold over audit entries. Every entry is checked in full before any
/// mutation, so a rejected entry leaves the state untouched.
class ReviewState {
public:
    ReviewState() = default;
    explicit ReviewState(std::vector<TripletRecord> initial);

    /// Throws NotFoundError, ConflictError or ValidationError when `entry` cannot apply.
    void check(const Json& entry) const;
    void apply(const Json& entry);

    const std::vector<TripletRecord>& records() const { return records_; }
    const TripletRecord* find(const std::string& id) const;
    std::uint64_t revision(const std::string& id) const;
    std::optional<RegenerationJob> pending_job_for(const std::string& record_id) const;
    const std::map<std::string, RegenerationJob>& pending_jobs() const { return pending_; }
    bool job_completed(const std::string& job_id) const { return completed_.contains(job_id); }
    std::uint64_t entries() const { return entries_; }

private:
    void apply_unchecked(const Json& entry);
    TripletRecord& at(const std::string& id);

    std::vector<TripletRecord> records_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, std::uint64_t> revisions_;
    std::map<std::string, RegenerationJob> pending_;       ///< job id -> job
    std::map<std::string, std::string> pending_by_record_; ///< record id -> job id
    std::set<std::string> completed_;
    std::uint64_t entries_ = 0;
};

/// Replays an audit log over an initial record list.
std::vector<TripletRecord> replay_audit_log(std::vector<TripletRecord> initial, const std::filesystem::path& log);

struct ReviewStoreOptions {
    std::size_t compact_every = 20;             ///< decisions between manifest rewrites; 0 = only on demand
    std::function<std::string()> clock;         ///< timestamp source, defaults to UTC now
};

using Regenerator = std::function<TripletRecord(const TripletRecord& old, const RegenerationJob& job)>;

/// Directory holding the review files of `manifest`: <manifest file name>.review next to it.
std::filesystem::path review_dir(const std::filesystem::path& manifest);

/// Review queue over one manifest. Files, under review_dir(manifest):
///   base_manifest.jsonl  the manifest as first opened
///   audit.jsonl          one applied entry per line
/// The manifest itself is rewritten from the current state on compaction.
class ReviewStore {
public:
    explicit ReviewStore(std::filesystem::path manifest, ReviewStoreOptions options = {});
    ~ReviewStore();

    ReviewStore(const ReviewStore&) = delete;
    ReviewStore& operator=(const ReviewStore&) = delete;

    RecordPage list(const RecordFilter& filter) const;
    /// `list` with the status forced to Pending.
    RecordPage list_pending(RecordFilter filter) const;
    std::optional<RecordView> get(const std::string& id) const;
    std::vector<TripletRecord> records() const;
    StatsReport stats(std::size_t top_k = 20) const;

    /// Applies the decision and appends it to the audit log. Throws ValidationError,
    /// NotFoundError or ConflictError (stale revision, illegal transition, job in flight).
    RecordView submit(ReviewDecision d);

    /// Hands the oldest unclaimed pending job to a worker.
    std::optional<RegenerationJob> claim_job();
    /// Puts a job back in the queue. No-op (returns false) for completed or already queued jobs.
    bool enqueue(const std::string& job_id);
    /// Record the outcome of a claimed job. No-op (returns false) when the job already completed.
    bool complete_job(const RegenerationJob& job, const TripletRecord& new_record);
    bool fail_job(const RegenerationJob& job, const std::string& note);
    std::size_t queued_jobs() const;

    void compact();
    const std::filesystem::path& manifest_path() const { return manifest_; }
    std::filesystem::path dataset_root() const { return manifest_.parent_path(); }
    std::filesystem::path audit_log_path() const;
    std::filesystem::path base_manifest_path() const;

private:
    void commit(Json entry); // requires unique lock
    RecordView view(const TripletRecord& r) const;

    std::filesystem::path manifest_;
    ReviewStoreOptions options_;
    mutable std::shared_mutex mu_;
    ReviewState state_;
    std::set<std::string> claimed_;
    std::size_t since_compaction_ = 0;
    std::uint64_t next_seq_ = 1;
};

/// Processes queued regeneration jobs until the queue is empty or `max_jobs` ran.
/// Returns the number of jobs processed.
std::size_t run_regeneration_worker(ReviewStore& store, const Regenerator& regenerate,
                                    std::size_t max_jobs = static_cast<std::size_t>(-1));

/// Approved and Revised records only.
std::vector<TripletRecord> export_approved(std::span<const TripletRecord> records);
/// Reads `manifest` (including any review log next to it), keeps Approved and Revised records,
/// rewrites image paths relative to `out` and writes it. Returns the exported records.
std::vector<TripletRecord> export_approved(const std::filesystem::path& manifest, const std::filesystem::path& out);

/// Current records of a dataset: the manifest with its review log replayed when one exists.
std::vector<TripletRecord> load_reviewed_records(const std::filesystem::path& manifest);

std::string utc_timestamp();

} // namespace forge
