// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace forge {

using Json = nlohmann::json;

enum class Category { LongTerm, SpatialTrans, PhysicalTrans, ImplicitLogic, StoryType, RealToVirtual, Exaggeration };
enum class World { Real, Virtual };
enum class Branch { TextToImage, Video };
enum class ReviewStatus { Pending, Approved, Rejected, Revised };

struct CategoryInfo {
    Category category;
    std::string_view name;    ///< canonical identifier, e.g. "LongTerm"
    std::string_view display; ///< e.g. "Long-Term"
    World world;
    std::string_view description;
    std::string_view exemplar; ///< example instruction
};

std::span<const CategoryInfo> all_categories();
const CategoryInfo& info(Category c);
World world_of(Category c);

/// Categories each branch can produce.
std::span<const Category> categories_for(Branch b);
bool branch_allows(Branch b, Category c);

std::string_view to_string(Category c);
std::string_view to_string(World w);
std::string_view to_string(Branch b);
std::string_view to_string(ReviewStatus s);

/// Accepts canonical names, display names and case/punctuation variants ("long-term").
/// Throws ValidationError on anything else.
Category parse_category(std::string_view text);
Branch parse_branch(std::string_view text);
ReviewStatus parse_status(std::string_view text);

struct TripletRecord {
    std::string id;
    std::string input_image;  ///< path relative to the manifest directory
    std::string instruction;
    std::string output_image;
    std::string output_description;
    Category category = Category::LongTerm;
    Branch branch = Branch::TextToImage;
    std::vector<std::string> keywords;
    Json provenance = Json::object();
    ReviewStatus review = ReviewStatus::Pending;
    std::optional<std::string> review_note;

    bool operator==(const TripletRecord&) const = default;
};

/// Throws ValidationError naming the first offending field.
void validate(const TripletRecord& r);

Json to_json(const TripletRecord& r);
/// Throws ValidationError for unknown enum values or missing fields.
TripletRecord record_from_json(const Json& j);

/// `root/manifest.jsonl` and `root/images/`.
struct DatasetLayout {
    std::filesystem::path root;

    std::filesystem::path manifest() const { return root / "manifest.jsonl"; }
    std::filesystem::path images() const { return root / "images"; }
    void create() const;
};

/// One JSON object per line, keys sorted. Validates every record and id uniqueness before
/// touching the file.
void write_manifest(std::span<const TripletRecord> records, const std::filesystem::path& path);
void append_manifest(std::span<const TripletRecord> records, const std::filesystem::path& path);
std::vector<TripletRecord> read_manifest(const std::filesystem::path& path);

struct DatasetSplit {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    std::map<Branch, std::size_t> test_counts;
    std::vector<std::string> warnings;
};

/// Random per-branch test selection; everything else is train. Shrinks with a warning when
/// a branch has fewer records than requested.
DatasetSplit make_split(std::span<const TripletRecord> records, std::uint64_t seed, std::size_t t2i_test_n = 300,
                        std::size_t video_test_n = 200);

struct StatsReport {
    std::map<std::pair<Branch, Category>, std::size_t> counts;
    std::map<ReviewStatus, std::size_t> status_counts;
    std::vector<std::pair<std::string, std::size_t>> top_keywords;
    std::size_t total = 0;

    Json to_json() const;
    std::string table() const;
};

/// Counts per (branch, category) and the K most frequent keywords, ties broken lexicographically.
StatsReport dataset_stats(std::span<const TripletRecord> records, std::size_t top_k = 20);

} // namespace forge
