// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/schema.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "forge/errors.hpp"
#include "forge/hash.hpp"

namespace forge {

namespace {

// Category descriptions and exemplar instructions are fed to the LLM as few-shot context.
constexpr std::array<CategoryInfo, 7> kCategories{{
    {Category::LongTerm, "LongTerm", "Long-Term", World::Real,
     "In this editing type, there is a significant time interval between the content of the input and the output "
     "images.",
     "What would have happened if the girl had kept on reading and writing?"},
    {Category::SpatialTrans, "SpatialTrans", "Spatial-Trans", World::Real,
     "In this editing type, the position of the object in the image or the viewpoint of the image undergoes "
     "substantial shifts or transformations.",
     "The traffic light becomes passable."},
    {Category::PhysicalTrans, "PhysicalTrans", "Physical-Trans", World::Real,
     "In this editing type, the physical characteristics of objects in the image, including shape, structure, and "
     "texture, exhibit significant changes.",
     "Popping the balloon."},
    {Category::ImplicitLogic, "ImplicitLogic", "Implicit-Logic", World::Real,
     "In this editing type, the editing instructions often imply very implicit logic.",
     "what would happen if a impatient child look for a specific toy?"},
    {Category::StoryType, "StoryType", "Story-Type", World::Virtual,
     "In this editing type, the edits often relate to the storyline of the fairy tale or movie.",
     "what would happen if Snow White ate a poisoned apple?"},
    {Category::RealToVirtual, "RealToVirtual", "Real-to-Virtual", World::Virtual,
     "In this editing type, natural phenomena from the real world are introduced into specific virtual world "
     "scenarios.",
     "what would happen if there was strong static electricity?"},
    {Category::Exaggeration, "Exaggeration", "Exaggeration", World::Virtual,
     "In this type of editing, objects experience exaggerated transformations that cannot occur in the real world.",
     "What would the cat look like after falling to the ground?"},
}};

constexpr std::array<Category, 5> kT2ICategories{Category::LongTerm, Category::PhysicalTrans, Category::ImplicitLogic,
                                                 Category::StoryType, Category::RealToVirtual};
constexpr std::array<Category, 4> kVideoCategories{Category::SpatialTrans, Category::PhysicalTrans,
                                                   Category::StoryType, Category::Exaggeration};

std::string normalize(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c))) out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

bool blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

template <typename T>
T require_field(const Json& j, const char* key) {
    if (!j.contains(key)) throw ValidationError(key, "missing field");
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ValidationError(key, e.what());
    }
}

void check_unique_ids(std::span<const TripletRecord> records) {
    std::set<std::string> seen;
    for (const auto& r : records) {
        if (!seen.insert(r.id).second) throw ValidationError("id", "duplicate record id '" + r.id + "'");
    }
}

void write_lines(std::span<const TripletRecord> records, const std::filesystem::path& path, std::ios::openmode mode) {
    for (const auto& r : records) validate(r);
    check_unique_ids(records);
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, mode | std::ios::binary);
    if (!out) throw IoError("cannot open manifest for writing: " + path.string());
    for (const auto& r : records) out << to_json(r).dump() << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace

std::span<const CategoryInfo> all_categories() { return kCategories; }

const CategoryInfo& info(Category c) { return kCategories[static_cast<std::size_t>(c)]; }

World world_of(Category c) { return info(c).world; }

std::span<const Category> categories_for(Branch b) {
    if (b == Branch::TextToImage) return kT2ICategories;
    return kVideoCategories;
}

bool branch_allows(Branch b, Category c) {
    const auto cats = categories_for(b);
    return std::find(cats.begin(), cats.end(), c) != cats.end();
}

std::string_view to_string(Category c) { return info(c).name; }
std::string_view to_string(World w) { return w == World::Real ? "Real" : "Virtual"; }
std::string_view to_string(Branch b) { return b == Branch::TextToImage ? "TextToImage" : "Video"; }
std::string_view to_string(ReviewStatus s) {
    switch (s) {
    case ReviewStatus::Pending: return "Pending";
    case ReviewStatus::Approved: return "Approved";
    case ReviewStatus::Rejected: return "Rejected";
    case ReviewStatus::Revised: return "Revised";
    }
    return "Pending";
}

Category parse_category(std::string_view text) {
    const std::string key = normalize(text);
    for (const auto& c : kCategories) {
        if (normalize(c.name) == key || normalize(c.display) == key) return c.category;
    }
    throw ValidationError("category", "unknown category '" + std::string(text) + "'");
}

Branch parse_branch(std::string_view text) {
    const std::string key = normalize(text);
    if (key == "texttoimage" || key == "t2i") return Branch::TextToImage;
    if (key == "video") return Branch::Video;
    throw ValidationError("branch", "unknown branch '" + std::string(text) + "'");
}

ReviewStatus parse_status(std::string_view text) {
    const std::string key = normalize(text);
    for (auto s : {ReviewStatus::Pending, ReviewStatus::Approved, ReviewStatus::Rejected, ReviewStatus::Revised}) {
        if (normalize(to_string(s)) == key) return s;
    }
    throw ValidationError("review", "unknown review status '" + std::string(text) + "'");
}

void validate(const TripletRecord& r) {
    if (r.id.empty()) throw ValidationError("id", "must be non-empty");
    if (blank(r.instruction)) throw ValidationError("instruction", "must be non-empty");
    if (r.input_image.empty()) throw ValidationError("input_image", "must be non-empty");
    if (r.output_image.empty()) throw ValidationError("output_image", "must be non-empty");
    if (r.input_image == r.output_image) throw ValidationError("output_image", "must differ from input_image");
    if (blank(r.output_description)) throw ValidationError("output_description", "must be non-empty");
    if (!branch_allows(r.branch, r.category)) {
        throw ValidationError("category", std::string(to_string(r.category)) + " is not produced by the " +
                                              std::string(to_string(r.branch)) + " branch");
    }
    for (const auto& k : r.keywords) {
        if (k.empty()) throw ValidationError("keywords", "keywords must be non-empty strings");
    }
    if (!r.provenance.is_object()) throw ValidationError("provenance", "must be an object");
}

Json to_json(const TripletRecord& r) {
    Json j{{"id", r.id},
           {"input_image", r.input_image},
           {"instruction", r.instruction},
           {"output_image", r.output_image},
           {"output_description", r.output_description},
           {"category", to_string(r.category)},
           {"branch", to_string(r.branch)},
           {"keywords", r.keywords},
           {"provenance", r.provenance},
           {"review", to_string(r.review)}};
    if (r.review_note) j["review_note"] = *r.review_note;
    return j;
}

TripletRecord record_from_json(const Json& j) {
    if (!j.is_object()) throw ValidationError("record", "expected a JSON object");
    TripletRecord r;
    r.id = require_field<std::string>(j, "id");
    r.input_image = require_field<std::string>(j, "input_image");
    r.instruction = require_field<std::string>(j, "instruction");
    r.output_image = require_field<std::string>(j, "output_image");
    r.output_description = require_field<std::string>(j, "output_description");
    r.category = parse_category(require_field<std::string>(j, "category"));
    r.branch = parse_branch(require_field<std::string>(j, "branch"));
    r.keywords = j.contains("keywords") ? require_field<std::vector<std::string>>(j, "keywords")
                                        : std::vector<std::string>{};
    r.provenance = j.value("provenance", Json::object());
    r.review = j.contains("review") ? parse_status(require_field<std::string>(j, "review")) : ReviewStatus::Pending;
    if (j.contains("review_note") && !j.at("review_note").is_null()) {
        r.review_note = require_field<std::string>(j, "review_note");
    }
    return r;
}

void DatasetLayout::create() const {
    std::error_code ec;
    std::filesystem::create_directories(images(), ec);
    if (ec) throw IoError("cannot create dataset directory " + images().string() + ": " + ec.message());
}

void write_manifest(std::span<const TripletRecord> records, const std::filesystem::path& path) {
    write_lines(records, path, std::ios::out | std::ios::trunc);
}

void append_manifest(std::span<const TripletRecord> records, const std::filesystem::path& path) {
    write_lines(records, path, std::ios::out | std::ios::app);
}

std::vector<TripletRecord> read_manifest(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw NotFoundError("manifest not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest: " + path.string());

    std::vector<std::pair<std::size_t, Json>> parsed;
    std::vector<std::size_t> bad;
    std::string line;
    for (std::size_t no = 1; std::getline(in, line); ++no) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (blank(line)) continue;
        Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            bad.push_back(no);
            continue;
        }
        parsed.emplace_back(no, std::move(j));
    }
    if (!bad.empty()) {
        std::ostringstream msg;
        msg << path.string() << ": malformed line(s)";
        for (auto n : bad) msg << ' ' << n;
        throw ParseError(std::move(bad), msg.str());
    }

    std::vector<TripletRecord> records;
    records.reserve(parsed.size());
    for (const auto& [no, j] : parsed) {
        try {
            records.push_back(record_from_json(j));
            validate(records.back());
        } catch (const ValidationError& e) {
            throw ValidationError(e.field(), "line " + std::to_string(no) + ": " + e.what());
        }
    }
    check_unique_ids(records);
    return records;
}

DatasetSplit make_split(std::span<const TripletRecord> records, std::uint64_t seed, std::size_t t2i_test_n,
                        std::size_t video_test_n) {
    DatasetSplit split;
    std::set<std::string> test;
    for (Branch b : {Branch::TextToImage, Branch::Video}) {
        std::vector<std::string> ids;
        for (const auto& r : records) {
            if (r.branch == b) ids.push_back(r.id);
        }
        std::sort(ids.begin(), ids.end());
        // Fisher-Yates with a fixed engine so the split is identical across standard libraries.
        std::mt19937_64 rng(mix_seed(seed, to_string(b)));
        for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng() % i]);

        const std::size_t wanted = b == Branch::TextToImage ? t2i_test_n : video_test_n;
        const std::size_t take = std::min(wanted, ids.size());
        if (take < wanted) {
            split.warnings.push_back(std::string(to_string(b)) + ": requested " + std::to_string(wanted) +
                                     " test records, only " + std::to_string(ids.size()) + " available");
        }
        test.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take));
        split.test_counts[b] = take;
    }
    for (const auto& r : records) {
        if (!test.contains(r.id)) split.train_ids.push_back(r.id);
    }
    std::sort(split.train_ids.begin(), split.train_ids.end());
    split.test_ids.assign(test.begin(), test.end());
    return split;
}

StatsReport dataset_stats(std::span<const TripletRecord> records, std::size_t top_k) {
    StatsReport report;
    report.total = records.size();
    std::map<std::string, std::size_t> freq;
    for (const auto& r : records) {
        ++report.counts[{r.branch, r.category}];
        ++report.status_counts[r.review];
        for (const auto& k : r.keywords) ++freq[k];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > top_k) ranked.resize(top_k);
    report.top_keywords = std::move(ranked);
    return report;
}

Json StatsReport::to_json() const {
    Json cells = Json::array();
    for (const auto& [key, n] : counts) {
        cells.push_back({{"branch", to_string(key.first)}, {"category", to_string(key.second)}, {"count", n}});
    }
    Json statuses = Json::object();
    for (const auto& [s, n] : status_counts) statuses[std::string(to_string(s))] = n;
    Json keywords = Json::array();
    for (const auto& [k, n] : top_keywords) keywords.push_back({{"keyword", k}, {"count", n}});
    return {{"total", total}, {"counts", cells}, {"status", statuses}, {"top_keywords", keywords}};
}

std::string StatsReport::table() const {
    std::ostringstream out;
    out << "Branch        Category        Count\n";
    out << "------------  --------------  -----\n";
    for (const auto& [key, n] : counts) {
        std::string b(to_string(key.first)), c(info(key.second).display);
        out << b << std::string(b.size() < 14 ? 14 - b.size() : 1, ' ') << c
            << std::string(c.size() < 16 ? 16 - c.size() : 1, ' ') << n << '\n';
    }
    out << "Total: " << total << '\n';
    if (!top_keywords.empty()) {
        out << "\nTop keywords\n";
        for (std::size_t i = 0; i < top_keywords.size(); ++i) {
            out << "  " << (i + 1) << ". " << top_keywords[i].first << " (" << top_keywords[i].second << ")\n";
        }
    }
    return out.str();
}

} // namespace forge
