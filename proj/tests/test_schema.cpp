// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <map>

#include "forge/schema.hpp"
#include "test_support.hpp"

using namespace forge;
using forge::testing::make_record;
using forge::testing::TempDir;

TEST(Categories, SevenWithBranchMembership) {
    EXPECT_EQ(all_categories().size(), 7u);
    EXPECT_EQ(categories_for(Branch::TextToImage).size(), 5u);
    EXPECT_EQ(categories_for(Branch::Video).size(), 4u);
    EXPECT_TRUE(branch_allows(Branch::Video, Category::SpatialTrans));
    EXPECT_FALSE(branch_allows(Branch::TextToImage, Category::SpatialTrans));
    EXPECT_FALSE(branch_allows(Branch::Video, Category::LongTerm));
    EXPECT_EQ(world_of(Category::Exaggeration), World::Virtual);
    EXPECT_EQ(world_of(Category::ImplicitLogic), World::Real);
    for (const auto& c : all_categories()) {
        EXPECT_FALSE(c.description.empty());
        EXPECT_FALSE(c.exemplar.empty());
    }
}

TEST(Categories, ParseVariants) {
    EXPECT_EQ(parse_category("LongTerm"), Category::LongTerm);
    EXPECT_EQ(parse_category("long-term"), Category::LongTerm);
    EXPECT_EQ(parse_category("Real-to-Virtual"), Category::RealToVirtual);
    EXPECT_EQ(parse_category("real_to_virtual"), Category::RealToVirtual);
    EXPECT_THROW(parse_category("Teleport"), ValidationError);
    EXPECT_EQ(parse_branch(to_string(Branch::Video)), Branch::Video);
    EXPECT_EQ(parse_status("approved"), ReviewStatus::Approved);
}

TEST(Record, ValidateNamesField) {
    auto r = make_record("a");
    EXPECT_NO_THROW(validate(r));
    auto bad = r;
    bad.output_image = bad.input_image;
    try {
        validate(bad);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.field(), "output_image");
    }
    bad = r;
    bad.branch = Branch::Video; // LongTerm is t2i only
    try {
        validate(bad);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.field(), "category");
    }
    bad = r;
    bad.instruction = "  ";
    EXPECT_THROW(validate(bad), ValidationError);
}

TEST(Record, JsonRoundTrip) {
    auto r = make_record("rt", Category::Exaggeration, Branch::Video, {"x", "y"});
    r.review = ReviewStatus::Revised;
    r.review_note = "edited";
    EXPECT_EQ(record_from_json(to_json(r)), r);
    Json j = to_json(r);
    j["category"] = "Nope";
    EXPECT_THROW(record_from_json(j), ValidationError);
    j = to_json(r);
    j.erase("instruction");
    EXPECT_THROW(record_from_json(j), ValidationError);
}

TEST(Manifest, WriteReadAppend) {
    TempDir dir;
    const auto path = dir / "m.jsonl";
    std::vector<TripletRecord> rs{make_record("a"), make_record("b")};
    write_manifest(rs, path);
    EXPECT_EQ(read_manifest(path), rs);
    std::vector<TripletRecord> more{make_record("c")};
    append_manifest(more, path);
    EXPECT_EQ(read_manifest(path).size(), 3u);
    std::vector<TripletRecord> dup{make_record("d"), make_record("d")};
    EXPECT_THROW(write_manifest(dup, dir / "dup.jsonl"), ValidationError);
    EXPECT_FALSE(std::filesystem::exists(dir / "dup.jsonl"));
}

TEST(Manifest, ReportsEveryMalformedLine) {
    TempDir dir;
    const auto path = dir / "m.jsonl";
    {
        std::ofstream f(path);
        f << to_json(make_record("a")).dump() << "\n{oops\n\n[1]\n";
    }
    try {
        read_manifest(path);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.lines(), (std::vector<std::size_t>{2, 4}));
    }
    EXPECT_THROW(read_manifest(dir / "missing.jsonl"), NotFoundError);
}

TEST(Split, PerBranchComposition) {
    std::vector<TripletRecord> rs;
    for (int i = 0; i < 500; ++i) rs.push_back(make_record("t" + std::to_string(i)));
    for (int i = 0; i < 300; ++i) rs.push_back(make_record("v" + std::to_string(i), Category::SpatialTrans, Branch::Video));
    const auto s = make_split(rs, 11);
    EXPECT_EQ(s.test_counts.at(Branch::TextToImage), 300u);
    EXPECT_EQ(s.test_counts.at(Branch::Video), 200u);
    EXPECT_EQ(s.test_ids.size(), 500u);
    EXPECT_EQ(s.train_ids.size(), 300u);
    std::size_t t_in_test = 0;
    for (const auto& id : s.test_ids) t_in_test += id[0] == 't';
    EXPECT_EQ(t_in_test, 300u);
    EXPECT_TRUE(s.warnings.empty());
    EXPECT_EQ(make_split(rs, 11).test_ids, s.test_ids);
    EXPECT_NE(make_split(rs, 12).test_ids, s.test_ids);
}

TEST(Split, ShrinksWithWarning) {
    std::vector<TripletRecord> rs{make_record("a"), make_record("b")};
    const auto s = make_split(rs, 1, 5, 1);
    EXPECT_EQ(s.test_counts.at(Branch::TextToImage), 2u);
    EXPECT_EQ(s.test_counts.at(Branch::Video), 0u);
    EXPECT_EQ(s.warnings.size(), 2u);
}

TEST(Stats, HandCountedDistributionAndKeywords) {
    std::vector<TripletRecord> rs{
        make_record("1", Category::LongTerm, Branch::TextToImage, {"dog", "cat"}),
        make_record("2", Category::LongTerm, Branch::TextToImage, {"dog"}),
        make_record("3", Category::PhysicalTrans, Branch::TextToImage, {"ice"}),
        make_record("4", Category::PhysicalTrans, Branch::Video, {"ice", "bird"}),
    };
    rs[1].review = ReviewStatus::Approved;
    const auto s = dataset_stats(rs, 3);
    EXPECT_EQ(s.total, 4u);
    EXPECT_EQ((s.counts.at({Branch::TextToImage, Category::LongTerm})), 2u);
    EXPECT_EQ((s.counts.at({Branch::TextToImage, Category::PhysicalTrans})), 1u);
    EXPECT_EQ((s.counts.at({Branch::Video, Category::PhysicalTrans})), 1u);
    EXPECT_EQ(s.status_counts.at(ReviewStatus::Pending), 3u);
    // dog 2, ice 2, then bird and cat tie at 1; lexicographic order keeps bird.
    const std::vector<std::pair<std::string, std::size_t>> top{{"dog", 2}, {"ice", 2}, {"bird", 1}};
    EXPECT_EQ(s.top_keywords, top);
    EXPECT_NE(s.table().find("Long-Term"), std::string::npos);
    EXPECT_EQ(s.to_json()["total"], 4);
}
