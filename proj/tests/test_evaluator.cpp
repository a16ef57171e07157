// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "forge/evaluator.hpp"
#include "forge/mocks.hpp"
#include "test_support.hpp"

using namespace forge;
using forge::testing::make_record;

namespace {

/// CLIP stand-in that reads the score off the first pixel.
class PixelClip final : public MetricClip {
public:
    std::string version() const override { return "pixel-clip"; }
    double score(const Image& image, const std::string&) override { return image(0, 0, 0); }
};

AdapterRegistry scoring(std::vector<std::string> verdicts) {
    auto reg = AdapterRegistry::mocks(1);
    reg.metric_clip = std::make_shared<PixelClip>();
    reg.scorer = std::make_shared<ScriptedJudge>(std::move(verdicts));
    return reg;
}

} // namespace

TEST(MllmPrompt, GoldenSubstitution) {
    const std::string want =
        "The input description a red apple, the editing instruction let it rot, and the output description "
        "a rotten apple. Please evaluate if the given edited image has been successfully edited. if you think "
        "editing is successful, just give me 1, else if you think editing fails, just give me 0";
    EXPECT_EQ(render_mllm_prompt("a red apple", "let it rot", "a rotten apple"), want);
}

TEST(MllmScore, VerdictsAverageToSuccessRate) {
    std::vector<TripletRecord> rs;
    for (int i = 0; i < 4; ++i) rs.push_back(make_record("r" + std::to_string(i)));
    const auto reg = scoring({"1", "1", "0", "1"});
    const Image img(3, 4, 4, 0.2);
    const auto rep = evaluate_run(rs, [&](const TripletRecord&) { return img; }, nullptr, reg, {false, 1});
    const auto& cell = rep.mllm.at(Branch::TextToImage);
    EXPECT_EQ(cell.counted, 4u);
    EXPECT_DOUBLE_EQ(*cell.mean(), 0.75);
    EXPECT_FALSE(rep.lpips.has_value());
    const auto& prompts = static_cast<ScriptedJudge&>(*reg.scorer).prompts;
    EXPECT_EQ(prompts[0], render_mllm_prompt("input of r0", "instruction for r0", "output of r0"));
}

TEST(ClipScore, PerCategoryHandMeans) {
    std::vector<TripletRecord> rs{make_record("a", Category::LongTerm), make_record("b", Category::LongTerm),
                                  make_record("c", Category::LongTerm), make_record("d", Category::StoryType),
                                  make_record("e", Category::SpatialTrans, Branch::Video)};
    const std::map<std::string, double> value{{"a", 0.1}, {"b", 0.2}, {"c", 0.3}, {"d", 0.5}, {"e", 0.7}};
    auto reg = scoring({});
    reg.scorer = std::make_shared<FixedJudge>("1");
    const auto rep = evaluate_run(
        rs, [&](const TripletRecord& r) { return Image(3, 2, 2, value.at(r.id)); }, nullptr, reg, {false, 0});
    EXPECT_NEAR(*rep.clip.at({Branch::TextToImage, Category::LongTerm}).mean(), 0.2, 1e-15);
    EXPECT_NEAR(*rep.clip.at({Branch::TextToImage, Category::StoryType}).mean(), 0.5, 1e-15);
    EXPECT_NEAR(*rep.clip.at({Branch::Video, Category::SpatialTrans}).mean(), 0.7, 1e-15);
    EXPECT_FALSE(rep.clip.contains({Branch::TextToImage, Category::ImplicitLogic}));
    const std::string table = rep.table();
    EXPECT_NE(table.find("Long-Term"), std::string::npos);
    EXPECT_EQ(rep.to_json()["clip"]["TextToImage"]["ImplicitLogic"]["counted"], 0);
}

TEST(Evaluate, MissingAndUnevaluableAreCountedSeparately) {
    std::vector<TripletRecord> rs{make_record("ok"), make_record("gone"), make_record("vague"), make_record("small")};
    const auto reg = scoring({"1", "unsure", "no idea", "0"});
    const Image full(3, 4, 4, 0.4), small(3, 2, 2, 0.4), input(3, 4, 4, 0.1);
    const auto rep = evaluate_run(
        rs,
        [&](const TripletRecord& r) -> std::optional<Image> {
            if (r.id == "gone") return std::nullopt;
            return r.id == "small" ? small : full;
        },
        [&](const TripletRecord&) -> std::optional<Image> { return input; }, reg, {true, 0});
    const auto& m = rep.mllm.at(Branch::TextToImage);
    EXPECT_EQ(m.total, 4u);
    EXPECT_EQ(m.missing, 1u);
    EXPECT_EQ(m.unevaluable, 1u);
    EXPECT_EQ(m.counted, 2u);
    EXPECT_DOUBLE_EQ(*m.mean(), 0.5);
    const auto& l = rep.lpips->at(Branch::TextToImage);
    EXPECT_EQ(l.missing, 1u);
    EXPECT_EQ(l.unevaluable, 1u);
    EXPECT_NEAR(*l.mean(), 0.3, 1e-15);
    EXPECT_TRUE(rep.per_record["gone"]["missing"].get<bool>());
    EXPECT_TRUE(rep.per_record["small"]["lpips"].is_null());
    EXPECT_TRUE(rep.per_record["vague"]["mllm"].is_null());
}

TEST(Evaluate, InputDescriptionFallsBackToStoryline) {
    auto r = make_record("v", Category::SpatialTrans, Branch::Video);
    r.provenance = {{"storyline", "a ball rolls"}};
    EXPECT_EQ(input_description(r), "a ball rolls");
    r.provenance = Json::object();
    EXPECT_EQ(input_description(r), "");
    MeanAbsLpips lp;
    EXPECT_THROW(lpips_score(Image(3, 2, 2), Image(3, 3, 3), lp), PreconditionError);
}
