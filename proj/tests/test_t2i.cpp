// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "forge/hash.hpp"
#include "forge/mocks.hpp"
#include "forge/t2i_branch.hpp"
#include "test_support.hpp"

using namespace forge;
using forge::testing::TempDir;

namespace {

const char* kGoodReply =
    R"(Sure: {"input_prompt": "a red apple on a table", "instruction": "let it rot for a month",
       "output_prompt": "a brown rotten apple on a table", "keywords": ["apple"]})";

TextQuadruple apple() { return parse_quadruple(kGoodReply, Category::LongTerm); }

T2IBranchConfig small_config(std::uint64_t seed) {
    T2IBranchConfig cfg;
    cfg.seed = seed;
    cfg.steps = 6;
    cfg.quotas = {{Category::LongTerm, 3}, {Category::StoryType, 2}};
    return cfg;
}

AdapterRegistry small_mocks(std::uint64_t seed) {
    auto reg = AdapterRegistry::mocks(seed);
    MockT2IOptions o;
    o.image_size = 16;
    o.steps = 6;
    reg.t2i_denoiser = std::make_shared<MockT2IDenoiser>(seed, o);
    o.version_tag = "mock-t2i-alt/1";
    reg.t2i_alternate = std::make_shared<MockT2IDenoiser>(seed + 1, o);
    return reg;
}

} // namespace

TEST(Quadruple, ParseAndValidate) {
    const auto q = apple();
    EXPECT_EQ(q.y_ori, "a red apple on a table");
    EXPECT_EQ(q.keywords, std::vector<std::string>{"apple"});
    EXPECT_EQ(q.category, Category::LongTerm);

    auto bad = q;
    bad.keywords = {"banana"};
    EXPECT_THROW(validate(bad), ValidationError);
    bad = q;
    bad.keywords.clear();
    EXPECT_THROW(validate(bad), ValidationError);
    bad = q;
    bad.y_instr = " ";
    try {
        validate(bad);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.field(), "y_instr");
    }
    EXPECT_THROW(parse_quadruple("no json here", Category::LongTerm), ValidationError);
    EXPECT_THROW(parse_quadruple(R"({"input_prompt": "x"})", Category::LongTerm), ValidationError);
}

TEST(Quadruple, PromptCarriesCategoryTextAndHint) {
    const auto p = quadruple_prompt(Category::PhysicalTrans, 4, "more snow");
    EXPECT_NE(p.find(std::string(info(Category::PhysicalTrans).description)), std::string::npos);
    EXPECT_NE(p.find(std::string(info(Category::PhysicalTrans).exemplar)), std::string::npos);
    EXPECT_NE(p.find("Variation: 4"), std::string::npos);
    EXPECT_NE(p.find("more snow"), std::string::npos);
}

TEST(Propose, RejectsBadRepliesWithinBudget) {
    ScriptedTextLlm llm({"not json",
                         R"({"input_prompt": "a", "instruction": "b", "output_prompt": "c", "keywords": ["zzz"]})",
                         kGoodReply});
    const auto r = propose_quadruples(Category::LongTerm, 1, llm, 1, 3);
    ASSERT_EQ(r.quadruples.size(), 1u);
    EXPECT_EQ(r.rejected, 2u);
    EXPECT_TRUE(r.warnings.empty());
}

TEST(Propose, ExhaustedBudgetLeavesSlotEmpty) {
    ScriptedTextLlm llm({"nope"}, true);
    const auto r = propose_quadruples(Category::LongTerm, 2, llm, 1, 1);
    EXPECT_TRUE(r.quadruples.empty());
    EXPECT_EQ(r.rejected, 4u);
    EXPECT_EQ(r.warnings.size(), 2u);
    EXPECT_EQ(llm.prompts.size(), 4u);
}

TEST(SynthOutput, KeepsLatentOutsideKeywordMask) {
    const auto q = apple();
    MockT2IOptions o;
    o.image_size = 32;
    o.steps = 8;
    MockT2IDenoiser t2i(3, o);
    const auto trace = synth_input(q, t2i, 11);
    ASSERT_EQ(trace.attention_maps.size(), 1u);
    MockInpaintDenoiser inpaint(4);
    PoolingCodec codec;
    const auto schedule = NoiseSchedule<double>::scaled_linear(8);
    const auto out = synth_output(trace, q, schedule, inpaint, codec, 12);
    EXPECT_FALSE(out.fell_back);
    EXPECT_GT(out.latent_mask.area(), 0);
    EXPECT_LT(out.latent_mask.area(), out.latent_mask.rows() * out.latent_mask.cols());
    const auto z_out = codec.encode(out.image);
    bool changed_inside = false;
    for (Eigen::Index c = 0; c < z_out.channels(); ++c) {
        for (Eigen::Index y = 0; y < z_out.rows(); ++y) {
            for (Eigen::Index x = 0; x < z_out.cols(); ++x) {
                if (out.latent_mask(y, x) == 0) EXPECT_EQ(z_out(c, y, x), out.z_ori(c, y, x));
                else changed_inside |= z_out(c, y, x) != out.z_ori(c, y, x);
            }
        }
    }
    EXPECT_TRUE(changed_inside);
}

TEST(SynthOutput, BlindKeywordFallsBackToFullImage) {
    auto q = apple();
    MockT2IOptions o;
    o.image_size = 16;
    o.steps = 4;
    o.blind_keywords = {"apple"};
    MockT2IDenoiser t2i(3, o);
    MockInpaintDenoiser inpaint(4);
    PoolingCodec codec;
    const auto out = synth_output(synth_input(q, t2i, 1), q, NoiseSchedule<double>::scaled_linear(4), inpaint, codec, 2);
    EXPECT_TRUE(out.fell_back);
    EXPECT_EQ(out.latent_mask.area(), 8 * 8);
}

TEST(Discriminate, StrictAndOverThreeCriteria) {
    Image a(3, 4, 4, 0.1), b(3, 4, 4, 0.2);
    const auto q = apple();
    ScriptedJudge all({"1", "1", "1"});
    EXPECT_TRUE(discriminate({a, b, q}, all, 1).keep);
    ScriptedJudge two({"1", "0", "1"});
    const auto d = discriminate({a, b, q}, two, 1);
    EXPECT_FALSE(d.keep);
    EXPECT_FALSE(d.unevaluable);
    EXPECT_EQ(d.scores[1], 0);
    ScriptedJudge two_again({"1", "0", "1"});
    EXPECT_TRUE(discriminate({a, b, q}, two_again, 1, 2).keep);
    EXPECT_EQ(two.prompts.size(), 3u);
    EXPECT_NE(two.prompts[0], two.prompts[1]);
}

TEST(Discriminate, UnparseableTwiceIsUnevaluable) {
    Image a(3, 4, 4, 0.1), b(3, 4, 4, 0.2);
    const auto q = apple();
    ScriptedJudge j({"1", "unsure", "no idea", "1"});
    const auto d = discriminate({a, b, q}, j, 1, 1);
    EXPECT_TRUE(d.unevaluable);
    EXPECT_FALSE(d.keep);
    EXPECT_FALSE(d.scores[1].has_value());
    EXPECT_EQ(d.retries, 1);
    EXPECT_THROW(discriminate({a, b, q}, j, 1, 0), PreconditionError);
}

TEST(Refine, FailureReturnsTargetWithWarning) {
    std::mt19937_64 rng(5);
    const Image i_ori = forge::testing::random_image(rng, 8, 8), i_tar = forge::testing::random_image(rng, 8, 8);
    MockRefineDenoiser broken(true), fine;
    ChannelMeanEncoder enc;
    SobelEdgeExtractor edges;
    PoolingCodec codec;
    const auto sched = NoiseSchedule<double>::scaled_linear(10);
    const auto bad = refine_output(i_ori, i_tar, "t", broken, enc, edges, codec, sched, 1);
    EXPECT_FALSE(bad.refined);
    EXPECT_TRUE(bad.warning.has_value());
    EXPECT_TRUE(bad.image == i_tar);
    const auto good = refine_output(i_ori, i_tar, "t", fine, enc, edges, codec, sched, 1);
    EXPECT_TRUE(good.refined);
    EXPECT_EQ(good.request_hash, refine_output(i_ori, i_tar, "t", fine, enc, edges, codec, sched, 1).request_hash);
    EXPECT_NE(good.request_hash, refine_output(i_ori, i_tar, "u", fine, enc, edges, codec, sched, 1).request_hash);
}

TEST(T2IBranch, AccountingBalancesAndFilesExist) {
    TempDir dir;
    const DatasetLayout layout{dir.path()};
    const auto res = run_t2i_branch(small_config(9), small_mocks(9), layout);
    EXPECT_EQ(res.summary.requested, 5u);
    EXPECT_TRUE(res.summary.balanced());
    EXPECT_EQ(read_manifest(layout.manifest()), res.records);
    for (const auto& r : res.records) {
        EXPECT_TRUE(std::filesystem::exists(layout.root / r.input_image));
        EXPECT_TRUE(std::filesystem::exists(layout.root / r.output_image));
        EXPECT_EQ(r.review, ReviewStatus::Pending);
        for (const char* k : {"seeds", "adapters", "judge", "mask", "refinement", "quadruple", "attention_maps"}) {
            EXPECT_TRUE(r.provenance.contains(k)) << k;
        }
    }
    EXPECT_THROW(run_t2i_branch(small_config(9), small_mocks(9), layout), ConflictError);
}

TEST(T2IBranch, ByteIdenticalAcrossRunsAndWorkers) {
    TempDir a, b;
    auto cfg = small_config(21);
    run_t2i_branch(cfg, small_mocks(21), DatasetLayout{a.path()});
    cfg.workers = 3;
    run_t2i_branch(cfg, small_mocks(21), DatasetLayout{b.path()});
    EXPECT_EQ(forge::testing::snapshot(a.path()), forge::testing::snapshot(b.path()));
}

TEST(T2IBranch, RejectingJudgeDropsEverything) {
    TempDir dir;
    auto reg = small_mocks(2);
    reg.judge = std::make_shared<FixedJudge>("0");
    const auto res = run_t2i_branch(small_config(2), reg, DatasetLayout{dir.path()});
    EXPECT_TRUE(res.records.empty());
    EXPECT_EQ(res.summary.drops.at("discrimination"), 5u);
    EXPECT_TRUE(res.summary.balanced());
    auto cfg = small_config(2);
    cfg.quotas = {{Category::SpatialTrans, 1}};
    EXPECT_THROW(run_t2i_branch(cfg, reg, DatasetLayout{dir.path()}), ValidationError);
}

TEST(T2IBranch, RefineFailureKeepsRecord) {
    TempDir dir;
    auto reg = small_mocks(4);
    reg.refine_denoiser = std::make_shared<MockRefineDenoiser>(true);
    const auto res = run_t2i_branch(small_config(4), reg, DatasetLayout{dir.path()});
    ASSERT_FALSE(res.records.empty());
    EXPECT_FALSE(res.records[0].provenance["refinement"]["refined"].get<bool>());
}

TEST(T2IBranch, RegenerationLinksParent) {
    TempDir dir;
    const auto cfg = small_config(5);
    const auto reg = small_mocks(5);
    const DatasetLayout layout{dir.path()};
    const auto res = run_t2i_branch(cfg, reg, layout);
    ASSERT_FALSE(res.records.empty());
    const auto& old = res.records.front();
    const auto fresh = regenerate_t2i_record(old, "at dusk", true, cfg, reg, layout);
    EXPECT_NE(fresh.id, old.id);
    EXPECT_EQ(fresh.category, old.category);
    EXPECT_EQ(fresh.provenance["parent"], old.id);
    EXPECT_EQ(fresh.provenance["regeneration_hint"], "at dusk");
    EXPECT_TRUE(fresh.provenance["alternate_generator"].get<bool>());
    EXPECT_TRUE(std::filesystem::exists(layout.root / fresh.output_image));
    EXPECT_EQ(regenerate_t2i_record(old, "at dusk", true, cfg, reg, layout).id, fresh.id);
}
