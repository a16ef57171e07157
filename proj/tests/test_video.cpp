// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "forge/image.hpp"
#include "forge/mocks.hpp"
#include "forge/video_branch.hpp"
#include "test_support.hpp"

using namespace forge;
using forge::testing::TempDir;

namespace {

Image solid(double r, double g, double b, int size = 4) {
    Image img(3, size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            img(0, y, x) = r;
            img(1, y, x) = g;
            img(2, y, x) = b;
        }
    }
    return img;
}

// Oracle: identity is the clamped cosine of channel means, dynamics is
// 0.5 * (1 - identity) + 0.5 * mean |a - b|.
std::pair<double, double> oracle_score(const Image& a, const Image& b) {
    double ma[3] = {}, mb[3] = {}, diff = 0;
    const double n = double(a.rows() * a.cols());
    for (int c = 0; c < 3; ++c) {
        for (Eigen::Index y = 0; y < a.rows(); ++y) {
            for (Eigen::Index x = 0; x < a.cols(); ++x) {
                ma[c] += a(c, y, x) / n;
                mb[c] += b(c, y, x) / n;
                diff += std::abs(a(c, y, x) - b(c, y, x));
            }
        }
    }
    diff /= 3 * n;
    double dot = 0, na = 0, nb = 0;
    for (int c = 0; c < 3; ++c) {
        dot += ma[c] * mb[c];
        na += ma[c] * ma[c];
        nb += mb[c] * mb[c];
    }
    const double id = std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
    return {id, 0.5 * (1 - id) + 0.5 * diff};
}

const char* kRewrite =
    R"({"instruction": "move the ball right", "output_description": "the ball on the right",
       "category": "Spatial-Trans", "keywords": ["ball"]})";

} // namespace

TEST(Cosine, ZeroVectorRules) {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(3), a(3), b(3);
    a << 1, 0, 0;
    b << 0, 2, 0;
    EXPECT_EQ(feature_cosine(z, z), 1.0);
    EXPECT_EQ(feature_cosine(z, a), 0.0);
    EXPECT_EQ(feature_cosine(a, b), 0.0);
    EXPECT_DOUBLE_EQ(feature_cosine(a, 3 * a), 1.0);
    EXPECT_DOUBLE_EQ(feature_cosine(a, -a), -1.0);
    EXPECT_THROW(feature_cosine(a, Eigen::VectorXd::Zero(2)), PreconditionError);
}

TEST(PairScore, MatchesOracle) {
    ChannelMeanEncoder enc;
    std::mt19937_64 rng(3);
    for (int k = 0; k < 20; ++k) {
        const Image a = forge::testing::random_image(rng, 6, 5), b = forge::testing::random_image(rng, 6, 5);
        const auto s = score_frame_pair(a, b, enc);
        const auto [id, dyn] = oracle_score(a, b);
        EXPECT_NEAR(s.identity, id, 1e-12);
        EXPECT_NEAR(s.dynamics, dyn, 1e-12);
    }
    EXPECT_THROW(score_frame_pair(Image(3, 2, 2), Image(3, 3, 3), enc), PreconditionError);
}

TEST(SelectPair, WindowAndThresholdAgreeWithBruteForce) {
    ChannelMeanEncoder enc;
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 2 + trial % 6;
        std::vector<Image> frames;
        for (int f = 0; f < n; ++f) frames.push_back(forge::testing::random_image(rng, 4, 4));
        PairSelectOptions opt;
        opt.window = 1 + trial % 3;
        opt.identity_min = 0.9 + 0.002 * (trial % 5);
        std::optional<std::pair<int, int>> want;
        double best = -1;
        for (int i = 0; i < std::min<int>(opt.window, n); ++i) {
            for (int j = std::max<int>(i + 1, n - int(opt.window)); j < n; ++j) {
                const auto [id, dyn] = oracle_score(frames[i], frames[j]);
                if (id < opt.identity_min) continue;
                if (dyn > best + 1e-12) {
                    best = dyn;
                    want = {i, j};
                }
            }
        }
        const auto got = select_pair(frames, enc, opt);
        ASSERT_EQ(got.has_value(), want.has_value()) << trial;
        if (got) {
            EXPECT_EQ(int(got->i), want->first);
            EXPECT_EQ(int(got->j), want->second);
        }
    }
}

TEST(SelectPair, TiesKeepEarliestAndDegenerateInputs) {
    ChannelMeanEncoder enc;
    std::vector<Image> same(5, solid(0.3, 0.3, 0.3));
    const auto p = select_pair(same, enc);
    ASSERT_TRUE(p);
    EXPECT_EQ(p->i, 0u);
    EXPECT_EQ(p->j, 2u);
    EXPECT_FALSE(select_pair(std::span(same).first(1), enc));
    std::vector<Image> opposite{solid(1, 0, 0), solid(0, 1, 0)};
    EXPECT_FALSE(select_pair(opposite, enc));
}

TEST(Rewrite, RetriesUntilValid) {
    ScriptedTextLlm llm({"garbage",
                         R"({"instruction": "x", "output_description": "y", "category": "LongTerm", "keywords": ["a"]})",
                         R"({"instruction": "x", "output_description": "y", "category": "Exaggeration", "keywords": []})",
                         kRewrite});
    const auto r = rewrite_instruction("a ball rolls", llm, 1, 3);
    EXPECT_EQ(r.attempts, 4);
    EXPECT_EQ(r.category, Category::SpatialTrans);
    EXPECT_EQ(r.keywords, std::vector<std::string>{"ball"});
    ScriptedTextLlm bad({"{}"}, true);
    EXPECT_THROW(rewrite_instruction("a ball rolls", bad, 1, 1), AdapterError);
    EXPECT_EQ(bad.prompts.size(), 2u);
    EXPECT_THROW(rewrite_instruction(" ", bad, 1, 1), PreconditionError);
}

TEST(VideoBranch, InMemoryRunBalancesAndDropsShortClips) {
    TempDir dir;
    InMemoryVideoSource src;
    for (int c = 0; c < 3; ++c) src.add("clip" + std::to_string(c), forge::testing::synthetic_clip(c + 1, 8));
    src.add("short", forge::testing::synthetic_clip(9, 1));
    VideoBranchConfig cfg;
    cfg.seed = 4;
    const DatasetLayout layout{dir.path()};
    const auto res = run_video_branch(src, cfg, AdapterRegistry::mocks(4), layout);
    EXPECT_EQ(res.summary.requested, 4u);
    EXPECT_TRUE(res.summary.balanced());
    EXPECT_EQ(res.summary.drops.at("frames"), 1u);
    EXPECT_EQ(res.records.size(), 3u);
    for (const auto& r : res.records) {
        EXPECT_EQ(r.branch, Branch::Video);
        EXPECT_TRUE(branch_allows(Branch::Video, r.category));
        const auto idx = r.provenance["frame_indices"];
        EXPECT_LT(idx[0].get<int>(), idx[1].get<int>());
        EXPECT_TRUE(std::filesystem::exists(layout.root / r.input_image));
    }
    EXPECT_EQ(read_manifest(layout.manifest()), res.records);
    EXPECT_THROW(run_video_branch(src, cfg, AdapterRegistry::mocks(4), layout), ConflictError);
}

TEST(VideoBranch, RewriteFailureIsCountedAsDrop) {
    TempDir dir;
    InMemoryVideoSource src;
    src.add("a", forge::testing::synthetic_clip(1, 6));
    auto reg = AdapterRegistry::mocks(1);
    reg.text_llm = std::make_shared<ScriptedTextLlm>(std::vector<std::string>{"no"}, true);
    const auto res = run_video_branch(src, VideoBranchConfig{}, reg, DatasetLayout{dir.path()});
    EXPECT_TRUE(res.records.empty());
    EXPECT_EQ(res.summary.drops.at("rewrite"), 1u);
}

TEST(VideoBranch, FrameDirectoryOrderingAndRegeneration) {
    TempDir frames, out;
    const auto clip = forge::testing::synthetic_clip(2, 12);
    forge::testing::write_clip(frames.path(), "b-clip", clip);
    forge::testing::write_clip(frames.path(), "a-clip", forge::testing::synthetic_clip(3, 5));
    { std::ofstream(frames / "b-clip/readme.txt") << "ignored"; }
    const FrameDirectorySource src(frames.path());
    EXPECT_EQ(src.clip_ids(), (std::vector<std::string>{"a-clip", "b-clip"}));
    const auto names = src.frame_names("b-clip");
    ASSERT_EQ(names.size(), 12u);
    EXPECT_TRUE(std::is_sorted(names.begin(), names.end()));
    EXPECT_THROW(FrameDirectorySource(frames / "missing"), NotFoundError);

    VideoBranchConfig cfg;
    cfg.seed = 6;
    const auto reg = AdapterRegistry::mocks(6);
    const auto res = run_video_branch(src, cfg, reg, DatasetLayout{out.path()});
    ASSERT_EQ(res.records.size(), 2u);
    const auto& old = res.records[1];
    EXPECT_EQ(old.provenance["video_id"], "b-clip");
    const auto fresh = regenerate_video_record(old, "more dramatic", cfg, reg);
    EXPECT_NE(fresh.id, old.id);
    EXPECT_EQ(fresh.input_image, old.input_image);
    EXPECT_EQ(fresh.provenance["frame_indices"], old.provenance["frame_indices"]);
    EXPECT_EQ(fresh.provenance["parent"], old.id);
}
