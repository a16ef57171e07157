// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <thread>

#include "forge/endpoint.hpp"
#include "forge/hash.hpp"
#include "forge/mocks.hpp"
#include "test_support.hpp"

#include <httplib.h>

using namespace forge;
using namespace std::chrono_literals;

TEST(Hash, Fnv1aKnownVectors) {
    EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_NE(mix_seed(1, "a"), mix_seed(1, "b"));
    EXPECT_NE(mix_seed(1, 0), mix_seed(2, 0));
    for (std::uint64_t i = 0; i < 100; ++i) {
        const double u = unit_from_hash(mix_seed(i, i));
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
}

TEST(Verdict, FirstStandaloneBinaryToken) {
    EXPECT_EQ(parse_verdict("1"), 1);
    EXPECT_EQ(parse_verdict("Answer: 0."), 0);
    EXPECT_EQ(parse_verdict("I'd say 1, not 0"), 1);
    EXPECT_EQ(parse_verdict("score 10 then 0"), 0);
    EXPECT_EQ(parse_verdict("0.5 so 1"), 1);
    EXPECT_EQ(parse_verdict("v1 a1 1b"), std::nullopt);
    EXPECT_EQ(parse_verdict("yes"), std::nullopt);
    EXPECT_EQ(parse_verdict(""), std::nullopt);
}

TEST(Verdict, RetriesOnceThenUnevaluable) {
    ScriptedJudge j({"maybe", "1"});
    const auto v = query_verdict(j, {}, "p", 3);
    EXPECT_EQ(v.value, 1);
    EXPECT_EQ(v.attempts, 2);
    ScriptedJudge never({"hmm", "still unsure", "1"});
    const auto u = query_verdict(never, {}, "p", 3);
    EXPECT_FALSE(u.value.has_value());
    EXPECT_EQ(u.attempts, 2);
    EXPECT_EQ(u.raw.size(), 2u);
}

TEST(Scripted, SingleConsumerPlayback) {
    ScriptedPlayback p({"a", "b"});
    EXPECT_EQ(p.next(), "a");
    EXPECT_EQ(p.next(), "b");
    EXPECT_THROW(p.next(), AdapterError);
    ScriptedPlayback c({"x"}, true);
    c.next();
    EXPECT_EQ(c.next(), "x");
    EXPECT_EQ(c.calls(), 2u);
}

TEST(Codec, PoolingRoundTripOnBlocks) {
    PoolingCodec codec(2);
    std::mt19937_64 rng(1);
    const Image img = forge::testing::random_image(rng, 8, 6);
    const auto z = codec.encode(img);
    EXPECT_EQ(z.rows(), 4);
    EXPECT_EQ(z.cols(), 3);
    EXPECT_NEAR(z(1, 2, 1), 2.0 * (img(1, 4, 2) + img(1, 4, 3) + img(1, 5, 2) + img(1, 5, 3)) / 4.0 - 1.0, 1e-15);
    const Image back = codec.decode(z);
    EXPECT_TRUE(codec.encode(back) == z);
    EXPECT_THROW(codec.encode(Image(3, 5, 4)), PreconditionError);
}

TEST(MockDenoiser, BoundedDeterministicAndDerivativeMatches) {
    std::mt19937_64 rng(2);
    Tensor3<double> z(2, 3, 3);
    std::normal_distribution<double> n;
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 3; ++x) z(c, y, x) = n(rng);
    const auto a = mock_denoiser_step(z, 5, "cond", 9);
    EXPECT_TRUE(a == mock_denoiser_step(z, 5, "cond", 9));
    EXPECT_FALSE(a == mock_denoiser_step(z, 5, "other", 9));
    EXPECT_LE(a.abs_max(), 1.0);
    const auto d = mock_denoiser_step_dz(z, 5, "cond", 9);
    const double h = 1e-6;
    for (int c = 0; c < 2; ++c) {
        auto zp = z, zm = z;
        zp(c, 1, 2) += h;
        zm(c, 1, 2) -= h;
        const double fd = (mock_denoiser_step(zp, 5, "cond", 9)(c, 1, 2) - mock_denoiser_step(zm, 5, "cond", 9)(c, 1, 2)) / (2 * h);
        EXPECT_NEAR(d(c, 1, 2), fd, 1e-8);
    }
}

TEST(MockT2I, AttentionPerKeywordAndBlindKeywords) {
    MockT2IOptions opts;
    opts.image_size = 16;
    opts.steps = 4;
    opts.blind_keywords = {"ghost"};
    MockT2IDenoiser t2i(3, opts);
    const std::vector<std::string> kws{"cat", "ghost"};
    const auto r = t2i.generate("a cat", kws, 7);
    EXPECT_EQ(r.image.rows(), 16);
    ASSERT_EQ(r.attention.size(), 2u);
    EXPECT_GT(r.attention[0].values.sum(), 0.0);
    EXPECT_EQ(r.attention[1].values.sum(), 0.0);
    EXPECT_TRUE(t2i.generate("a cat", kws, 7).image == r.image);
    EXPECT_FALSE(t2i.generate("a cat", kws, 8).image == r.image);
}

TEST(MockEdit, QuadrantAttention) {
    MockEditDenoiser d(1, 8);
    const std::string instr = "make it rain";
    Tensor3<double> z(3, 8, 8);
    const auto p = d.predict({LatentState<double>{z, 3}, 0.5, z, instr});
    ASSERT_TRUE(p.instruction_attention.has_value());
    const int q = MockEditDenoiser::quadrant_for(instr);
    const int qy = q / 2, qx = q % 2;
    EXPECT_DOUBLE_EQ((*p.instruction_attention)(qy * 4, qx * 4), 1.0);
    EXPECT_DOUBLE_EQ((*p.instruction_attention)((1 - qy) * 4, (1 - qx) * 4), 0.05);
    EXPECT_THROW(d.predict({LatentState<double>{z, 3}, 1.0, z, instr}), PreconditionError);
}

TEST(MockLlm, AnswersQuadrupleAndRewriteTasks) {
    MockTextLlm llm(1);
    const Json q = Json::parse(llm.complete("Task: quadruple\nCategory: Exaggeration\n", 2));
    for (const char* k : {"input_prompt", "instruction", "output_prompt", "keywords"}) EXPECT_TRUE(q.contains(k));
    const Json r = Json::parse(llm.complete("Task: rewrite\nDescription: a large dog runs across the field\n", 2));
    EXPECT_TRUE(branch_allows(Branch::Video, parse_category(r["category"].get<std::string>())));
    EXPECT_EQ(r["keywords"], Json::array({"large", "across"}));
}

TEST(Metrics, MockClipAndLpips) {
    MockClip clip(1);
    Image a(3, 4, 4, 0.2), b(3, 4, 4, 0.6);
    const double s = clip.score(a, "text");
    EXPECT_GE(s, 0.15);
    EXPECT_LT(s, 0.30);
    EXPECT_EQ(MockClip(1, 0.7).score(a, "x"), 0.7);
    MeanAbsLpips lp;
    EXPECT_NEAR(lp.distance(a, b), 0.4, 1e-15);
    EXPECT_EQ(lp.distance(a, a), 0.0);
}

TEST(Segmenter, QuadrantsPartitionTheImage) {
    QuadrantSegmenter seg;
    const auto masks = seg.segment(Image(3, 6, 8));
    ASSERT_EQ(masks.size(), 4u);
    MaskGrid sum = MaskGrid::Zero(6, 8);
    for (const auto& m : masks) sum += m.grid();
    EXPECT_TRUE((sum == 1).all());
}

TEST(Registry, MocksForEveryKindAndVersions) {
    const auto reg = AdapterRegistry::mocks(5);
    EXPECT_TRUE(reg.text_llm && reg.t2i_denoiser && reg.t2i_alternate && reg.codec && reg.metric_lpips);
    EXPECT_EQ(reg.versions().size(), all_adapter_kinds().size());
    EXPECT_NE(reg.t2i_denoiser->version(), reg.t2i_alternate->version());
}

TEST(Registry, ConfigErrors) {
    EXPECT_THROW(AdapterRegistry::from_config(Json{{"warp_drive", Json::object()}}, 1), ValidationError);
    EXPECT_THROW(AdapterRegistry::from_config(Json{{"judge", {{"implementation", "magic"}}}}, 1), ValidationError);
    EXPECT_THROW(AdapterRegistry::from_config(Json{{"judge", {{"max_attempts", 0}}}}, 1), ValidationError);
    EXPECT_THROW(get_adapter(AdapterKind::T2IDenoiser, AdapterConfig{"endpoint", "http://x", "", 0, 0, 1, {}}),
                 AdapterError);
}

TEST(HttpClient, RetriesServerErrorsWithBackoff) {
    auto clock = std::make_shared<FakeClock>();
    int calls = 0;
    HttpJsonClient client("http://model", "tok", RetryPolicy{4, 100ms, 2.0}, 0.0, clock,
                          [&](const std::string&, const std::string& body, const std::string& bearer) {
                              EXPECT_EQ(bearer, "tok");
                              EXPECT_EQ(Json::parse(body)["kind"], "judge");
                              return ++calls < 3 ? std::pair{503, std::string("busy")}
                                                 : std::pair{200, std::string(R"({"text": "1"})")};
                          });
    EXPECT_EQ(client.post({{"kind", "judge"}})["text"], "1");
    EXPECT_EQ(calls, 3);
    EXPECT_EQ(clock->sleeps(), (std::vector<Clock::duration>{100ms, 200ms}));
    EXPECT_EQ(client.log().size(), 3u);
}

TEST(HttpClient, ClientErrorsAreNotRetried) {
    auto clock = std::make_shared<FakeClock>();
    int calls = 0;
    HttpJsonClient client("http://model", "", RetryPolicy{4, 100ms, 2.0}, 0.0, clock,
                          [&](const std::string&, const std::string&, const std::string&) {
                              ++calls;
                              return std::pair{400, std::string("{}")};
                          });
    EXPECT_THROW(client.post({}), AdapterError);
    EXPECT_EQ(calls, 1);
}

TEST(HttpClient, RateLimitSpacesRequests) {
    auto clock = std::make_shared<FakeClock>();
    HttpJsonClient client("http://model", "", RetryPolicy{1, 1ms, 2.0}, 10.0, clock,
                          [](const std::string&, const std::string&, const std::string&) {
                              return std::pair{200, std::string("{}")};
                          });
    client.post({});
    client.post({});
    client.post({});
    EXPECT_EQ(clock->sleeps(), (std::vector<Clock::duration>{100ms, 100ms}));
}

TEST(Endpoint, JudgeOverLoopbackHttp) {
    httplib::Server srv;
    srv.Post("/judge", [](const httplib::Request& req, httplib::Response& res) {
        const Json body = Json::parse(req.body);
        const bool ok = body["kind"] == "judge" && body["images"].size() == 1 &&
                        req.get_header_value("Authorization") == "Bearer secret";
        res.set_content(Json{{"text", ok ? "1" : "0"}}.dump(), "application/json");
    });
    const int port = srv.bind_to_any_port("127.0.0.1");
    std::thread t([&] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    ::setenv("FORGE_TEST_TOKEN", "secret", 1);
    AdapterConfig cfg{"endpoint", "http://127.0.0.1:" + std::to_string(port) + "/judge", "FORGE_TEST_TOKEN", 0, 0, 1, {}};
    auto judge = std::get<std::shared_ptr<Judge>>(get_adapter(AdapterKind::Judge, cfg));
    Image img(3, 2, 2, 0.5);
    EXPECT_EQ(judge->judge({&img, 1}, "ok?", 1), "1");
    srv.stop();
    t.join();
}
