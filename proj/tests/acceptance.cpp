// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

#include <atomic>
#include <barrier>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "forge/cli.hpp"
#include "forge/edit_engine.hpp"
#include "forge/editmath.hpp"
#include "forge/evaluator.hpp"
#include "forge/hash.hpp"
#include "forge/mocks.hpp"
#include "forge/review_service.hpp"
#include "forge/sampler.hpp"
#include "forge/schema.hpp"
#include "forge/trainer.hpp"
#include "test_support.hpp"
#include "train_support.hpp"

using namespace forge;
using forge::testing::make_record;
using forge::testing::TempDir;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
    bool pass;
    std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Verdict()>& check) {
    Verdict v{false, ""};
    try {
        v = check();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << " : " << v.detail << std::endl;
}

std::string fmt(const char* f, double a, double b = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

// ---------------------------------------------------------------------------------------

Verdict mask_binarize_union() {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> dim(1, 24), group(1, 4), kind(0, 3), level(0, 4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int maps = 0, groups = 0, mismatches = 0;
    const auto start = Clock::now();
    while (maps < 1000) {
        const int rows = dim(rng), cols = dim(rng);
        const int n = std::min(group(rng), 1000 - maps);
        std::vector<AttentionMap<double>> in;
        for (int k = 0; k < n; ++k) {
            Grid<double> g(rows, cols);
            const int shape = kind(rng);
            for (int y = 0; y < rows; ++y) {
                for (int x = 0; x < cols; ++x) {
                    if (shape == 0) g(y, x) = u(rng);
                    else if (shape == 1) g(y, x) = level(rng) / 4.0;
                    else if (shape == 2) g(y, x) = std::pow(u(rng), 6.0);
                    else g(y, x) = 0.25;
                }
            }
            in.push_back({g, "w"});
        }
        std::vector<BinaryMask> bins;
        for (const auto& m : in) bins.push_back(binarize_attention(m));
        const BinaryMask got = union_masks(bins);

        for (int y = 0; y < rows; ++y) {
            for (int x = 0; x < cols; ++x) {
                bool want = false;
                for (const auto& m : in) {
                    double sum = 0.0;
                    for (int yy = 0; yy < rows; ++yy)
                        for (int xx = 0; xx < cols; ++xx) sum += m.values(yy, xx);
                    if (m.values(y, x) > 0.8125 * (sum / (rows * cols))) want = true;
                }
                if ((got(y, x) != 0) != want) ++mismatches;
            }
        }
        maps += n;
        ++groups;
    }
    const double secs = seconds_since(start);
    return {mismatches == 0 && secs < 1.0,
            std::to_string(maps) + " maps in " + std::to_string(groups) + " unions, " + std::to_string(mismatches) +
                " mismatched cells, " + fmt("%.3f s (limit 1 s)", secs)};
}

// ---------------------------------------------------------------------------------------

NoiseSchedule<double> random_schedule(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> steps(1, 12);
    std::uniform_real_distribution<double> shrink(0.5, 1.0);
    const int t = steps(rng);
    if (rng() % 2) return NoiseSchedule<double>::scaled_linear(t);
    std::vector<double> abar{1.0};
    for (int i = 0; i < t; ++i) abar.push_back(abar.back() * shrink(rng));
    return NoiseSchedule<double>(abar);
}

Verdict blended_sampling_outside_mask() {
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> dim(1, 10), chans(1, 4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    long checked = 0, mismatches = 0, bad_traces = 0;
    for (int f = 0; f < 100; ++f) {
        const int c = chans(rng), h = dim(rng), w = dim(rng);
        const Tensor3<double> z_ori = forge::testing::normal_tensor(rng, c, h, w);
        MaskGrid g(h, w);
        const double density = f % 10 == 0 ? 0.0 : (f % 10 == 1 ? 1.0 : u(rng));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) g(y, x) = u(rng) < density ? 1 : 0;
        const auto schedule = random_schedule(rng);
        const std::uint64_t seed = rng();

        MockInpaintDenoiser denoiser(rng());
        const auto res = denoiser.inpaint({z_ori, BinaryMask(g), "fill", seed, true}, schedule);
        if (res.trace.size() != static_cast<std::size_t>(schedule.T() + 1)) ++bad_traces;

        for (const auto& step : res.trace) {
            const int t = step.t;
            std::mt19937_64 noise_rng(mix_seed(mix_seed(seed, "blend-ref"), static_cast<std::uint64_t>(t)));
            std::normal_distribution<double> normal(0.0, 1.0);
            const double abar = schedule.alpha_bars()[static_cast<std::size_t>(t)];
            const double a = std::sqrt(abar), s = std::sqrt(1.0 - abar);
            for (int k = 0; k < c; ++k) {
                for (int y = 0; y < h; ++y) {
                    for (int x = 0; x < w; ++x) {
                        const double n = normal(noise_rng);
                        if (g(y, x)) continue;
                        const double want = a * z_ori(k, y, x) + s * n;
                        ++checked;
                        if (step.blended(k, y, x) != want) ++mismatches;
                    }
                }
            }
        }
        // At t = 0 the outside region is z_ori itself.
        for (int k = 0; k < c; ++k)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    if (!g(y, x) && res.latent(k, y, x) != z_ori(k, y, x)) ++mismatches;
    }
    return {mismatches == 0 && bad_traces == 0 && checked > 0,
            "100 fixtures, " + std::to_string(checked) + " outside-mask values bit-compared, " +
                std::to_string(mismatches) + " mismatches, " + std::to_string(bad_traces) + " short traces"};
}

// ---------------------------------------------------------------------------------------

double rel_err(const Tensor3<double>& got, const Tensor3<double>& want) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index c = 0; c < got.channels(); ++c) {
        num = std::max(num, (got[c] - want[c]).abs().maxCoeff());
        den = std::max(den, want[c].abs().maxCoeff());
    }
    return num / std::max(den, 1e-300);
}

Verdict guidance_composition() {
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> scale(0.0, 10.0);
    double worst_unit = 0.0, worst_affine = 0.0;
    for (int f = 0; f < 20; ++f) {
        const auto eu = forge::testing::normal_tensor(rng, 4, 6, 5);
        const auto ei = forge::testing::normal_tensor(rng, 4, 6, 5);
        const auto ef = forge::testing::normal_tensor(rng, 4, 6, 5);
        worst_unit = std::max(worst_unit, rel_err(cfg_compose(eu, ei, ef, GuidanceConfig<double>{1.0, 1.0}), ef));
        for (int p = 0; p < 5; ++p) {
            const double si = scale(rng), st = scale(rng);
            const auto got = cfg_compose(eu, ei, ef, GuidanceConfig<double>{si, st});
            Tensor3<double> want(4, 6, 5);
            for (int c = 0; c < 4; ++c)
                for (int y = 0; y < 6; ++y)
                    for (int x = 0; x < 5; ++x)
                        want(c, y, x) = eu(c, y, x) + si * (ei(c, y, x) - eu(c, y, x)) + st * (ef(c, y, x) - ei(c, y, x));
            worst_affine = std::max(worst_affine, rel_err(got, want));
        }
    }
    return {worst_unit <= 1e-12 && worst_affine <= 1e-12,
            fmt("s=1 reduces to the full-condition prediction, rel err %.2e; 5 scale pairs x 20 fixtures, rel err %.2e "
                "(limit 1e-12)",
                worst_unit, worst_affine)};
}

// ---------------------------------------------------------------------------------------

Verdict training_loss_and_finetune() {
    TinyDenoiser probe(3, 4, 50, 1);
    const auto params = probe.parameters().size();
    const auto batch = forge::testing::random_batch(5, 4, 3, 4, 4, 4, 50);
    const double grad_err = forge::testing::gradient_check(batch, probe);

    TempDir data;
    std::mt19937_64 rng(404);
    std::vector<TripletRecord> records;
    for (int i = 0; i < 8; ++i) {
        auto r = make_record("toy" + std::to_string(i));
        save_png(forge::testing::random_image(rng, 16, 16), data / r.input_image);
        save_png(forge::testing::random_image(rng, 16, 16), data / r.output_image);
        records.push_back(r);
    }
    PoolingCodec codec(2);
    const auto examples = load_examples(records, data.path(), 16, codec);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.resolution = 16;
    cfg.learning_rate = 1e-2;
    cfg.train_steps = 100;
    cfg.text_dims = 4;
    cfg.seed = 9;

    const auto start = Clock::now();
    TempDir a, b;
    TinyDenoiser m1(3, cfg.text_dims, cfg.train_steps, cfg.seed), m2(3, cfg.text_dims, cfg.train_steps, cfg.seed);
    const auto r1 = finetune(examples, cfg, m1, a.path());
    const auto r2 = finetune(examples, cfg, m2, b.path());
    const double secs = seconds_since(start);

    bool finite = !r1.losses.empty();
    for (double l : r1.losses) finite = finite && std::isfinite(l);
    const bool deterministic = r1.losses == r2.losses && m1.parameters() == m2.parameters() &&
                               forge::testing::snapshot(a.path()) == forge::testing::snapshot(b.path());
    const bool ok = params <= 1000 && grad_err < 1e-4 && r1.steps == 4 && !r1.diverged && finite && deterministic &&
                    secs < 30.0;
    return {ok, std::to_string(params) + " params, gradient rel err " + fmt("%.2e (limit 1e-4); ", grad_err) +
                    "8 records x 2 epochs = " + std::to_string(r1.steps) + " steps, losses " +
                    (finite ? "finite" : "NOT finite") + ", " + (deterministic ? "deterministic" : "NOT deterministic") +
                    fmt(", %.2f s for two runs (limit 30 s)", secs)};
}

// ---------------------------------------------------------------------------------------

Verdict post_edit_composite() {
    std::mt19937_64 rng(505);
    std::uniform_int_distribution<int> dim(2, 20);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    QuadrantSegmenter seg;
    ChannelMeanEncoder enc;
    SobelEdgeExtractor edges;
    MeanAbsLpips lpips;
    int outside_bad = 0, lpips_bad = 0;
    for (int f = 0; f < 50; ++f) {
        const int h = dim(rng), w = dim(rng);
        const Image ori = forge::testing::random_image(rng, h, w), gen = forge::testing::random_image(rng, h, w);
        MaskGrid g(h, w);
        const double density = u(rng) * 0.5;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) g(y, x) = u(rng) < density ? 1 : 0;
        MockInpaintDenoiser inpaint(rng());
        const auto res = post_edit(ori, gen, BinaryMask(g), {seg, inpaint, enc, edges}, "edit", rng(),
                                   f % 2 ? FeatureSource::OriginalAndGenerated : FeatureSource::Original);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    if (!res.edit_mask(y, x) && res.final_image(c, y, x) != ori(c, y, x)) ++outside_bad;
        if (lpips.distance(res.final_image, ori) > lpips.distance(gen, ori)) ++lpips_bad;
    }
    return {outside_bad == 0 && lpips_bad == 0,
            "50 fixtures, " + std::to_string(outside_bad) + " outside-mask pixels differ from the original, " +
                std::to_string(lpips_bad) + " fixtures with LPIPS(final) > LPIPS(generated)"};
}

// ---------------------------------------------------------------------------------------

Verdict mllm_success_rate() {
    const std::string want =
        "The input description a red apple, the editing instruction let it rot, and the output description "
        "a rotten apple. Please evaluate if the given edited image has been successfully edited. if you think "
        "editing is successful, just give me 1, else if you think editing fails, just give me 0";
    const bool prompt_ok = render_mllm_prompt("a red apple", "let it rot", "a rotten apple") == want;

    std::vector<TripletRecord> rs;
    for (int i = 0; i < 4; ++i) rs.push_back(make_record("m" + std::to_string(i)));
    auto reg = AdapterRegistry::mocks(1);
    reg.scorer = std::make_shared<ScriptedJudge>(std::vector<std::string>{"1", "1", "0", "1"});
    const Image img(3, 4, 4, 0.3);
    const auto rep = evaluate_run(rs, [&](const TripletRecord&) { return img; }, nullptr, reg, {false, 1});
    const auto mean = rep.mllm.at(Branch::TextToImage).mean();
    const bool score_ok = mean && std::abs(*mean - 0.75) < 1e-15;
    return {prompt_ok && score_ok, std::string("golden prompt ") + (prompt_ok ? "matches" : "DIFFERS") +
                                       ", verdicts [1,1,0,1] -> " + (mean ? fmt("%.4f", *mean) : "none") +
                                       " (want 0.75)"};
}

// ---------------------------------------------------------------------------------------

int forge_main(std::vector<std::string> args, std::string& err) {
    args.insert(args.begin(), "forge");
    std::ostringstream out, errs;
    const int code = run(args, out, errs);
    err = errs.str();
    return code;
}

Verdict end_to_end() {
    TempDir frames;
    for (int c = 0; c < 3; ++c) {
        forge::testing::write_clip(frames.path(), "clip" + std::to_string(c), forge::testing::synthetic_clip(70 + c, 8));
    }
    TempDir a, b;
    double worst = 0.0;
    std::string problems;
    for (const auto* dir : {&a, &b}) {
        const std::string out = (dir->path() / "ds").string();
        const auto start = Clock::now();
        std::string err;
        if (forge_main({"--seed", "11", "t2i", "--count", "5", "--out", out}, err) != kExitOk) problems += " t2i:" + err;
        if (forge_main({"--seed", "11", "video", "--frames-root", frames.path().string(), "--out", out}, err) != kExitOk) {
            problems += " video:" + err;
        }
        worst = std::max(worst, seconds_since(start));
    }
    const auto root = a.path() / "ds";
    std::size_t produced = 0;
    for (const char* name : {"t2i_summary.json", "video_summary.json"}) {
        const auto path = root / "reports" / name;
        if (!std::filesystem::exists(path)) {
            problems += std::string(" missing ") + name;
            continue;
        }
        const Json s = Json::parse(forge::testing::read_file(path));
        std::size_t dropped = 0;
        for (const auto& [_, n] : s["drops"].items()) dropped += n.get<std::size_t>();
        if (s["requested"].get<std::size_t>() != s["produced"].get<std::size_t>() + dropped) {
            problems += std::string(" unbalanced ") + name;
        }
        produced += s["produced"].get<std::size_t>();
    }
    std::size_t records = 0;
    try {
        const auto rs = read_manifest(root / "manifest.jsonl");
        for (const auto& r : rs) {
            validate(r);
            if (!std::filesystem::exists(root / r.input_image) || !std::filesystem::exists(root / r.output_image)) {
                problems += " missing image for " + r.id;
            }
        }
        records = rs.size();
    } catch (const std::exception& e) {
        problems += std::string(" invalid manifest: ") + e.what();
    }
    if (records != produced) problems += " manifest count differs from summaries";
    const bool identical = forge::testing::snapshot(a.path()) == forge::testing::snapshot(b.path());
    if (!identical) problems += " runs differ";
    return {problems.empty() && worst < 60.0 && records > 0,
            "t2i --count 5 + video over 3 clips: " + std::to_string(records) + " valid records, balanced summaries, " +
                (identical ? "byte-identical" : "NOT identical") + " across 2 runs" +
                fmt(", slowest run %.2f s (limit 60 s)", worst) + problems};
}

// ---------------------------------------------------------------------------------------

Verdict split_and_stats() {
    std::vector<TripletRecord> rs;
    const auto t2i_cats = categories_for(Branch::TextToImage);
    const auto video_cats = categories_for(Branch::Video);
    for (int i = 0; i < 500; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "t%03d", i);
        std::vector<std::string> kw{"kw" + std::to_string(i % 31)};
        if (i % 3 == 0) kw.push_back("kw" + std::to_string(i % 7));
        rs.push_back(make_record(id, t2i_cats[static_cast<std::size_t>(i) % t2i_cats.size()], Branch::TextToImage, kw));
    }
    for (int i = 0; i < 300; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "v%03d", i);
        rs.push_back(make_record(id, video_cats[static_cast<std::size_t>(i) % video_cats.size()], Branch::Video, {"kw" + std::to_string(i % 13)}));
    }

    const auto split = make_split(rs, 5);
    std::set<std::string> test(split.test_ids.begin(), split.test_ids.end());
    std::size_t t2i_test = 0, video_test = 0, overlap = 0;
    for (const auto& r : rs) {
        if (test.contains(r.id)) ++(r.branch == Branch::TextToImage ? t2i_test : video_test);
    }
    for (const auto& id : split.train_ids) overlap += test.count(id);
    const bool split_ok = t2i_test == 300 && video_test == 200 && overlap == 0 &&
                          split.train_ids.size() + split.test_ids.size() == rs.size() && split.warnings.empty();

    std::map<std::pair<Branch, Category>, std::size_t> want_counts;
    std::map<std::string, std::size_t> freq;
    for (const auto& r : rs) {
        ++want_counts[{r.branch, r.category}];
        for (const auto& k : r.keywords) ++freq[k];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
        return x.second != y.second ? x.second > y.second : x.first < y.first;
    });
    ranked.resize(20);
    const auto stats = dataset_stats(rs);
    const bool stats_ok = stats.total == 800 && stats.counts == want_counts && stats.top_keywords == ranked;
    return {split_ok && stats_ok, "500 t2i + 300 video -> test " + std::to_string(t2i_test) + "/" +
                                      std::to_string(video_test) + " (want 300/200), disjoint; stats " +
                                      (stats_ok ? "match" : "DIFFER from") + " hand counts and top-20 keywords"};
}

// ---------------------------------------------------------------------------------------

ReviewDecision decision(const std::string& id, ReviewAction a, std::optional<std::uint64_t> rev) {
    ReviewDecision d;
    d.record_id = id;
    d.action = a;
    d.reviewer = "acceptance";
    d.expected_revision = rev;
    return d;
}

Verdict review_store() {
    TempDir dir;
    const int n = 30;
    std::vector<TripletRecord> rs;
    for (int i = 0; i <= n; ++i) rs.push_back(make_record("r" + std::to_string(i)));
    const auto manifest = dir / "manifest.jsonl";
    write_manifest(rs, manifest);

    int single_commit = 0;
    bool replay_ok = false;
    std::vector<TripletRecord> live;
    {
        ReviewStore store(manifest, {7, [] { return std::string("2026-01-01T00:00:00Z"); }});
        for (int i = 0; i < n; ++i) {
            const std::string id = "r" + std::to_string(i);
            std::atomic<int> ok{0}, conflict{0};
            std::barrier sync(2);
            auto worker = [&](ReviewAction a) {
                sync.arrive_and_wait();
                try {
                    store.submit(decision(id, a, 0));
                    ++ok;
                } catch (const ConflictError&) {
                    ++conflict;
                }
            };
            std::thread t1(worker, ReviewAction::Approve), t2(worker, ReviewAction::Reject);
            t1.join();
            t2.join();
            if (ok == 1 && conflict == 1 && store.get(id)->revision == 1) ++single_commit;
        }
        auto revise = decision("r" + std::to_string(n), ReviewAction::ReviseInstruction, std::nullopt);
        revise.revised_instruction = "make it winter";
        store.submit(revise);
        replay_ok = replay_audit_log(read_manifest(store.base_manifest_path()), store.audit_log_path()) == store.records();
        live = store.records();
    }
    const bool reopen_ok = ReviewStore(manifest).records() == live && read_manifest(manifest) == live;
    return {single_commit == n && replay_ok && reopen_ok,
            std::to_string(single_commit) + "/" + std::to_string(n) +
                " concurrent approve/reject races committed exactly one; audit replay " +
                (replay_ok ? "equals" : "DIFFERS from") + " live state; reopened store " +
                (reopen_ok ? "equals" : "DIFFERS from") + " live state"};
}

} // namespace

int main() {
    report("mask-binarize-union", mask_binarize_union);
    report("blended-sampling-outside-mask", blended_sampling_outside_mask);
    report("guidance-composition", guidance_composition);
    report("training-gradient-and-finetune", training_loss_and_finetune);
    report("post-edit-composite", post_edit_composite);
    report("mllm-score", mllm_success_rate);
    report("end-to-end-generation", end_to_end);
    report("split-and-stats", split_and_stats);
    report("review-store", review_store);
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
