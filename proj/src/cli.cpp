// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/cli.hpp"

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "forge/config.hpp"
#include "forge/evaluator.hpp"
#include "forge/hash.hpp"
#include "forge/image.hpp"
#include "forge/review_server.hpp"
#include "forge/review_service.hpp"

#include <CLI11.hpp>
#include <httplib.h>

namespace forge {

namespace fs = std::filesystem;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    bool dry_run = false;
};

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
}

/// Attempts an HTTP request to every endpoint adapter. Returns the unreachable kinds.
std::vector<std::string> unreachable_endpoints(const Json& adapters) {
    std::vector<std::string> bad;
    if (!adapters.is_object()) return bad;
    for (const auto& [name, entry] : adapters.items()) {
        const AdapterConfig c = AdapterConfig::from_json(entry);
        if (c.implementation != "endpoint") continue;
        const auto scheme = c.endpoint.find("://");
        const auto slash = c.endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
        const std::string base = c.endpoint.substr(0, slash);
        httplib::Client client(base);
        client.set_connection_timeout(2);
        if (!client.Get(slash == std::string::npos ? "/" : c.endpoint.substr(slash))) bad.push_back(name);
    }
    return bad;
}

class Context {
public:
    Context(const Globals& g, std::ostream& out, std::ostream& err) : globals_(g), out_(out), err_(err) {
        config_ = globals_.config.empty() ? ForgeConfig::from_json(Json::object()) : ForgeConfig::load(globals_.config);
        if (globals_.seed) config_.set_seed(*globals_.seed);
    }

    const ForgeConfig& config() const { return config_; }
    ForgeConfig& config() { return config_; }
    bool dry_run() const { return globals_.dry_run; }
    std::ostream& out() { return out_; }
    std::ostream& err() { return err_; }

    AdapterRegistry registry() const { return AdapterRegistry::from_config(config_.adapters, config_.seed); }

    /// Config, adapters and endpoint reachability; nothing is written.
    int dry_run_report(const std::vector<fs::path>& required_inputs) {
        const AdapterRegistry reg = registry();
        for (const auto& p : required_inputs) {
            if (!fs::exists(p)) throw NotFoundError("input not found: " + p.string());
        }
        const auto bad = unreachable_endpoints(config_.adapters);
        for (const auto& name : bad) err_ << "adapter " << name << ": endpoint unreachable\n";
        out_ << "dry run: config " << config_.hash() << ", " << reg.versions().size() << " adapters";
        out_ << (bad.empty() ? ", ok\n" : ", unreachable endpoints\n");
        return bad.empty() ? kExitOk : kExitError;
    }

private:
    Globals globals_;
    std::ostream& out_;
    std::ostream& err_;
    ForgeConfig config_;
};

// ---------------------------------------------------------------------------------------------
// Subcommands

struct T2IArgs {
    std::string category;
    std::optional<std::size_t> count;
    std::string out;
};

int cmd_t2i(Context& ctx, const T2IArgs& a) {
    T2IBranchConfig cfg = ctx.config().t2i_config();
    if (a.count || !a.category.empty()) {
        cfg.quotas.clear();
        const std::size_t n = a.count.value_or(1);
        if (!a.category.empty()) {
            const Category c = parse_category(a.category);
            if (!branch_allows(Branch::TextToImage, c)) {
                throw ValidationError("category", "not produced by the text-to-image branch");
            }
            cfg.quotas.emplace_back(c, n);
        } else {
            const auto cats = categories_for(Branch::TextToImage);
            for (std::size_t k = 0; k < cats.size(); ++k) {
                const std::size_t share = n / cats.size() + (k < n % cats.size() ? 1 : 0);
                if (share > 0) cfg.quotas.emplace_back(cats[k], share);
            }
        }
    }
    if (cfg.quotas.empty()) throw ValidationError("t2i.quotas", "no quotas configured; pass --count or set t2i.quotas");
    const fs::path root = a.out.empty() ? ctx.config().dataset : fs::path(a.out);
    if (ctx.dry_run()) return ctx.dry_run_report({});

    const AdapterRegistry reg = ctx.registry();
    const DatasetLayout layout{root};
    const T2IRunResult res = run_t2i_branch(cfg, reg, layout);
    write_text(root / "reports" / "t2i_summary.json", res.summary.to_json().dump(2) + "\n");
    ctx.out() << "t2i: " << res.summary.produced << " of " << res.summary.requested << " records written to "
              << layout.manifest().string() << "\n";
    for (const auto& [stage, n] : res.summary.drops) ctx.out() << "  dropped at " << stage << ": " << n << "\n";
    for (const auto& w : res.summary.warnings) ctx.err() << "warning: " << w << "\n";
    return kExitOk;
}

int cmd_video(Context& ctx, const std::string& frames_root, const std::string& out) {
    const fs::path root = out.empty() ? ctx.config().dataset : fs::path(out);
    if (ctx.dry_run()) return ctx.dry_run_report({frames_root});
    const AdapterRegistry reg = ctx.registry();
    const FrameDirectorySource source(frames_root);
    const DatasetLayout layout{root};
    const VideoRunResult res = run_video_branch(source, ctx.config().video_config(), reg, layout);
    write_text(root / "reports" / "video_summary.json", res.summary.to_json().dump(2) + "\n");
    ctx.out() << "video: " << res.summary.produced << " of " << res.summary.requested << " clips written to "
              << layout.manifest().string() << "\n";
    for (const auto& [stage, n] : res.summary.drops) ctx.out() << "  dropped at " << stage << ": " << n << "\n";
    for (const auto& w : res.summary.warnings) ctx.err() << "warning: " << w << "\n";
    return kExitOk;
}

struct TrainArgs {
    std::string manifest;
    std::string out;
    std::optional<int> epochs;
    std::optional<int> batch_size;
    std::optional<int> resolution;
    std::optional<double> learning_rate;
};

int cmd_train(Context& ctx, const TrainArgs& a) {
    TrainConfig tc = ctx.config().trainer;
    if (a.epochs) tc.epochs = *a.epochs;
    if (a.batch_size) tc.batch_size = *a.batch_size;
    if (a.resolution) tc.resolution = *a.resolution;
    if (a.learning_rate) tc.learning_rate = *a.learning_rate;
    tc.validate();
    if (ctx.dry_run()) return ctx.dry_run_report({a.manifest});

    const AdapterRegistry reg = ctx.registry();
    const auto records = read_manifest(a.manifest);
    const auto examples = load_examples(records, fs::path(a.manifest).parent_path(), tc.resolution, *reg.codec);
    if (examples.empty()) throw PreconditionError("train: the manifest has no records");
    TinyDenoiser model(int(examples.front().z_input.channels()), tc.text_dims, tc.train_steps,
                       mix_seed(tc.seed, "model"));
    const FinetuneResult res = finetune(examples, tc, model, a.out);
    ctx.out() << "train: " << res.steps << " steps, final loss "
              << (res.losses.empty() ? 0.0 : res.losses.back()) << ", checkpoint " << res.checkpoint.string() << "\n";
    if (res.diverged) {
        ctx.err() << "train: loss diverged; kept the last finite checkpoint\n";
        return kExitError;
    }
    return kExitOk;
}

struct EditArgs {
    std::string image;
    std::string instruction;
    bool post_edit = false;
    std::optional<double> s_img;
    std::optional<double> s_txt;
    std::optional<int> steps;
    std::string out;
};

int cmd_edit(Context& ctx, const EditArgs& a) {
    const ForgeConfig& fc = ctx.config();
    EditRequest req;
    req.instruction = a.instruction;
    req.guidance.s_image = a.s_img.value_or(fc.editmath.s_image);
    req.guidance.s_text = a.s_txt.value_or(fc.editmath.s_text);
    req.seed = mix_seed(fc.seed, "edit");
    req.steps = a.steps.value_or(fc.edit.steps);
    req.post_edit = a.post_edit || fc.edit.post_edit;
    if (ctx.dry_run()) {
        req.guidance.validate();
        return ctx.dry_run_report({a.image});
    }
    req.input_image = load_png(a.image);
    req.validate();

    const AdapterRegistry reg = ctx.registry();
    const EditResult res = run_edit(req, reg, fc.edit_options());
    const fs::path out(a.out);
    const fs::path stem = out.parent_path() / out.stem();
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_png(res.final_image, out);
    save_png(res.generated, stem.string() + "_gen.png");
    if (res.instruction_mask) save_png(mask_to_image(res.instruction_mask->grid()), stem.string() + "_mask_instr.png");
    if (res.edit_mask) save_png(mask_to_image(res.edit_mask->grid()), stem.string() + "_mask_edit.png");
    for (const auto& w : res.warnings) ctx.err() << "warning: " << w << "\n";
    ctx.out() << "edit: wrote " << out.string() << "\n";
    return kExitOk;
}

struct EvalArgs {
    std::string manifest;
    std::string split = "test";
    std::string outputs;
    std::string report;
};

int cmd_eval(Context& ctx, const EvalArgs& a) {
    if (a.split != "test" && a.split != "all") throw ValidationError("split", "must be \"test\" or \"all\"");
    if (ctx.dry_run()) return ctx.dry_run_report({a.manifest});
    const ForgeConfig& fc = ctx.config();
    const AdapterRegistry reg = ctx.registry();
    const fs::path root = fs::path(a.manifest).parent_path();
    std::vector<TripletRecord> records = load_reviewed_records(a.manifest);
    if (a.split == "test") {
        const DatasetSplit split = make_split(records, mix_seed(fc.seed, "split"), fc.eval.test_t2i, fc.eval.test_video);
        for (const auto& w : split.warnings) ctx.err() << "warning: " << w << "\n";
        const std::set<std::string> test(split.test_ids.begin(), split.test_ids.end());
        std::erase_if(records, [&](const TripletRecord& r) { return !test.contains(r.id); });
    }
    auto load = [](const fs::path& p) -> std::optional<Image> {
        if (!fs::exists(p)) return std::nullopt;
        try {
            return load_png(p);
        } catch (const Error&) {
            return std::nullopt;
        }
    };
    const ImageLookup edited = [&](const TripletRecord& r) {
        return a.outputs.empty() ? load(root / r.output_image) : load(fs::path(a.outputs) / (r.id + ".png"));
    };
    const ImageLookup inputs = [&](const TripletRecord& r) { return load(root / r.input_image); };
    const EvalReport report = evaluate_run(records, edited, inputs, reg, {fc.eval.lpips, mix_seed(fc.seed, "eval")});
    const std::string table = report.table();
    if (!a.report.empty()) {
        Json j = report.to_json();
        j["split"] = a.split;
        j["config_hash"] = fc.hash();
        write_text(a.report, j.dump(2) + "\n");
        write_text(fs::path(a.report).replace_extension(".txt"), table);
    }
    ctx.out() << table;
    return kExitOk;
}

int cmd_stats(Context& ctx, const std::string& manifest, std::size_t top_k, bool as_json) {
    if (ctx.dry_run()) return ctx.dry_run_report({manifest});
    const auto records = load_reviewed_records(manifest);
    const StatsReport s = dataset_stats(records, top_k);
    ctx.out() << (as_json ? s.to_json().dump(2) + "\n" : s.table());
    return kExitOk;
}

std::atomic<ReviewServer*> g_server{nullptr};

extern "C" void stop_server(int) {
    if (ReviewServer* s = g_server.load()) s->stop();
}

struct ServeArgs {
    std::string manifest;
    int port = 8080;
    std::string host = "127.0.0.1";
    std::string ui_dir;
};

int cmd_review_serve(Context& ctx, const ServeArgs& a) {
    const ForgeConfig& fc = ctx.config();
    if (ctx.dry_run()) return ctx.dry_run_report({a.manifest});
    const AdapterRegistry reg = ctx.registry();
    ReviewStore store(a.manifest, {fc.review.compact_every, {}});
    ReviewServerOptions opts;
    if (!fc.review.token_env.empty()) {
        const char* tok = std::getenv(fc.review.token_env.c_str());
        if (!tok || !*tok) throw ValidationError("review.token_env", "environment variable is not set");
        opts.token = tok;
    }
    opts.ui_dir = a.ui_dir;
    ReviewServer server(store, opts);

    const DatasetLayout layout{store.dataset_root()};
    const T2IBranchConfig t2i = fc.t2i_config();
    const VideoBranchConfig video = fc.video_config();
    const Regenerator regenerate = [&](const TripletRecord& old, const RegenerationJob& job) {
        if (old.branch == Branch::TextToImage) {
            return regenerate_t2i_record(old, job.hint, job.alternate_generator, t2i, reg, layout);
        }
        return regenerate_video_record(old, job.hint, video, reg);
    };
    std::atomic<bool> running{true};
    std::jthread worker([&] {
        while (running) {
            if (run_regeneration_worker(store, regenerate) == 0) std::this_thread::sleep_for(std::chrono::milliseconds(200));
        }
    });

    if (!server.bind(a.host, a.port)) throw IoError("cannot bind " + a.host + ":" + std::to_string(a.port));
    g_server = &server;
    std::signal(SIGINT, stop_server);
    std::signal(SIGTERM, stop_server);
    ctx.out() << "review: serving " << a.manifest << " on http://" << a.host << ":" << a.port << "\n" << std::flush;
    server.listen_after_bind();
    g_server = nullptr;
    running = false;
    worker.join();
    store.compact();
    return kExitOk;
}

int cmd_export(Context& ctx, const std::string& manifest, const std::string& out) {
    if (ctx.dry_run()) return ctx.dry_run_report({manifest});
    const auto kept = export_approved(fs::path(manifest), fs::path(out));
    ctx.out() << "export: " << kept.size() << " records written to " << out << "\n";
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dataset foundry and instruction-editing toolkit", "forge"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "JSON configuration file");
    app.add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { g.seed = s; }, "global seed");
    app.add_flag("--dry-run", g.dry_run, "validate config and adapters without writing anything");

    T2IArgs t2i;
    auto* c_t2i = app.add_subcommand("t2i", "text-to-image branch");
    c_t2i->add_option("--category", t2i.category, "single category to generate");
    c_t2i->add_option_function<std::size_t>("--count", [&](const std::size_t& n) { t2i.count = n; }, "records to request");
    c_t2i->add_option("--out", t2i.out, "dataset directory");

    std::string frames_root, video_out;
    auto* c_video = app.add_subcommand("video", "video branch");
    c_video->add_option("--frames-root", frames_root, "one sub-directory of PNG frames per clip")->required();
    c_video->add_option("--out", video_out, "dataset directory");

    TrainArgs train;
    auto* c_train = app.add_subcommand("train", "fine-tune the editing denoiser");
    c_train->add_option("--manifest", train.manifest)->required();
    c_train->add_option("--out", train.out, "checkpoint directory")->required();
    c_train->add_option_function<int>("--epochs", [&](const int& v) { train.epochs = v; });
    c_train->add_option_function<int>("--batch-size", [&](const int& v) { train.batch_size = v; });
    c_train->add_option_function<int>("--resolution", [&](const int& v) { train.resolution = v; });
    c_train->add_option_function<double>("--lr", [&](const double& v) { train.learning_rate = v; });

    EditArgs edit;
    auto* c_edit = app.add_subcommand("edit", "edit one image");
    c_edit->add_option("--image", edit.image)->required();
    c_edit->add_option("--instruction", edit.instruction)->required();
    c_edit->add_flag("--post-edit", edit.post_edit);
    c_edit->add_option_function<double>("--s-img", [&](const double& v) { edit.s_img = v; });
    c_edit->add_option_function<double>("--s-txt", [&](const double& v) { edit.s_txt = v; });
    c_edit->add_option_function<int>("--steps", [&](const int& v) { edit.steps = v; });
    c_edit->add_option("--out", edit.out)->required();

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "score edited outputs");
    c_eval->add_option("--manifest", ev.manifest)->required();
    c_eval->add_option("--split", ev.split, "test or all");
    c_eval->add_option("--outputs", ev.outputs, "directory of <id>.png edits; defaults to the records' outputs");
    c_eval->add_option("--report", ev.report, "report JSON path; a .txt table is written next to it");

    std::string stats_manifest;
    std::size_t top_k = 20;
    bool stats_json = false;
    auto* c_stats = app.add_subcommand("stats", "dataset statistics");
    c_stats->add_option("--manifest", stats_manifest)->required();
    c_stats->add_option("--top-k", top_k);
    c_stats->add_flag("--json", stats_json);

    ServeArgs serve;
    auto* c_serve = app.add_subcommand("review-serve", "serve the review API");
    c_serve->add_option("--manifest", serve.manifest)->required();
    c_serve->add_option("--port", serve.port);
    c_serve->add_option("--host", serve.host);
    c_serve->add_option("--ui-dir", serve.ui_dir, "static files served at /");

    std::string export_manifest, export_out;
    auto* c_export = app.add_subcommand("export", "write Approved and Revised records");
    c_export->add_option("--manifest", export_manifest)->required();
    c_export->add_option("--out", export_out)->required();

    std::vector<std::string> rev(args.begin() + (args.empty() ? 0 : 1), args.end());
    std::reverse(rev.begin(), rev.end());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "forge: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        Context ctx(g, out, err);
        if (*c_t2i) return cmd_t2i(ctx, t2i);
        if (*c_video) return cmd_video(ctx, frames_root, video_out);
        if (*c_train) return cmd_train(ctx, train);
        if (*c_edit) return cmd_edit(ctx, edit);
        if (*c_eval) return cmd_eval(ctx, ev);
        if (*c_stats) return cmd_stats(ctx, stats_manifest, top_k, stats_json);
        if (*c_serve) return cmd_review_serve(ctx, serve);
        if (*c_export) return cmd_export(ctx, export_manifest, export_out);
    } catch (const ValidationError& e) {
        err << "forge: invalid value at " << e.field() << ": " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        err << "forge: " << e.what() << "\n";
        return kExitError;
    }
    return kExitUsage;
}

} // namespace forge
