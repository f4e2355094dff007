// showme: data generation, staged training, sampling, evaluation and curation.

#include "showme/config.hpp"
#include "showme/image_io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace fs = std::filesystem;
using namespace showme;

namespace {

struct Options {
    std::string config_file;
    std::vector<std::string> overrides;
    bool force = false;
    std::string stage;
    bool resume = false;
    int64_t stop_after = -1;
    std::string init, output, checkpoint, mode = "image", input, task, dataset;
    int64_t action = -1, test_index = -1;
    int64_t seed = -1;
    double threshold = -1;
};

RunConfig resolve(const Options& o) {
    RunConfig cfg;
    if (!o.config_file.empty()) cfg.load_file(o.config_file);
    for (const auto& a : o.overrides) {
        if (a.rfind("--", 0) != 0 || a.find('.') == std::string::npos) fail(ErrorKind::usage, "unexpected argument '" + a + "'");
        cfg.apply_override(a);
    }
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) { return TensorArchive::read_file(path); }

std::string file_hash(const fs::path& path) { return git_blob_hash(read_text(path)); }

// ---- datasets ---------------------------------------------------------------

fs::path split_dir(const RunConfig& cfg, const std::string& split) { return cfg.dataset_dir() / split; }

std::vector<synth::SyntheticSample> load_split(const RunConfig& cfg, const fs::path& dir) {
    const auto fp = dir / "fingerprint.txt";
    if (!fs::exists(fp)) fail(ErrorKind::prerequisite, "dataset " + dir.string() + " not found; run gen-data first");
    auto stored = read_text(fp);
    while (!stored.empty() && (stored.back() == '\n' || stored.back() == '\r')) stored.pop_back();
    if (stored != cfg.data_fingerprint())
        fail(ErrorKind::prerequisite, "dataset " + dir.string() + " has data fingerprint " + stored + ", config expects " +
                                          cfg.data_fingerprint());
    return data::read_dataset(dir);
}

int cmd_gen_data(const Options& o) {
    const auto cfg = resolve(o);
    const auto train_count = cfg.integer("data.train_count"), test_count = cfg.integer("data.test_count");
    if (train_count <= 0 || test_count <= 0) fail(ErrorKind::usage, "data.train_count and data.test_count must be positive");
    const auto H = static_cast<int>(cfg.integer("data.height")), W = static_cast<int>(cfg.integer("data.width"));
    const auto L = static_cast<int>(cfg.integer("data.frames"));
    const auto dir = cfg.dataset_dir();
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!o.force) fail(ErrorKind::usage, "dataset directory " + dir.string() + " is not empty; pass --force to regenerate");
        fs::remove_all(dir);
    }
    for (const auto& [split, count, seed] : {std::tuple{"train", train_count, cfg.integer("data.seed")},
                                             std::tuple{"test", test_count, cfg.integer("data.test_seed")}}) {
        const auto out = split_dir(cfg, split);
        data::write_dataset(data::generate_split(static_cast<size_t>(count), static_cast<uint64_t>(seed), H, W, L), out);
        write_text(out / "fingerprint.txt", cfg.data_fingerprint() + "\n");
        std::cout << split << ": " << count << " samples, manifest " << file_hash(out / "manifest.txt") << "\n";
    }
    write_text(dir / "config.txt", cfg.dump("data."));
    return 0;
}

// ---- training -----------------------------------------------------------------

fs::path depth_path(const RunConfig& cfg) { return cfg.checkpoint_dir() / "depth.ckpt"; }
fs::path encoder_path(const RunConfig& cfg) { return cfg.checkpoint_dir() / "encoder.ckpt"; }
fs::path stage_path(const RunConfig& cfg, const std::string& stage) { return cfg.checkpoint_dir() / (stage + ".ckpt"); }

rewards::DepthNet require_depth(const RunConfig& cfg) {
    const auto p = depth_path(cfg);
    if (!fs::exists(p)) fail(ErrorKind::prerequisite, "depth reward checkpoint " + p.string() + " missing; run `train --stage depth`");
    return rewards::load_depth(TensorArchive::load(p), p.string(), cfg.fingerprint());
}

eval::FeatureEncoder require_encoder(const RunConfig& cfg) {
    const auto p = encoder_path(cfg);
    if (!fs::exists(p)) fail(ErrorKind::prerequisite, "feature encoder checkpoint " + p.string() + " missing; run `train --stage encoder`");
    return eval::load_encoder(TensorArchive::load(p), p.string(), cfg.fingerprint());
}

torch::Tensor stack_field(const std::vector<synth::SyntheticSample>& v, bool depth) {
    std::vector<torch::Tensor> out;
    for (const auto& s : v) out.push_back(depth ? s.depth : s.frames);
    return torch::stack(out).flatten(0, 1);
}

std::string loss_log(const std::vector<train::LossRecord>& trace) {
    std::string out = "# step noise depth edge motion total\n";
    char buf[256];
    for (size_t i = 0; i < trace.size(); ++i) {
        const auto& r = trace[i];
        std::snprintf(buf, sizeof buf, "%zu %.17g %.17g %.17g %.17g %.17g\n", i + 1, r.noise, r.depth, r.edge, r.motion, r.total);
        out += buf;
    }
    return out;
}

/// Moving average used for the loss-curve figure.
std::vector<double> smooth(const std::vector<double>& v, size_t window) {
    std::vector<double> out;
    double acc = 0;
    for (size_t i = 0; i < v.size(); ++i) {
        acc += v[i];
        if (i >= window) acc -= v[i - window];
        out.push_back(acc / static_cast<double>(std::min(i + 1, window)));
    }
    return out;
}

int cmd_train(const Options& o) {
    const auto cfg = resolve(o);
    const auto stage = o.stage.empty() ? cfg.str("trainer.stage") : o.stage;
    const auto fingerprint = cfg.fingerprint();
    fs::create_directories(cfg.checkpoint_dir());

    if (stage == "depth" || stage == "encoder") {
        const auto train_s = load_split(cfg, split_dir(cfg, "train"));
        const auto out = o.output.empty() ? (stage == "depth" ? depth_path(cfg) : encoder_path(cfg)) : fs::path(o.output);
        TensorArchive ar;
        if (stage == "depth") {
            const auto test_s = load_split(cfg, split_dir(cfg, "test"));
            const auto dc = cfg.depth_training();
            torch::manual_seed(dc.seed);
            rewards::DepthNet net;
            const auto rep = rewards::train_depth_reward(net, stack_field(train_s, false), stack_field(train_s, true),
                                                         stack_field(test_s, false), stack_field(test_s, true), dc);
            rewards::save_depth(ar, net, fingerprint);
            std::printf("depth reward: held-out MAE %.6f -> %.6f\n", rep.initial_mae, rep.final_mae);
        } else {
            const auto ec = cfg.encoder_training();
            torch::manual_seed(ec.seed);
            eval::FeatureEncoder enc;
            const auto rep = eval::train_feature_encoder(enc, train_s, ec);
            eval::save_encoder(ar, enc, fingerprint);
            std::printf("feature encoder: action accuracy %.4f, shape accuracy %.4f\n", rep.action_accuracy, rep.shape_accuracy);
        }
        ar.save(out);
        std::cout << "wrote " << out.string() << " (" << file_hash(out) << ")\n";
        return 0;
    }

    const auto id = train::parse_stage(stage);
    const auto sc = cfg.stage(id);
    const auto setup = cfg.setup();
    auto rb = cfg.reward_bundle();
    if (id == train::StageId::s1b) rb.depth = require_depth(cfg);

    const auto out = o.output.empty() ? stage_path(cfg, stage) : fs::path(o.output);
    const fs::path partial = out.string() + ".partial";
    train::StageRun run;
    run.output = o.stop_after >= 0 ? partial : out;
    run.stop_after = o.stop_after;
    if (id != train::StageId::base) {
        const auto need = train::required_init_stage(sc);
        run.init = o.init.empty() ? stage_path(cfg, need) : fs::path(o.init);
    }
    if (o.resume) {
        if (!fs::exists(partial)) fail(ErrorKind::prerequisite, "nothing to resume: " + partial.string() + " does not exist");
        run.resume = partial;
    }
    const int64_t every = std::max<int64_t>(1, sc.steps / 10);
    run.on_step = [&](int64_t step, const train::LossRecord& r) {
        if (step % every == 0 || step == sc.steps)
            std::printf("stage %s step %lld/%lld noise %.5f depth %.5f edge %.5f motion %.5f total %.5f\n", stage.c_str(),
                        static_cast<long long>(step), static_cast<long long>(sc.steps), r.noise, r.depth, r.edge, r.motion, r.total);
    };

    const auto train_data = train::TrainingData::from(load_split(cfg, split_dir(cfg, "train")));
    const auto test_data = train::TrainingData::from(load_split(cfg, split_dir(cfg, "test")));
    const auto result = train::run_stage(sc, setup, run, train_data, test_data, rb);

    const auto logs = cfg.output_dir() / "logs";
    write_text(logs / (stage + ".log"), loss_log(result.trace));
    if (!result.eval_trace.empty()) {
        std::string ev;
        char buf[64];
        for (size_t i = 0; i < result.eval_trace.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%lld %.17g\n", static_cast<long long>((i + 1) * sc.eval_interval), result.eval_trace[i]);
            ev += buf;
        }
        write_text(logs / (stage + ".eval.log"), ev);
    }
    std::vector<double> noise, total;
    for (const auto& r : result.trace) noise.push_back(r.noise), total.push_back(r.total);
    const auto fig = cfg.output_dir() / "figures" / (stage + "_loss.ppm");
    image::write_ppm(fig, image::plot({smooth(total, 50), smooth(noise, 50)}));
    write_text(fig.string() + ".txt", "figure=loss curve (red: total, blue: noise; 50-step moving average)\nstage=" + stage +
                                          "\nsteps=" + std::to_string(result.trace.size()) + "\nfingerprint=" + fingerprint + "\n");
    if (result.complete) {
        if (run.output != out) fs::rename(run.output, out);
        std::error_code ec;
        fs::remove(partial, ec);
        std::cout << "wrote " << out.string() << " (" << file_hash(out) << ")\n";
    } else {
        std::cout << "stopped after " << result.trace.size() << " steps; resumable checkpoint " << run.output.string() << "\n";
    }
    return 0;
}

// ---- sampling -------------------------------------------------------------------

fs::path default_checkpoint(const RunConfig& cfg, bool video) { return stage_path(cfg, video ? "2" : "1b"); }

ckpt::ModelBundle load_checkpoint(const RunConfig& cfg, const fs::path& path) {
    if (!fs::exists(path)) fail(ErrorKind::prerequisite, "checkpoint " + path.string() + " does not exist");
    return ckpt::load_model(TensorArchive::load(path), path.string(), cfg.fingerprint());
}

int cmd_sample(const Options& o) {
    const auto cfg = resolve(o);
    const auto mode = pipeline::parse_mode(o.mode);
    const bool video = mode == pipeline::GenMode::video;
    const fs::path ckpt_path = o.checkpoint.empty() ? default_checkpoint(cfg, video) : fs::path(o.checkpoint);
    auto mb = load_checkpoint(cfg, ckpt_path);
    pipeline::mode_adapters(mb.model, mode);

    torch::Tensor x0;
    int64_t action = o.action;
    if (!o.input.empty()) {
        if (o.test_index >= 0) fail(ErrorKind::usage, "pass either --input or --test-index, not both");
        x0 = image::read_ppm(o.input);
        if (action < 0) fail(ErrorKind::usage, "--action is required with --input");
    } else {
        const auto test = load_split(cfg, split_dir(cfg, "test"));
        const auto idx = std::max<int64_t>(0, o.test_index);
        if (idx >= static_cast<int64_t>(test.size())) fail(ErrorKind::usage, "--test-index outside the test split");
        x0 = test[static_cast<size_t>(idx)].frames[0];
        if (action < 0) action = test[static_cast<size_t>(idx)].instruction.action;
    }
    if (action >= synth::kNumActions) fail(ErrorKind::usage, "--action must be below " + std::to_string(synth::kNumActions));
    if (x0.size(1) != cfg.integer("data.height") || x0.size(2) != cfg.integer("data.width"))
        fail(ErrorKind::shape, "input image is " + shape_str(x0) + ", config expects " + cfg.str("data.height") + "x" + cfg.str("data.width"));

    auto sc = cfg.sampler();
    if (o.seed >= 0) sc.seed = static_cast<uint64_t>(o.seed);
    const auto L = cfg.integer("data.frames");
    auto out = pipeline::generate(mb, x0.unsqueeze(0), torch::tensor({action}, torch::kLong), mode, L, sc);
    const fs::path dir = o.output.empty() ? cfg.output_dir() / "samples" / o.mode : fs::path(o.output);
    fs::create_directories(dir);
    std::vector<torch::Tensor> tiles{x0};
    if (video) {
        for (int64_t f = 0; f < L; ++f) {
            char name[32];
            std::snprintf(name, sizeof name, "frame_%02lld.ppm", static_cast<long long>(f));
            image::write_ppm(dir / name, out[0][f]);
            tiles.push_back(out[0][f]);
        }
    } else {
        image::write_ppm(dir / "target.ppm", out[0]);
        tiles.push_back(out[0]);
    }
    image::write_ppm(dir / "grid.ppm", image::grid(tiles, static_cast<int64_t>(tiles.size())));
    std::ostringstream params;
    params << "mode=" << o.mode << "\naction=" << action << " (" << synth::action_name(static_cast<synth::Action>(action))
           << ")\nseed=" << sc.seed << "\nddim_steps=" << sc.steps << "\nguidance=" << sc.guidance << "\nframes=" << (video ? L : 1)
           << "\ncheckpoint=" << ckpt_path.string() << "\ncheckpoint_hash=" << file_hash(ckpt_path)
           << "\nfingerprint=" << cfg.fingerprint() << "\n";
    write_text(dir / "params.txt", params.str());
    std::cout << "wrote " << (video ? L : 1) << " frame(s) to " << dir.string() << "\n";
    return 0;
}

// ---- evaluation -------------------------------------------------------------------

int cmd_evaluate(const Options& o) {
    const auto cfg = resolve(o);
    const auto task = o.task.empty() ? cfg.str("eval.task") : o.task;
    if (task != "manipulation" && task != "prediction")
        fail(ErrorKind::usage, "unknown evaluation task '" + task + "' (expected manipulation or prediction)");
    const bool video = task == "prediction";
    const fs::path ckpt_path = o.checkpoint.empty() ? default_checkpoint(cfg, video) : fs::path(o.checkpoint);
    auto mb = load_checkpoint(cfg, ckpt_path);
    eval::EvalContext ec;
    ec.encoder = require_encoder(cfg);
    ec.frame_reference = cfg.real("eval.frame_reference");
    ec.floor = cfg.real("rewards.floor");
    if (!video) ec.depth = require_depth(cfg);
    const auto test = train::TrainingData::from(load_split(cfg, split_dir(cfg, "test")));
    const auto sc = cfg.sampler();
    const auto L = cfg.integer("data.frames");
    torch::Tensor shown;
    auto gen = [&](const torch::Tensor& x0, const torch::Tensor& a) {
        auto out = pipeline::generate(mb, x0, a, video ? pipeline::GenMode::video : pipeline::GenMode::image, L, sc);
        shown = out;
        return out;
    };
    auto report = video ? eval::evaluate_prediction(gen, test, mb.codec, ec) : eval::evaluate_manipulation(gen, test, ec);
    report.fingerprint = cfg.fingerprint();
    report.checkpoint_hash = file_hash(ckpt_path);
    const fs::path base = cfg.str("eval.report").empty() ? cfg.output_dir() / "reports" / task : fs::path(cfg.str("eval.report"));
    report.write(base);

    std::vector<torch::Tensor> tiles;
    const auto rows = std::min<int64_t>(4, test.size());
    for (int64_t i = 0; i < rows; ++i) {
        tiles.push_back(test.frames[i][0]);
        if (video)
            for (int64_t f = 1; f < L; ++f) tiles.push_back(shown[i][f]);
        else
            tiles.push_back(shown[i]), tiles.push_back(test.frames[i][L - 1]);
    }
    const auto fig = cfg.output_dir() / "figures" / (task + "_samples.ppm");
    image::write_ppm(fig, image::grid(tiles, video ? L : 3));
    write_text(fig.string() + ".txt", std::string("figure=") + (video ? "input frame then predicted frames, one clip per row" :
                                                                          "input, generated target, ground-truth target per row") +
                                          "\ncheckpoint_hash=" + report.checkpoint_hash + "\nfingerprint=" + report.fingerprint + "\n");
    std::cout << report.table();
    std::cout << "wrote " << base.string() << ".txt and .kv\n";
    return 0;
}

// ---- curation -------------------------------------------------------------------------

int cmd_curate(const Options& o) {
    const auto cfg = resolve(o);
    auto enc = require_encoder(cfg);
    const fs::path dir = o.dataset.empty() ? split_dir(cfg, "train") : fs::path(o.dataset);
    const double threshold = o.threshold >= 0 ? o.threshold : cfg.real("eval.threshold");
    const auto stride = cfg.integer("eval.stride");
    const auto entries = data::read_manifest(dir);
    const auto samples = load_split(cfg, dir);
    std::ostringstream body;
    int64_t kept = 0;
    char buf[256];
    for (size_t i = 0; i < samples.size(); ++i) {
        const auto r = eval::curate_clip(enc, samples[i].frames, samples[i].instruction.action, threshold, stride);
        kept += r.kept;
        std::snprintf(buf, sizeof buf, "%s %s %lld %.17g\n", entries[i].file.c_str(), r.kept ? "keep" : "reject",
                      static_cast<long long>(r.index), r.score);
        body << buf;
    }
    const auto total = static_cast<int64_t>(samples.size());
    std::ostringstream head;
    head << "showme-curation 1\nthreshold " << threshold << "\nfingerprint " << cfg.fingerprint() << "\nkept " << kept
         << "\nrejected " << total - kept << "\n";
    const fs::path out = o.output.empty() ? cfg.output_dir() / "curated_manifest.txt" : fs::path(o.output);
    write_text(out, head.str() + body.str());
    std::cout << "kept " << kept << " of " << total << " clips; rejected " << total - kept << "; wrote " << out.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    // One intra-op thread keeps reductions in a fixed order across runs.
    torch::set_num_threads(1);
    Options o;
    CLI::App app{"showme: instructional image manipulation and video prediction on a synthetic world"};
    app.require_subcommand(1);
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_file, "config file (key = value lines, [namespace] sections)");
        sub->allow_extras();
    };
    auto* gen = app.add_subcommand("gen-data", "generate the train and test splits");
    common(gen);
    gen->add_flag("--force", o.force, "replace an existing dataset directory");

    auto* trn = app.add_subcommand("train", "train one stage: depth, encoder, base, 1a, 1b or 2");
    common(trn);
    trn->add_option("--stage", o.stage, "stage to train (default trainer.stage)");
    trn->add_flag("--resume", o.resume, "continue from <output>.partial");
    trn->add_option("--stop-after", o.stop_after, "save a resumable checkpoint after this many steps");
    trn->add_option("--init", o.init, "prerequisite checkpoint (default: previous stage in the checkpoint directory)");
    trn->add_option("--output", o.output, "checkpoint to write");

    auto* smp = app.add_subcommand("sample", "generate an image or clip from a first frame and an instruction");
    common(smp);
    smp->add_option("--mode", o.mode, "image or video")->check(CLI::IsMember({"image", "video"}));
    smp->add_option("--checkpoint", o.checkpoint, "model checkpoint");
    smp->add_option("--input", o.input, "first frame as an 8-bit PPM");
    smp->add_option("--test-index", o.test_index, "take the first frame from this test sample");
    smp->add_option("--action", o.action, "instruction action id");
    smp->add_option("--seed", o.seed, "sampling seed (default eval.seed)");
    smp->add_option("--output", o.output, "output directory");

    auto* evl = app.add_subcommand("evaluate", "score a checkpoint on the test split");
    common(evl);
    evl->add_option("--task", o.task, "manipulation or prediction (default eval.task)");
    evl->add_option("--checkpoint", o.checkpoint, "model checkpoint");

    auto* cur = app.add_subcommand("curate", "dual-similarity filtering of a dataset");
    common(cur);
    cur->add_option("--dataset", o.dataset, "dataset directory (default: training split)");
    cur->add_option("--output", o.output, "manifest to write");
    cur->add_option("--threshold", o.threshold, "minimum combined score (default eval.threshold)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        for (auto* sub : app.get_subcommands()) o.overrides = sub->remaining();
        if (gen->parsed()) return cmd_gen_data(o);
        if (trn->parsed()) return cmd_train(o);
        if (smp->parsed()) return cmd_sample(o);
        if (evl->parsed()) return cmd_evaluate(o);
        if (cur->parsed()) return cmd_curate(o);
    } catch (const showme::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
