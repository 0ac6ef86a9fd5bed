// Command-line pipeline: synthesize data, link tracks, train, and run the
// classification / detection / attention evaluations.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "attnrec/eval.hpp"
#include "attnrec/io.hpp"
#include "attnrec/tracker.hpp"
#include "attnrec/train.hpp"

namespace {

using namespace attnrec;
using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitValidation = 4;

void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed,
                         const std::string& section) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ConfigError("config section '" + section + "': unknown key '" + it.key() + "'");
    }
}

struct RunConfig {
    SynthConfig synth;
    int train_clips = 500;
    int val_clips = 100;
    int test_clips = 100;
    double timeline_minutes = 0.0;

    ModelConfig model;  // d_frame/d_app/levels are overwritten from dataset headers
    TrainConfig train;
    TrackerParams tracker;

    int heatmap_grid = 12;
    int heatmap_phases = 3;
    double stride = 2.0;

    json resolved;  // echoed into every report
};

RunConfig load_config(const std::string& path) {
    RunConfig rc;
    rc.model.hidden_dim = 32;
    rc.model.embed_dim = 32;
    rc.model.attn_hidden = 32;
    json j = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file '" + path + "'");
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
    }
    reject_unknown_keys(j, {"synth", "model", "train", "tracker", "eval"}, "<root>");
    if (j.contains("synth")) {
        const json& s = j["synth"];
        reject_unknown_keys(s,
                            {"k", "t", "n_min", "n_max", "d_app", "d_frame", "levels",
                             "signal_strength", "noise_sigma", "active_start", "active_end",
                             "cue_leak", "box_jitter", "p_empty_frame", "fps", "seed",
                             "train_clips", "val_clips", "test_clips", "timeline_minutes"},
                            "synth");
        auto& c = rc.synth;
        c.k = s.value("k", c.k);
        c.t = s.value("t", c.t);
        c.n_min = s.value("n_min", c.n_min);
        c.n_max = s.value("n_max", c.n_max);
        c.d_app = s.value("d_app", c.d_app);
        c.d_frame = s.value("d_frame", c.d_frame);
        if (s.contains("levels")) c.levels = s["levels"].get<std::vector<int>>();
        c.signal_strength = s.value("signal_strength", c.signal_strength);
        c.noise_sigma = s.value("noise_sigma", c.noise_sigma);
        c.active_start = s.value("active_start", c.active_start);
        c.active_end = s.value("active_end", c.active_end);
        c.cue_leak = s.value("cue_leak", c.cue_leak);
        c.box_jitter = s.value("box_jitter", c.box_jitter);
        c.p_empty_frame = s.value("p_empty_frame", c.p_empty_frame);
        c.fps = s.value("fps", c.fps);
        c.seed = s.value("seed", c.seed);
        rc.train_clips = s.value("train_clips", rc.train_clips);
        rc.val_clips = s.value("val_clips", rc.val_clips);
        rc.test_clips = s.value("test_clips", rc.test_clips);
        rc.timeline_minutes = s.value("timeline_minutes", rc.timeline_minutes);
    }
    if (j.contains("model")) {
        const json& m = j["model"];
        reject_unknown_keys(m,
                            {"hidden_dim", "embed_dim", "attn_hidden", "tau", "mode",
                             "clip_score_last_frame", "has_negative_class"},
                            "model");
        rc.model.hidden_dim = m.value("hidden_dim", rc.model.hidden_dim);
        rc.model.embed_dim = m.value("embed_dim", rc.model.embed_dim);
        rc.model.attn_hidden = m.value("attn_hidden", rc.model.attn_hidden);
        rc.model.tau = m.value("tau", rc.model.tau);
        if (m.contains("mode")) rc.model.mode = parse_mode(m["mode"].get<std::string>());
        rc.model.clip_score_last_frame =
            m.value("clip_score_last_frame", rc.model.clip_score_last_frame);
        rc.model.has_negative_class = m.value("has_negative_class", rc.model.has_negative_class);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        reject_unknown_keys(t,
                            {"batch_size", "base_lr", "decay_factor", "decay_every", "max_steps",
                             "clip_norm", "seed", "eval_every", "workers"},
                            "train");
        rc.train.batch_size = t.value("batch_size", rc.train.batch_size);
        rc.train.base_lr = t.value("base_lr", rc.train.base_lr);
        rc.train.decay_factor = t.value("decay_factor", rc.train.decay_factor);
        rc.train.decay_every = t.value("decay_every", rc.train.decay_every);
        rc.train.max_steps = t.value("max_steps", rc.train.max_steps);
        rc.train.clip_norm = t.value("clip_norm", rc.train.clip_norm);
        rc.train.seed = t.value("seed", rc.train.seed);
        rc.train.eval_every = t.value("eval_every", rc.train.eval_every);
        rc.train.workers = t.value("workers", rc.train.workers);
    }
    if (j.contains("tracker")) {
        const json& t = j["tracker"];
        reject_unknown_keys(t, {"w_iou", "w_app", "gate_radius", "accept_threshold", "max_gap"},
                            "tracker");
        rc.tracker.w_iou = t.value("w_iou", rc.tracker.w_iou);
        rc.tracker.w_app = t.value("w_app", rc.tracker.w_app);
        rc.tracker.gate_radius = t.value("gate_radius", rc.tracker.gate_radius);
        rc.tracker.accept_threshold = t.value("accept_threshold", rc.tracker.accept_threshold);
        rc.tracker.max_gap = t.value("max_gap", rc.tracker.max_gap);
    }
    if (j.contains("eval")) {
        const json& e = j["eval"];
        reject_unknown_keys(e, {"heatmap_grid", "heatmap_phases", "stride"}, "eval");
        rc.heatmap_grid = e.value("heatmap_grid", rc.heatmap_grid);
        rc.heatmap_phases = e.value("heatmap_phases", rc.heatmap_phases);
        rc.stride = e.value("stride", rc.stride);
    }
    rc.resolved = j;
    return rc;
}

json resolved_config_json(const RunConfig& rc) {
    json s = {{"k", rc.synth.k},
              {"t", rc.synth.t},
              {"n_min", rc.synth.n_min},
              {"n_max", rc.synth.n_max},
              {"d_app", rc.synth.d_app},
              {"d_frame", rc.synth.d_frame},
              {"levels", rc.synth.levels},
              {"signal_strength", rc.synth.signal_strength},
              {"noise_sigma", rc.synth.noise_sigma},
              {"active_start", rc.synth.active_start},
              {"active_end", rc.synth.active_end},
              {"cue_leak", rc.synth.cue_leak},
              {"box_jitter", rc.synth.box_jitter},
              {"p_empty_frame", rc.synth.p_empty_frame},
              {"fps", rc.synth.fps},
              {"seed", rc.synth.seed},
              {"train_clips", rc.train_clips},
              {"val_clips", rc.val_clips},
              {"test_clips", rc.test_clips},
              {"timeline_minutes", rc.timeline_minutes}};
    json t = {{"batch_size", rc.train.batch_size}, {"base_lr", rc.train.base_lr},
              {"decay_factor", rc.train.decay_factor}, {"decay_every", rc.train.decay_every},
              {"max_steps", rc.train.max_steps},     {"clip_norm", rc.train.clip_norm},
              {"seed", rc.train.seed},               {"eval_every", rc.train.eval_every},
              {"workers", rc.train.workers}};
    json tr = {{"w_iou", rc.tracker.w_iou},
               {"w_app", rc.tracker.w_app},
               {"gate_radius", rc.tracker.gate_radius},
               {"accept_threshold", rc.tracker.accept_threshold},
               {"max_gap", rc.tracker.max_gap}};
    json e = {{"heatmap_grid", rc.heatmap_grid},
              {"heatmap_phases", rc.heatmap_phases},
              {"stride", rc.stride}};
    return {{"synth", s}, {"model", model_config_to_json(rc.model)}, {"train", t},
            {"tracker", tr}, {"eval", e}};
}

void write_json_report(const json& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report '" + path + "'");
    out << report.dump(2) << "\n";
    std::cout << path << "\n";
}

ModelConfig model_config_for(const RunConfig& rc, const DatasetHeader& header) {
    ModelConfig mc = rc.model;
    mc.d_frame = header.d_frame;
    mc.d_app = header.d_app;
    mc.levels = rc.synth.levels;
    if (spatial_dim(mc.levels) != header.d_sp)
        throw ConfigError("configured pyramid levels give d_sp " +
                          std::to_string(spatial_dim(mc.levels)) + " but dataset header says " +
                          std::to_string(header.d_sp));
    mc.num_classes = mc.has_negative_class ? header.k + 1 : header.k;
    return mc;
}

json eval_report_json(const EvalReport& rep) {
    json per = json::object();
    for (auto& [name, ap] : rep.per_class) per[name] = ap;
    return {{"per_class", per}, {"map", rep.map}, {"skipped", rep.skipped}};
}

int cmd_synth(const RunConfig& rc, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    DatasetHeader header = make_header(rc.synth);
    struct Split {
        const char* name;
        int count;
        std::uint64_t seed_offset;
    };
    std::map<int, int> histogram;
    for (Split split : {Split{"train", rc.train_clips, 0}, Split{"val", rc.val_clips, 101},
                        Split{"test", rc.test_clips, 202}}) {
        SynthConfig cfg = rc.synth;
        cfg.seed = rc.synth.seed + split.seed_offset;
        auto clips = synth_dataset(cfg, split.count);
        for (const auto& c : clips) histogram[c.label]++;
        std::string path = (std::filesystem::path(out_dir) / (std::string(split.name) + ".jsonl")).string();
        write_dataset(clips, header, path);
        std::cout << path << "\n";
    }
    if (rc.timeline_minutes > 0) {
        SynthConfig cfg = rc.synth;
        cfg.seed = rc.synth.seed + 303;
        Clip tl = synth_timeline(cfg, rc.timeline_minutes * 60.0);
        std::string path = (std::filesystem::path(out_dir) / "timeline.jsonl").string();
        write_dataset({tl}, header, path);
        std::cout << path << "\n";
    }
    std::cerr << "class histogram:";
    for (auto& [k, n] : histogram) std::cerr << " " << k << ":" << n;
    std::cerr << "\n";
    return 0;
}

int cmd_track(const RunConfig& rc, const std::string& in_path, const std::string& out_path) {
    DatasetHeader header;
    auto clips = read_dataset(in_path, &header);
    std::size_t tracks_total = 0;
    double agreement_sum = 0.0;
    int agreement_n = 0;
    for (auto& clip : clips) {
        auto tracks = link_tracks(clip, rc.tracker);
        tracks_total += tracks.size();
        double a = track_gt_agreement(clip);
        agreement_sum += a;
        ++agreement_n;
    }
    write_dataset(clips, header, out_path);
    std::cerr << "tracks: " << tracks_total;
    if (agreement_n > 0) std::cerr << "  gt-agreement: " << agreement_sum / agreement_n;
    std::cerr << "\n";
    std::cout << out_path << "\n";
    return 0;
}

// Trains every mode with identical data and seed and writes one comparative
// table instead of a checkpoint.
int cmd_ablate(const RunConfig& rc, const std::string& data_path, const std::string& val_path,
               const std::string& out_path) {
    DatasetHeader header;
    auto train_clips = read_dataset(data_path, &header);
    auto val_clips = read_dataset(val_path);
    json table = json::object();
    for (Mode mode : {Mode::FrameOnly, Mode::OnlyPlayer, Mode::AvgPlayer, Mode::AttnNoTrack,
                      Mode::AttnTrack}) {
        RunConfig mode_rc = rc;
        mode_rc.model.mode = mode;
        ModelConfig mc = model_config_for(mode_rc, header);
        TrainResult res = train(train_clips, val_clips, mc, mode_rc.train);
        table[mode_name(mode)] = {{"best_val_map", res.best_val_map},
                                  {"best_step", res.best_step}};
        std::cerr << mode_name(mode) << " best val mAP " << res.best_val_map << "\n";
    }
    json report = {{"ablation", table}, {"config", resolved_config_json(rc)}};
    write_json_report(report, out_path);
    return 0;
}

int cmd_train(const RunConfig& rc, const std::string& data_path, const std::string& val_path,
              const std::string& out_path) {
    DatasetHeader header;
    auto train_clips = read_dataset(data_path, &header);
    auto val_clips = read_dataset(val_path);
    ModelConfig mc = model_config_for(rc, header);
    auto log = [](std::int64_t step, double loss, double val_map) {
        if (step % 50 == 0 || val_map >= 0) {
            std::cerr << "step " << step << " loss " << loss;
            if (val_map >= 0) std::cerr << " val_map " << val_map;
            std::cerr << "\n";
        }
    };
    TrainResult res = train(train_clips, val_clips, mc, rc.train, log);
    res.meta.train_config["resolved_config"] = resolved_config_json(rc);
    save_checkpoint(res.best_params, res.meta, out_path);
    std::cerr << "best val mAP " << res.best_val_map << " at step " << res.best_step << "\n";
    std::cout << out_path << "\n";
    return 0;
}

int cmd_eval_classify(const RunConfig& rc, const std::string& ckpt_path,
                      const std::string& data_path, const std::string& out_path) {
    auto [params, meta] = load_checkpoint(ckpt_path);
    ModelConfig mc = model_config_from_json(meta.model_config);
    auto clips = read_dataset(data_path);
    EvalReport rep = classify_eval(params, mc, clips);
    json report = eval_report_json(rep);
    report["config"] = resolved_config_json(rc);
    report["checkpoint"] = ckpt_path;
    write_json_report(report, out_path);
    return 0;
}

int cmd_detect(const RunConfig& rc, const std::string& ckpt_path, const std::string& timeline_path,
               const std::string& out_path, const std::string& windows_out) {
    DatasetHeader header;
    auto clips = read_dataset(timeline_path, &header);
    if (clips.size() != 1 || clips[0].events.empty())
        throw ValidationError("detect: expected a single timeline clip with ground-truth events");
    const Clip& timeline = clips[0];

    if (!windows_out.empty()) {
        auto windows = extract_windows(timeline, rc.stride);
        write_dataset(windows, header, windows_out);
        std::cerr << "windows: " << windows.size() << "\n";
    }
    if (ckpt_path.empty()) {
        if (windows_out.empty())
            throw ConfigError("detect: need --ckpt to score, or --windows-out to materialize");
        std::cout << windows_out << "\n";
        return 0;
    }
    auto [params, meta] = load_checkpoint(ckpt_path);
    ModelConfig mc = model_config_from_json(meta.model_config);
    if (!mc.has_negative_class)
        throw ValidationError("detect: checkpoint was not trained with a negative class");
    auto windows = sliding_detect(timeline, params, mc, rc.stride);
    EvalReport rep = detect_eval(windows, mc.num_classes - 1);
    json report = eval_report_json(rep);
    report["num_windows"] = windows.size();
    report["config"] = resolved_config_json(rc);
    report["checkpoint"] = ckpt_path;
    write_json_report(report, out_path);
    return 0;
}

int cmd_eval_attention(const RunConfig& rc, const std::string& ckpt_path,
                       const std::string& data_path, const std::string& out_path) {
    auto [params, meta] = load_checkpoint(ckpt_path);
    ModelConfig mc = model_config_from_json(meta.model_config);
    auto clips = read_dataset(data_path);
    ShooterReport rep = shooter_eval(params, mc, clips);
    json per = json::object();
    for (auto& [name, ap] : rep.per_class) per[name] = ap;
    json report = {{"per_class", per},
                   {"mean", rep.mean},
                   {"chance_mean", rep.chance_mean},
                   {"frames_evaluated", rep.frames_evaluated},
                   {"config", resolved_config_json(rc)},
                   {"checkpoint", ckpt_path}};
    write_json_report(report, out_path);
    return 0;
}

int cmd_heatmap(const RunConfig& rc, const std::string& ckpt_path, const std::string& data_path,
                const std::string& court_points_path, const std::string& out_path) {
    auto [params, meta] = load_checkpoint(ckpt_path);
    ModelConfig mc = model_config_from_json(meta.model_config);
    auto clips = read_dataset(data_path);
    Homography h = Homography::identity();
    if (!court_points_path.empty()) {
        std::ifstream in(court_points_path);
        if (!in) throw IoError("cannot open court points '" + court_points_path + "'");
        json jp;
        in >> jp;
        std::vector<PointPair> pairs;
        for (const auto& p : jp)
            pairs.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>(),
                             p[3].get<double>()});
        h = homography_dlt(pairs);
        std::cerr << "homography reprojection RMS " << h.reprojection_rms << "\n";
    }
    std::vector<Homography> hs(clips.size(), h);
    auto grids = heatmap(params, mc, clips, hs, rc.heatmap_grid, rc.heatmap_phases);
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write heatmap CSV '" + out_path + "'");
    out << "class,phase,gx,gy,mass\n";
    for (const auto& g : grids)
        for (int gy = 0; gy < g.grid; ++gy)
            for (int gx = 0; gx < g.grid; ++gx)
                out << g.class_k << "," << g.phase << "," << gx << "," << gy << ","
                    << g.mass[static_cast<std::size_t>(gy) * g.grid + gx] << "\n";
    std::cout << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attention-based multi-person event recognition pipeline"};
    app.require_subcommand(1);

    std::string config_path, out, out_dir, in_path, data_path, val_path, ckpt_path, timeline_path,
        windows_out, court_points, mode_flag;
    std::optional<std::uint64_t> seed_flag;
    std::optional<int> workers_flag;

    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed_flag, "override synth/train seed");
    app.add_option("--workers", workers_flag, "worker threads (default 1, deterministic)");
    app.add_option("--mode", mode_flag,
                   "model mode: frame-only|only-player|avg-player|attn-no-track|attn-track");

    auto* synth = app.add_subcommand("synth", "generate train/val/test splits (and timeline)");
    synth->add_option("--out-dir", out_dir, "output directory")->required();

    auto* track = app.add_subcommand("track", "assign track ids by bipartite matching");
    track->add_option("--in", in_path, "input dataset")->required();
    track->add_option("--out", out, "output dataset")->required();

    bool ablate = false;
    auto* tr = app.add_subcommand("train", "train a model");
    tr->add_option("--data", data_path, "training dataset")->required();
    tr->add_option("--val", val_path, "validation dataset")->required();
    tr->add_option("--out", out, "checkpoint path (comparative JSON table with --ablate)")
        ->required();
    tr->add_flag("--ablate", ablate, "train all five modes and emit one comparative table");

    auto* ec = app.add_subcommand("eval-classify", "clip classification mAP");
    ec->add_option("--ckpt", ckpt_path, "checkpoint")->required();
    ec->add_option("--data", data_path, "labeled clips")->required();
    ec->add_option("--out", out, "JSON report path")->required();

    auto* dt = app.add_subcommand("detect", "sliding-window detection on a timeline");
    dt->add_option("--ckpt", ckpt_path, "checkpoint (trained with negative class)");
    dt->add_option("--timeline", timeline_path, "timeline dataset")->required();
    dt->add_option("--out", out, "JSON report path");
    dt->add_option("--windows-out", windows_out, "materialize labeled windows as a dataset");

    auto* ea = app.add_subcommand("eval-attention", "key-actor (shooter) mAP from attention");
    ea->add_option("--ckpt", ckpt_path, "checkpoint")->required();
    ea->add_option("--data", data_path, "clips with ball annotations")->required();
    ea->add_option("--out", out, "JSON report path")->required();

    auto* hm = app.add_subcommand("heatmap", "court-aligned attention heatmaps (CSV)");
    hm->add_option("--ckpt", ckpt_path, "checkpoint")->required();
    hm->add_option("--data", data_path, "clips")->required();
    hm->add_option("--court-points", court_points, "JSON [[x,y,u,v],...] correspondences");
    hm->add_option("--out", out, "CSV output path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig rc = load_config(config_path);
        if (seed_flag) {
            rc.synth.seed = *seed_flag;
            rc.train.seed = *seed_flag;
        }
        if (workers_flag) rc.train.workers = *workers_flag;
        if (!mode_flag.empty()) rc.model.mode = parse_mode(mode_flag);

        if (synth->parsed()) return cmd_synth(rc, out_dir);
        if (track->parsed()) return cmd_track(rc, in_path, out);
        if (tr->parsed())
            return ablate ? cmd_ablate(rc, data_path, val_path, out)
                          : cmd_train(rc, data_path, val_path, out);
        if (ec->parsed()) return cmd_eval_classify(rc, ckpt_path, data_path, out);
        if (dt->parsed()) {
            if (!ckpt_path.empty() && out.empty())
                throw ConfigError("detect: --out required when scoring with --ckpt");
            return cmd_detect(rc, ckpt_path, timeline_path, out, windows_out);
        }
        if (ea->parsed()) return cmd_eval_attention(rc, ckpt_path, data_path, out);
        if (hm->parsed()) return cmd_heatmap(rc, ckpt_path, data_path, court_points, out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const DimensionError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
