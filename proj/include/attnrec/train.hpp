#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>
#include <vector>

#include <json.hpp>

#include "attnrec/eval.hpp"
#include "attnrec/model.hpp"
#include "attnrec/optim.hpp"

namespace attnrec {

struct TrainConfig {
    int batch_size = 16;       // the paper-scale value (128) remains expressible
    float base_lr = 0.005f;
    float decay_factor = 0.1f;
    int decay_every = 10000;
    int max_steps = 5000;
    float clip_norm = 5.0f;
    std::uint64_t seed = 1;
    int eval_every = 200;
    int workers = 1;

    void validate() const {
        if (batch_size < 1 || max_steps < 0 || decay_every < 1 || eval_every < 1 || workers < 1)
            throw ConfigError("TrainConfig: non-positive field");
        if (!(base_lr > 0.0f) || !(clip_norm > 0.0f))
            throw ConfigError("TrainConfig: base_lr and clip_norm must be positive");
    }
};

struct CheckpointMeta {
    int version = 1;
    nlohmann::json model_config;
    nlohmann::json train_config;
    std::int64_t step = 0;
    std::vector<std::pair<std::int64_t, double>> metric_history;  // (step, val mAP)
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
    return {{"hidden_dim", c.hidden_dim},
            {"embed_dim", c.embed_dim},
            {"attn_hidden", c.attn_hidden},
            {"num_classes", c.num_classes},
            {"has_negative_class", c.has_negative_class},
            {"tau", c.tau},
            {"mode", mode_name(c.mode)},
            {"d_frame", c.d_frame},
            {"d_app", c.d_app},
            {"levels", c.levels},
            {"clip_score_last_frame", c.clip_score_last_frame}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.attn_hidden = j.at("attn_hidden").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.has_negative_class = j.at("has_negative_class").get<bool>();
    c.tau = j.at("tau").get<float>();
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.d_frame = j.at("d_frame").get<int>();
    c.d_app = j.at("d_app").get<int>();
    c.levels = j.at("levels").get<std::vector<int>>();
    c.clip_score_last_frame = j.at("clip_score_last_frame").get<bool>();
    return c;
}

// Manifest: UTF-8 JSON at <path>, listing (name, shape, byte offset) per
// tensor. Blob: little-endian float32 at <path>.bin, tensors concatenated in
// manifest order.
inline void save_checkpoint(const ParamMap& params, const CheckpointMeta& meta,
                            const std::string& path) {
    std::string blob_path = path + ".bin";
    nlohmann::json manifest;
    manifest["version"] = meta.version;
    manifest["model_config"] = meta.model_config;
    manifest["train_config"] = meta.train_config;
    manifest["step"] = meta.step;
    nlohmann::json hist = nlohmann::json::array();
    for (auto& [s, m] : meta.metric_history) hist.push_back({{"step", s}, {"map", m}});
    manifest["metric_history"] = hist;
    manifest["blob"] = std::filesystem::path(blob_path).filename().string();

    nlohmann::json tensors = nlohmann::json::array();
    std::int64_t offset = 0;
    for (const auto& [name, t] : params) {
        tensors.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
        offset += t.numel() * static_cast<std::int64_t>(sizeof(float));
    }
    manifest["tensors"] = tensors;

    std::ofstream mf(path, std::ios::binary);
    if (!mf) throw IoError("save_checkpoint: cannot open '" + path + "'");
    mf << manifest.dump(2) << "\n";

    std::ofstream bf(blob_path, std::ios::binary);
    if (!bf) throw IoError("save_checkpoint: cannot open '" + blob_path + "'");
    for (const auto& [name, t] : params)
        bf.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!bf) throw IoError("save_checkpoint: blob write failed");
}

inline std::pair<ParamMap, CheckpointMeta> load_checkpoint(const std::string& path) {
    std::ifstream mf(path, std::ios::binary);
    if (!mf) throw IoError("load_checkpoint: cannot open '" + path + "'");
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(1, std::string("bad checkpoint manifest: ") + e.what());
    }
    CheckpointMeta meta;
    meta.version = manifest.at("version").get<int>();
    if (meta.version != 1)
        throw VersionMismatchError("load_checkpoint: unsupported version " +
                                   std::to_string(meta.version));
    meta.model_config = manifest.at("model_config");
    meta.train_config = manifest.value("train_config", nlohmann::json::object());
    meta.step = manifest.at("step").get<std::int64_t>();
    for (const auto& h : manifest.value("metric_history", nlohmann::json::array()))
        meta.metric_history.emplace_back(h.at("step").get<std::int64_t>(),
                                         h.at("map").get<double>());

    ModelConfig cfg = model_config_from_json(meta.model_config);
    ParamMap expected = init_params(cfg, 0);

    std::string blob_path =
        (std::filesystem::path(path).parent_path() / manifest.at("blob").get<std::string>())
            .string();
    std::ifstream bf(blob_path, std::ios::binary | std::ios::ate);
    if (!bf) throw IoError("load_checkpoint: cannot open blob '" + blob_path + "'");
    std::int64_t blob_size = static_cast<std::int64_t>(bf.tellg());
    bf.seekg(0);

    ParamMap params;
    std::int64_t expected_end = 0;
    for (const auto& jt : manifest.at("tensors")) {
        std::string name = jt.at("name").get<std::string>();
        std::vector<int> shape = jt.at("shape").get<std::vector<int>>();
        std::int64_t offset = jt.at("offset").get<std::int64_t>();
        auto eit = expected.find(name);
        if (eit == expected.end() || eit->second.shape != shape)
            throw ShapeMismatchError("load_checkpoint: tensor '" + name +
                                     "' does not match the model config shape table");
        Tensor t = Tensor::zeros(shape);
        std::int64_t bytes = t.numel() * static_cast<std::int64_t>(sizeof(float));
        if (offset + bytes > blob_size)
            throw TruncatedBlobError("load_checkpoint: blob truncated (tensor '" + name + "')");
        bf.seekg(offset);
        bf.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(bytes));
        if (!bf) throw TruncatedBlobError("load_checkpoint: short read for tensor '" + name + "'");
        params.emplace(name, std::move(t));
        expected_end = std::max(expected_end, offset + bytes);
    }
    for (const auto& [name, t] : expected)
        if (!params.count(name))
            throw ShapeMismatchError("load_checkpoint: missing tensor '" + name + "'");
    return {std::move(params), std::move(meta)};
}

namespace detail {

// Mean of per-clip gradients; reduction is in clip-index order regardless of
// worker count, so results are reproducible.
inline std::pair<ParamMap, double> batch_gradients(const std::vector<Clip>& clips,
                                                   const std::vector<const Clip*>& batch,
                                                   const ParamMap& params, const ModelConfig& cfg,
                                                   int workers) {
    (void)clips;
    std::vector<ParamMap> per_clip(batch.size());
    std::vector<double> losses(batch.size(), 0.0);
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            ForwardTrace t = forward(*batch[i], params, cfg);
            losses[i] = clip_loss(t, batch[i]->label, cfg);
            per_clip[i] = backward(t);
        }
    };
    if (workers <= 1 || batch.size() <= 1) {
        work(0, batch.size());
    } else {
        std::vector<std::thread> pool;
        std::size_t chunk = (batch.size() + workers - 1) / static_cast<std::size_t>(workers);
        for (std::size_t b = 0; b < batch.size(); b += chunk)
            pool.emplace_back(work, b, std::min(batch.size(), b + chunk));
        for (auto& th : pool) th.join();
    }
    ParamMap mean;
    double loss = 0.0;
    float inv = 1.0f / static_cast<float>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (!std::isfinite(losses[i]))
            throw TrainingError("train: non-finite loss on clip '" + batch[i]->clip_id + "'");
        loss += losses[i];
        for (auto& [name, g] : per_clip[i]) {
            auto [it, inserted] = mean.try_emplace(name, Tensor::zeros(g.shape));
            for (std::size_t j = 0; j < g.data.size(); ++j) it->second.data[j] += g.data[j];
        }
    }
    scale_all(mean, inv);
    return {std::move(mean), loss * inv};
}

}  // namespace detail

struct TrainResult {
    ParamMap best_params;
    CheckpointMeta meta;
    std::vector<double> loss_curve;  // mean batch loss per step
    double best_val_map = -1.0;
    std::int64_t best_step = 0;
};

using TrainLogger = std::function<void(std::int64_t step, double loss, double val_map)>;

// Seeded epoch shuffling, mean batch gradients, global-norm clipping, RMSProp
// with the piecewise-constant schedule; keeps the checkpoint with the best
// validation mAP.
inline TrainResult train(const std::vector<Clip>& train_clips, const std::vector<Clip>& val_clips,
                         const ModelConfig& cfg, const TrainConfig& tc,
                         const TrainLogger& log = nullptr) {
    tc.validate();
    cfg.validate();
    if (train_clips.empty() || val_clips.empty())
        throw ValidationError("train: empty dataset");

    ParamMap params = init_params(cfg, tc.seed);
    RmsPropState opt;
    opt.schedule = {tc.base_lr, tc.decay_factor, tc.decay_every};

    TrainResult res;
    auto evaluate = [&](std::int64_t step) {
        EvalReport rep = classify_eval(params, cfg, val_clips);
        res.meta.metric_history.emplace_back(step, rep.map);
        if (rep.map > res.best_val_map) {
            res.best_val_map = rep.map;
            res.best_params = params;
            res.best_step = step;
        }
        return rep.map;
    };
    evaluate(0);

    auto rng = make_rng(tc.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<const Clip*> order;
    for (const auto& c : train_clips) order.push_back(&c);
    std::size_t cursor = order.size();  // forces a shuffle on first use

    for (int step = 1; step <= tc.max_steps; ++step) {
        std::vector<const Clip*> batch;
        while (static_cast<int>(batch.size()) < tc.batch_size) {
            if (cursor >= order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            batch.push_back(order[cursor++]);
        }
        auto [grads, loss] = detail::batch_gradients(train_clips, batch, params, cfg, tc.workers);
        clip_global_norm(grads, tc.clip_norm);
        rmsprop_apply(params, grads, opt);
        res.loss_curve.push_back(loss);

        double val_map = -1.0;
        if (step % tc.eval_every == 0 || step == tc.max_steps) val_map = evaluate(step);
        if (log) log(step, loss, val_map);
    }
    if (res.best_val_map < 0) {  // max_steps == 0
        res.best_params = params;
    }
    res.meta.version = 1;
    res.meta.model_config = model_config_to_json(cfg);
    res.meta.train_config = {{"batch_size", tc.batch_size}, {"base_lr", tc.base_lr},
                             {"decay_factor", tc.decay_factor}, {"decay_every", tc.decay_every},
                             {"max_steps", tc.max_steps},     {"clip_norm", tc.clip_norm},
                             {"seed", tc.seed},               {"eval_every", tc.eval_every},
                             {"workers", tc.workers}};
    res.meta.step = res.best_step;
    return res;
}

}  // namespace attnrec
