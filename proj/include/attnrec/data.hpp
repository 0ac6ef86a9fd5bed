#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "attnrec/tensor.hpp"

namespace attnrec {

constexpr int kNegativeLabel = -1;

struct BoundingBox {
    float x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    float area() const { return (x_max - x_min) * (y_max - y_min); }
    float center_x() const { return 0.5f * (x_min + x_max); }
    float center_y() const { return 0.5f * (y_min + y_max); }

    bool valid() const {
        return x_min < x_max && y_min < y_max && x_min >= 0 && y_min >= 0 && x_max <= 1 &&
               y_max <= 1;
    }
};

struct Detection {
    BoundingBox box;
    Tensor appearance;  // length D_app
    float confidence = 1.0f;
    std::optional<int> track_id;
    std::optional<int> gt_player_id;  // synthetic ground truth only
};

struct Frame {
    int index = 0;
    Tensor frame_feature;  // length D_frame
    std::vector<Detection> detections;
    std::optional<std::array<float, 2>> ball_position;
};

struct TimelineEvent {
    int k = 0;
    double start_time = 0;
    double end_time = 0;
};

struct Clip {
    std::vector<Frame> frames;
    int label = kNegativeLabel;  // class in [0, K-1] or NEGATIVE
    float fps = 6.0f;
    std::string clip_id;
    std::vector<TimelineEvent> events;  // populated only for untrimmed timelines

    int num_frames() const { return static_cast<int>(frames.size()); }
    double duration_seconds() const { return frames.size() / static_cast<double>(fps); }
};

struct DatasetHeader {
    int version = 1;
    int d_frame = 0;
    int d_app = 0;
    int d_sp = 0;
    int k = 0;
    float fps = 6.0f;
};

inline int spatial_dim(const std::vector<int>& levels) {
    int d = 0;
    for (int l : levels) d += l * l;
    return d;
}

// Per-level LxL grid of intersection-area fractions, cells row-major,
// levels concatenated in the given order. Each level's block sums to 1.
inline Tensor spatial_feature(const BoundingBox& box, const std::vector<int>& levels) {
    if (levels.empty()) throw ConfigError("spatial_feature: empty level list");
    for (int l : levels)
        if (l < 1) throw ConfigError("spatial_feature: grid size must be >= 1");
    float area = box.area();
    if (!(area > 0.0f) || !box.valid())
        throw ValidationError("spatial_feature: degenerate or out-of-range box");
    Tensor out = Tensor::zeros({spatial_dim(levels)});
    int off = 0;
    for (int l : levels) {
        float cell = 1.0f / static_cast<float>(l);
        for (int r = 0; r < l; ++r) {
            float cy0 = r * cell, cy1 = (r + 1) * cell;
            float oy = std::max(0.0f, std::min(box.y_max, cy1) - std::max(box.y_min, cy0));
            for (int c = 0; c < l; ++c) {
                float cx0 = c * cell, cx1 = (c + 1) * cell;
                float ox = std::max(0.0f, std::min(box.x_max, cx1) - std::max(box.x_min, cx0));
                out.data[static_cast<std::size_t>(off + r * l + c)] = ox * oy / area;
            }
        }
        off += l * l;
    }
    return out;
}

// p_ti: appearance first, spatial block after.
inline Tensor compose_player_feature(const Detection& det, const Tensor& box_feature) {
    if (det.appearance.shape.size() != 1 || box_feature.shape.size() != 1)
        throw ValidationError("compose_player_feature: expected rank-1 inputs");
    Tensor out = Tensor::zeros({det.appearance.dim(0) + box_feature.dim(0)});
    std::copy(det.appearance.data.begin(), det.appearance.data.end(), out.data.begin());
    std::copy(box_feature.data.begin(), box_feature.data.end(),
              out.data.begin() + det.appearance.dim(0));
    return out;
}

struct SynthConfig {
    int k = 11;
    int t = 24;
    int n_min = 4;
    int n_max = 6;
    int d_app = 16;
    int d_frame = 16;
    std::vector<int> levels = {4, 2};
    float signal_strength = 1.0f;
    float noise_sigma = 0.1f;
    int active_start = 0;
    int active_end = -1;  // -1 means "whole clip"
    float cue_leak = 0.0f;  // weak class cue leaked into the frame feature
    float box_jitter = 0.004f;
    float p_empty_frame = 0.02f;
    float fps = 6.0f;
    std::uint64_t seed = 1;
    // Optional per-class planted court position for the key player (size k).
    std::vector<std::array<float, 2>> key_positions;

    int d_sp() const { return spatial_dim(levels); }
    int d_player() const { return d_app + d_sp(); }
};

namespace detail {

inline BoundingBox clamp_box(float cx, float cy, float half_w, float half_h) {
    BoundingBox b;
    cx = std::clamp(cx, half_w + 1e-4f, 1.0f - half_w - 1e-4f);
    cy = std::clamp(cy, half_h + 1e-4f, 1.0f - half_h - 1e-4f);
    b.x_min = cx - half_w;
    b.x_max = cx + half_w;
    b.y_min = cy - half_h;
    b.y_max = cy + half_h;
    return b;
}

inline Tensor noise_vec(int d, float sigma, std::mt19937_64& rng) {
    Tensor v = Tensor::zeros({d});
    if (sigma > 0.0f) fill_gaussian(v, 0.0f, sigma, rng);
    return v;
}

}  // namespace detail

// Orthonormal class prototypes (standard basis); requires K <= D.
inline std::vector<Tensor> class_prototypes(int k, int d) {
    if (k > d) throw ConfigError("class_prototypes: K > feature dimension, cannot build orthogonal prototypes");
    std::vector<Tensor> protos;
    protos.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        Tensor p = Tensor::zeros({d});
        p.data[static_cast<std::size_t>(i)] = 1.0f;
        protos.push_back(std::move(p));
    }
    return protos;
}

// Per-player linear motion in horizontal lanes, so distinct players never
// overlap when jitter is zero. The key player carries mu_k * signal during
// the active window; everyone else is background noise throughout.
inline Clip synth_clip(const SynthConfig& cfg, int label, int clip_index, std::mt19937_64& rng) {
    int active_end = cfg.active_end < 0 ? cfg.t : cfg.active_end;
    if (cfg.active_start < 0 || cfg.active_start >= active_end || active_end > cfg.t)
        throw ConfigError("synth_clip: invalid active_window");
    if (!(cfg.signal_strength > 0.0f)) throw ConfigError("synth_clip: signal_strength must be > 0");
    auto protos = class_prototypes(cfg.k, cfg.d_app);

    std::uniform_int_distribution<int> n_dist(cfg.n_min, cfg.n_max);
    int n_players = n_dist(rng);
    std::uniform_int_distribution<int> key_dist(0, n_players - 1);
    int key = key_dist(rng);

    float lane_h = 1.0f / static_cast<float>(n_players);
    float half_h = std::min(0.04f, 0.4f * lane_h);
    float half_w = 0.04f;

    struct Motion {
        float cx, cy, vx, vy;
    };
    std::vector<Motion> motion(static_cast<std::size_t>(n_players));
    std::uniform_real_distribution<float> x0_dist(0.1f, 0.9f);
    std::uniform_real_distribution<float> v_dist(-0.008f, 0.008f);
    for (int i = 0; i < n_players; ++i) {
        motion[static_cast<std::size_t>(i)] = {x0_dist(rng),
                                               (static_cast<float>(i) + 0.5f) * lane_h,
                                               v_dist(rng), 0.0f};
    }
    bool planted = static_cast<int>(cfg.key_positions.size()) == cfg.k;
    if (planted) {
        motion[static_cast<std::size_t>(key)] = {cfg.key_positions[static_cast<std::size_t>(label)][0],
                                                 cfg.key_positions[static_cast<std::size_t>(label)][1],
                                                 0.0f, 0.0f};
    }

    std::uniform_real_distribution<float> conf_dist(0.7f, 1.0f);
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    std::normal_distribution<float> jitter(0.0f, cfg.box_jitter);

    Clip clip;
    clip.label = label;
    clip.fps = cfg.fps;
    clip.clip_id = "synth-" + std::to_string(cfg.seed) + "-" + std::to_string(clip_index);
    clip.frames.resize(static_cast<std::size_t>(cfg.t));
    for (int t = 0; t < cfg.t; ++t) {
        Frame& fr = clip.frames[static_cast<std::size_t>(t)];
        fr.index = t;
        fr.frame_feature = detail::noise_vec(cfg.d_frame, cfg.noise_sigma, rng);
        if (cfg.cue_leak > 0.0f) {
            if (cfg.k > cfg.d_frame)
                throw ConfigError("synth_clip: cue_leak needs K <= D_frame");
            fr.frame_feature.data[static_cast<std::size_t>(label)] += cfg.cue_leak;
        }
        bool empty = unit(rng) < cfg.p_empty_frame;
        bool active = t >= cfg.active_start && t < active_end;
        if (empty) continue;
        for (int i = 0; i < n_players; ++i) {
            auto& m = motion[static_cast<std::size_t>(i)];
            float cx = m.cx + m.vx * static_cast<float>(t);
            float cy = m.cy + m.vy * static_cast<float>(t);
            if (cfg.box_jitter > 0.0f) {
                cx += jitter(rng);
                cy += jitter(rng);
            }
            Detection det;
            det.box = detail::clamp_box(cx, cy, half_w, half_h);
            det.confidence = conf_dist(rng);
            det.gt_player_id = i;
            det.appearance = detail::noise_vec(cfg.d_app, cfg.noise_sigma, rng);
            if (i == key && active) {
                const Tensor& mu = protos[static_cast<std::size_t>(label)];
                for (std::size_t j = 0; j < det.appearance.data.size(); ++j)
                    det.appearance.data[j] += cfg.signal_strength * mu.data[j];
            }
            if (i == key && active)
                fr.ball_position = std::array<float, 2>{det.box.center_x(), det.box.center_y()};
            fr.detections.push_back(std::move(det));
        }
    }
    return clip;
}

// Deterministic given the seed; class labels are a shuffled round-robin so
// counts stay balanced.
inline std::vector<Clip> synth_dataset(const SynthConfig& cfg, int num_clips) {
    auto rng = make_rng(cfg.seed);
    std::vector<int> labels(static_cast<std::size_t>(num_clips));
    for (int i = 0; i < num_clips; ++i) labels[static_cast<std::size_t>(i)] = i % cfg.k;
    std::shuffle(labels.begin(), labels.end(), rng);
    std::vector<Clip> clips;
    clips.reserve(static_cast<std::size_t>(num_clips));
    for (int i = 0; i < num_clips; ++i)
        clips.push_back(synth_clip(cfg, labels[static_cast<std::size_t>(i)], i, rng));
    return clips;
}

// Untrimmed timeline: background play with non-overlapping 4 s planted events
// separated by at least min_gap seconds. Returned as one long NEGATIVE clip
// whose `events` list is the ground truth.
inline Clip synth_timeline(const SynthConfig& cfg, double duration_seconds, double min_gap = 2.0,
                           double max_gap = 10.0) {
    auto rng = make_rng(cfg.seed);
    int total_frames = static_cast<int>(std::llround(duration_seconds * cfg.fps));
    double event_len = 4.0;

    std::vector<TimelineEvent> events;
    std::uniform_real_distribution<double> gap_dist(min_gap, max_gap);
    std::uniform_int_distribution<int> class_dist(0, cfg.k - 1);
    double cursor = gap_dist(rng);
    int next_class = 0;
    while (cursor + event_len <= duration_seconds) {
        events.push_back({next_class % cfg.k, cursor, cursor + event_len});
        next_class++;
        cursor += event_len + gap_dist(rng);
    }
    std::shuffle(events.begin(), events.end(), rng);
    std::vector<double> starts;
    for (const auto& e : events) starts.push_back(e.start_time);
    std::sort(starts.begin(), starts.end());
    for (std::size_t i = 0; i < events.size(); ++i) {
        events[i].start_time = starts[i];
        events[i].end_time = starts[i] + event_len;
    }

    auto protos = class_prototypes(cfg.k, cfg.d_app);
    int n_players = cfg.n_max;
    float lane_h = 1.0f / static_cast<float>(n_players);
    float half_h = std::min(0.04f, 0.4f * lane_h);
    float half_w = 0.04f;
    std::uniform_real_distribution<float> x_dist(0.1f, 0.9f);
    std::uniform_real_distribution<float> conf_dist(0.7f, 1.0f);
    std::normal_distribution<float> jitter(0.0f, cfg.box_jitter);
    std::uniform_int_distribution<int> key_dist(0, n_players - 1);
    std::vector<int> event_keys;
    for (std::size_t i = 0; i < events.size(); ++i) event_keys.push_back(key_dist(rng));

    Clip tl;
    tl.label = kNegativeLabel;
    tl.fps = cfg.fps;
    tl.clip_id = "timeline-" + std::to_string(cfg.seed);
    tl.events = events;
    tl.frames.resize(static_cast<std::size_t>(total_frames));
    std::vector<float> base_x(static_cast<std::size_t>(n_players));
    for (auto& x : base_x) x = x_dist(rng);

    for (int t = 0; t < total_frames; ++t) {
        double now = t / static_cast<double>(cfg.fps);
        int event_idx = -1;
        for (std::size_t e = 0; e < events.size(); ++e)
            if (now >= events[e].start_time && now < events[e].end_time) {
                event_idx = static_cast<int>(e);
                break;
            }
        Frame& fr = tl.frames[static_cast<std::size_t>(t)];
        fr.index = t;
        fr.frame_feature = detail::noise_vec(cfg.d_frame, cfg.noise_sigma, rng);
        for (int i = 0; i < n_players; ++i) {
            // slow drift back and forth across the lane
            float cx = base_x[static_cast<std::size_t>(i)] +
                       0.2f * std::sin(0.02f * static_cast<float>(t) + static_cast<float>(i));
            float cy = (static_cast<float>(i) + 0.5f) * lane_h;
            if (cfg.box_jitter > 0.0f) {
                cx += jitter(rng);
                cy += jitter(rng);
            }
            Detection det;
            det.box = detail::clamp_box(cx, cy, half_w, half_h);
            det.confidence = conf_dist(rng);
            det.gt_player_id = i;
            det.appearance = detail::noise_vec(cfg.d_app, cfg.noise_sigma, rng);
            if (event_idx >= 0 && i == event_keys[static_cast<std::size_t>(event_idx)]) {
                const Tensor& mu = protos[static_cast<std::size_t>(events[static_cast<std::size_t>(event_idx)].k)];
                for (std::size_t j = 0; j < det.appearance.data.size(); ++j)
                    det.appearance.data[j] += cfg.signal_strength * mu.data[j];
                fr.ball_position = std::array<float, 2>{det.box.center_x(), det.box.center_y()};
            }
            fr.detections.push_back(std::move(det));
        }
    }
    return tl;
}

}  // namespace attnrec
