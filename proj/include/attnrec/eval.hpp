#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "attnrec/model.hpp"

namespace attnrec {

struct RankedItem {
    float score;
    bool is_positive;
};
using RankedList = std::vector<RankedItem>;

// Precision-at-each-positive, no interpolation; ties broken by stable input
// index so runs agree across platforms.
inline double average_precision(const RankedList& items) {
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return items[a].score > items[b].score; });
    int positives_seen = 0;
    double ap_sum = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (!items[order[rank]].is_positive) continue;
        ++positives_seen;
        ap_sum += static_cast<double>(positives_seen) / static_cast<double>(rank + 1);
    }
    if (positives_seen == 0) throw UndefinedApError("average_precision: no positives in list");
    return ap_sum / positives_seen;
}

struct EvalReport {
    std::map<std::string, double> per_class;
    double map = 0.0;
    std::vector<std::string> skipped;
};

inline EvalReport report_from_lists(const std::map<int, RankedList>& lists) {
    EvalReport rep;
    double sum = 0.0;
    int counted = 0;
    for (const auto& [k, list] : lists) {
        std::string name = "class_" + std::to_string(k);
        try {
            double ap = average_precision(list);
            rep.per_class[name] = ap;
            sum += ap;
            ++counted;
        } catch (const UndefinedApError&) {
            rep.skipped.push_back(name);
        }
    }
    if (counted > 0) rep.map = sum / counted;
    return rep;
}

// Clip classification mAP over K classes; each class ranks all clips by its
// clip-level score, positives are clips of that class.
inline EvalReport classify_eval(const ParamMap& params, const ModelConfig& cfg,
                                const std::vector<Clip>& clips) {
    int K = cfg.has_negative_class ? cfg.num_classes - 1 : cfg.num_classes;
    std::map<int, RankedList> lists;
    for (int k = 0; k < K; ++k) lists[k] = {};
    for (const auto& clip : clips) {
        if (clip.label == kNegativeLabel && !cfg.has_negative_class)
            throw ValidationError("classify_eval: NEGATIVE clip in classification evaluation");
        ForwardTrace t = forward(clip, params, cfg);
        for (int k = 0; k < K; ++k)
            lists[k].push_back({t.clip_scores[static_cast<std::size_t>(k)], clip.label == k});
    }
    return report_from_lists(lists);
}

// ---------------------------------------------------------------------------
// Temporal detection protocol
// ---------------------------------------------------------------------------

constexpr double kWindowSeconds = 4.0;
constexpr double kOverlapThreshold = 1.0;  // seconds; positives must exceed this

struct DetectionWindow {
    double start_time = 0.0;
    double duration = kWindowSeconds;
    std::vector<float> scores;  // per class, length K (+1 with negative class)
    int gt_label = kNegativeLabel;
};

inline std::vector<double> window_starts(double timeline_seconds, double stride = 2.0) {
    std::vector<double> starts;
    for (double s = 0.0; s + kWindowSeconds <= timeline_seconds + 1e-9; s += stride)
        starts.push_back(s);
    return starts;
}

inline double interval_overlap(double a0, double a1, double b0, double b1) {
    return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

// Label a window per the protocol: class k if it overlaps a class-k event by
// more than 1 s, NEGATIVE if it overlaps no event by more than 1 s.
inline int window_label(const std::vector<TimelineEvent>& events, double start,
                        double duration = kWindowSeconds) {
    for (const auto& e : events)
        if (interval_overlap(start, start + duration, e.start_time, e.end_time) > kOverlapThreshold)
            return e.k;
    return kNegativeLabel;
}

// Cuts the timeline into stride-spaced 4 s clips with ground-truth labels.
inline std::vector<Clip> extract_windows(const Clip& timeline, double stride = 2.0) {
    std::vector<Clip> windows;
    auto starts = window_starts(timeline.duration_seconds(), stride);
    for (double s : starts) {
        int f0 = static_cast<int>(std::llround(s * timeline.fps));
        int f1 = std::min(timeline.num_frames(),
                          f0 + static_cast<int>(std::llround(kWindowSeconds * timeline.fps)));
        Clip w;
        w.fps = timeline.fps;
        w.clip_id = timeline.clip_id + "@" + std::to_string(s);
        w.label = window_label(timeline.events, s);
        w.frames.assign(timeline.frames.begin() + f0, timeline.frames.begin() + f1);
        windows.push_back(std::move(w));
    }
    return windows;
}

inline std::vector<DetectionWindow> sliding_detect(const Clip& timeline, const ParamMap& params,
                                                   const ModelConfig& cfg, double stride = 2.0) {
    if (timeline.duration_seconds() < kWindowSeconds)
        throw ValidationError("sliding_detect: timeline shorter than one window");
    std::vector<DetectionWindow> out;
    auto starts = window_starts(timeline.duration_seconds(), stride);
    auto clips = extract_windows(timeline, stride);
    for (std::size_t i = 0; i < starts.size(); ++i) {
        ForwardTrace t = forward(clips[i], params, cfg);
        DetectionWindow w;
        w.start_time = starts[i];
        w.scores = t.clip_scores;
        w.gt_label = clips[i].label;
        out.push_back(std::move(w));
    }
    return out;
}

// Per-class AP over the pooled window set (negatives included everywhere).
inline EvalReport detect_eval(const std::vector<DetectionWindow>& windows, int num_event_classes) {
    std::map<int, RankedList> lists;
    for (int k = 0; k < num_event_classes; ++k) lists[k] = {};
    for (const auto& w : windows)
        for (int k = 0; k < num_event_classes; ++k)
            lists[k].push_back({w.scores[static_cast<std::size_t>(k)], w.gt_label == k});
    return report_from_lists(lists);
}

// ---------------------------------------------------------------------------
// Key-actor (attention) evaluation
// ---------------------------------------------------------------------------

struct ShooterReport {
    std::map<std::string, double> per_class;
    double mean = 0.0;
    double chance_mean = 0.0;
    int frames_evaluated = 0;
};

// Per annotated frame the ground truth is the detection nearest the ball;
// detections are ranked by gamma, giving one-positive AP = 1/rank. Chance is
// the exact expectation for a uniform random ranking, (sum_r 1/r)/N.
inline ShooterReport shooter_eval(const ParamMap& params, const ModelConfig& cfg,
                                  const std::vector<Clip>& clips) {
    if (!cfg.uses_attention())
        throw ValidationError("shooter_eval: mode '" + std::string(mode_name(cfg.mode)) +
                              "' produces no attention weights");
    std::map<int, std::vector<double>> ap_by_class, chance_by_class;
    int frames = 0;
    for (const auto& clip : clips) {
        ForwardTrace t = forward(clip, params, cfg);
        for (int fi = 0; fi < clip.num_frames(); ++fi) {
            const Frame& fr = clip.frames[static_cast<std::size_t>(fi)];
            if (!fr.ball_position || fr.detections.empty()) continue;
            const auto& g = t.gamma[static_cast<std::size_t>(fi)];
            if (g.size() != fr.detections.size()) continue;
            std::size_t nearest = 0;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < fr.detections.size(); ++i) {
                double dx = fr.detections[i].box.center_x() - (*fr.ball_position)[0];
                double dy = fr.detections[i].box.center_y() - (*fr.ball_position)[1];
                double d2 = dx * dx + dy * dy;
                if (d2 < best) {
                    best = d2;
                    nearest = i;
                }
            }
            RankedList list;
            for (std::size_t i = 0; i < g.size(); ++i) list.push_back({g[i], i == nearest});
            double ap = average_precision(list);
            double chance = 0.0;
            for (std::size_t r = 1; r <= g.size(); ++r) chance += 1.0 / static_cast<double>(r);
            chance /= static_cast<double>(g.size());
            ap_by_class[clip.label].push_back(ap);
            chance_by_class[clip.label].push_back(chance);
            ++frames;
        }
    }
    ShooterReport rep;
    rep.frames_evaluated = frames;
    double sum = 0.0, chance_sum = 0.0;
    int n = 0;
    for (const auto& [k, aps] : ap_by_class) {
        double a = std::accumulate(aps.begin(), aps.end(), 0.0) / aps.size();
        const auto& ch = chance_by_class[k];
        double c = std::accumulate(ch.begin(), ch.end(), 0.0) / ch.size();
        rep.per_class["class_" + std::to_string(k)] = a;
        sum += a;
        chance_sum += c;
        ++n;
    }
    if (n > 0) {
        rep.mean = sum / n;
        rep.chance_mean = chance_sum / n;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Court alignment
// ---------------------------------------------------------------------------

struct Homography {
    std::array<double, 9> m{};  // row-major, normalized so m[8] == 1
    double reprojection_rms = 0.0;

    std::array<double, 2> apply(double x, double y) const {
        double w = m[6] * x + m[7] * y + m[8];
        return {(m[0] * x + m[1] * y + m[2]) / w, (m[3] * x + m[4] * y + m[5]) / w};
    }

    static Homography identity() {
        Homography h;
        h.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
        return h;
    }
};

struct PointPair {
    double x, y, u, v;  // source (x,y) -> target (u,v)
};

// Normalized DLT: centroid shift + isotropic scaling to mean distance sqrt(2)
// on both sides, least squares over the stacked 2n x 9 system by SVD.
inline Homography homography_dlt(const std::vector<PointPair>& pairs) {
    if (pairs.size() < 4) throw ValidationError("homography_dlt: need at least 4 correspondences");
    auto normalize = [](const std::vector<std::array<double, 2>>& pts) {
        double cx = 0, cy = 0;
        for (auto& p : pts) {
            cx += p[0];
            cy += p[1];
        }
        cx /= pts.size();
        cy /= pts.size();
        double md = 0;
        for (auto& p : pts) md += std::hypot(p[0] - cx, p[1] - cy);
        md /= pts.size();
        double s = md > 1e-12 ? std::sqrt(2.0) / md : 1.0;
        Eigen::Matrix3d T;
        T << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
        return T;
    };
    std::vector<std::array<double, 2>> src, dst;
    for (const auto& p : pairs) {
        src.push_back({p.x, p.y});
        dst.push_back({p.u, p.v});
    }
    Eigen::Matrix3d Ts = normalize(src), Td = normalize(dst);

    Eigen::MatrixXd A(2 * static_cast<int>(pairs.size()), 9);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        Eigen::Vector3d s = Ts * Eigen::Vector3d(src[i][0], src[i][1], 1.0);
        Eigen::Vector3d d = Td * Eigen::Vector3d(dst[i][0], dst[i][1], 1.0);
        double x = s(0), y = s(1), u = d(0), v = d(1);
        A.row(2 * static_cast<int>(i)) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
        A.row(2 * static_cast<int>(i) + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 2) < 1e-9 * sv(0))
        throw ValidationError("homography_dlt: degenerate (rank-deficient) configuration");
    Eigen::VectorXd h = svd.matrixV().col(8);
    Eigen::Matrix3d Hn;
    Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    Eigen::Matrix3d H = Td.inverse() * Hn * Ts;
    if (std::abs(H.determinant()) < 1e-9)
        throw ValidationError("homography_dlt: recovered matrix is singular");
    if (std::abs(H(2, 2)) < 1e-12)
        throw ValidationError("homography_dlt: cannot normalize (H33 ~ 0)");
    H /= H(2, 2);

    Homography out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out.m[static_cast<std::size_t>(3 * r + c)] = H(r, c);
    double sq = 0.0;
    for (const auto& p : pairs) {
        auto q = out.apply(p.x, p.y);
        sq += (q[0] - p.u) * (q[0] - p.u) + (q[1] - p.v) * (q[1] - p.v);
    }
    out.reprojection_rms = std::sqrt(sq / pairs.size());
    return out;
}

// ---------------------------------------------------------------------------
// Attention heatmaps on the canonical court
// ---------------------------------------------------------------------------

struct HeatmapGrid {
    int class_k = 0;
    int phase = 0;  // clip split into equal phases (default thirds)
    int grid = 0;
    std::vector<double> mass;  // grid*grid, row-major, sums to 1 when non-empty
};

// Projects the arg-max-gamma detection's box-bottom-center into court
// coordinates per frame; out-of-court points clamp to the border bin.
inline std::vector<HeatmapGrid> heatmap(const ParamMap& params, const ModelConfig& cfg,
                                        const std::vector<Clip>& clips,
                                        const std::vector<Homography>& homographies, int grid,
                                        int num_phases = 3) {
    if (homographies.size() != clips.size())
        throw ValidationError("heatmap: one homography per clip required");
    int K = cfg.has_negative_class ? cfg.num_classes - 1 : cfg.num_classes;
    std::map<std::pair<int, int>, std::vector<double>> acc;
    for (std::size_t ci = 0; ci < clips.size(); ++ci) {
        const Clip& clip = clips[ci];
        if (clip.label == kNegativeLabel) continue;
        ForwardTrace t = forward(clip, params, cfg);
        int T = clip.num_frames();
        for (int fi = 0; fi < T; ++fi) {
            const auto& g = t.gamma[static_cast<std::size_t>(fi)];
            if (g.empty()) continue;
            std::size_t best = static_cast<std::size_t>(
                std::max_element(g.begin(), g.end()) - g.begin());
            const BoundingBox& box =
                clip.frames[static_cast<std::size_t>(fi)].detections[best].box;
            auto court = homographies[ci].apply(box.center_x(), box.y_max);
            int gx = std::clamp(static_cast<int>(court[0] * grid), 0, grid - 1);
            int gy = std::clamp(static_cast<int>(court[1] * grid), 0, grid - 1);
            int phase = std::min(num_phases - 1, fi * num_phases / std::max(1, T));
            auto& cells = acc[{clip.label, phase}];
            if (cells.empty()) cells.assign(static_cast<std::size_t>(grid) * grid, 0.0);
            cells[static_cast<std::size_t>(gy) * grid + gx] += 1.0;
        }
    }
    std::vector<HeatmapGrid> out;
    for (int k = 0; k < K; ++k)
        for (int ph = 0; ph < num_phases; ++ph) {
            HeatmapGrid hg;
            hg.class_k = k;
            hg.phase = ph;
            hg.grid = grid;
            auto it = acc.find({k, ph});
            if (it != acc.end()) {
                hg.mass = it->second;
                double total = std::accumulate(hg.mass.begin(), hg.mass.end(), 0.0);
                if (total > 0)
                    for (auto& v : hg.mass) v /= total;
            } else {
                hg.mass.assign(static_cast<std::size_t>(grid) * grid, 0.0);
            }
            out.push_back(std::move(hg));
        }
    return out;
}

}  // namespace attnrec
