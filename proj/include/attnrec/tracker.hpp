#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "attnrec/data.hpp"

namespace attnrec {

constexpr double kForbidden = std::numeric_limits<double>::infinity();

struct CostMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;  // row-major; kForbidden marks disallowed pairs

    static CostMatrix make(int rows, int cols, double fill = 0.0) {
        CostMatrix m;
        m.rows = rows;
        m.cols = cols;
        m.values.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
        return m;
    }
    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

inline float iou(const BoundingBox& a, const BoundingBox& b) {
    float ox = std::max(0.0f, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
    float oy = std::max(0.0f, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    float inter = ox * oy;
    float uni = a.area() + b.area() - inter;
    return uni > 0.0f ? inter / uni : 0.0f;
}

struct TrackerParams {
    float w_iou = 1.0f;
    float w_app = 1.0f;
    float gate_radius = 0.2f;      // normalized center distance beyond which no match
    float accept_threshold = 0.7f;  // matches costlier than this start new tracks
    int max_gap = 2;                // frames a track may go unmatched before terminating
};

inline double cosine_similarity(const Tensor& a, const Tensor& b) {
    double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    return dot(a, b) / (na * nb);
}

// Geometry + appearance cost; FORBIDDEN when boxes are disjoint and centers
// are farther apart than the gate.
inline double association_cost(const Detection& track_tail, const Detection& det,
                               const TrackerParams& p) {
    require_same_shape(track_tail.appearance, det.appearance, "association_cost");
    float overlap = iou(track_tail.box, det.box);
    if (overlap == 0.0f) {
        float dx = track_tail.box.center_x() - det.box.center_x();
        float dy = track_tail.box.center_y() - det.box.center_y();
        if (std::sqrt(dx * dx + dy * dy) > p.gate_radius) return kForbidden;
    }
    double app_term = (1.0 - cosine_similarity(track_tail.appearance, det.appearance)) / 2.0;
    return p.w_iou * (1.0 - overlap) + p.w_app * app_term;
}

struct Assignment {
    std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
    std::vector<int> unmatched_rows;         // rows with no feasible column
    double total_cost = 0.0;
};

// Minimum-cost bipartite matching of size min(rows, cols) over allowed pairs
// (Jonker-Volgenant style shortest augmenting paths on a padded square
// matrix). Rows whose every allowed pairing is FORBIDDEN are reported
// unmatched instead.
inline Assignment hungarian(const CostMatrix& costs) {
    Assignment result;
    int nr = costs.rows, nc = costs.cols;
    if (nr == 0 || nc == 0) return result;

    // Padding cost dominates any feasible path so real pairs are preferred;
    // forbidden pairs cost even more so they are never chosen over padding.
    double max_finite = 0.0;
    for (double v : costs.values)
        if (v != kForbidden) {
            if (v < 0.0) throw ValidationError("hungarian: negative cost");
            max_finite = std::max(max_finite, v);
        }
    int n = std::max(nr, nc);
    double pad = (max_finite + 1.0) * (n + 1);
    double big = pad * (n + 2);

    std::vector<double> a(static_cast<std::size_t>(n) * n, pad);
    for (int r = 0; r < nr; ++r)
        for (int c = 0; c < nc; ++c)
            a[static_cast<std::size_t>(r) * n + c] = (costs.at(r, c) == kForbidden) ? big : costs.at(r, c);

    // potentials method, 1-based bookkeeping
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, std::numeric_limits<double>::infinity());
        std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            int i0 = p[static_cast<std::size_t>(j0)], j1 = 0;
            double delta = std::numeric_limits<double>::infinity();
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                double cur = a[static_cast<std::size_t>(i0 - 1) * n + (j - 1)] - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }

    std::vector<int> row_of_col(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j) row_of_col[static_cast<std::size_t>(j - 1)] = p[static_cast<std::size_t>(j)] - 1;
    std::vector<char> matched_row(static_cast<std::size_t>(nr), 0);
    for (int c = 0; c < nc; ++c) {
        int r = row_of_col[static_cast<std::size_t>(c)];
        if (r < 0 || r >= nr) continue;
        if (costs.at(r, c) == kForbidden) continue;  // only the padded/forbidden slot was left
        result.pairs.emplace_back(r, c);
        result.total_cost += costs.at(r, c);
        matched_row[static_cast<std::size_t>(r)] = 1;
    }
    std::sort(result.pairs.begin(), result.pairs.end());
    for (int r = 0; r < nr; ++r)
        if (!matched_row[static_cast<std::size_t>(r)]) result.unmatched_rows.push_back(r);
    return result;
}

struct Track {
    int track_id = 0;
    std::vector<std::pair<int, int>> entries;  // (frame_index, detection_index)
    bool terminated = false;
    int last_frame = -1;
};

// Frame-by-frame association: Hungarian over active tracks x detections,
// matches accepted under the threshold extend tracks, leftovers start new
// ones, and silent tracks terminate after max_gap frames.
inline std::vector<Track> link_tracks(Clip& clip, const TrackerParams& params = {}) {
    std::vector<Track> tracks;
    std::vector<int> active;  // indices into tracks
    int next_id = 0;

    for (int t = 0; t < clip.num_frames(); ++t) {
        auto& dets = clip.frames[static_cast<std::size_t>(t)].detections;
        int nd = static_cast<int>(dets.size());
        std::vector<char> det_taken(static_cast<std::size_t>(nd), 0);

        if (!active.empty() && nd > 0) {
            CostMatrix cm = CostMatrix::make(static_cast<int>(active.size()), nd);
            for (std::size_t r = 0; r < active.size(); ++r) {
                const Track& tr = tracks[static_cast<std::size_t>(active[r])];
                auto [tail_frame, tail_det] = tr.entries.back();
                const Detection& tail =
                    clip.frames[static_cast<std::size_t>(tail_frame)].detections[static_cast<std::size_t>(tail_det)];
                for (int c = 0; c < nd; ++c)
                    cm.at(static_cast<int>(r), c) = association_cost(tail, dets[static_cast<std::size_t>(c)], params);
            }
            Assignment asn = hungarian(cm);
            for (auto [r, c] : asn.pairs) {
                if (cm.at(r, c) > params.accept_threshold) continue;
                Track& tr = tracks[static_cast<std::size_t>(active[static_cast<std::size_t>(r)])];
                tr.entries.emplace_back(t, c);
                tr.last_frame = t;
                dets[static_cast<std::size_t>(c)].track_id = tr.track_id;
                det_taken[static_cast<std::size_t>(c)] = 1;
            }
        }
        for (int c = 0; c < nd; ++c) {
            if (det_taken[static_cast<std::size_t>(c)]) continue;
            Track tr;
            tr.track_id = next_id++;
            tr.entries.emplace_back(t, c);
            tr.last_frame = t;
            dets[static_cast<std::size_t>(c)].track_id = tr.track_id;
            tracks.push_back(std::move(tr));
        }
        active.clear();
        for (std::size_t i = 0; i < tracks.size(); ++i) {
            Track& tr = tracks[i];
            if (tr.terminated) continue;
            if (t - tr.last_frame > params.max_gap) {
                tr.terminated = true;
                continue;
            }
            active.push_back(static_cast<int>(i));
        }
    }
    return tracks;
}

// Fraction of detections whose track id maps consistently to one ground-truth
// player (majority vote per track). 1.0 means a perfect partition.
inline double track_gt_agreement(const Clip& clip) {
    std::map<int, std::map<int, int>> votes;  // track -> gt -> count
    int total = 0;
    for (const auto& fr : clip.frames)
        for (const auto& d : fr.detections) {
            if (!d.track_id || !d.gt_player_id) continue;
            votes[*d.track_id][*d.gt_player_id]++;
            ++total;
        }
    if (total == 0) return 1.0;
    // also require distinct tracks to map to distinct players within the clip
    int agree = 0;
    for (const auto& [tid, hist] : votes) {
        int best = 0;
        for (const auto& [gt, n] : hist) best = std::max(best, n);
        agree += best;
    }
    return static_cast<double>(agree) / total;
}

}  // namespace attnrec
