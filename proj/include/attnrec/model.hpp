#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "attnrec/data.hpp"
#include "attnrec/tape.hpp"

namespace attnrec {

enum class Mode { FrameOnly, OnlyPlayer, AvgPlayer, AttnNoTrack, AttnTrack };

inline const char* mode_name(Mode m) {
    switch (m) {
        case Mode::FrameOnly: return "frame-only";
        case Mode::OnlyPlayer: return "only-player";
        case Mode::AvgPlayer: return "avg-player";
        case Mode::AttnNoTrack: return "attn-no-track";
        case Mode::AttnTrack: return "attn-track";
    }
    return "?";
}

inline Mode parse_mode(const std::string& s) {
    for (Mode m : {Mode::FrameOnly, Mode::OnlyPlayer, Mode::AvgPlayer, Mode::AttnNoTrack,
                   Mode::AttnTrack})
        if (s == mode_name(m)) return m;
    throw ConfigError("unknown mode '" + s + "'");
}

struct ModelConfig {
    int hidden_dim = 256;
    int embed_dim = 256;
    int attn_hidden = 128;
    int num_classes = 11;           // output dimension; includes the negative class if any
    bool has_negative_class = false;  // NEGATIVE label maps to index num_classes-1
    float tau = 0.25f;
    Mode mode = Mode::AttnNoTrack;
    int d_frame = 0;
    int d_app = 0;
    std::vector<int> levels = {32, 16, 8, 4};
    bool clip_score_last_frame = false;  // alternative to mean-over-frames ranking score

    int d_sp() const { return spatial_dim(levels); }
    int d_player() const { return d_app + d_sp(); }
    bool uses_frame_stream() const { return mode != Mode::OnlyPlayer; }
    bool uses_players() const { return mode != Mode::FrameOnly; }
    bool uses_attention() const {
        return mode == Mode::OnlyPlayer || mode == Mode::AttnNoTrack || mode == Mode::AttnTrack;
    }
    // dimension of one player representation fed to attention/averaging
    int repr_dim() const { return mode == Mode::AttnTrack ? 2 * hidden_dim : embed_dim; }
    int frame_context_dim() const { return 2 * hidden_dim; }
    int event_input_dim() const {
        switch (mode) {
            case Mode::FrameOnly: return frame_context_dim();
            case Mode::OnlyPlayer: return repr_dim();
            default: return frame_context_dim() + repr_dim();
        }
    }
    int attn_input_dim() const {
        int d = repr_dim() + hidden_dim;  // repr + previous event state
        if (mode != Mode::OnlyPlayer) d += frame_context_dim();
        return d;
    }

    void validate() const {
        if (!(tau > 0.0f)) throw ConfigError("ModelConfig: tau must be positive");
        if (hidden_dim < 1 || embed_dim < 1) throw ConfigError("ModelConfig: dims must be >= 1");
        if (num_classes < 1) throw ConfigError("ModelConfig: num_classes must be >= 1");
    }
};

namespace detail {

inline void add_glorot(ParamMap& p, const std::string& name, int rows, int cols,
                       std::mt19937_64& rng) {
    Tensor t = Tensor::zeros({rows, cols});
    float s = std::sqrt(6.0f / static_cast<float>(rows + cols));
    fill_uniform(t, -s, s, rng);
    p.emplace(name, std::move(t));
}

inline void add_recurrent(ParamMap& p, const std::string& prefix, int in_dim, int hidden,
                          std::mt19937_64& rng) {
    Tensor w = Tensor::zeros({4 * hidden, in_dim + hidden});
    fill_uniform(w, -0.08f, 0.08f, rng);
    Tensor b = Tensor::zeros({4 * hidden});
    p.emplace(prefix + ".W", std::move(w));
    p.emplace(prefix + ".b", std::move(b));
}

}  // namespace detail

inline ParamMap init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    auto rng = make_rng(seed);
    ParamMap p;
    int H = cfg.hidden_dim, E = cfg.embed_dim;
    if (cfg.uses_frame_stream()) {
        detail::add_glorot(p, "embed_frame.W", E, cfg.d_frame, rng);
        p.emplace("embed_frame.b", Tensor::zeros({E}));
        detail::add_recurrent(p, "blstm_frame.fwd", E, H, rng);
        detail::add_recurrent(p, "blstm_frame.bwd", E, H, rng);
    }
    if (cfg.uses_players()) {
        detail::add_glorot(p, "embed_player.W", E, cfg.d_player(), rng);
        p.emplace("embed_player.b", Tensor::zeros({E}));
    }
    if (cfg.mode == Mode::AttnTrack) {
        detail::add_recurrent(p, "blstm_track.fwd", E, H, rng);
        detail::add_recurrent(p, "blstm_track.bwd", E, H, rng);
    }
    if (cfg.uses_attention()) {
        detail::add_glorot(p, "attn.l1.W", cfg.attn_hidden, cfg.attn_input_dim(), rng);
        p.emplace("attn.l1.b", Tensor::zeros({cfg.attn_hidden}));
        detail::add_glorot(p, "attn.l2.W", 1, cfg.attn_hidden, rng);
        p.emplace("attn.l2.b", Tensor::zeros({1}));
    }
    detail::add_recurrent(p, "event", cfg.event_input_dim(), H, rng);
    detail::add_glorot(p, "classifier.W", cfg.num_classes, H, rng);
    return p;
}

struct ForwardTrace {
    std::unique_ptr<Tape> tape;
    std::map<std::string, Tape::Id> param_ids;
    std::vector<Tape::Id> frame_score_ids;       // one per frame
    std::vector<std::vector<float>> gamma;       // attention weights per frame (empty if N_t=0)
    std::vector<Tensor> frame_context;           // h_t^f values (empty in only-player mode)
    std::vector<Tensor> attended;                // a_t values
    std::vector<Tensor> event_state;             // h_t^e values
    std::vector<Tensor> frame_scores;            // w_k^T h_t^e per frame
    std::vector<float> clip_scores;              // ranking score per class
    std::optional<Tape::Id> loss_id;
    double loss_value = 0.0;
};

namespace detail {

struct TapeModel {
    Tape& tape;
    const ModelConfig& cfg;
    std::map<std::string, Tape::Id>& pid;

    Tape::Id affine_op(const std::string& prefix, Tape::Id x) {
        return tape.add(tape.matvec(pid.at(prefix + ".W"), x), pid.at(prefix + ".b"));
    }

    // Graves-style cell: gates from one affine map over concat(x, h_prev).
    std::pair<Tape::Id, Tape::Id> lstm_step(const std::string& prefix, Tape::Id x, Tape::Id h_prev,
                                            Tape::Id c_prev) {
        int H = cfg.hidden_dim;
        Tape::Id z = affine_op(prefix, tape.concat({x, h_prev}));
        Tape::Id i = tape.sigmoid(tape.slice(z, 0, H));
        Tape::Id f = tape.sigmoid(tape.slice(z, H, H));
        Tape::Id o = tape.sigmoid(tape.slice(z, 2 * H, H));
        Tape::Id g = tape.tanh_op(tape.slice(z, 3 * H, H));
        Tape::Id c = tape.add(tape.mul(f, c_prev), tape.mul(i, g));
        Tape::Id h = tape.mul(o, tape.tanh_op(c));
        return {h, c};
    }

    // forward half first in the concatenated output
    std::vector<Tape::Id> blstm(const std::string& prefix, const std::vector<Tape::Id>& seq) {
        if (seq.empty()) throw ValidationError("blstm: empty sequence");
        int H = cfg.hidden_dim;
        std::size_t T = seq.size();
        std::vector<Tape::Id> fwd(T), bwd(T);
        Tape::Id h = tape.leaf(Tensor::zeros({H})), c = tape.leaf(Tensor::zeros({H}));
        for (std::size_t t = 0; t < T; ++t) {
            std::tie(h, c) = lstm_step(prefix + ".fwd", seq[t], h, c);
            fwd[t] = h;
        }
        h = tape.leaf(Tensor::zeros({H}));
        c = tape.leaf(Tensor::zeros({H}));
        for (std::size_t t = T; t-- > 0;) {
            std::tie(h, c) = lstm_step(prefix + ".bwd", seq[t], h, c);
            bwd[t] = h;
        }
        std::vector<Tape::Id> out(T);
        for (std::size_t t = 0; t < T; ++t) out[t] = tape.concat({fwd[t], bwd[t]});
        return out;
    }

    Tape::Id scorer(Tape::Id input) {
        return affine_op("attn.l2", tape.tanh_op(affine_op("attn.l1", input)));
    }
};

}  // namespace detail

// Runs the full architecture over one clip and records the tape for backward.
inline ForwardTrace forward(const Clip& clip, const ParamMap& params, const ModelConfig& cfg) {
    cfg.validate();
    if (clip.frames.empty()) throw ValidationError("forward: clip has no frames");
    int T = clip.num_frames();
    int H = cfg.hidden_dim;

    ForwardTrace trace;
    trace.tape = std::make_unique<Tape>();
    Tape& tape = *trace.tape;
    for (const auto& [name, t] : params) trace.param_ids.emplace(name, tape.leaf(t));
    detail::TapeModel m{tape, cfg, trace.param_ids};

    // frame stream: embed + BLSTM over the whole clip
    std::vector<Tape::Id> h_f(static_cast<std::size_t>(T), -1);
    if (cfg.uses_frame_stream()) {
        std::vector<Tape::Id> embedded(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) {
            const Tensor& f = clip.frames[static_cast<std::size_t>(t)].frame_feature;
            if (f.dim(0) != cfg.d_frame)
                throw ValidationError("forward: frame feature dim " + std::to_string(f.dim(0)) +
                                      " != configured d_frame " + std::to_string(cfg.d_frame));
            embedded[static_cast<std::size_t>(t)] =
                tape.relu(m.affine_op("embed_frame", tape.leaf(f)));
        }
        auto ctx = m.blstm("blstm_frame", embedded);
        for (int t = 0; t < T; ++t) h_f[static_cast<std::size_t>(t)] = ctx[static_cast<std::size_t>(t)];
    }

    // player stream: embedded p_ti, then optionally a BLSTM along each track
    std::vector<std::vector<Tape::Id>> reprs(static_cast<std::size_t>(T));
    if (cfg.uses_players()) {
        std::vector<std::vector<Tape::Id>> embedded(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) {
            for (const auto& det : clip.frames[static_cast<std::size_t>(t)].detections) {
                if (det.appearance.dim(0) != cfg.d_app)
                    throw ValidationError("forward: appearance dim " +
                                          std::to_string(det.appearance.dim(0)) +
                                          " != configured d_app " + std::to_string(cfg.d_app));
                Tensor p = compose_player_feature(det, spatial_feature(det.box, cfg.levels));
                embedded[static_cast<std::size_t>(t)].push_back(
                    tape.relu(m.affine_op("embed_player", tape.leaf(p))));
            }
        }
        if (cfg.mode == Mode::AttnTrack) {
            // group detections into tracks and run the track BLSTM per track
            std::map<int, std::vector<std::pair<int, int>>> by_track;
            for (int t = 0; t < T; ++t) {
                const auto& dets = clip.frames[static_cast<std::size_t>(t)].detections;
                for (int i = 0; i < static_cast<int>(dets.size()); ++i) {
                    if (!dets[static_cast<std::size_t>(i)].track_id)
                        throw ValidationError("forward: attn-track mode requires track ids (clip '" +
                                              clip.clip_id + "')");
                    by_track[*dets[static_cast<std::size_t>(i)].track_id].emplace_back(t, i);
                }
                reprs[static_cast<std::size_t>(t)].resize(dets.size(), -1);
            }
            for (auto& [tid, entries] : by_track) {
                std::sort(entries.begin(), entries.end());
                std::vector<Tape::Id> seq;
                for (auto [t, i] : entries)
                    seq.push_back(embedded[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)]);
                auto states = m.blstm("blstm_track", seq);
                for (std::size_t e = 0; e < entries.size(); ++e)
                    reprs[static_cast<std::size_t>(entries[e].first)]
                         [static_cast<std::size_t>(entries[e].second)] = states[e];
            }
        } else {
            reprs = std::move(embedded);
        }
    }

    // event recurrence with per-step attention using the previous event state
    Tape::Id h_e = tape.leaf(Tensor::zeros({H}));
    Tape::Id c_e = tape.leaf(Tensor::zeros({H}));
    std::vector<double> score_sum(static_cast<std::size_t>(cfg.num_classes), 0.0);
    for (int t = 0; t < T; ++t) {
        const auto& r_t = reprs[static_cast<std::size_t>(t)];
        Tape::Id a_t = -1;
        std::vector<float> gamma_t;
        if (cfg.uses_players()) {
            if (r_t.empty()) {
                a_t = tape.leaf(Tensor::zeros({cfg.repr_dim()}));
            } else if (cfg.mode == Mode::AvgPlayer) {
                a_t = tape.mean_of(r_t);
            } else {
                std::vector<Tape::Id> score_ids;
                for (Tape::Id r : r_t) {
                    std::vector<Tape::Id> parts;
                    if (cfg.mode != Mode::OnlyPlayer) parts.push_back(h_f[static_cast<std::size_t>(t)]);
                    parts.push_back(r);
                    parts.push_back(h_e);
                    score_ids.push_back(m.scorer(tape.concat(parts)));
                }
                Tape::Id g = tape.softmax(tape.stack_scalars(score_ids), cfg.tau);
                gamma_t = tape.value(g).data;
                a_t = tape.convex_combine(g, r_t);
            }
        }
        Tape::Id x_t;
        switch (cfg.mode) {
            case Mode::FrameOnly: x_t = h_f[static_cast<std::size_t>(t)]; break;
            case Mode::OnlyPlayer: x_t = a_t; break;
            default: x_t = tape.concat({h_f[static_cast<std::size_t>(t)], a_t}); break;
        }
        std::tie(h_e, c_e) = m.lstm_step("event", x_t, h_e, c_e);
        Tape::Id s_t = tape.matvec(trace.param_ids.at("classifier.W"), h_e);

        trace.frame_score_ids.push_back(s_t);
        trace.gamma.push_back(std::move(gamma_t));
        if (cfg.uses_frame_stream())
            trace.frame_context.push_back(tape.value(h_f[static_cast<std::size_t>(t)]));
        if (cfg.uses_players() && a_t >= 0) trace.attended.push_back(tape.value(a_t));
        trace.event_state.push_back(tape.value(h_e));
        trace.frame_scores.push_back(tape.value(s_t));
        for (int k = 0; k < cfg.num_classes; ++k)
            score_sum[static_cast<std::size_t>(k)] +=
                trace.frame_scores.back().data[static_cast<std::size_t>(k)];
    }

    trace.clip_scores.resize(static_cast<std::size_t>(cfg.num_classes));
    for (int k = 0; k < cfg.num_classes; ++k)
        trace.clip_scores[static_cast<std::size_t>(k)] =
            cfg.clip_score_last_frame
                ? trace.frame_scores.back().data[static_cast<std::size_t>(k)]
                : static_cast<float>(score_sum[static_cast<std::size_t>(k)] / T);
    return trace;
}

// Squared hinge summed over frames and classes; NEGATIVE maps to the extra
// class index in detection training and is rejected otherwise.
inline double clip_loss(ForwardTrace& trace, int label, const ModelConfig& cfg) {
    int label_index = label;
    if (label == kNegativeLabel) {
        if (!cfg.has_negative_class)
            throw ValidationError("clip_loss: NEGATIVE label is only valid in detection training");
        label_index = cfg.num_classes - 1;
    }
    if (label_index < 0 || label_index >= cfg.num_classes)
        throw ValidationError("clip_loss: label out of range");
    Tape& tape = *trace.tape;
    std::vector<Tape::Id> per_frame;
    for (Tape::Id s : trace.frame_score_ids) per_frame.push_back(tape.squared_hinge(s, label_index));
    trace.loss_id = tape.sum_scalars(per_frame);
    trace.loss_value = tape.scalar(*trace.loss_id);
    return trace.loss_value;
}

inline ParamMap backward(ForwardTrace& trace) {
    if (!trace.loss_id) throw ValidationError("backward: clip_loss must be computed first");
    trace.tape->backward(*trace.loss_id);
    ParamMap grads;
    for (const auto& [name, id] : trace.param_ids) grads.emplace(name, trace.tape->grad(id));
    return grads;
}

// Convenience: loss of one clip as a pure function of the parameters.
inline double clip_loss_value(const Clip& clip, const ParamMap& params, const ModelConfig& cfg,
                              int label) {
    ForwardTrace t = forward(clip, params, cfg);
    return clip_loss(t, label, cfg);
}

}  // namespace attnrec
