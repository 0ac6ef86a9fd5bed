#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnrec/data.hpp"

namespace attnrec {

using json = nlohmann::json;

namespace detail {

inline json tensor_to_json(const Tensor& t) {
    json a = json::array();
    for (float v : t.data) a.push_back(v);
    return a;
}

inline Tensor tensor_from_json(const json& a, std::size_t line) {
    if (!a.is_array()) throw ParseError(line, "expected a number array");
    std::vector<float> d;
    d.reserve(a.size());
    for (const auto& v : a) {
        if (!v.is_number()) throw ParseError(line, "non-numeric entry in feature array");
        d.push_back(v.get<float>());
    }
    return Tensor::vec(std::move(d));
}

}  // namespace detail

inline json clip_to_json(const Clip& clip) {
    json jc;
    jc["clip_id"] = clip.clip_id;
    jc["label"] = clip.label;
    json jframes = json::array();
    for (const auto& fr : clip.frames) {
        json jf;
        jf["feature"] = detail::tensor_to_json(fr.frame_feature);
        if (fr.ball_position)
            jf["ball"] = json::array({(*fr.ball_position)[0], (*fr.ball_position)[1]});
        else
            jf["ball"] = nullptr;
        json jdets = json::array();
        for (const auto& d : fr.detections) {
            json jd;
            jd["box"] = json::array({d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max});
            jd["conf"] = d.confidence;
            jd["app"] = detail::tensor_to_json(d.appearance);
            jd["track"] = d.track_id ? json(*d.track_id) : json(nullptr);
            jd["gt_player"] = d.gt_player_id ? json(*d.gt_player_id) : json(nullptr);
            jdets.push_back(std::move(jd));
        }
        jf["dets"] = std::move(jdets);
        jframes.push_back(std::move(jf));
    }
    jc["frames"] = std::move(jframes);
    if (!clip.events.empty()) {
        json je = json::array();
        for (const auto& e : clip.events)
            je.push_back({{"k", e.k}, {"start", e.start_time}, {"end", e.end_time}});
        jc["events"] = std::move(je);
    }
    return jc;
}

inline DatasetHeader make_header(const SynthConfig& cfg) {
    DatasetHeader h;
    h.d_frame = cfg.d_frame;
    h.d_app = cfg.d_app;
    h.d_sp = cfg.d_sp();
    h.k = cfg.k;
    h.fps = cfg.fps;
    return h;
}

inline void write_dataset(const std::vector<Clip>& clips, const DatasetHeader& header,
                          const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_dataset: cannot open '" + path + "' for writing");
    json jh = {{"version", header.version}, {"d_frame", header.d_frame},
               {"d_app", header.d_app},     {"d_sp", header.d_sp},
               {"k", header.k},             {"fps", header.fps}};
    out << jh.dump() << "\n";
    for (const auto& clip : clips) out << clip_to_json(clip).dump() << "\n";
    if (!out) throw IoError("write_dataset: write failure on '" + path + "'");
}

inline Clip clip_from_json(const json& jc, const DatasetHeader& header, std::size_t line) {
    if (!jc.is_object()) throw ParseError(line, "clip line is not a JSON object");
    for (const char* key : {"clip_id", "label", "frames"})
        if (!jc.contains(key)) throw ParseError(line, std::string("clip missing key '") + key + "'");
    Clip clip;
    clip.clip_id = jc.at("clip_id").get<std::string>();
    clip.label = jc.at("label").get<int>();
    clip.fps = header.fps;
    if (clip.label != kNegativeLabel && (clip.label < 0 || clip.label >= header.k))
        throw ValidationError("clip '" + clip.clip_id + "': label out of range for header k");
    int idx = 0;
    for (const auto& jf : jc.at("frames")) {
        Frame fr;
        fr.index = idx++;
        fr.frame_feature = detail::tensor_from_json(jf.at("feature"), line);
        if (fr.frame_feature.dim(0) != header.d_frame)
            throw ValidationError("clip '" + clip.clip_id + "': frame feature dim " +
                                  std::to_string(fr.frame_feature.dim(0)) +
                                  " != header d_frame " + std::to_string(header.d_frame));
        if (jf.contains("ball") && !jf.at("ball").is_null()) {
            const auto& b = jf.at("ball");
            if (!b.is_array() || b.size() != 2) throw ParseError(line, "ball must be [x,y] or null");
            fr.ball_position = std::array<float, 2>{b[0].get<float>(), b[1].get<float>()};
        }
        for (const auto& jd : jf.at("dets")) {
            Detection det;
            const auto& jb = jd.at("box");
            if (!jb.is_array() || jb.size() != 4) throw ParseError(line, "box must be [x0,y0,x1,y1]");
            det.box = {jb[0].get<float>(), jb[1].get<float>(), jb[2].get<float>(),
                       jb[3].get<float>()};
            det.confidence = jd.at("conf").get<float>();
            det.appearance = detail::tensor_from_json(jd.at("app"), line);
            if (det.appearance.dim(0) != header.d_app)
                throw ValidationError("clip '" + clip.clip_id + "': appearance dim " +
                                      std::to_string(det.appearance.dim(0)) +
                                      " != header d_app " + std::to_string(header.d_app));
            if (jd.contains("track") && !jd.at("track").is_null())
                det.track_id = jd.at("track").get<int>();
            if (jd.contains("gt_player") && !jd.at("gt_player").is_null())
                det.gt_player_id = jd.at("gt_player").get<int>();
            fr.detections.push_back(std::move(det));
        }
        clip.frames.push_back(std::move(fr));
    }
    if (jc.contains("events")) {
        for (const auto& je : jc.at("events"))
            clip.events.push_back(
                {je.at("k").get<int>(), je.at("start").get<double>(), je.at("end").get<double>()});
    }
    return clip;
}

inline std::vector<Clip> read_dataset(const std::string& path, DatasetHeader* header_out = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_dataset: cannot open '" + path + "'");
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError(1, "missing header line");
    ++line_no;
    DatasetHeader header;
    try {
        json jh = json::parse(line);
        header.version = jh.at("version").get<int>();
        header.d_frame = jh.at("d_frame").get<int>();
        header.d_app = jh.at("d_app").get<int>();
        header.d_sp = jh.at("d_sp").get<int>();
        header.k = jh.at("k").get<int>();
        header.fps = jh.at("fps").get<float>();
    } catch (const json::exception& e) {
        throw ParseError(1, std::string("bad header: ") + e.what());
    }
    if (header.version != 1)
        throw ParseError(1, "unsupported dataset version " + std::to_string(header.version));
    std::vector<Clip> clips;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json jc;
        try {
            jc = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
        }
        try {
            clips.push_back(clip_from_json(jc, header, line_no));
        } catch (const json::exception& e) {
            throw ParseError(line_no, std::string("bad clip object: ") + e.what());
        }
    }
    if (header_out) *header_out = header;
    return clips;
}

}  // namespace attnrec
