#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "streamperf/common.hpp"
#include "streamperf/geometry.hpp"

namespace streamperf {

inline constexpr int kScenarioSchemaVersion = 1;

struct Waypoint {
    int frame_index = 0;
    BBox bbox;
    bool visible = true;
};

// Ground-truth object with a stable identity. Occlusion is modeled as
// visible=false spans: the object exists but emits no GT box there.
struct GtObject {
    int id = 0;
    std::vector<Waypoint> trajectory;  // frame indices strictly increasing
};

struct EgoState {
    double speed = 0.0;    // m/s, >= 0
    double heading = 0.0;  // radians, wrapped to (-pi, pi]
};

struct Scenario {
    std::string id;
    double duration = 0.0;    // seconds
    double frame_rate = 0.0;  // Hz
    int image_w = 0;          // image_size.W
    int image_h = 0;          // image_size.H
    std::vector<GtObject> objects;
    std::vector<EgoState> ego;  // one per frame
    double time_of_day = 0.0;   // hour in [0, 24)

    int frame_count() const { return static_cast<int>(std::lround(duration * frame_rate)); }
};

struct Segment {
    std::string scenario_id;
    int tau = 0;          // segment index
    int start_frame = 0;  // inclusive
    int end_frame = 0;    // exclusive

    int length() const { return end_frame - start_frame; }
};

// ---------------------------------------------------------------------------
// JSON serialization (schema versioned; field names follow the domain types)

inline nlohmann::json to_json(const Scenario& s) {
    nlohmann::json j;
    j["schema_version"] = kScenarioSchemaVersion;
    j["id"] = s.id;
    j["duration"] = s.duration;
    j["frame_rate"] = s.frame_rate;
    j["image_size"] = {{"W", s.image_w}, {"H", s.image_h}};
    j["time_of_day"] = s.time_of_day;
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : s.objects) {
        nlohmann::json traj = nlohmann::json::array();
        for (const auto& wp : o.trajectory) {
            traj.push_back({{"frame_index", wp.frame_index},
                            {"bbox", {{"cx", wp.bbox.cx}, {"cy", wp.bbox.cy}, {"w", wp.bbox.w}, {"h", wp.bbox.h}}},
                            {"visible", wp.visible}});
        }
        objs.push_back({{"id", o.id}, {"trajectory", std::move(traj)}});
    }
    j["objects"] = std::move(objs);
    nlohmann::json ego = nlohmann::json::array();
    for (const auto& e : s.ego) ego.push_back({{"speed", e.speed}, {"heading", e.heading}});
    j["ego"] = std::move(ego);
    return j;
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
    if (j.at("schema_version").get<int>() != kScenarioSchemaVersion)
        throw IoError("unsupported scenario schema version");
    Scenario s;
    s.id = j.at("id").get<std::string>();
    s.duration = j.at("duration").get<double>();
    s.frame_rate = j.at("frame_rate").get<double>();
    s.image_w = j.at("image_size").at("W").get<int>();
    s.image_h = j.at("image_size").at("H").get<int>();
    s.time_of_day = j.at("time_of_day").get<double>();
    for (const auto& jo : j.at("objects")) {
        GtObject o;
        o.id = jo.at("id").get<int>();
        for (const auto& jw : jo.at("trajectory")) {
            Waypoint wp;
            wp.frame_index = jw.at("frame_index").get<int>();
            const auto& jb = jw.at("bbox");
            wp.bbox = BBox{jb.at("cx").get<double>(), jb.at("cy").get<double>(), jb.at("w").get<double>(),
                           jb.at("h").get<double>()};
            wp.visible = jw.at("visible").get<bool>();
            o.trajectory.push_back(wp);
        }
        s.objects.push_back(std::move(o));
    }
    for (const auto& je : j.at("ego")) s.ego.push_back(EgoState{je.at("speed").get<double>(), je.at("heading").get<double>()});
    return s;
}

// ---------------------------------------------------------------------------
// Per-frame view used by the pipeline, the evaluator and feature extraction.

struct FrameBox {
    int id = 0;
    BBox bbox;
};

struct FrameSequence {
    std::string scenario_id;
    double frame_rate = 0.0;
    int image_w = 0;
    int image_h = 0;
    double time_of_day = 0.0;
    std::vector<std::vector<FrameBox>> frames;  // visible GT boxes per frame
    std::vector<EgoState> ego;
    std::map<int, int> first_frame_of_id;  // first appearance, for longevity

    int frame_count() const { return static_cast<int>(frames.size()); }
    double frame_time(int f) const { return static_cast<double>(f) / frame_rate; }
};

inline FrameSequence make_frame_sequence(const Scenario& s) {
    FrameSequence fs;
    fs.scenario_id = s.id;
    fs.frame_rate = s.frame_rate;
    fs.image_w = s.image_w;
    fs.image_h = s.image_h;
    fs.time_of_day = s.time_of_day;
    fs.frames.assign(s.frame_count(), {});
    fs.ego = s.ego;
    if (static_cast<int>(fs.ego.size()) != s.frame_count())
        throw ValidationError("scenario '" + s.id + "': ego state count != frame count");
    for (const auto& o : s.objects) {
        int prev = -1;
        for (const auto& wp : o.trajectory) {
            if (wp.frame_index <= prev)
                throw ValidationError("scenario '" + s.id + "': non-increasing frame indices for object " +
                                      std::to_string(o.id));
            prev = wp.frame_index;
            if (wp.frame_index < 0 || wp.frame_index >= s.frame_count())
                throw ValidationError("scenario '" + s.id + "': object frame index out of range");
            if (!fs.first_frame_of_id.count(o.id)) fs.first_frame_of_id[o.id] = wp.frame_index;
            if (wp.visible && wp.bbox.valid()) fs.frames[wp.frame_index].push_back(FrameBox{o.id, wp.bbox});
        }
    }
    return fs;
}

}  // namespace streamperf
