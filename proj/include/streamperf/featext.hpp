#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "streamperf/pipesim.hpp"
#include "streamperf/scenario.hpp"

namespace streamperf {

// Fixed feature layout (versioned):
//   7 area bins (6 thresholds + ALL) x {speed p10/mean/p90, self-IoU
//   p10/mean/p90, count mean}                      -> 49
//   num_objects p10/mean/p90                       -> 3
//   longevity p10/mean/p90                         -> 3
//   ego_speed p10/mean/p90                         -> 3
//   ego_turn p10/mean/p90                          -> 3
//   time_of_day                                    -> 1
//   per-bin presence mask                          -> 7
inline constexpr int kFeatureLayoutVersion = 1;
inline constexpr int kNumAreaBins = 7;  // index 6 is ALL
inline constexpr int kFeatureCount = kNumAreaBins * 7 + 13 + kNumAreaBins;

inline const std::vector<double>& area_bin_edges() {
    static const std::vector<double> edges{0.0, 665.0, 1024.0, 1480.0, 2000.0, 2565.0};
    return edges;
}

inline int area_bin(double area) {
    const auto& e = area_bin_edges();
    for (int b = static_cast<int>(e.size()) - 1; b >= 0; --b)
        if (area >= e[b]) return b;
    return 0;
}

inline std::vector<std::string> feature_names() {
    std::vector<std::string> names;
    auto bin_tag = [](int b) { return b == 6 ? std::string("all") : "bin" + std::to_string(b); };
    for (int b = 0; b < kNumAreaBins; ++b) {
        for (const char* stat : {"speed_p10", "speed_mean", "speed_p90", "self_iou_p10", "self_iou_mean",
                                 "self_iou_p90", "count_mean"})
            names.push_back(bin_tag(b) + "_" + stat);
    }
    for (const char* base : {"num_objects", "longevity", "ego_speed", "ego_turn"})
        for (const char* q : {"p10", "mean", "p90"}) names.push_back(std::string(base) + "_" + q);
    names.push_back("time_of_day");
    for (int b = 0; b < kNumAreaBins; ++b) names.push_back("mask_" + bin_tag(b));
    return names;
}

// Linear interpolation between order statistics (sorts a copy).
inline double percentile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    double h = (static_cast<double>(v.size()) - 1.0) * q;
    std::size_t lo = static_cast<std::size_t>(std::floor(h));
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

// Scenario-long per-frame track view; source-agnostic so GT tracks and
// pipeline outputs extract identically.
struct TrackView {
    std::vector<std::vector<FrameBox>> frames;
    std::map<int, int> first_frame;  // first appearance of each id
};

inline TrackView track_view_from_gt(const FrameSequence& fs) {
    TrackView tv;
    tv.frames = fs.frames;
    tv.first_frame = fs.first_frame_of_id;
    return tv;
}

inline TrackView track_view_from_outputs(const std::vector<TimedOutput>& outputs, int n_frames) {
    TrackView tv;
    tv.frames.assign(n_frames, {});
    for (const auto& o : outputs) {
        if (o.input_frame < 0 || o.input_frame >= n_frames) continue;
        for (const auto& [id, box] : o.tracks) {
            tv.frames[o.input_frame].push_back(FrameBox{id, box});
            if (!tv.first_frame.count(id)) tv.first_frame[id] = o.input_frame;
        }
    }
    return tv;
}

// Environment representation e_tau for frames [start, end). Speed samples are
// center displacements between consecutive observations of an id (normalized
// per frame when observations are more than one frame apart); self-IoU pairs
// the same observations; both are binned by the area of the later box.
// Returns the all-zero vector when fewer than 2 frames carry track data.
inline std::vector<double> extract_features(const TrackView& tracks, int start, int end,
                                            const std::vector<EgoState>& ego, double time_of_day) {
    std::vector<double> out(kFeatureCount, 0.0);
    if (start < 0 || end > static_cast<int>(tracks.frames.size()) || end - start < 2)
        throw ValidationError("extract_features: bad segment range");

    int frames_with_data = 0;
    for (int f = start; f < end; ++f)
        if (!tracks.frames[f].empty()) ++frames_with_data;
    if (frames_with_data < 2) return out;

    std::vector<std::vector<double>> speed(kNumAreaBins), self_iou(kNumAreaBins);
    std::vector<std::vector<double>> bin_count(kNumAreaBins);
    for (int b = 0; b < kNumAreaBins; ++b) bin_count[b].assign(end - start, 0.0);
    std::vector<double> num_objects, longevity, ego_speed, ego_turn;
    std::vector<long long> bin_boxes(kNumAreaBins, 0);

    std::map<int, std::pair<int, BBox>> last_seen;  // id -> (frame, box), within segment
    for (int f = start; f < end; ++f) {
        const auto& boxes = tracks.frames[f];
        num_objects.push_back(static_cast<double>(boxes.size()));
        for (const auto& fb : boxes) {
            int b = area_bin(fb.bbox.area());
            bin_count[b][f - start] += 1.0;
            bin_count[6][f - start] += 1.0;
            bin_boxes[b] += 1;
            bin_boxes[6] += 1;
            auto it = tracks.first_frame.find(fb.id);
            int first = it == tracks.first_frame.end() ? f : it->second;
            longevity.push_back(static_cast<double>(f - first + 1));
            auto prev = last_seen.find(fb.id);
            if (prev != last_seen.end()) {
                int gap = f - prev->second.first;
                double dx = fb.bbox.cx - prev->second.second.cx;
                double dy = fb.bbox.cy - prev->second.second.cy;
                double v = std::sqrt(dx * dx + dy * dy) / static_cast<double>(gap);
                double si = iou(fb.bbox, prev->second.second);
                speed[b].push_back(v);
                speed[6].push_back(v);
                self_iou[b].push_back(si);
                self_iou[6].push_back(si);
            }
            last_seen[fb.id] = {f, fb.bbox};
        }
    }
    for (int f = start; f < end && f < static_cast<int>(ego.size()); ++f) {
        ego_speed.push_back(ego[f].speed);
        if (f > start) ego_turn.push_back(std::fabs(wrap_angle(ego[f].heading - ego[f - 1].heading)));
    }

    auto put3 = [&](int base, const std::vector<double>& v) {
        out[base] = percentile(v, 0.10);
        out[base + 1] = mean_of(v);
        out[base + 2] = percentile(v, 0.90);
    };
    for (int b = 0; b < kNumAreaBins; ++b) {
        put3(7 * b, speed[b]);
        put3(7 * b + 3, self_iou[b]);
        out[7 * b + 6] = mean_of(bin_count[b]);
    }
    int base = kNumAreaBins * 7;
    put3(base, num_objects);
    put3(base + 3, longevity);
    put3(base + 6, ego_speed);
    put3(base + 9, ego_turn);
    out[base + 12] = time_of_day;
    for (int b = 0; b < kNumAreaBins; ++b) out[base + 13 + b] = bin_boxes[b] > 0 ? 1.0 : 0.0;
    return out;
}

inline std::vector<double> zero_features() { return std::vector<double>(kFeatureCount, 0.0); }

}  // namespace streamperf
