#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "streamperf/geometry.hpp"
#include "streamperf/hungarian.hpp"
#include "streamperf/rng.hpp"
#include "streamperf/scenario.hpp"

namespace streamperf {

// ---------------------------------------------------------------------------
// Configurations

enum class Model { D3 = 0, D4, D5, D6, D7, D7x };
inline constexpr int kNumModels = 6;

inline const char* model_name(Model m) {
    static const char* names[] = {"D3", "D4", "D5", "D6", "D7", "D7x"};
    return names[static_cast<int>(m)];
}

inline Model parse_model(const std::string& s) {
    for (int i = 0; i < kNumModels; ++i)
        if (s == model_name(static_cast<Model>(i))) return static_cast<Model>(i);
    throw ValidationError("unknown detector model: '" + s + "'");
}

inline const std::vector<int>& max_age_values() {
    static const std::vector<int> v{1, 3, 7};
    return v;
}
inline const std::vector<double>& conf_threshold_values() {
    static const std::vector<double> v{0.4, 0.6, 0.7};
    return v;
}
inline const std::vector<double>& min_match_iou_values() {
    static const std::vector<double> v{0.1, 0.2, 0.3};
    return v;
}
inline const std::vector<int>& reinit_freq_values() {
    static const std::vector<int> v{1, 2, 3};
    return v;
}

struct PipelineConfig {
    Model model = Model::D4;
    int max_age = 1;              // frames a track survives without a match
    double conf_threshold = 0.4;  // detections below are dropped
    double min_match_iou = 0.1;   // association matches below are rejected
    int reinit_freq = 1;          // detector runs on frames f % reinit_freq == 0

    std::string label() const {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%s-a%d-c%.1f-i%.1f-r%d", model_name(model), max_age, conf_threshold,
                      min_match_iou, reinit_freq);
        return buf;
    }
};

template <typename T>
inline bool value_in(const std::vector<T>& vals, T x) {
    for (const T& v : vals)
        if (v == x) return true;
    return false;
}

inline void validate_config(const PipelineConfig& c) {
    if (!value_in(max_age_values(), c.max_age)) throw ValidationError("config: max_age outside declared grid");
    if (!value_in(conf_threshold_values(), c.conf_threshold))
        throw ValidationError("config: conf_threshold outside declared grid");
    if (!value_in(min_match_iou_values(), c.min_match_iou))
        throw ValidationError("config: min_match_iou outside declared grid");
    if (!value_in(reinit_freq_values(), c.reinit_freq)) throw ValidationError("config: reinit_freq outside declared grid");
}

enum class GridKind { defaults, extended };

inline GridKind parse_grid_kind(const std::string& s) {
    if (s == "default") return GridKind::defaults;
    if (s == "extended") return GridKind::extended;
    throw ValidationError("unknown grid: '" + s + "' (expected default|extended)");
}

inline const char* grid_kind_name(GridKind k) { return k == GridKind::defaults ? "default" : "extended"; }

// Default grid: model x max_age (18). Extended grid: full product (486).
inline std::vector<PipelineConfig> make_grid(GridKind kind) {
    std::vector<PipelineConfig> grid;
    for (int m = 0; m < kNumModels; ++m) {
        for (int age : max_age_values()) {
            if (kind == GridKind::defaults) {
                grid.push_back(PipelineConfig{static_cast<Model>(m), age, 0.4, 0.1, 1});
                continue;
            }
            for (double conf : conf_threshold_values())
                for (double miou : min_match_iou_values())
                    for (int reinit : reinit_freq_values())
                        grid.push_back(PipelineConfig{static_cast<Model>(m), age, conf, miou, reinit});
        }
    }
    return grid;
}

// Tie-break order used everywhere a config argmax can tie: lower latency
// (model index; latencies are strictly increasing in it), then lower max_age,
// then the remaining knobs.
inline bool config_tie_less(const PipelineConfig& a, const PipelineConfig& b) {
    return std::make_tuple(static_cast<int>(a.model), a.max_age, a.conf_threshold, a.min_match_iou, a.reinit_freq) <
           std::make_tuple(static_cast<int>(b.model), b.max_age, b.conf_threshold, b.min_match_iou, b.reinit_freq);
}

inline nlohmann::json config_to_json(const PipelineConfig& c) {
    return {{"model", model_name(c.model)},
            {"max_age", c.max_age},
            {"conf_threshold", c.conf_threshold},
            {"min_match_iou", c.min_match_iou},
            {"reinit_freq", c.reinit_freq}};
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    c.model = parse_model(j.at("model").get<std::string>());
    c.max_age = j.at("max_age").get<int>();
    c.conf_threshold = j.at("conf_threshold").get<double>();
    c.min_match_iou = j.at("min_match_iou").get<double>();
    c.reinit_freq = j.at("reinit_freq").get<int>();
    return c;
}

// ---------------------------------------------------------------------------
// Detector profiles

struct DetectorProfile {
    double latency = 0.0;              // seconds per processed frame
    double min_detectable_area = 0.0;  // px^2; detect_prob stays < 0.05 below it
    double plateau = 1.0;              // detect_prob ceiling
    double midpoint_area = 0.0;        // logistic midpoint (in area)
    double steepness = 4.0;            // logistic slope in log-area
    double loc_noise_sigma = 0.0;      // px, center/size jitter
    double fp_rate = 0.0;              // expected false positives per frame
    double conf_sigma = 0.0;           // confidence jitter scale
};

struct FpBoxModel {
    double w_lo = 15.0, w_hi = 90.0;
    double aspect_lo = 0.5, aspect_hi = 1.8;
    double conf_lo = 0.3, conf_hi = 0.9;
};

struct KalmanParams {
    std::array<double, 4> r_diag{1.0, 1.0, 10.0, 10.0};
    std::array<double, 7> p0_diag{10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4};
    std::array<double, 7> q_diag{1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 1e-4};
};

struct ProfileSet {
    std::array<DetectorProfile, kNumModels> models;
    FpBoxModel fp_box;
    KalmanParams kalman;

    const DetectorProfile& of(Model m) const { return models[static_cast<int>(m)]; }

    // Logistic in log-area: plateau / (1 + (midpoint/area)^steepness).
    double detect_prob(Model m, double area) const {
        const DetectorProfile& p = of(m);
        if (area <= 0.0) return 0.0;
        return p.plateau / (1.0 + std::pow(p.midpoint_area / area, p.steepness));
    }

    void validate() const {
        for (int i = 0; i < kNumModels; ++i) {
            const DetectorProfile& p = models[i];
            if (p.latency < 0 || p.plateau <= 0 || p.plateau > 1 || p.steepness <= 0 || p.loc_noise_sigma < 0 ||
                p.fp_rate < 0 || p.conf_sigma < 0 || p.min_detectable_area <= 0)
                throw ValidationError(std::string("profile for ") + model_name(static_cast<Model>(i)) +
                                      " has out-of-range parameters");
            if (i > 0) {
                if (!(models[i].latency > models[i - 1].latency))
                    throw ValidationError("profile latencies must be strictly increasing with model index");
                if (!(models[i].min_detectable_area < models[i - 1].min_detectable_area))
                    throw ValidationError("profile min_detectable_area must be strictly decreasing");
            }
        }
    }
};

inline nlohmann::json profile_set_to_json(const ProfileSet& ps) {
    nlohmann::json j;
    j["schema_version"] = 1;
    nlohmann::json models;
    for (int i = 0; i < kNumModels; ++i) {
        const DetectorProfile& p = ps.models[i];
        models[model_name(static_cast<Model>(i))] = {
            {"latency", p.latency},
            {"min_detectable_area", p.min_detectable_area},
            {"detect_prob", {{"plateau", p.plateau}, {"midpoint_area", p.midpoint_area}, {"steepness", p.steepness}}},
            {"loc_noise_sigma", p.loc_noise_sigma},
            {"fp_rate", p.fp_rate},
            {"conf_sigma", p.conf_sigma}};
    }
    j["models"] = std::move(models);
    j["false_positives"] = {{"w_lo", ps.fp_box.w_lo},         {"w_hi", ps.fp_box.w_hi},
                            {"aspect_lo", ps.fp_box.aspect_lo}, {"aspect_hi", ps.fp_box.aspect_hi},
                            {"conf_lo", ps.fp_box.conf_lo},   {"conf_hi", ps.fp_box.conf_hi}};
    j["kalman"] = {{"r_diag", ps.kalman.r_diag}, {"p0_diag", ps.kalman.p0_diag}, {"q_diag", ps.kalman.q_diag}};
    return j;
}

inline ProfileSet profile_set_from_json(const nlohmann::json& j) {
    ProfileSet ps;
    for (int i = 0; i < kNumModels; ++i) {
        const nlohmann::json& jm = j.at("models").at(model_name(static_cast<Model>(i)));
        DetectorProfile p;
        p.latency = jm.at("latency").get<double>();
        p.min_detectable_area = jm.at("min_detectable_area").get<double>();
        p.plateau = jm.at("detect_prob").at("plateau").get<double>();
        p.midpoint_area = jm.at("detect_prob").at("midpoint_area").get<double>();
        p.steepness = jm.at("detect_prob").at("steepness").get<double>();
        p.loc_noise_sigma = jm.at("loc_noise_sigma").get<double>();
        p.fp_rate = jm.at("fp_rate").get<double>();
        p.conf_sigma = jm.at("conf_sigma").get<double>();
        ps.models[i] = p;
    }
    if (j.contains("false_positives")) {
        const auto& jf = j.at("false_positives");
        ps.fp_box = FpBoxModel{jf.at("w_lo").get<double>(),      jf.at("w_hi").get<double>(),
                               jf.at("aspect_lo").get<double>(), jf.at("aspect_hi").get<double>(),
                               jf.at("conf_lo").get<double>(),   jf.at("conf_hi").get<double>()};
    }
    if (j.contains("kalman")) {
        const auto& jk = j.at("kalman");
        for (int i = 0; i < 4; ++i) ps.kalman.r_diag[i] = jk.at("r_diag").at(i).get<double>();
        for (int i = 0; i < 7; ++i) ps.kalman.p0_diag[i] = jk.at("p0_diag").at(i).get<double>();
        for (int i = 0; i < 7; ++i) ps.kalman.q_diag[i] = jk.at("q_diag").at(i).get<double>();
    }
    return ps;
}

inline ProfileSet load_profile_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open detector profile file: " + path);
    nlohmann::json j;
    in >> j;
    ProfileSet ps = profile_set_from_json(j);
    ps.validate();
    return ps;
}

// ---------------------------------------------------------------------------
// Detector simulation

struct Detection {
    BBox bbox;
    double confidence = 0.0;
};

inline std::vector<Detection> simulate_detector(const std::vector<FrameBox>& gt_boxes, Model model,
                                                double conf_threshold, Rng& rng, const ProfileSet& profiles,
                                                double plane_w, double plane_h) {
    const DetectorProfile& prof = profiles.of(model);
    std::vector<Detection> out;
    out.reserve(gt_boxes.size());
    for (const FrameBox& g : gt_boxes) {
        double p = profiles.detect_prob(model, g.bbox.area());
        if (rng.uniform() >= p) continue;
        BBox b = g.bbox;
        if (prof.loc_noise_sigma > 0.0) {
            b.cx += rng.normal() * prof.loc_noise_sigma;
            b.cy += rng.normal() * prof.loc_noise_sigma;
            b.w = std::max(1.0, b.w + rng.normal() * prof.loc_noise_sigma);
            b.h = std::max(1.0, b.h + rng.normal() * prof.loc_noise_sigma);
        }
        b = clip_to_plane(b, plane_w, plane_h);
        if (!b.valid()) continue;
        double conf = p;
        if (prof.conf_sigma > 0.0) conf += rng.normal() * prof.conf_sigma * (1.0 - p);
        conf = std::clamp(conf, 0.0, 1.0);
        if (conf >= conf_threshold) out.push_back(Detection{b, conf});
    }
    int n_fp = rng.poisson(prof.fp_rate);
    for (int k = 0; k < n_fp; ++k) {
        double w = rng.uniform(profiles.fp_box.w_lo, profiles.fp_box.w_hi);
        double h = w / rng.uniform(profiles.fp_box.aspect_lo, profiles.fp_box.aspect_hi);
        BBox b{rng.uniform(0.0, plane_w), rng.uniform(0.0, plane_h), w, h};
        b = clip_to_plane(b, plane_w, plane_h);
        double conf = rng.uniform(profiles.fp_box.conf_lo, profiles.fp_box.conf_hi);
        if (b.valid() && conf >= conf_threshold) out.push_back(Detection{b, conf});
    }
    return out;
}

// ---------------------------------------------------------------------------
// SORT Kalman filter: state (cx, cy, area, aspect, v_cx, v_cy, v_area)

class KalmanBoxFilter {
public:
    KalmanBoxFilter(const BBox& box, const KalmanParams& kp) : kp_(kp) {
        x_ = {box.cx, box.cy, std::max(1.0, box.area()), std::max(1e-3, box.w / box.h), 0.0, 0.0, 0.0};
        for (auto& row : p_) row.fill(0.0);
        for (int i = 0; i < 7; ++i) p_[i][i] = kp_.p0_diag[i];
    }

    void predict() {
        if (x_[2] + x_[6] <= 0.0) x_[6] = 0.0;  // keep area positive under extrapolation
        x_[0] += x_[4];
        x_[1] += x_[5];
        x_[2] += x_[6];
        // P = F P F^T + Q with F = I plus pos<-vel couplings
        std::array<std::array<double, 7>, 7> a;
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 7; ++j) a[i][j] = p_[i][j] + (i < 3 ? p_[i + 4][j] : 0.0);
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 7; ++j) p_[i][j] = a[i][j] + (j < 3 ? a[i][j + 4] : 0.0);
        for (int i = 0; i < 7; ++i) p_[i][i] += kp_.q_diag[i];
    }

    void update(const BBox& box) {
        std::array<double, 4> z{box.cx, box.cy, std::max(1.0, box.area()), std::max(1e-3, box.w / box.h)};
        std::array<double, 4> y;
        for (int i = 0; i < 4; ++i) y[i] = z[i] - x_[i];
        std::array<std::array<double, 4>, 4> s;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) s[i][j] = p_[i][j] + (i == j ? kp_.r_diag[i] : 0.0);
        std::array<std::array<double, 4>, 4> s_inv = invert4(s);
        std::array<std::array<double, 4>, 7> k;
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 4; ++j) {
                double acc = 0.0;
                for (int m = 0; m < 4; ++m) acc += p_[i][m] * s_inv[m][j];
                k[i][j] = acc;
            }
        for (int i = 0; i < 7; ++i) {
            double acc = 0.0;
            for (int j = 0; j < 4; ++j) acc += k[i][j] * y[j];
            x_[i] += acc;
        }
        std::array<std::array<double, 7>, 7> p_new;
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 7; ++j) {
                double acc = 0.0;
                for (int m = 0; m < 4; ++m) acc += k[i][m] * p_[m][j];
                p_new[i][j] = p_[i][j] - acc;
            }
        p_ = p_new;
    }

    BBox state_box() const {
        double area = std::max(1.0, x_[2]);
        double aspect = std::clamp(x_[3], 0.05, 20.0);
        double w = std::sqrt(area * aspect);
        double h = std::sqrt(area / aspect);
        return BBox{x_[0], x_[1], w, h};
    }

private:
    static std::array<std::array<double, 4>, 4> invert4(std::array<std::array<double, 4>, 4> m) {
        std::array<std::array<double, 4>, 4> inv;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) inv[i][j] = (i == j) ? 1.0 : 0.0;
        for (int col = 0; col < 4; ++col) {
            int pivot = col;
            for (int r = col + 1; r < 4; ++r)
                if (std::fabs(m[r][col]) > std::fabs(m[pivot][col])) pivot = r;
            std::swap(m[col], m[pivot]);
            std::swap(inv[col], inv[pivot]);
            double d = m[col][col];
            for (int j = 0; j < 4; ++j) {
                m[col][j] /= d;
                inv[col][j] /= d;
            }
            for (int r = 0; r < 4; ++r) {
                if (r == col) continue;
                double factor = m[r][col];
                for (int j = 0; j < 4; ++j) {
                    m[r][j] -= factor * m[col][j];
                    inv[r][j] -= factor * inv[col][j];
                }
            }
        }
        return inv;
    }

    KalmanParams kp_;
    std::array<double, 7> x_;
    std::array<std::array<double, 7>, 7> p_;
};

// ---------------------------------------------------------------------------
// SORT tracker

struct TrackState {
    int track_id = 0;
    KalmanBoxFilter kalman;
    int time_since_update = 0;  // detector association rounds without a match
    int hits = 0;
    BBox output_box;  // measurement when matched this step, prediction otherwise
};

class SortTracker {
public:
    SortTracker(const PipelineConfig& cfg, const KalmanParams& kp, double plane_w, double plane_h)
        : cfg_(cfg), kp_(kp), plane_w_(plane_w), plane_h_(plane_h) {}

    // One tracker step covering dt elapsed frames. When the detector did not
    // run (reinit skip) tracks extrapolate only and time_since_update is left
    // alone, so max_age counts detector rounds without a match.
    std::vector<std::pair<int, BBox>> step(const std::vector<Detection>& detections, bool detector_ran, int dt) {
        for (auto& t : tracks_) {
            for (int k = 0; k < dt; ++k) t.kalman.predict();
            t.output_box = t.kalman.state_box();
        }
        if (detector_ran) {
            std::vector<int> det_to_track(detections.size(), -1);
            if (!tracks_.empty() && !detections.empty()) {
                std::vector<std::vector<double>> cost(tracks_.size(), std::vector<double>(detections.size()));
                for (std::size_t i = 0; i < tracks_.size(); ++i)
                    for (std::size_t j = 0; j < detections.size(); ++j)
                        cost[i][j] = 1.0 - iou(tracks_[i].output_box, detections[j].bbox);
                std::vector<int> assign = hungarian_match(cost);
                for (std::size_t i = 0; i < tracks_.size(); ++i) {
                    int j = assign[i];
                    if (j >= 0 && iou(tracks_[i].output_box, detections[j].bbox) >= cfg_.min_match_iou)
                        det_to_track[j] = static_cast<int>(i);
                }
            }
            std::vector<char> matched(tracks_.size(), 0);
            for (std::size_t j = 0; j < detections.size(); ++j) {
                int ti = det_to_track[j];
                if (ti < 0) continue;
                tracks_[ti].kalman.update(detections[j].bbox);
                tracks_[ti].time_since_update = 0;
                tracks_[ti].hits += 1;
                tracks_[ti].output_box = detections[j].bbox;
                matched[ti] = 1;
            }
            for (std::size_t i = 0; i < tracks_.size(); ++i)
                if (!matched[i]) tracks_[i].time_since_update += 1;
            for (std::size_t j = 0; j < detections.size(); ++j) {
                if (det_to_track[j] >= 0) continue;
                TrackState t{next_id_++, KalmanBoxFilter(detections[j].bbox, kp_), 0, 1, detections[j].bbox};
                tracks_.push_back(std::move(t));
            }
        }
        tracks_.erase(std::remove_if(tracks_.begin(), tracks_.end(),
                                     [&](const TrackState& t) { return t.time_since_update > cfg_.max_age; }),
                      tracks_.end());
        std::vector<std::pair<int, BBox>> out;
        out.reserve(tracks_.size());
        for (const auto& t : tracks_) {
            BBox clipped = clip_to_plane(t.output_box, plane_w_, plane_h_);
            if (clipped.w >= 1.0 && clipped.h >= 1.0) out.emplace_back(t.track_id, clipped);
        }
        return out;
    }

    const std::vector<TrackState>& tracks() const { return tracks_; }

private:
    PipelineConfig cfg_;
    KalmanParams kp_;
    double plane_w_;
    double plane_h_;
    std::vector<TrackState> tracks_;
    int next_id_ = 1;
};

// ---------------------------------------------------------------------------
// Streaming pipeline

struct TimedOutput {
    int input_frame = 0;
    double available_at = 0.0;  // input frame timestamp + effective latency
    std::vector<std::pair<int, BBox>> tracks;
};

// JSONL log: one record per output.
inline std::string outputs_to_jsonl(const std::vector<TimedOutput>& outputs) {
    std::string text;
    for (const auto& o : outputs) {
        nlohmann::json tracks = nlohmann::json::array();
        for (const auto& [id, box] : o.tracks) tracks.push_back({id, box.cx, box.cy, box.w, box.h});
        nlohmann::json j{{"input_frame", o.input_frame}, {"available_at", o.available_at}, {"tracks", std::move(tracks)}};
        text += j.dump();
        text += "\n";
    }
    return text;
}

inline std::vector<TimedOutput> outputs_from_jsonl(const std::string& text) {
    std::vector<TimedOutput> outputs;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        if (end > pos) {
            nlohmann::json j = nlohmann::json::parse(text.substr(pos, end - pos));
            TimedOutput o;
            o.input_frame = j.at("input_frame").get<int>();
            o.available_at = j.at("available_at").get<double>();
            for (const auto& jt : j.at("tracks"))
                o.tracks.emplace_back(jt.at(0).get<int>(),
                                      BBox{jt.at(1).get<double>(), jt.at(2).get<double>(), jt.at(3).get<double>(),
                                           jt.at(4).get<double>()});
            outputs.push_back(std::move(o));
        }
        pos = end + 1;
    }
    return outputs;
}

// Discrete-event run over one scenario. The detector is busy for
// latency(model) * latency_scale per processed frame; when it frees it takes
// the most recent detector-eligible frame (older ones are dropped). Frames
// with frame_index % reinit_freq != 0 skip the detector: the tracker
// extrapolates at zero marginal latency and they are never dropped.
inline std::vector<TimedOutput> run_pipeline(const FrameSequence& frames, const PipelineConfig& cfg,
                                             const ProfileSet& profiles, double latency_scale, Rng& rng) {
    if (latency_scale <= 0.0) throw ValidationError("latency_scale must be > 0");
    validate_config(cfg);
    const double latency = profiles.of(cfg.model).latency * latency_scale;
    const int n = frames.frame_count();
    SortTracker tracker(cfg, profiles.kalman, frames.image_w, frames.image_h);
    std::vector<TimedOutput> outputs;
    outputs.reserve(n);
    double t_free = -std::numeric_limits<double>::infinity();
    int last_processed = -1;
    for (int f = 0; f < n; ++f) {
        const double arrival = frames.frame_time(f);
        const int dt = last_processed < 0 ? 1 : f - last_processed;
        if (f % cfg.reinit_freq == 0) {
            bool take;
            if (arrival >= t_free) {
                take = true;  // pipeline idle: picks the frame up on arrival
                t_free = arrival + latency;
            } else {
                // busy on arrival: processed only if still the newest eligible
                // frame when the pipeline frees
                int next_eligible = f + cfg.reinit_freq;
                take = next_eligible >= n || frames.frame_time(next_eligible) > t_free;
                if (take) t_free += latency;
            }
            if (!take) continue;  // dropped
            auto dets = simulate_detector(frames.frames[f], cfg.model, cfg.conf_threshold, rng, profiles,
                                          frames.image_w, frames.image_h);
            auto tracks = tracker.step(dets, true, dt);
            outputs.push_back(TimedOutput{f, arrival + latency, std::move(tracks)});
        } else {
            auto tracks = tracker.step({}, false, dt);
            outputs.push_back(TimedOutput{f, arrival, std::move(tracks)});
        }
        last_processed = f;
    }
    std::sort(outputs.begin(), outputs.end(), [](const TimedOutput& a, const TimedOutput& b) {
        if (a.available_at != b.available_at) return a.available_at < b.available_at;
        return a.input_frame < b.input_frame;
    });
    return outputs;
}

}  // namespace streamperf
