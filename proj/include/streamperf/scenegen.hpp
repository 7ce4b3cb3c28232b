#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "streamperf/rng.hpp"
#include "streamperf/scenario.hpp"

namespace streamperf {

enum class Archetype { intersection_stop, highway_cruise, ego_turn, occlusion_corridor, mixed };

inline const char* archetype_name(Archetype a) {
    switch (a) {
        case Archetype::intersection_stop: return "intersection-stop";
        case Archetype::highway_cruise: return "highway-cruise";
        case Archetype::ego_turn: return "ego-turn";
        case Archetype::occlusion_corridor: return "occlusion-corridor";
        case Archetype::mixed: return "mixed";
    }
    return "?";
}

inline Archetype parse_archetype(const std::string& s) {
    if (s == "intersection-stop") return Archetype::intersection_stop;
    if (s == "highway-cruise") return Archetype::highway_cruise;
    if (s == "ego-turn") return Archetype::ego_turn;
    if (s == "occlusion-corridor") return Archetype::occlusion_corridor;
    if (s == "mixed") return Archetype::mixed;
    throw ValidationError("unknown scene archetype: '" + s + "'");
}

struct ScenarioSpec {
    std::string id;
    Archetype archetype = Archetype::mixed;
    double duration = 20.0;    // seconds
    double frame_rate = 10.0;  // Hz
    int image_w = 1920;
    int image_h = 1280;
    int min_objects = 6;
    int max_objects = 12;
};

namespace detail {

// Sampling ranges for one object population.
struct ObjectStyle {
    double area_lo, area_hi;
    double aspect_lo, aspect_hi;
    double speed_lo, speed_hi;  // px/frame at phase multiplier 1
    bool lateral;               // predominately horizontal motion
    double growth_lo, growth_hi;
};

inline ObjectStyle style_tiny() { return {100, 420, 0.8, 1.4, 2.0, 4.5, true, 1.0, 1.0}; }
inline ObjectStyle style_queued_small() { return {350, 1100, 0.8, 1.4, 2.5, 5.5, true, 1.0, 1.0}; }
inline ObjectStyle style_slow_medium() { return {1400, 3200, 1.1, 1.8, 1.5, 3.5, true, 0.999, 1.001}; }
inline ObjectStyle style_cruise() { return {1200, 3600, 1.2, 1.9, 2.5, 6.0, true, 0.997, 1.003}; }
inline ObjectStyle style_fast_large() { return {2800, 6400, 1.2, 2.0, 12.0, 22.0, true, 0.998, 1.002}; }
inline ObjectStyle style_corridor() { return {1000, 2600, 1.0, 1.7, 2.0, 5.0, true, 0.999, 1.001}; }

struct PlannedOcclusion {
    int start_offset;  // frames after spawn
    int length;
};

// Emits one object trajectory starting at spawn_frame. The per-frame phase
// multiplier scales the object's base velocity, which keeps motion
// piecewise-constant while letting the scene change character over time.
// Ends when the box leaves the plane or the scenario ends; returns the last
// emitted frame index, or spawn_frame-1 if nothing was emitted.
inline int emit_object(Rng& rng, const ScenarioSpec& spec, const ObjectStyle& st, double area_scale,
                       double shared_growth, int id, int spawn_frame, int n_frames,
                       const std::vector<double>& phase, const std::vector<PlannedOcclusion>& occs,
                       std::vector<GtObject>& out) {
    double area = rng.uniform(st.area_lo, st.area_hi) * area_scale;
    double aspect = rng.uniform(st.aspect_lo, st.aspect_hi);
    double w = std::sqrt(area * aspect);
    double h = std::sqrt(area / aspect);
    double speed = rng.uniform(st.speed_lo, st.speed_hi);
    double dir;
    double cx, cy;
    double mw = static_cast<double>(spec.image_w);
    double mh = static_cast<double>(spec.image_h);
    if (st.lateral && speed > 0.5) {
        // spawn toward one side, moving across
        bool to_right = rng.uniform() < 0.5;
        dir = (to_right ? 0.0 : M_PI) + rng.uniform(-0.25, 0.25);
        cx = to_right ? rng.uniform(0.05 * mw, 0.45 * mw) : rng.uniform(0.55 * mw, 0.95 * mw);
        cy = rng.uniform(0.25 * mh, 0.75 * mh);
    } else {
        dir = rng.uniform(0.0, 2.0 * M_PI);
        cx = rng.uniform(0.15 * mw, 0.85 * mw);
        cy = rng.uniform(0.15 * mh, 0.85 * mh);
    }
    double vx = speed * std::cos(dir);
    double vy = speed * std::sin(dir) * (st.lateral ? 0.3 : 1.0);
    double growth = rng.uniform(st.growth_lo, st.growth_hi) * shared_growth;
    // optional second motion piece
    int piece_break = n_frames;
    double vx2 = vx, vy2 = vy;
    if (speed > 0.5 && rng.uniform() < 0.35) {
        piece_break = spawn_frame + rng.uniform_int(20, 60);
        double turn = rng.uniform(-0.6, 0.6);
        vx2 = speed * std::cos(dir + turn);
        vy2 = speed * std::sin(dir + turn) * (st.lateral ? 0.3 : 1.0);
    }

    GtObject obj;
    obj.id = id;
    int last = spawn_frame - 1;
    for (int f = spawn_frame; f < n_frames; ++f) {
        BBox raw{cx, cy, w, h};
        BBox clipped = clip_to_plane(raw, mw, mh);
        if (clipped.w < 2.0 || clipped.h < 2.0) break;
        bool visible = true;
        int off = f - spawn_frame;
        for (const auto& occ : occs)
            if (off >= occ.start_offset && off < occ.start_offset + occ.length) visible = false;
        obj.trajectory.push_back(Waypoint{f, clipped, visible});
        last = f;
        double m = f < static_cast<int>(phase.size()) ? phase[f] : 1.0;
        double uvx = ((f < piece_break) ? vx : vx2) * m;
        double uvy = ((f < piece_break) ? vy : vy2) * m;
        cx += uvx;
        cy += uvy;
        w = std::clamp(w * growth, 8.0, 0.25 * mw);
        h = std::clamp(h * growth, 8.0, 0.25 * mh);
    }
    if (!obj.trajectory.empty()) out.push_back(std::move(obj));
    return last;
}

// Fills a slot with a chain of objects so fast scenes keep their density.
// occlusion_runs > 0 plants that many visible=false spans on the slot's
// first object and randomly recurring spans on later ones.
inline void fill_slot(Rng& rng, const ScenarioSpec& spec, const ObjectStyle& st, double area_scale,
                      double shared_growth, int n_frames, const std::vector<double>& phase, int occlusion_runs,
                      int& next_id, std::vector<GtObject>& out) {
    int f = rng.uniform_int(0, n_frames / 5);
    bool first = true;
    while (f < n_frames - 4) {
        std::vector<PlannedOcclusion> occs;
        int runs = first ? occlusion_runs : (occlusion_runs > 0 && rng.uniform() < 0.6 ? 1 : 0);
        int at = rng.uniform_int(6, 18);
        for (int r = 0; r < runs; ++r) {
            int len = rng.uniform_int(3, 6);
            occs.push_back(PlannedOcclusion{at, len});
            at += len + rng.uniform_int(10, 30);
        }
        int last = emit_object(rng, spec, st, area_scale, shared_growth, next_id++, f, n_frames, phase, occs, out);
        first = false;
        if (last < f) break;
        f = last + 1 + rng.uniform_int(2, 12);
    }
}

// Per-frame velocity multiplier describing how the scene changes over the
// scenario. Regimes alternate every few seconds, so segment scores inherit
// the phase structure and fresh features are worth more than stale ones.
inline std::vector<double> alternating_phase(Rng& rng, int n_frames, double level_a, double level_b, int min_run,
                                             int max_run) {
    std::vector<double> phase(n_frames, level_a);
    bool on_a = rng.uniform() < 0.5;
    int f = 0;
    while (f < n_frames) {
        int run = rng.uniform_int(min_run, max_run);
        double level = on_a ? level_a : level_b;
        for (int k = f; k < std::min(n_frames, f + run); ++k) phase[k] = level;
        f += run;
        on_a = !on_a;
    }
    return phase;
}

inline std::vector<double> make_phase(Rng& rng, Archetype a, int n_frames) {
    switch (a) {
        case Archetype::intersection_stop:
            // queue dynamics: rolls forward, stops, creeps, stops again
            return alternating_phase(rng, n_frames, 1.0, 0.15, 60, 100);
        case Archetype::ego_turn:
            // straight drift alternating with fast sweeps
            return alternating_phase(rng, n_frames, 0.18, 1.0, 60, 100);
        case Archetype::highway_cruise:
            return std::vector<double>(n_frames, 1.0);  // steady
        case Archetype::occlusion_corridor:
            return std::vector<double>(n_frames, 1.0);  // the occlusion runs carry the context
        case Archetype::mixed: {
            std::vector<double> phase(n_frames, 1.0);
            int switches = rng.uniform_int(2, 4);
            double level = rng.uniform(0.15, 1.0);
            int at = 0;
            for (int s = 0; s <= switches; ++s) {
                int until = s == switches ? n_frames : rng.uniform_int(at + n_frames / 6, n_frames - 1);
                for (int f = at; f < until && f < n_frames; ++f) phase[f] = level;
                level = rng.uniform(0.15, 1.0);
                at = until;
            }
            return phase;
        }
    }
    return std::vector<double>(n_frames, 1.0);
}

inline std::vector<EgoState> make_ego(Rng& rng, Archetype a, int n_frames, double frame_rate) {
    std::vector<EgoState> ego(n_frames);
    double heading = rng.uniform(-M_PI, M_PI);
    switch (a) {
        case Archetype::intersection_stop: {
            double v0 = rng.uniform(6.0, 10.0);
            int stop_at = static_cast<int>(0.3 * n_frames);
            for (int f = 0; f < n_frames; ++f) {
                double speed = f < stop_at ? v0 * (1.0 - static_cast<double>(f) / stop_at) : 0.0;
                ego[f] = EgoState{speed, wrap_angle(heading)};
            }
            break;
        }
        case Archetype::highway_cruise: {
            double v = rng.uniform(25.0, 33.0);
            for (int f = 0; f < n_frames; ++f) ego[f] = EgoState{v, wrap_angle(heading)};
            break;
        }
        case Archetype::ego_turn: {
            double v = rng.uniform(7.0, 12.0);
            double rate = rng.uniform(0.015, 0.03) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
            int turn_start = static_cast<int>(0.2 * n_frames);
            int turn_end = static_cast<int>(0.8 * n_frames);
            for (int f = 0; f < n_frames; ++f) {
                if (f > turn_start && f <= turn_end) heading += rate;
                ego[f] = EgoState{v, wrap_angle(heading)};
            }
            break;
        }
        case Archetype::occlusion_corridor: {
            double v = rng.uniform(5.0, 9.0);
            for (int f = 0; f < n_frames; ++f) ego[f] = EgoState{v, wrap_angle(heading)};
            break;
        }
        case Archetype::mixed: {
            double v = rng.uniform(3.0, 20.0);
            double rate = rng.uniform(-0.01, 0.01);
            for (int f = 0; f < n_frames; ++f) {
                heading += rate;
                ego[f] = EgoState{v, wrap_angle(heading)};
            }
            break;
        }
    }
    return ego;
}

inline double pick_time_of_day(Rng& rng, Archetype a) {
    static const double day[] = {7.5, 9.5, 12.0, 14.5, 16.5};
    static const double night[] = {20.5, 21.5, 23.0, 2.0};
    bool at_night = rng.uniform() < (a == Archetype::intersection_stop ? 0.4 : 0.25);
    if (at_night) return night[rng.uniform_int(0, 3)];
    return day[rng.uniform_int(0, 4)];
}

}  // namespace detail

inline void validate_spec(const ScenarioSpec& spec) {
    if (spec.duration <= 0.0) throw ValidationError("scenario spec: duration must be > 0");
    if (spec.frame_rate <= 0.0) throw ValidationError("scenario spec: frame_rate must be > 0");
    if (spec.id.empty()) throw ValidationError("scenario spec: id must be nonempty");
    if (spec.image_w < 64 || spec.image_h < 64) throw ValidationError("scenario spec: image plane too small");
    if (spec.min_objects < 1 || spec.max_objects < spec.min_objects)
        throw ValidationError("scenario spec: bad object count range");
}

// Deterministic for (spec, seed): the stream is derived from (seed, spec.id).
inline Scenario generate_scenario(const ScenarioSpec& spec, std::uint64_t seed) {
    validate_spec(spec);
    Rng rng(derive_seed(seed, spec.id));
    const int n = static_cast<int>(std::lround(spec.duration * spec.frame_rate));

    Scenario s;
    s.id = spec.id;
    s.duration = spec.duration;
    s.frame_rate = spec.frame_rate;
    s.image_w = spec.image_w;
    s.image_h = spec.image_h;
    s.time_of_day = detail::pick_time_of_day(rng, spec.archetype);
    s.ego = detail::make_ego(rng, spec.archetype, n, spec.frame_rate);
    const std::vector<double> phase = detail::make_phase(rng, spec.archetype, n);
    // scene-level viewing distance: scales every box area, so detection
    // difficulty varies across scenarios for all configurations alike
    const double area_scale = rng.uniform(0.75, 1.6);
    // coherent approach/recede drift: every box in the scene slowly grows or
    // shrinks together, so detectability keeps moving within the scenario
    const double shared_growth = rng.uniform() < 0.5 ? rng.uniform(0.998, 0.9992) : rng.uniform(1.0008, 1.002);

    int slots = rng.uniform_int(spec.min_objects, spec.max_objects);
    if (spec.archetype == Archetype::intersection_stop) slots *= 2;  // queued traffic is dense
    int next_id = 1;
    for (int k = 0; k < slots; ++k) {
        detail::ObjectStyle st;
        int occlusion_runs = 0;
        switch (spec.archetype) {
            case Archetype::intersection_stop:
                // far queued traffic is mostly tiny; a few nearer vehicles
                st = (k % 5 < 4) ? detail::style_tiny()
                                 : (k % 10 == 4 ? detail::style_queued_small() : detail::style_slow_medium());
                break;
            case Archetype::highway_cruise:
                st = detail::style_cruise();
                break;
            case Archetype::ego_turn:
                st = detail::style_fast_large();
                break;
            case Archetype::occlusion_corridor:
                st = detail::style_corridor();
                occlusion_runs = k < 3 ? 1 : 0;  // guarantee planted visible=false runs
                break;
            case Archetype::mixed: {
                double u = rng.uniform();
                if (u < 0.35)
                    st = detail::style_queued_small();
                else if (u < 0.6)
                    st = detail::style_cruise();
                else if (u < 0.85)
                    st = detail::style_fast_large();
                else
                    st = detail::style_corridor();
                occlusion_runs = (k == 0 && rng.uniform() < 0.3) ? 1 : 0;
                break;
            }
        }
        detail::fill_slot(rng, spec, st, area_scale, shared_growth, n, phase, occlusion_runs, next_id, s.objects);
    }
    return s;
}

// Consecutive, non-overlapping segments of round(delta_tau * frame_rate)
// frames; trailing partial frames are discarded.
inline std::vector<Segment> slice_segments(const Scenario& scenario, double delta_tau) {
    if (delta_tau <= 0.0) throw ValidationError("delta_tau must be > 0");
    int seg_len = static_cast<int>(std::lround(delta_tau * scenario.frame_rate));
    if (seg_len < 2) throw ValidationError("delta_tau must span at least 2 frame periods");
    int n = scenario.frame_count();
    int count = n / seg_len;
    std::vector<Segment> segments;
    segments.reserve(count);
    for (int t = 0; t < count; ++t)
        segments.push_back(Segment{scenario.id, t, t * seg_len, (t + 1) * seg_len});
    return segments;
}

}  // namespace streamperf
