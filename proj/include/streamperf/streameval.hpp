#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "streamperf/pipesim.hpp"
#include "streamperf/scenario.hpp"

namespace streamperf {

// CLEAR-MOT accumulator counts for one span.
struct MotStats {
    long long gt_count = 0;
    long long fp = 0;
    long long fn = 0;
    long long idsw = 0;
    long long matched_count = 0;
    double matched_iou_sum = 0.0;

    bool defined() const { return gt_count > 0; }
    // 100 * (1 - (FP+FN+IDsw)/GT); undefined spans report 0 and must be
    // checked via defined().
    double mota() const {
        if (gt_count == 0) return 0.0;
        return 100.0 * (1.0 - static_cast<double>(fp + fn + idsw) / static_cast<double>(gt_count));
    }
    // mean IoU over true-positive matches, x100
    double motp() const {
        if (matched_count == 0) return 0.0;
        return 100.0 * matched_iou_sum / static_cast<double>(matched_count);
    }
    void add(const MotStats& o) {
        gt_count += o.gt_count;
        fp += o.fp;
        fn += o.fn;
        idsw += o.idsw;
        matched_count += o.matched_count;
        matched_iou_sum += o.matched_iou_sum;
    }
};

enum class AlignMode { offline, streaming };

// One evaluated GT frame: the prediction set comes from `output` (null means
// no finished prediction; every GT box in the frame becomes FN).
struct FramePairing {
    int gt_frame = 0;
    const TimedOutput* output = nullptr;
};

// Effective latency below this many frames counts as synchronous; keeps the
// latency_scale -> 0 limit equal to offline evaluation.
inline constexpr double kZeroLatencyFrames = 1e-6;

inline int streaming_frame_gap(const TimedOutput& o, const FrameSequence& frames) {
    double lag_frames = (o.available_at - frames.frame_time(o.input_frame)) * frames.frame_rate;
    if (lag_frames <= kZeroLatencyFrames) return 0;
    return static_cast<int>(std::ceil(lag_frames - 1e-9));
}

// Offline mode pairs each output with its input frame's GT and covers only
// processed frames. Streaming mode pairs each output with the GT at
// input_frame + ceil(latency * frame_rate), clamped to the last frame, keeps
// the freshest candidate per GT frame, and covers every GT frame (frames with
// no finished prediction get a null output).
inline std::vector<FramePairing> align(const std::vector<TimedOutput>& outputs, const FrameSequence& frames,
                                       AlignMode mode) {
    const int n = frames.frame_count();
    if (mode == AlignMode::offline) {
        std::vector<FramePairing> pairs;
        pairs.reserve(outputs.size());
        for (const auto& o : outputs) pairs.push_back(FramePairing{o.input_frame, &o});
        std::sort(pairs.begin(), pairs.end(),
                  [](const FramePairing& a, const FramePairing& b) { return a.gt_frame < b.gt_frame; });
        return pairs;
    }
    std::vector<const TimedOutput*> best(n, nullptr);
    for (const auto& o : outputs) {
        int g = std::min(o.input_frame + streaming_frame_gap(o, frames), n - 1);
        if (g < 0) continue;
        if (best[g] == nullptr || o.input_frame > best[g]->input_frame) best[g] = &o;  // keep the freshest
    }
    std::vector<FramePairing> pairs;
    pairs.reserve(n);
    for (int g = 0; g < n; ++g) pairs.push_back(FramePairing{g, best[g]});
    return pairs;
}

namespace detail {

// Optimal matching between one frame's GT boxes and predictions on 1-IoU
// cost; exposed for the brute-force oracle tests.
struct FrameMatch {
    std::vector<int> gt_to_pred;  // -1 unmatched
    double assignment_cost = 0.0;
};

inline FrameMatch match_frame(const std::vector<BBox>& gts, const std::vector<BBox>& preds) {
    FrameMatch fm;
    fm.gt_to_pred.assign(gts.size(), -1);
    if (gts.empty() || preds.empty()) return fm;
    std::vector<std::vector<double>> cost(gts.size(), std::vector<double>(preds.size()));
    for (std::size_t i = 0; i < gts.size(); ++i)
        for (std::size_t j = 0; j < preds.size(); ++j) cost[i][j] = 1.0 - iou(gts[i], preds[j]);
    std::vector<int> assign = hungarian_match(cost);
    for (std::size_t i = 0; i < gts.size(); ++i) {
        if (assign[i] >= 0) {
            fm.gt_to_pred[i] = assign[i];
            fm.assignment_cost += cost[i][assign[i]];
        }
    }
    return fm;
}

}  // namespace detail

// Standard CLEAR-MOT accumulation over the given pairings. Correspondences
// persist across frames when they keep IoU >= threshold; the remainder is
// matched by Hungarian on 1-IoU with sub-threshold matches rejected. An ID
// switch is counted when a GT object matches a different track id than its
// previous match.
inline MotStats clearmot(const std::vector<FramePairing>& pairings, const FrameSequence& frames,
                         double iou_threshold) {
    if (iou_threshold <= 0.0 || iou_threshold >= 1.0) throw ValidationError("iou_threshold must be in (0,1)");
    MotStats stats;
    std::map<int, int> last_match;  // gt object id -> track id
    for (const FramePairing& fp : pairings) {
        const auto& gt_boxes = frames.frames[fp.gt_frame];
        stats.gt_count += static_cast<long long>(gt_boxes.size());
        if (fp.output == nullptr || fp.output->tracks.empty()) {
            stats.fn += static_cast<long long>(gt_boxes.size());
            continue;
        }
        const auto& preds = fp.output->tracks;
        std::vector<char> gt_used(gt_boxes.size(), 0), pred_used(preds.size(), 0);
        // persist prior correspondences first
        for (std::size_t i = 0; i < gt_boxes.size(); ++i) {
            auto it = last_match.find(gt_boxes[i].id);
            if (it == last_match.end()) continue;
            for (std::size_t j = 0; j < preds.size(); ++j) {
                if (pred_used[j] || preds[j].first != it->second) continue;
                double v = iou(gt_boxes[i].bbox, preds[j].second);
                if (v >= iou_threshold) {
                    gt_used[i] = 1;
                    pred_used[j] = 1;
                    stats.matched_count += 1;
                    stats.matched_iou_sum += v;
                }
                break;
            }
        }
        // Hungarian over the remainder
        std::vector<int> rem_gt, rem_pred;
        for (std::size_t i = 0; i < gt_boxes.size(); ++i)
            if (!gt_used[i]) rem_gt.push_back(static_cast<int>(i));
        for (std::size_t j = 0; j < preds.size(); ++j)
            if (!pred_used[j]) rem_pred.push_back(static_cast<int>(j));
        if (!rem_gt.empty() && !rem_pred.empty()) {
            std::vector<BBox> g, p;
            for (int i : rem_gt) g.push_back(gt_boxes[i].bbox);
            for (int j : rem_pred) p.push_back(preds[j].second);
            detail::FrameMatch fm = detail::match_frame(g, p);
            for (std::size_t k = 0; k < rem_gt.size(); ++k) {
                int pj = fm.gt_to_pred[k];
                if (pj < 0) continue;
                double v = iou(g[k], p[pj]);
                if (v < iou_threshold) continue;  // rejected match
                int gi = rem_gt[k];
                int jj = rem_pred[pj];
                gt_used[gi] = 1;
                pred_used[jj] = 1;
                stats.matched_count += 1;
                stats.matched_iou_sum += v;
                int gt_id = gt_boxes[gi].id;
                int track_id = preds[jj].first;
                auto it = last_match.find(gt_id);
                if (it != last_match.end() && it->second != track_id) stats.idsw += 1;
                last_match[gt_id] = track_id;
            }
        }
        for (std::size_t i = 0; i < gt_boxes.size(); ++i)
            if (!gt_used[i]) stats.fn += 1;
        for (std::size_t j = 0; j < preds.size(); ++j)
            if (!pred_used[j]) stats.fp += 1;
    }
    return stats;
}

// Per-segment offline + streaming scores and the degradation d = MOTA - S-MOTA.
struct SegmentScore {
    Segment segment;
    MotStats offline;
    MotStats streaming;
    double d = 0.0;
    bool defined = false;  // both spans carried ground truth
};

namespace detail {

inline std::vector<FramePairing> slice_pairings(const std::vector<FramePairing>& pairings, int start, int end) {
    std::vector<FramePairing> out;
    for (const auto& p : pairings)
        if (p.gt_frame >= start && p.gt_frame < end) out.push_back(p);
    return out;
}

}  // namespace detail

// Scores every segment of one scenario run. Offline restricts outputs by
// input frame; streaming scores each prediction in the segment its paired GT
// frame falls in, so a boundary-crossing pairing lands in the later segment.
inline std::vector<SegmentScore> score_segments(const std::vector<Segment>& segments,
                                                const std::vector<TimedOutput>& outputs, const FrameSequence& frames,
                                                double iou_threshold) {
    std::vector<FramePairing> off = align(outputs, frames, AlignMode::offline);
    std::vector<FramePairing> str = align(outputs, frames, AlignMode::streaming);
    std::vector<SegmentScore> scores;
    scores.reserve(segments.size());
    for (const Segment& seg : segments) {
        SegmentScore sc;
        sc.segment = seg;
        sc.offline = clearmot(detail::slice_pairings(off, seg.start_frame, seg.end_frame), frames, iou_threshold);
        sc.streaming = clearmot(detail::slice_pairings(str, seg.start_frame, seg.end_frame), frames, iou_threshold);
        sc.defined = sc.offline.defined() && sc.streaming.defined();
        sc.d = sc.defined ? sc.offline.mota() - sc.streaming.mota() : 0.0;
        scores.push_back(sc);
    }
    return scores;
}

inline SegmentScore score_segment(const Segment& segment, const std::vector<TimedOutput>& outputs,
                                  const FrameSequence& frames, double iou_threshold) {
    return score_segments({segment}, outputs, frames, iou_threshold)[0];
}

}  // namespace streamperf
