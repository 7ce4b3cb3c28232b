#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "streamperf/featext.hpp"
#include "streamperf/scenegen.hpp"
#include "test_util.hpp"

using namespace streamperf;

namespace {

// Independent sort-based percentile with the same linear-interpolation
// definition, kept deliberately separate from the implementation.
double oracle_percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    if (v.empty()) return 0.0;
    double idx = q * (v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(idx);
    double frac = idx - lo;
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

}  // namespace

TEST_CASE("feature layout is 69 wide with unique names") {
    REQUIRE(kFeatureCount == 69);
    auto names = feature_names();
    REQUIRE(names.size() == 69);
    std::set<std::string> unique(names.begin(), names.end());
    REQUIRE(unique.size() == names.size());
    REQUIRE(names[61] == "time_of_day");
    REQUIRE(names[62] == "mask_bin0");
    REQUIRE(names[68] == "mask_all");
}

TEST_CASE("area bins follow the published thresholds") {
    REQUIRE(area_bin(100) == 0);
    REQUIRE(area_bin(664.999) == 0);
    REQUIRE(area_bin(665) == 1);
    REQUIRE(area_bin(1024) == 2);
    REQUIRE(area_bin(1480) == 3);
    REQUIRE(area_bin(2000) == 4);
    REQUIRE(area_bin(2564.9) == 4);
    REQUIRE(area_bin(2565) == 5);
    REQUIRE(area_bin(1e9) == 5);
}

TEST_CASE("static scene: zero speeds, unit self-IoU") {
    TrackView tv;
    tv.frames.assign(10, {});
    for (int f = 0; f < 10; ++f) {
        tv.frames[f].push_back(FrameBox{1, BBox{200, 200, 50, 50}});
        tv.frames[f].push_back(FrameBox{2, BBox{800, 700, 60, 40}});
    }
    tv.first_frame[1] = 0;
    tv.first_frame[2] = 0;
    std::vector<EgoState> ego(10, EgoState{0.0, 1.0});
    auto feat = extract_features(tv, 0, 10, ego, 12.0);
    // ALL bin block at 7*6
    REQUIRE(feat[42] == 0.0);  // speed p10
    REQUIRE(feat[43] == 0.0);  // speed mean
    REQUIRE(feat[44] == 0.0);  // speed p90
    REQUIRE(feat[45] == 1.0);  // self-iou p10
    REQUIRE(feat[46] == 1.0);
    REQUIRE(feat[47] == 1.0);
    REQUIRE(feat[48] == 2.0);  // count mean
    REQUIRE(feat[55] == 0.0);  // ego speed
    REQUIRE(feat[58] == 0.0);  // ego turn
    REQUIRE(feat[61] == 12.0);
}

TEST_CASE("single object moving (3,4) px/frame has ALL-bin speed mean 5") {
    TrackView tv;
    tv.frames.assign(10, {});
    for (int f = 0; f < 10; ++f) tv.frames[f].push_back(FrameBox{1, BBox{100.0 + 3 * f, 100.0 + 4 * f, 40, 40}});
    tv.first_frame[1] = 0;
    std::vector<EgoState> ego(10, EgoState{});
    auto feat = extract_features(tv, 0, 10, ego, 0.0);
    REQUIRE(feat[43] == Catch::Approx(5.0).margin(1e-12));
    REQUIRE(feat[42] == Catch::Approx(5.0).margin(1e-12));
    REQUIRE(feat[44] == Catch::Approx(5.0).margin(1e-12));
}

TEST_CASE("hand-computed 3-frame two-object reference vector") {
    TrackView tv;
    tv.frames.assign(3, {});
    // A: 30x30, moves (3,4) per frame; area 900 -> bin1
    tv.frames[0].push_back(FrameBox{1, BBox{100, 100, 30, 30}});
    tv.frames[1].push_back(FrameBox{1, BBox{103, 104, 30, 30}});
    tv.frames[2].push_back(FrameBox{1, BBox{106, 108, 30, 30}});
    // B: 40x50 static; area 2000 -> bin4
    for (int f = 0; f < 3; ++f) tv.frames[f].push_back(FrameBox{2, BBox{500, 500, 40, 50}});
    tv.first_frame[1] = 0;
    tv.first_frame[2] = 0;
    std::vector<EgoState> ego{{10, 0.0}, {10, 0.1}, {10, 0.2}};
    auto feat = extract_features(tv, 0, 3, ego, 14.0);

    const double si_a = 702.0 / 1098.0;  // 27*26 overlap of displaced 30x30 squares
    // bin1 block (base 7)
    REQUIRE(feat[7] == Catch::Approx(5.0).margin(1e-12));
    REQUIRE(feat[8] == Catch::Approx(5.0).margin(1e-12));
    REQUIRE(feat[9] == Catch::Approx(5.0).margin(1e-12));
    REQUIRE(feat[10] == Catch::Approx(si_a).margin(1e-12));
    REQUIRE(feat[11] == Catch::Approx(si_a).margin(1e-12));
    REQUIRE(feat[12] == Catch::Approx(si_a).margin(1e-12));
    REQUIRE(feat[13] == Catch::Approx(1.0).margin(1e-12));
    // bin4 block (base 28)
    REQUIRE(feat[28] == 0.0);
    REQUIRE(feat[29] == 0.0);
    REQUIRE(feat[30] == 0.0);
    REQUIRE(feat[31] == 1.0);
    REQUIRE(feat[32] == 1.0);
    REQUIRE(feat[33] == 1.0);
    REQUIRE(feat[34] == Catch::Approx(1.0).margin(1e-12));
    // ALL block (base 42): speed samples {5,5,0,0}, self-iou {si_a,si_a,1,1}
    REQUIRE(feat[42] == Catch::Approx(0.0).margin(1e-12));                       // p10
    REQUIRE(feat[43] == Catch::Approx(2.5).margin(1e-12));                       // mean
    REQUIRE(feat[44] == Catch::Approx(5.0).margin(1e-12));                       // p90
    REQUIRE(feat[45] == Catch::Approx(si_a).margin(1e-12));                      // p10
    REQUIRE(feat[46] == Catch::Approx((2 * si_a + 2) / 4.0).margin(1e-12));      // mean
    REQUIRE(feat[47] == Catch::Approx(1.0).margin(1e-12));                       // p90
    REQUIRE(feat[48] == Catch::Approx(2.0).margin(1e-12));                       // count
    // num_objects / longevity / ego / tod
    REQUIRE(feat[49] == 2.0);
    REQUIRE(feat[50] == 2.0);
    REQUIRE(feat[51] == 2.0);
    REQUIRE(feat[52] == Catch::Approx(1.0).margin(1e-12));  // longevity p10 of [1,1,2,2,3,3]
    REQUIRE(feat[53] == Catch::Approx(2.0).margin(1e-12));
    REQUIRE(feat[54] == Catch::Approx(3.0).margin(1e-12));
    REQUIRE(feat[55] == 10.0);
    REQUIRE(feat[56] == 10.0);
    REQUIRE(feat[57] == 10.0);
    REQUIRE(feat[58] == Catch::Approx(0.1).margin(1e-12));
    REQUIRE(feat[59] == Catch::Approx(0.1).margin(1e-12));
    REQUIRE(feat[60] == Catch::Approx(0.1).margin(1e-12));
    REQUIRE(feat[61] == 14.0);
    // masks: bin1, bin4, all
    std::vector<double> expected_mask{0, 1, 0, 0, 1, 0, 1};
    for (int b = 0; b < 7; ++b) REQUIRE(feat[62 + b] == expected_mask[b]);
    // untouched bins are all zero
    for (int idx : {0, 1, 2, 3, 4, 5, 6, 14, 21, 35}) REQUIRE(feat[idx] == 0.0);
}

TEST_CASE("percentiles agree with a sort-based oracle on random vectors") {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        int n = rng.uniform_int(1, 40);
        std::vector<double> v(n);
        for (double& x : v) x = rng.uniform(-100.0, 100.0);
        for (double q : {0.1, 0.5, 0.9}) {
            REQUIRE(percentile(v, q) == Catch::Approx(oracle_percentile(v, q)).margin(1e-12));
        }
    }
}

TEST_CASE("fewer than 2 frames with track data gives the all-zero vector") {
    TrackView tv;
    tv.frames.assign(10, {});
    tv.frames[4].push_back(FrameBox{1, BBox{100, 100, 30, 30}});
    tv.first_frame[1] = 4;
    std::vector<EgoState> ego(10, EgoState{5.0, 0.2});
    auto feat = extract_features(tv, 0, 10, ego, 9.0);
    for (double v : feat) REQUIRE(v == 0.0);
    REQUIRE_THROWS_AS(extract_features(tv, 0, 1, ego, 9.0), ValidationError);
}

TEST_CASE("mask consistency: flag is 0 iff every entry of the bin is imputed zero") {
    ScenarioSpec spec;
    spec.id = "m";
    spec.archetype = Archetype::mixed;
    Scenario sc = generate_scenario(spec, 77);
    FrameSequence fseq = make_frame_sequence(sc);
    TrackView tv = track_view_from_gt(fseq);
    auto segments = slice_segments(sc, 1.0);
    for (const auto& seg : segments) {
        auto feat = extract_features(tv, seg.start_frame, seg.end_frame, fseq.ego, fseq.time_of_day);
        for (int b = 0; b < kNumAreaBins; ++b) {
            bool any_nonzero = false;
            for (int k = 0; k < 7; ++k) any_nonzero = any_nonzero || feat[7 * b + k] != 0.0;
            if (feat[62 + b] == 0.0) REQUIRE(!any_nonzero);
            if (feat[62 + b] == 1.0) REQUIRE(feat[7 * b + 6] > 0.0);  // count mean positive
        }
        for (double v : feat) REQUIRE(std::isfinite(v));
    }
}

TEST_CASE("longevity counts frames since the id's first appearance in the scenario") {
    TrackView tv;
    tv.frames.assign(20, {});
    for (int f = 0; f < 20; ++f) tv.frames[f].push_back(FrameBox{5, BBox{300, 300, 40, 40}});
    tv.first_frame[5] = 0;
    std::vector<EgoState> ego(20, EgoState{});
    // segment [10, 20): longevity samples are 11..20
    auto feat = extract_features(tv, 10, 20, ego, 0.0);
    REQUIRE(feat[53] == Catch::Approx(15.5).margin(1e-12));  // mean of 11..20
    REQUIRE(feat[52] == Catch::Approx(11.9).margin(1e-12));  // p10
    REQUIRE(feat[54] == Catch::Approx(19.1).margin(1e-12));  // p90
}

TEST_CASE("track views from pipeline outputs bin by the later frame and normalize per-frame speed") {
    // стride-2 outputs: observations at frames 0,2,4 moving 4 px/frame
    std::vector<TimedOutput> outputs;
    for (int f = 0; f < 10; f += 2)
        outputs.push_back(TimedOutput{f, f / 10.0, {{3, BBox{100.0 + 4.0 * f, 200, 40, 40}}}});
    TrackView tv = track_view_from_outputs(outputs, 10);
    REQUIRE(tv.first_frame.at(3) == 0);
    std::vector<EgoState> ego(10, EgoState{});
    auto feat = extract_features(tv, 0, 10, ego, 0.0);
    REQUIRE(feat[43] == Catch::Approx(4.0).margin(1e-12));  // displacement 8 over gap 2
}
