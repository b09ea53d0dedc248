#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "graspcount/errors.hpp"
#include "graspcount/simulator.hpp"
#include "test_support.hpp"

using namespace graspcount;
using namespace graspcount::testing;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

HandPose grid_pose(double s, double p1, double p2, double p3) {
    HandPose h;
    h.spread = s * kDeg;
    h.proximal = {p1 * kDeg, p2 * kDeg, p3 * kDeg};
    for (int f = 0; f < 3; ++f) h.distal[f] = h.proximal[f] / 3.0;
    return h;
}

SceneConfig scene(int pile, std::uint64_t seed, double noise = 0.0, ObjectKind kind = ObjectKind::sphere) {
    SceneConfig s;
    s.object = ObjectSpec::for_kind(kind);
    s.pile_size = pile;
    s.seed = seed;
    s.noise = noise;
    return s;
}

}  // namespace

TEST_CASE("pre-grasp grid") {
    const auto g = pregrasp_grid();
    CHECK(g.size() == 23958);
    CHECK(g.size() == 18u * 11 * 11 * 11);
    const HandGeometry geom;
    for (const auto& p : g) CHECK_NOTHROW(validate_pose(p, geom.limits));
    CHECK(g == pregrasp_grid());
    std::set<long> spreads;
    for (const auto& p : g) spreads.insert(std::lround(p.spread / kDeg));
    CHECK(spreads.size() == 18);
    CHECK(*spreads.rbegin() == 340);
    CHECK(g.front().proximal[0] == doctest::Approx(30 * kDeg));
    CHECK(g.front().distal[0] == doctest::Approx(10 * kDeg));
}

TEST_CASE("symmetric deduplication") {
    const auto fixed = grid_pose(20, 36, 36, 42);
    CHECK(dedupe_symmetric(std::vector<HandPose>{fixed}) == std::vector<HandPose>{fixed});
    const auto a = grid_pose(20, 30, 36, 42), b = grid_pose(20, 36, 30, 42);
    const auto one = dedupe_symmetric(std::vector<HandPose>{b, a});
    REQUIRE(one.size() == 1);
    CHECK(one[0] == a);  // lexicographically smaller tuple

    const auto raw = pregrasp_grid();
    const auto d = dedupe_symmetric(raw);
    CHECK(d.size() < raw.size());
    CHECK(d.size() == 18u * 11 * 66);
    CHECK(dedupe_symmetric(d) == d);
}

TEST_CASE("empty pile") {
    const auto pose = grid_pose(0, 60, 60, 60);
    auto sc = scene(0, 1, 0.05);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        sc.seed = seed;
        const auto s = simulate_grasp(pose, sc);
        CHECK(s.label == 0);
        for (double v : s.tactile) CHECK(v <= 3 * sc.effective_noise() + 1e-15);
    }
    sc.domain = Domain::real_like;
    CHECK(sc.effective_noise() == doctest::Approx(0.15));
}

TEST_CASE("simulation is deterministic per seed") {
    const auto pose = grid_pose(40, 54, 60, 48);
    const auto sc = scene(8, 123, 0.02);
    CHECK(simulate_grasp(pose, sc) == simulate_grasp(pose, sc));
    auto other = sc;
    other.seed = 124;
    CHECK_FALSE(simulate_grasp(pose, sc) == simulate_grasp(pose, other));
}

TEST_CASE("readings stay in range and labels follow retention") {
    const auto poses = dedupe_symmetric(pregrasp_grid());
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const auto& pose = poses[rng.below(poses.size())];
        auto sc = scene(4 + static_cast<int>(rng.below(9)), rng.next_u64(), 0.03,
                        rng.bernoulli(0.5) ? ObjectKind::cube : ObjectKind::sphere);
        if (rng.bernoulli(0.5)) sc.domain = Domain::real_like;
        const auto t = simulate_grasp_trace(pose, sc);
        const double hi = 1 + 3 * sc.effective_noise();
        for (double v : t.sample.tactile) CHECK((v >= 0 && v <= hi));
        for (double v : t.sample.strain) CHECK((v >= 0 && v <= hi));
        CHECK(t.sample.label == std::count(t.retained.begin(), t.retained.end(), 1));
        CHECK(t.sample.meta.seed == sc.seed);
        CHECK(t.sample.meta.domain == sc.domain);
    }
}

TEST_CASE("placed objects do not overlap") {
    const auto pose = grid_pose(0, 42, 42, 42);
    for (auto kind : {ObjectKind::sphere, ObjectKind::cube}) {
        const auto obj = ObjectSpec::for_kind(kind);
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            const auto t = simulate_grasp_trace(pose, scene(12, seed, 0, kind));
            for (std::size_t i = 0; i < t.centers.size(); ++i)
                for (std::size_t j = i + 1; j < t.centers.size(); ++j) {
                    const Vec3 d = t.centers[i] - t.centers[j];
                    if (kind == ObjectKind::sphere) {
                        CHECK(norm(d) >= 2 * obj.half_extent() - 1e-12);
                    } else {
                        const double sep = std::max({std::abs(d.x), std::abs(d.y), std::abs(d.z)});
                        CHECK(sep >= 2 * obj.half_extent() - 1e-12);
                    }
                }
        }
    }
}

TEST_CASE("noiseless vertical tactile force equals the carried weight") {
    const HandGeometry g;
    const auto frames_of = [&](const HandPose& p) { return sensor_frames(p, g); };
    const auto poses = dedupe_symmetric(pregrasp_grid());
    Rng rng(12);
    int checked = 0;
    for (int i = 0; i < 300; ++i) {
        const auto& pose = poses[rng.below(poses.size())];
        auto sc = scene(8, rng.next_u64());
        sc.phase = LiftPhase::after_lift;
        const auto t = simulate_grasp_trace(pose, sc);
        if (t.sample.label == 0) continue;
        bool all_up = true;
        double carried = 0;
        for (std::size_t k = 0; k < t.retained.size(); ++k) {
            if (!t.retained[k]) continue;
            all_up &= t.upward_supported[k] != 0;
            carried += t.carried_weight[k];
        }
        if (!all_up) continue;
        const auto frames = frames_of(t.sample.pose);
        double vertical = 0;
        for (std::size_t s = 0; s < kNumSensors; ++s) vertical += t.tactile_newtons[s] * frames[s].normal.z;
        CHECK(carried == doctest::Approx(t.sample.label * sc.object.weight()).epsilon(1e-12));
        CHECK(std::abs(vertical - carried) <= 1e-9);
        ++checked;
    }
    CHECK(checked > 10);
}

TEST_CASE("scene validation") {
    auto sc = scene(-1, 0);
    CHECK_THROWS_AS(sc.validate(), ValidationError);
    sc = scene(3, 0, -0.1);
    CHECK_THROWS_AS(sc.validate(), ValidationError);
    CHECK(domain_from_string("real_like") == Domain::real_like);
    CHECK_THROWS_AS(domain_from_string("mars"), ValidationError);
}

TEST_CASE("fingertip downsampling") {
    const auto map = default_fingertip_mapping();
    std::vector<double> uniform(kFineFingerSensors, 0.7);
    for (double v : downsample_tactile(uniform, map)) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));

    for (std::size_t cell = 0; cell < kSensorsPerRegion; ++cell) {
        const int fine = map[cell].front();
        std::vector<double> one(kFineFingerSensors, 0.0);
        one[fine] = 1.0;
        const auto out = downsample_tactile(one, map);
        for (std::size_t c = 0; c < kSensorsPerRegion; ++c) {
            const auto& m = map[c];
            const bool has = std::find(m.begin(), m.end(), fine) != m.end();
            CHECK(out[c] == doctest::Approx(has ? 1.0 / m.size() : 0.0));
        }
    }

    Rng rng(6);
    std::vector<double> frame(kFineFingerSensors);
    for (auto& v : frame) v = rng.uniform();
    const auto out = downsample_tactile(frame, map);
    for (std::size_t c = 0; c < kSensorsPerRegion; ++c) {
        double s = 0;
        for (int i : map[c]) s += frame[i];
        CHECK(out[c] == doctest::Approx(s / map[c].size()).epsilon(1e-15));
    }

    auto bad = map;
    bad[5].clear();
    CHECK_THROWS_AS(downsample_tactile(frame, bad), InvalidMapping);
    bad = map;
    bad[0].push_back(99);
    CHECK_THROWS_AS(downsample_tactile(frame, bad), InvalidMapping);
    CHECK_THROWS_AS(downsample_tactile(std::vector<double>(10), map), ValidationError);
}

TEST_CASE("dataset generation and splits") {
    const auto all = dedupe_symmetric(pregrasp_grid());
    std::vector<HandPose> poses(all.begin(), all.begin() + 115);
    const std::vector<SceneConfig> scenes{scene(8, 5, 0.02)};
    const auto d = generate_dataset(scenes, poses, 10, HandGeometry{}, 1);
    CHECK(d.samples.size() == 1150);
    std::vector<char> seen(d.samples.size(), 0);
    for (const auto* part : {&d.meta.splits.train, &d.meta.splits.val, &d.meta.splits.test})
        for (auto i : *part) {
            CHECK(seen[i] == 0);
            seen[i] = 1;
        }
    CHECK(std::count(seen.begin(), seen.end(), 1) == 1150);
    CHECK(d.meta.splits.train.size() == 690);
    CHECK(d.meta.splits.val.size() == 230);
    std::size_t total = 0;
    for (auto c : d.meta.class_histogram) total += c;
    CHECK(total == 1150);

    const auto again = generate_dataset(scenes, poses, 10, HandGeometry{}, 1);
    CHECK(again.samples == d.samples);
    CHECK(again.meta.class_histogram == d.meta.class_histogram);

    const auto r = split_indices(1000, Domain::real_like, 4);
    CHECK(r.train.size() == 400);
    CHECK(r.val.size() == 100);
    CHECK(r.test.size() == 500);

    CHECK_THROWS_AS(generate_dataset({}, poses, 1), EmptyDataset);
    auto mixed = scenes;
    mixed.push_back(scene(4, 1, 0.02, ObjectKind::cube));
    CHECK_THROWS_AS(generate_dataset(mixed, poses, 1), ValidationError);
}

TEST_CASE("volume bound dominates retained counts") {
    const auto poses = dedupe_symmetric(pregrasp_grid());
    Rng rng(31);
    int ok = 0;
    const int n = 300;
    for (int i = 0; i < n; ++i) {
        const auto& pose = poses[rng.below(poses.size())];
        const auto sc = scene(8, rng.next_u64(), 0.02);
        const auto s = simulate_grasp(pose, sc);
        ok += s.label <= grasp_volume_estimate(s.pose, HandGeometry{}, sc.object);
    }
    CHECK(ok >= 0.99 * n);
}
