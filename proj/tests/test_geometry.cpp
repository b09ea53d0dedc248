#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "graspcount/errors.hpp"
#include "graspcount/geometry.hpp"
#include "graspcount/rng.hpp"

using namespace graspcount;

namespace {

std::vector<Vec3> unit_cube() {
    std::vector<Vec3> v;
    for (int i = 0; i < 8; ++i) v.push_back({double(i & 1), double((i >> 1) & 1), double((i >> 2) & 1)});
    return v;
}

std::vector<Vec3> ball_points(Rng& rng, int n) {
    std::vector<Vec3> pts;
    while (static_cast<int>(pts.size()) < n) {
        const Vec3 p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        if (norm(p) <= 1.0) pts.push_back(p);
    }
    return pts;
}

// Point-in-hull test that does not use the hull's faces: p is inside iff it
// lies on the inner side of every plane through three input points that has
// all inputs on one side.
bool brute_inside(const std::vector<Vec3>& pts, const Vec3& p) {
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            for (std::size_t k = j + 1; k < n; ++k) {
                Vec3 nrm = cross(pts[j] - pts[i], pts[k] - pts[i]);
                if (norm(nrm) < 1e-12) continue;
                int pos = 0, neg = 0;
                for (const auto& q : pts) {
                    const double s = dot(nrm, q - pts[i]);
                    if (s > 1e-12) ++pos;
                    if (s < -1e-12) ++neg;
                }
                if (pos && neg) continue;
                if (pos) nrm = -1.0 * nrm;
                if (dot(nrm, p - pts[i]) > 1e-12) return false;
            }
    return true;
}

}  // namespace

TEST_CASE("unit cube hull") {
    const auto pts = unit_cube();
    const auto h = convex_hull(pts);
    CHECK(h.vertices.size() == 8);
    CHECK(h.faces.size() == 12);
    CHECK(std::abs(hull_volume(h) - 1.0) <= 1e-12);

    auto with_center = pts;
    with_center.push_back({0.5, 0.5, 0.5});
    const auto h2 = convex_hull(with_center);
    CHECK(h2.vertices.size() == 8);
    for (const auto& v : h2.vertices) CHECK_FALSE((v.x == 0.5 && v.y == 0.5 && v.z == 0.5));
    CHECK(std::abs(hull_volume(h2) - 1.0) <= 1e-12);
}

TEST_CASE("regular tetrahedron volume") {
    const double s = 1.0 / (2.0 * std::sqrt(2.0));
    const std::vector<Vec3> t{{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}};
    CHECK(std::abs(hull_volume(convex_hull(t)) - std::sqrt(2.0) / 12.0) <= 1e-9);
}

TEST_CASE("hull vertices come from the input and contain every input") {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        const auto pts = ball_points(rng, 50);
        const auto h = convex_hull(pts);
        for (const auto& v : h.vertices) {
            bool found = false;
            for (const auto& p : pts) found |= (p.x == v.x && p.y == v.y && p.z == v.z);
            CHECK(found);
        }
        for (const auto& p : pts) CHECK(h.signed_distance(p) <= 1e-12);
        // Euler characteristic of a closed triangulated sphere.
        std::set<std::pair<int, int>> edges;
        for (const auto& f : h.faces)
            for (int e = 0; e < 3; ++e) {
                const int a = f[e], b = f[(e + 1) % 3];
                edges.insert({std::min(a, b), std::max(a, b)});
            }
        CHECK(static_cast<long>(h.vertices.size()) - static_cast<long>(edges.size()) +
                  static_cast<long>(h.faces.size()) ==
              2);
    }
}

TEST_CASE("hull containment agrees with a brute-force plane test") {
    Rng rng(29);
    const auto pts = ball_points(rng, 14);
    const auto h = convex_hull(pts);
    for (int i = 0; i < 400; ++i) {
        const Vec3 q{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const double sd = h.signed_distance(q);
        if (std::abs(sd) < 1e-9) continue;
        CHECK((sd < 0) == brute_inside(pts, q));
    }
}

TEST_CASE("Monte-Carlo volume agreement on random hulls") {
    Rng rng(41);
    for (int trial = 0; trial < 3; ++trial) {
        const auto pts = ball_points(rng, 50);
        const auto h = convex_hull(pts);
        Vec3 lo{1e9, 1e9, 1e9}, hi{-1e9, -1e9, -1e9};
        for (const auto& p : pts) {
            lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
            hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
        }
        const int n = 200000;
        int inside = 0;
        for (int i = 0; i < n; ++i) {
            const Vec3 q{rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y), rng.uniform(lo.z, hi.z)};
            inside += h.signed_distance(q) <= 0;
        }
        const double box = (hi.x - lo.x) * (hi.y - lo.y) * (hi.z - lo.z);
        CHECK(std::abs(box * inside / n - hull_volume(h)) / hull_volume(h) < 0.02);
    }
}

TEST_CASE("volume is invariant under rigid motion and monotone under insertion") {
    Rng rng(43);
    const auto pts = ball_points(rng, 30);
    const double v0 = hull_volume(convex_hull(pts));
    const Rotation3 r = Rotation3::axis_angle(normalized(Vec3{1, 2, 3}), 0.7);
    std::vector<Vec3> moved;
    for (const auto& p : pts) moved.push_back(r * p + Vec3{5, -2, 1});
    CHECK(hull_volume(convex_hull(moved)) == doctest::Approx(v0).epsilon(1e-9));
    auto more = pts;
    double prev = v0;
    for (int i = 0; i < 20; ++i) {
        more.push_back({rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)});
        const double v = hull_volume(convex_hull(more));
        CHECK(v >= prev * (1 - 1e-12));
        prev = v;
    }
}

TEST_CASE("degenerate inputs") {
    CHECK_THROWS_AS(convex_hull(std::vector<Vec3>{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}), DegenerateInput);
    CHECK_THROWS_AS(convex_hull(std::vector<Vec3>{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {2, 3, 0}}),
                    DegenerateInput);
    CHECK_THROWS_AS(convex_hull(std::vector<Vec3>{{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {3, 3, 3}}), DegenerateInput);
    CHECK_THROWS_AS(convex_hull(std::vector<Vec3>(6, Vec3{1, 1, 1})), DegenerateInput);
}

TEST_CASE("upper bound counts") {
    CHECK(upper_bound_count(0.0, ObjectSpec::ping_pong_ball()) == 0);
    CHECK(std::abs(kepler_density() - std::numbers::pi / std::sqrt(18.0)) < 1e-15);
    // 0.74048 * 1e-3 / (4/3 pi 0.02^3) = 22.097...
    const double expect = kepler_density() * 1e-3 / (4.0 / 3.0 * std::numbers::pi * 8e-6);
    CHECK(expect == doctest::Approx(22.097).epsilon(1e-4));
    CHECK(upper_bound_count(1e-3, ObjectSpec::ping_pong_ball()) == 22);
    CHECK(upper_bound_count(1e-3, ObjectSpec::foam_cube()) == 64);

    ObjectSpec small = ObjectSpec::ping_pong_ball(), big = small;
    big.characteristic_size = 0.03;
    std::int64_t prev = 0;
    for (double v = 0; v < 2e-3; v += 1e-5) {
        const auto c = upper_bound_count(v, small);
        CHECK(c >= prev);
        CHECK(upper_bound_count(v, big) <= c);
        prev = c;
    }
}

TEST_CASE("object catalog") {
    CHECK(object_kind_from_string("sphere") == ObjectKind::sphere);
    CHECK(object_kind_from_string("cube") == ObjectKind::cube);
    CHECK_THROWS_AS(object_kind_from_string("cookie"), ValidationError);
    CHECK(ObjectSpec::foam_cube().volume() == doctest::Approx(0.025 * 0.025 * 0.025));
    CHECK(ObjectSpec::ping_pong_ball().weight() == doctest::Approx(0.0027 * kStandardGravity));
}

TEST_CASE("grasp volume estimate") {
    const HandGeometry g;
    constexpr double kDeg = std::numbers::pi / 180.0;
    auto pose = [&](double s, double p) {
        HandPose h;
        h.spread = s * kDeg;
        for (int f = 0; f < 3; ++f) {
            h.proximal[f] = p * kDeg;
            h.distal[f] = std::min(p * g.distal_coupling_ratio * kDeg, g.limits.distal_max);
        }
        return h;
    };
    CHECK(grasp_volume(HandPose{}, g) == 0.0);
    for (auto obj : {ObjectSpec::ping_pong_ball(), ObjectSpec::foam_cube()}) {
        for (double s : {0.0, 40.0, 90.0}) {
            const auto open = grasp_volume_estimate(pose(s, 30), g, obj);
            const auto fist = grasp_volume_estimate(pose(s, 140), g, obj);
            CHECK(fist <= open);
        }
    }
    // independent recomputation: Monte-Carlo over the keypoint hull
    const HandPose p = pose(0, 30);
    const auto pts = forward_kinematics(p, g).all();
    const auto h = convex_hull(pts);
    Rng rng(2);
    Vec3 lo{1e9, 1e9, 1e9}, hi{-1e9, -1e9, -1e9};
    for (const auto& q : pts) {
        lo = {std::min(lo.x, q.x), std::min(lo.y, q.y), std::min(lo.z, q.z)};
        hi = {std::max(hi.x, q.x), std::max(hi.y, q.y), std::max(hi.z, q.z)};
    }
    int in = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        in += h.signed_distance({rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y), rng.uniform(lo.z, hi.z)}) <= 0;
    }
    const double mc = (hi.x - lo.x) * (hi.y - lo.y) * (hi.z - lo.z) * in / n;
    CHECK(grasp_volume(p, g) == doctest::Approx(mc).epsilon(0.02));
    const auto obj = ObjectSpec::ping_pong_ball();
    CHECK(grasp_volume_estimate(p, g, obj) ==
          static_cast<std::int64_t>(std::floor(kepler_density() * grasp_volume(p, g) / obj.volume())));
}
