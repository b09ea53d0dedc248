#include <doctest.h>

#include <cmath>
#include <numbers>

#include "graspcount/errors.hpp"
#include "graspcount/force_regression.hpp"
#include "graspcount/rng.hpp"

using namespace graspcount;

TEST_CASE("vertical force basics") {
    const HandGeometry g;
    std::array<double, kNumSensors> t{};
    CHECK(vertical_force(t, HandPose{}, g) == 0.0);
    for (std::size_t i = 0; i < kSensorsPerRegion; ++i) t[i] = 0.5 / kSensorsPerRegion;
    CHECK(vertical_force(t, HandPose{}, g) == doctest::Approx(0.5).epsilon(1e-12));
    // palm turned over: the same readings point down
    const auto flip = Rotation3::axis_angle({1, 0, 0}, std::numbers::pi);
    CHECK(vertical_force(t, HandPose{}, g, flip) == doctest::Approx(-0.5).epsilon(1e-12));
    t[3] = -1;
    CHECK_THROWS_AS(vertical_force(t, HandPose{}, g), ValidationError);
    CHECK_THROWS_AS(vertical_force(std::vector<double>(95, 0.0), HandPose{}, g), ShapeMismatch);
}

TEST_CASE("vertical force matches per-sensor summation") {
    const HandGeometry g;
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        HandPose p;
        p.spread = rng.uniform(0, g.limits.spread_max);
        for (int f = 0; f < 3; ++f) {
            p.proximal[f] = rng.uniform(0, g.limits.proximal_max);
            p.distal[f] = rng.uniform(0, g.limits.distal_max);
        }
        const auto r = Rotation3::axis_angle(normalized(Vec3{rng.normal(), rng.normal(), rng.normal()}),
                                             rng.uniform(0, 6.28));
        std::array<double, kNumSensors> t{};
        for (auto& v : t) v = rng.uniform(0, 2);
        const auto frames = sensor_frames(p, g);
        double expect = 0;
        for (std::size_t i = 0; i < kNumSensors; ++i) {
            const Vec3 n = frames[i].normal;
            // third row of r applied to n
            const Vec3 world = r * n;
            expect += t[i] * world.z;
        }
        CHECK(vertical_force(t, p, g, r) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("least squares fits") {
    const std::vector<ForceSample> exact{{0, 0}, {1, 1}, {2, 2}};
    const auto m = fit_linear(exact);
    CHECK(std::abs(m.slope - 1) < 1e-12);
    CHECK(std::abs(m.intercept) < 1e-12);

    const double w = 0.0265;
    std::vector<ForceSample> lin;
    for (int n = 0; n <= 12; ++n) lin.push_back({n * w, double(n)});
    const auto m2 = fit_linear(lin, LiftPhase::after_lift);
    CHECK(std::abs(m2.slope - 1 / w) < 1e-9);
    CHECK(std::abs(m2.intercept) < 1e-9);
    CHECK(m2.trained_on == LiftPhase::after_lift);

    CHECK_THROWS_AS(fit_linear(std::vector<ForceSample>{{1, 0}, {1, 2}}), DegenerateData);
    CHECK_THROWS_AS(fit_linear(std::vector<ForceSample>{{1, 0}}), DegenerateData);
}

TEST_CASE("residuals are orthogonal to the regressors") {
    Rng rng(13);
    std::vector<ForceSample> s;
    for (int i = 0; i < 200; ++i) {
        const double f = rng.uniform(0, 0.5);
        s.push_back({f, std::round(f / 0.0265 + rng.normal())});
    }
    const auto m = fit_linear(s);
    double r0 = 0, r1 = 0, scale = 0;
    for (const auto& x : s) {
        const double r = x.count - (m.slope * x.force + m.intercept);
        r0 += r;
        r1 += r * x.force;
        scale += std::abs(x.count);
    }
    CHECK(std::abs(r0) / scale < 1e-9);
    CHECK(std::abs(r1) / scale < 1e-9);
}

TEST_CASE("count prediction") {
    LinearCountModel m{1 / 0.0265, 0.0, LiftPhase::before_lift};
    CHECK(predict_count(m, 0.0795) == 3);
    CHECK(predict_count(m, 0.0) == 0);
    m.intercept = 0.3;
    CHECK(predict_count(m, -0.1) == 0);
    CHECK(predict_count(LinearCountModel{1, 0.5, {}}, 0.0) == 1);  // half away from zero
    std::int64_t prev = 0;
    for (double f = 0; f < 0.5; f += 0.001) {
        const auto c = predict_count(m, f);
        CHECK(c >= prev);
        prev = c;
    }
}

TEST_CASE("model JSON round trip") {
    const LinearCountModel m{37.7358, -0.125, LiftPhase::after_lift};
    const auto back = LinearCountModel::from_json(m.to_json());
    CHECK(back.slope == m.slope);
    CHECK(back.intercept == m.intercept);
    CHECK(back.trained_on == m.trained_on);
    CHECK_THROWS_AS(LinearCountModel::from_json("{\"slope\":1}"), DataError);
    CHECK(lift_phase_from_string(to_string(LiftPhase::before_lift)) == LiftPhase::before_lift);
}
