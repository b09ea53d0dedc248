#include "graspcount/force_regression.hpp"

#include <cmath>
#include <json.hpp>

#include "graspcount/errors.hpp"

namespace graspcount {

std::string to_string(LiftPhase phase) { return phase == LiftPhase::before_lift ? "before_lift" : "after_lift"; }

LiftPhase lift_phase_from_string(const std::string& s) {
    if (s == "before_lift") return LiftPhase::before_lift;
    if (s == "after_lift") return LiftPhase::after_lift;
    throw ValidationError("unknown lift phase '" + s + "'");
}

std::string LinearCountModel::to_json() const {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["slope"] = slope;
    j["intercept"] = intercept;
    j["trained_on"] = to_string(trained_on);
    return j.dump(2);
}

LinearCountModel LinearCountModel::from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("version").get<int>() != 1) throw FormatError("unsupported force model version");
        LinearCountModel m{j.at("slope").get<double>(), j.at("intercept").get<double>(),
                           lift_phase_from_string(j.at("trained_on").get<std::string>())};
        if (!std::isfinite(m.slope) || !std::isfinite(m.intercept)) throw FormatError("non-finite force model");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad force model JSON: ") + e.what());
    }
}

double vertical_force(std::span<const double> tactile_newtons, const HandPose& pose, const HandGeometry& geom,
                      const Rotation3& palm_to_world) {
    if (tactile_newtons.size() != kNumSensors) throw ShapeMismatch("vertical_force expects 96 tactile readings");
    const auto frames = sensor_frames(pose, geom);
    const Vec3 up{0.0, 0.0, 1.0};
    double total = 0.0;
    for (std::size_t i = 0; i < kNumSensors; ++i) {
        if (tactile_newtons[i] < 0.0) throw ValidationError("tactile readings must be non-negative");
        total += tactile_newtons[i] * dot(up, palm_to_world * frames[i].normal);
    }
    return total;
}

LinearCountModel fit_linear(std::span<const ForceSample> samples, LiftPhase tag) {
    if (samples.size() < 2) throw DegenerateData("linear fit needs at least two samples");
    const double n = static_cast<double>(samples.size());
    double mean_f = 0.0, mean_c = 0.0;
    for (const auto& s : samples) {
        mean_f += s.force;
        mean_c += s.count;
    }
    mean_f /= n;
    mean_c /= n;
    double sff = 0.0, sfc = 0.0;
    for (const auto& s : samples) {
        const double df = s.force - mean_f;
        sff += df * df;
        sfc += df * (s.count - mean_c);
    }
    if (!(sff > 0.0)) throw DegenerateData("linear fit needs at least two distinct forces");
    const double slope = sfc / sff;
    return {slope, mean_c - slope * mean_f, tag};
}

std::int64_t predict_count(const LinearCountModel& model, double force) {
    const double raw = model.slope * force + model.intercept;
    if (!std::isfinite(raw)) throw NonFinite("force prediction is not finite");
    // std::round rounds halfway cases away from zero.
    return std::max<std::int64_t>(0, static_cast<std::int64_t>(std::round(raw)));
}

}  // namespace graspcount
