#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "graspcount/kinematics.hpp"
#include "graspcount/vec3.hpp"

namespace graspcount {

/// When the tactile snapshot was taken relative to lifting the hand.
enum class LiftPhase { before_lift, after_lift };

std::string to_string(LiftPhase phase);
LiftPhase lift_phase_from_string(const std::string& s);

/// Object count as an affine function of the summed vertical contact force.
struct LinearCountModel {
    double slope = 0.0;      // counts per newton
    double intercept = 0.0;  // counts
    LiftPhase trained_on = LiftPhase::before_lift;

    std::string to_json() const;
    static LinearCountModel from_json(const std::string& text);
};

/// Sum of tactile normal forces projected on world-up. `palm_to_world` rotates
/// palm-frame vectors into the world frame, whose up axis is +z.
double vertical_force(std::span<const double> tactile_newtons, const HandPose& pose, const HandGeometry& geom,
                      const Rotation3& palm_to_world = Rotation3::identity());

struct ForceSample {
    double force = 0.0;  // newtons
    double count = 0.0;
};

/// Ordinary least squares. Throws DegenerateData with fewer than two samples or
/// when all forces coincide.
LinearCountModel fit_linear(std::span<const ForceSample> samples, LiftPhase tag = LiftPhase::before_lift);

/// max(0, round(slope * force + intercept)), rounding half away from zero.
std::int64_t predict_count(const LinearCountModel& model, double force);

}  // namespace graspcount
