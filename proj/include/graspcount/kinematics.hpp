#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "graspcount/vec3.hpp"

namespace graspcount {

inline constexpr std::size_t kNumFingers = 3;
inline constexpr std::size_t kSensorsPerRegion = 24;
inline constexpr std::size_t kNumSensors = 4 * kSensorsPerRegion;
inline constexpr std::size_t kPoseDim = 7;

/// Joint readings of the three-fingered hand.
///
/// Fingers 0 and 1 are the spread-coupled ("moving") fingers, finger 2 is the
/// fixed finger. Serialization order is [spread, p1, p2, p3, d1, d2, d3].
struct HandPose {
    double spread = 0.0;
    std::array<double, kNumFingers> proximal{};
    std::array<double, kNumFingers> distal{};

    std::array<double, kPoseDim> to_array() const;
    static HandPose from_array(const std::array<double, kPoseDim>& v);

    bool operator==(const HandPose&) const = default;
};

struct JointLimits {
    double spread_max = 2.0 * 3.14159265358979323846;
    double proximal_max = 140.0 * 3.14159265358979323846 / 180.0;
    double distal_max = 48.0 * 3.14159265358979323846 / 180.0;
};

struct HandGeometry {
    double palm_width = 0.08;  // x extent
    double palm_depth = 0.08;  // y extent
    double proximal_length = 0.070;
    double distal_length = 0.056;
    double finger_width = 0.024;  // tactile pad width across the link
    std::array<std::array<double, 2>, kNumFingers> finger_base_offsets{
        {{-0.025, -0.030}, {0.025, -0.030}, {0.0, 0.030}}};
    double distal_coupling_ratio = 1.0 / 3.0;
    JointLimits limits{};

    /// Throws InvalidGeometry when a length is non-positive or the coupling
    /// ratio leaves (0, 1].
    void validate() const;

    /// Parses `key = value` lines; `#` starts a comment. Unknown keys throw.
    static HandGeometry from_config_text(const std::string& text);
    static HandGeometry load(const std::filesystem::path& path);
};

/// Throws JointLimitViolation for an angle outside `limits` or a non-finite value.
void validate_pose(const HandPose& pose, const JointLimits& limits);

struct HandKeypoints {
    std::array<Vec3, kNumFingers> metacarpal;  // M1..M3 (finger bases)
    std::array<Vec3, kNumFingers> distal;      // D1..D3
    std::array<Vec3, kNumFingers> tip;         // P1..P3
    std::array<Vec3, 4> palm_corners;

    /// All 13 points: M, D, P, then palm corners.
    std::vector<Vec3> all() const;
};

/// Keypoints in the palm frame: palm on z = 0, fingers flex toward +z.
HandKeypoints forward_kinematics(const HandPose& pose, const HandGeometry& geom);

enum class Region { palm = 0, moving_finger_1 = 1, moving_finger_2 = 2, fixed_finger = 3 };

struct SensorFrame {
    Vec3 position;
    Vec3 normal;  // unit, pointing into the grasp space
};

/// 96 frames ordered palm, finger 1, finger 2, fixed finger (24 each).
///
/// Each region is a 6x4 grid stored row-major. On the palm rows run along y and
/// columns along x. On a finger rows run from the knuckle toward the tip: rows
/// 0-2 sit on the proximal link, rows 3-5 on the distal link.
std::array<SensorFrame, kNumSensors> sensor_frames(const HandPose& pose, const HandGeometry& geom);

/// Index range [begin, begin + 24) of a region inside the 96-reading vector.
constexpr std::size_t region_offset(Region r) { return static_cast<std::size_t>(r) * kSensorsPerRegion; }

/// Region that carries finger `f`'s sensors (f in 0..2).
constexpr Region finger_region(std::size_t f) { return static_cast<Region>(f + 1); }

}  // namespace graspcount
