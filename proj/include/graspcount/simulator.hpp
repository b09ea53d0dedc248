#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "graspcount/force_regression.hpp"
#include "graspcount/geometry.hpp"
#include "graspcount/kinematics.hpp"

namespace graspcount {

inline constexpr std::size_t kStrainDim = 3;
inline constexpr std::size_t kFeatureDim = kPoseDim + kNumSensors + kStrainDim;  // 106
inline constexpr std::size_t kRecordDim = kFeatureDim + 1;                         // 107 with label
inline constexpr int kNumClasses = 5;

/// Sensor-noise regime. real_like triples the noise and sometimes adds a
/// constant offset to a whole snapshot.
enum class Domain { sim_like, real_like };

std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);

struct SceneConfig {
    ObjectSpec object = ObjectSpec::ping_pong_ball();
    int pile_size = 0;
    double noise = 0.0;  // tactile noise std as a fraction of full scale
    std::uint64_t seed = 0;
    Domain domain = Domain::sim_like;
    LiftPhase phase = LiftPhase::before_lift;

    void validate() const;
    /// Noise std actually applied (tripled for real_like).
    double effective_noise() const;
};

/// Full-scale constants used to normalize readings, tied to the object's weight.
struct SensorScales {
    double tactile = 1.0;  // newtons per unit reading
    double strain = 1.0;   // newtons per unit reading

    static SensorScales for_object(const ObjectSpec& obj);
};

struct SampleMeta {
    std::uint64_t seed = 0;
    Domain domain = Domain::sim_like;
    ObjectKind object = ObjectKind::sphere;
    LiftPhase phase = LiftPhase::before_lift;

    bool operator==(const SampleMeta&) const = default;
};

/// One labeled observation: 7 pose + 96 tactile + 3 strain + label.
struct GraspSample {
    HandPose pose;
    std::array<double, kNumSensors> tactile{};  // normalized
    std::array<double, kStrainDim> strain{};    // normalized
    int label = 0;                               // retained count, uncapped
    SampleMeta meta;

    /// [pose | tactile | strain], raw pose angles.
    std::array<double, kFeatureDim> features() const;
    bool operator==(const GraspSample&) const = default;
};

/// Counts of 4 or more share the last class.
constexpr int count_class(std::int64_t count) { return count < 0 ? 0 : count > 4 ? 4 : static_cast<int>(count); }

std::vector<HandPose> pregrasp_grid(const HandGeometry& geom = {});

/// Keeps one representative per class of poses related by swapping the two
/// spread-coupled fingers' flexion; the representative is the lexicographically
/// smaller 7-tuple. Output order follows first appearance.
std::vector<HandPose> dedupe_symmetric(std::span<const HandPose> poses);

/// Intermediate state of one simulated grasp, exposed for inspection.
struct SimulationTrace {
    GraspSample sample;
    bool placement_failed = false;
    std::vector<Vec3> centers;                        // settled object centers
    std::vector<std::vector<std::size_t>> contacts;   // sensor indices per object
    std::vector<char> retained;
    std::vector<char> upward_supported;               // has a sensor facing up
    std::vector<double> carried_weight;               // newtons borne by the hand
    std::array<double, kNumSensors> tactile_newtons{};  // before normalization and noise
};

/// Quasi-static grasp of a random pile. Deterministic in (pose, scene, geom).
SimulationTrace simulate_grasp_trace(const HandPose& pose, const SceneConfig& scene, const HandGeometry& geom = {});

GraspSample simulate_grasp(const HandPose& pose, const SceneConfig& scene, const HandGeometry& geom = {});

/// Fine-to-coarse fingertip mapping: coarse cell -> fine sensor indices.
using TactileMapping = std::array<std::vector<int>, kSensorsPerRegion>;

inline constexpr std::size_t kFineFingerSensors = 34;

/// Nearest-cell mapping from a 34-sensor finger array (4x4 on the proximal
/// link, 3x6 on the distal link) to the 6x4 coarse layout.
TactileMapping default_fingertip_mapping();

/// Each coarse cell is the mean of its mapped fine readings. Throws
/// InvalidMapping when a cell is empty or an index is out of range.
std::array<double, kSensorsPerRegion> downsample_tactile(std::span<const double> fine, const TactileMapping& mapping);

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

/// Dataset-wide constants recorded next to the samples.
struct DatasetMeta {
    Domain domain = Domain::sim_like;
    ObjectKind object = ObjectKind::sphere;
    LiftPhase phase = LiftPhase::before_lift;
    std::uint64_t split_seed = 0;
    SensorScales scales;
    JointLimits pose_limits;
    SplitIndices splits;
    std::array<std::size_t, kNumClasses> class_histogram{};
};

struct Dataset {
    std::vector<GraspSample> samples;
    DatasetMeta meta;

    std::vector<GraspSample> subset(std::span<const std::size_t> idx) const;
};

/// 60/20/20 for sim_like, 40/10/50 for real_like; seeded permutation.
SplitIndices split_indices(std::size_t n, Domain domain, std::uint64_t seed);

/// trials_per_pose samples for every (scene, pose), seeds derived from the
/// scene seed, pose index and trial index. All scenes must share domain,
/// object and phase.
Dataset generate_dataset(std::span<const SceneConfig> scenes, std::span<const HandPose> poses, int trials_per_pose,
                         const HandGeometry& geom = {}, std::uint64_t split_seed = 0);

}  // namespace graspcount
