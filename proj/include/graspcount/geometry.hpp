#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "graspcount/kinematics.hpp"
#include "graspcount/vec3.hpp"

namespace graspcount {

/// Closed triangulated convex polytope. Faces wind counter-clockwise seen from
/// outside, so the signed tetrahedron sum is positive.
struct ConvexHull {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    /// Largest signed distance of `p` to any face plane; <= 0 means inside.
    double signed_distance(const Vec3& p) const;
    bool contains(const Vec3& p, double tol = 1e-9) const { return signed_distance(p) <= tol; }
};

/// Incremental 3D hull. Throws DegenerateInput for fewer than four points or a
/// coplanar/collinear set.
ConvexHull convex_hull(std::span<const Vec3> points);

double hull_volume(const ConvexHull& hull);

enum class ObjectKind { sphere, cube };

std::string to_string(ObjectKind kind);
ObjectKind object_kind_from_string(const std::string& s);

struct ObjectSpec {
    ObjectKind kind = ObjectKind::sphere;
    double characteristic_size = 0.02;  // radius (sphere) or edge (cube), meters
    double unit_mass = 0.0027;          // kg
    double packing_density = 0.0;       // maximum packing fraction in (0, 1]

    double volume() const;
    /// Distance from center to the farthest face along an axis (r or a/2).
    double half_extent() const;
    double weight() const;  // newtons
    void validate() const;

    /// Ping-pong ball: r = 20 mm, 2.7 g, Kepler density pi/sqrt(18).
    static ObjectSpec ping_pong_ball();
    /// Foam cube: 25 mm edge, 2.5 g, space-filling density 1.
    static ObjectSpec foam_cube();
    static ObjectSpec for_kind(ObjectKind kind);
};

inline constexpr double kStandardGravity = 9.80665;

/// Densest sphere packing fraction pi / sqrt(18).
double kepler_density();

/// floor(packing_density * volume / object_volume).
std::int64_t upper_bound_count(double volume, const ObjectSpec& obj);

/// Hull volume of the 13 hand keypoints; 0 when the keypoints are coplanar.
double grasp_volume(const HandPose& pose, const HandGeometry& geom);

/// Volume-based upper bound on the number of objects the grasp can hold.
std::int64_t grasp_volume_estimate(const HandPose& pose, const HandGeometry& geom, const ObjectSpec& obj);

}  // namespace graspcount
