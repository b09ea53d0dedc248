#include "graspcount/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <utility>

#include "graspcount/errors.hpp"

namespace graspcount {

namespace {

struct Face {
    std::array<int, 3> v;
    Vec3 normal;
    double offset;  // plane: dot(normal, x) = offset
    bool alive = true;
};

Face make_face(std::span<const Vec3> pts, int a, int b, int c) {
    const Vec3 n = cross(pts[b] - pts[a], pts[c] - pts[a]);
    const double len = norm(n);
    Face f{{a, b, c}, len > 0.0 ? n / len : Vec3{}, 0.0};
    f.offset = dot(f.normal, pts[a]);
    return f;
}

double distance_to(const Face& f, const Vec3& p) { return dot(f.normal, p) - f.offset; }

}  // namespace

double ConvexHull::signed_distance(const Vec3& p) const {
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& f : faces) {
        const Vec3& a = vertices[f[0]];
        const Vec3 n = normalized(cross(vertices[f[1]] - a, vertices[f[2]] - a));
        worst = std::max(worst, dot(n, p - a));
    }
    return worst;
}

ConvexHull convex_hull(std::span<const Vec3> points) {
    const int n = static_cast<int>(points.size());
    if (n < 4) throw DegenerateInput("convex hull needs at least 4 points");

    Vec3 lo = points[0], hi = points[0];
    for (const auto& p : points) {
        if (!is_finite(p)) throw DegenerateInput("convex hull input contains a non-finite point");
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    const double scale = std::max(norm(hi - lo), std::numeric_limits<double>::min());
    const double eps = 1e-12 * scale;

    // Initial simplex from extreme points.
    int i0 = 0;
    for (int i = 1; i < n; ++i) {
        if (points[i].x < points[i0].x) i0 = i;
    }
    int i1 = -1;
    double best = eps;
    for (int i = 0; i < n; ++i) {
        const double d = norm(points[i] - points[i0]);
        if (d > best) best = d, i1 = i;
    }
    if (i1 < 0) throw DegenerateInput("convex hull input points coincide");
    const Vec3 axis = normalized(points[i1] - points[i0]);
    int i2 = -1;
    best = eps;
    for (int i = 0; i < n; ++i) {
        const double d = norm(cross(points[i] - points[i0], axis));
        if (d > best) best = d, i2 = i;
    }
    if (i2 < 0) throw DegenerateInput("convex hull input points are collinear");
    const Vec3 plane_n = normalized(cross(points[i1] - points[i0], points[i2] - points[i0]));
    int i3 = -1;
    best = eps;
    for (int i = 0; i < n; ++i) {
        const double d = std::abs(dot(points[i] - points[i0], plane_n));
        if (d > best) best = d, i3 = i;
    }
    if (i3 < 0) throw DegenerateInput("convex hull input points are coplanar");

    std::vector<Face> faces;
    const Vec3 inner = (points[i0] + points[i1] + points[i2] + points[i3]) / 4.0;
    const int tet[4][3] = {{i0, i1, i2}, {i0, i1, i3}, {i0, i2, i3}, {i1, i2, i3}};
    for (const auto& t : tet) {
        Face f = make_face(points, t[0], t[1], t[2]);
        if (distance_to(f, inner) > 0.0) f = make_face(points, t[0], t[2], t[1]);
        faces.push_back(f);
    }

    std::vector<char> used(n, 0);
    used[i0] = used[i1] = used[i2] = used[i3] = 1;

    std::set<std::pair<int, int>> visible_edges;
    for (int p = 0; p < n; ++p) {
        if (used[p]) continue;
        visible_edges.clear();
        std::vector<std::size_t> visible;
        for (std::size_t fi = 0; fi < faces.size(); ++fi) {
            if (faces[fi].alive && distance_to(faces[fi], points[p]) > eps) visible.push_back(fi);
        }
        if (visible.empty()) continue;
        for (std::size_t fi : visible) {
            const auto& v = faces[fi].v;
            for (int e = 0; e < 3; ++e) visible_edges.emplace(v[e], v[(e + 1) % 3]);
        }
        for (std::size_t fi : visible) {
            faces[fi].alive = false;
            const auto v = faces[fi].v;
            for (int e = 0; e < 3; ++e) {
                const int a = v[e], b = v[(e + 1) % 3];
                // Horizon: the neighbor across (a, b) is not visible.
                if (!visible_edges.contains({b, a})) faces.push_back(make_face(points, a, b, p));
            }
        }
        used[p] = 1;
    }

    ConvexHull hull;
    std::vector<int> remap(n, -1);
    for (const auto& f : faces) {
        if (!f.alive) continue;
        std::array<int, 3> tri{};
        for (int k = 0; k < 3; ++k) {
            int& slot = remap[f.v[k]];
            if (slot < 0) {
                slot = static_cast<int>(hull.vertices.size());
                hull.vertices.push_back(points[f.v[k]]);
            }
            tri[k] = slot;
        }
        hull.faces.push_back(tri);
    }
    return hull;
}

double hull_volume(const ConvexHull& hull) {
    if (hull.faces.empty()) return 0.0;
    Vec3 origin{};
    for (const auto& v : hull.vertices) origin += v;
    origin = origin / static_cast<double>(hull.vertices.size());
    double six_v = 0.0;
    for (const auto& f : hull.faces) {
        const Vec3 a = hull.vertices[f[0]] - origin;
        const Vec3 b = hull.vertices[f[1]] - origin;
        const Vec3 c = hull.vertices[f[2]] - origin;
        six_v += dot(a, cross(b, c));
    }
    return std::max(0.0, six_v / 6.0);
}

std::string to_string(ObjectKind kind) { return kind == ObjectKind::sphere ? "sphere" : "cube"; }

ObjectKind object_kind_from_string(const std::string& s) {
    if (s == "sphere") return ObjectKind::sphere;
    if (s == "cube") return ObjectKind::cube;
    throw ValidationError("unknown object kind '" + s + "' (expected sphere or cube)");
}

double kepler_density() { return std::numbers::pi / std::sqrt(18.0); }

double ObjectSpec::volume() const {
    const double s = characteristic_size;
    return kind == ObjectKind::sphere ? 4.0 / 3.0 * std::numbers::pi * s * s * s : s * s * s;
}

double ObjectSpec::half_extent() const {
    return kind == ObjectKind::sphere ? characteristic_size : 0.5 * characteristic_size;
}

double ObjectSpec::weight() const { return unit_mass * kStandardGravity; }

void ObjectSpec::validate() const {
    if (!(characteristic_size > 0.0)) throw ValidationError("object size must be positive");
    if (!(unit_mass > 0.0)) throw ValidationError("object mass must be positive");
    if (!(packing_density > 0.0 && packing_density <= 1.0)) {
        throw ValidationError("packing density must lie in (0, 1]");
    }
}

ObjectSpec ObjectSpec::ping_pong_ball() { return {ObjectKind::sphere, 0.020, 0.0027, kepler_density()}; }

ObjectSpec ObjectSpec::foam_cube() { return {ObjectKind::cube, 0.025, 0.0025, 1.0}; }

ObjectSpec ObjectSpec::for_kind(ObjectKind kind) {
    return kind == ObjectKind::sphere ? ping_pong_ball() : foam_cube();
}

std::int64_t upper_bound_count(double volume, const ObjectSpec& obj) {
    if (!(volume >= 0.0)) throw ValidationError("volume must be non-negative");
    obj.validate();
    const double ratio = obj.packing_density * volume / obj.volume();
    // Absorb round-off so exact tilings (e.g. 64 cubes) are not floored away.
    return static_cast<std::int64_t>(std::floor(ratio * (1.0 + 1e-12) + 1e-12));
}

double grasp_volume(const HandPose& pose, const HandGeometry& geom) {
    const auto pts = forward_kinematics(pose, geom).all();
    try {
        return hull_volume(convex_hull(pts));
    } catch (const DegenerateInput&) {
        return 0.0;
    }
}

std::int64_t grasp_volume_estimate(const HandPose& pose, const HandGeometry& geom, const ObjectSpec& obj) {
    return upper_bound_count(grasp_volume(pose, geom), obj);
}

}  // namespace graspcount
