#include "graspcount/kinematics.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "graspcount/errors.hpp"

namespace graspcount {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// In-plane outward direction of finger f at zero flexion.
Vec3 finger_outward(std::size_t f, double spread) {
    switch (f) {
        case 0: return {-std::sin(spread), -std::cos(spread), 0.0};
        case 1: return {std::sin(spread), -std::cos(spread), 0.0};
        default: return {0.0, 1.0, 0.0};
    }
}

struct FingerFrame {
    Vec3 base;
    Vec3 outward;
    Vec3 lateral;
};

FingerFrame finger_frame(std::size_t f, double spread, const HandGeometry& geom) {
    const auto& off = geom.finger_base_offsets[f];
    const Vec3 u = finger_outward(f, spread);
    return {{off[0], off[1], 0.0}, u, cross(Vec3{0, 0, 1}, u)};
}

// Link direction after flexing by `angle` toward +z.
Vec3 link_direction(const FingerFrame& fr, double angle) {
    return std::cos(angle) * fr.outward + std::sin(angle) * Vec3{0, 0, 1};
}

Vec3 link_normal(const FingerFrame& fr, double angle) {
    return -std::sin(angle) * fr.outward + std::cos(angle) * Vec3{0, 0, 1};
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::array<double, kPoseDim> HandPose::to_array() const {
    return {spread, proximal[0], proximal[1], proximal[2], distal[0], distal[1], distal[2]};
}

HandPose HandPose::from_array(const std::array<double, kPoseDim>& v) {
    return {v[0], {v[1], v[2], v[3]}, {v[4], v[5], v[6]}};
}

void HandGeometry::validate() const {
    const double lengths[] = {palm_width, palm_depth, proximal_length, distal_length, finger_width};
    for (double l : lengths) {
        if (!(l > 0.0) || !std::isfinite(l)) throw InvalidGeometry("hand geometry lengths must be positive");
    }
    if (!(distal_coupling_ratio > 0.0 && distal_coupling_ratio <= 1.0)) {
        throw InvalidGeometry("distal_coupling_ratio must lie in (0, 1]");
    }
    if (!(limits.spread_max > 0.0 && limits.proximal_max > 0.0 && limits.distal_max > 0.0)) {
        throw InvalidGeometry("joint limits must be positive");
    }
}

HandGeometry HandGeometry::from_config_text(const std::string& text) {
    HandGeometry g;
    std::map<std::string, double*> keys{
        {"palm_width", &g.palm_width},
        {"palm_depth", &g.palm_depth},
        {"proximal_length", &g.proximal_length},
        {"distal_length", &g.distal_length},
        {"finger_width", &g.finger_width},
        {"finger1_base_x", &g.finger_base_offsets[0][0]},
        {"finger1_base_y", &g.finger_base_offsets[0][1]},
        {"finger2_base_x", &g.finger_base_offsets[1][0]},
        {"finger2_base_y", &g.finger_base_offsets[1][1]},
        {"finger3_base_x", &g.finger_base_offsets[2][0]},
        {"finger3_base_y", &g.finger_base_offsets[2][1]},
        {"distal_coupling_ratio", &g.distal_coupling_ratio},
    };
    double spread_deg = g.limits.spread_max / kDeg;
    double proximal_deg = g.limits.proximal_max / kDeg;
    double distal_deg = g.limits.distal_max / kDeg;
    keys["spread_max_deg"] = &spread_deg;
    keys["proximal_max_deg"] = &proximal_deg;
    keys["distal_max_deg"] = &distal_deg;

    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw InvalidGeometry("geometry config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = keys.find(key);
        if (it == keys.end()) throw InvalidGeometry("unknown geometry key '" + key + "'");
        try {
            std::size_t used = 0;
            *it->second = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
        } catch (const std::exception&) {
            throw InvalidGeometry("geometry key '" + key + "': bad number '" + value + "'");
        }
    }
    g.limits = {spread_deg * kDeg, proximal_deg * kDeg, distal_deg * kDeg};
    g.validate();
    return g;
}

HandGeometry HandGeometry::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw InvalidGeometry("cannot open geometry config " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return from_config_text(ss.str());
}

void validate_pose(const HandPose& pose, const JointLimits& limits) {
    auto check = [](double v, double hi, const char* name) {
        if (!std::isfinite(v) || v < 0.0 || v > hi) {
            throw JointLimitViolation(std::string(name) + " angle " + std::to_string(v) + " rad outside [0, " +
                                      std::to_string(hi) + "]");
        }
    };
    check(pose.spread, limits.spread_max, "spread");
    for (double p : pose.proximal) check(p, limits.proximal_max, "proximal");
    for (double d : pose.distal) check(d, limits.distal_max, "distal");
}

std::vector<Vec3> HandKeypoints::all() const {
    std::vector<Vec3> pts;
    pts.reserve(13);
    pts.insert(pts.end(), metacarpal.begin(), metacarpal.end());
    pts.insert(pts.end(), distal.begin(), distal.end());
    pts.insert(pts.end(), tip.begin(), tip.end());
    pts.insert(pts.end(), palm_corners.begin(), palm_corners.end());
    return pts;
}

HandKeypoints forward_kinematics(const HandPose& pose, const HandGeometry& geom) {
    validate_pose(pose, geom.limits);
    HandKeypoints kp;
    for (std::size_t f = 0; f < kNumFingers; ++f) {
        const FingerFrame fr = finger_frame(f, pose.spread, geom);
        const double a1 = pose.proximal[f];
        const double a2 = a1 + pose.distal[f];
        kp.metacarpal[f] = fr.base;
        kp.distal[f] = fr.base + geom.proximal_length * link_direction(fr, a1);
        kp.tip[f] = kp.distal[f] + geom.distal_length * link_direction(fr, a2);
    }
    const double hx = 0.5 * geom.palm_width;
    const double hy = 0.5 * geom.palm_depth;
    kp.palm_corners = {Vec3{-hx, -hy, 0}, Vec3{hx, -hy, 0}, Vec3{hx, hy, 0}, Vec3{-hx, hy, 0}};
    return kp;
}

std::array<SensorFrame, kNumSensors> sensor_frames(const HandPose& pose, const HandGeometry& geom) {
    validate_pose(pose, geom.limits);
    std::array<SensorFrame, kNumSensors> frames;

    constexpr int rows = 6;
    constexpr int cols = 4;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const double x = -0.5 * geom.palm_width + (c + 0.5) / cols * geom.palm_width;
            const double y = -0.5 * geom.palm_depth + (r + 0.5) / rows * geom.palm_depth;
            frames[r * cols + c] = {{x, y, 0.0}, {0.0, 0.0, 1.0}};
        }
    }

    for (std::size_t f = 0; f < kNumFingers; ++f) {
        const FingerFrame fr = finger_frame(f, pose.spread, geom);
        const double a1 = pose.proximal[f];
        const double a2 = a1 + pose.distal[f];
        const Vec3 d1 = link_direction(fr, a1);
        const Vec3 d2 = link_direction(fr, a2);
        const Vec3 n1 = link_normal(fr, a1);
        const Vec3 n2 = link_normal(fr, a2);
        const Vec3 knuckle = fr.base + geom.proximal_length * d1;
        const std::size_t offset = region_offset(finger_region(f));
        for (int r = 0; r < rows; ++r) {
            const bool on_distal = r >= 3;
            const double along = (r % 3 + 0.5) / 3.0 * (on_distal ? geom.distal_length : geom.proximal_length);
            const Vec3 root = on_distal ? knuckle + along * d2 : fr.base + along * d1;
            for (int c = 0; c < cols; ++c) {
                const double across = -0.5 * geom.finger_width + (c + 0.5) / cols * geom.finger_width;
                frames[offset + r * cols + c] = {root + across * fr.lateral, on_distal ? n2 : n1};
            }
        }
    }
    return frames;
}

}  // namespace graspcount
