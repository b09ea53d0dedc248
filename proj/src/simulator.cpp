#include "graspcount/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <set>

#include "graspcount/errors.hpp"
#include "graspcount/rng.hpp"

namespace graspcount {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr int kPlacementAttempts = 2000;
// Contact when the sensor lies within this fraction of the object's size from
// its surface.
constexpr double kContactTolerance = 0.25;
// Share of a non-retained object's weight that rests on the hand before lift.
constexpr double kPileShareLo = 0.2;
constexpr double kPileShareHi = 0.8;
constexpr double kRealOffsetChance = 0.3;

struct Segment {
    Vec3 a;
    Vec3 b;
};

double distance_to_segment(const Vec3& p, const Segment& s) {
    const Vec3 ab = s.b - s.a;
    const double len2 = dot(ab, ab);
    const double t = len2 > 0.0 ? std::clamp(dot(p - s.a, ab) / len2, 0.0, 1.0) : 0.0;
    return norm(p - (s.a + t * ab));
}

// Distance from a point to the object's surface (negative inside).
double surface_gap(const ObjectSpec& obj, const Vec3& center, const Vec3& p) {
    if (obj.kind == ObjectKind::sphere) return norm(p - center) - obj.characteristic_size;
    const double h = obj.half_extent();
    const Vec3 d{std::abs(p.x - center.x) - h, std::abs(p.y - center.y) - h, std::abs(p.z - center.z) - h};
    const Vec3 outside{std::max(d.x, 0.0), std::max(d.y, 0.0), std::max(d.z, 0.0)};
    const double inside = std::min(std::max({d.x, d.y, d.z}), 0.0);
    return norm(outside) + inside;
}

bool objects_overlap(const ObjectSpec& obj, const Vec3& a, const Vec3& b) {
    if (obj.kind == ObjectKind::sphere) return norm(a - b) < 2.0 * obj.characteristic_size;
    const double s = obj.characteristic_size;
    return std::abs(a.x - b.x) < s && std::abs(a.y - b.y) < s && std::abs(a.z - b.z) < s;
}

class Scene {
public:
    Scene(const ObjectSpec& obj, const HandKeypoints& kp) : obj_(obj) {
        for (std::size_t f = 0; f < kNumFingers; ++f) {
            links_.push_back({kp.metacarpal[f], kp.distal[f]});
            links_.push_back({kp.distal[f], kp.tip[f]});
        }
    }

    bool collides(const Vec3& c, std::size_t self) const {
        const double e = obj_.half_extent();
        if (c.z < e) return true;
        for (const auto& s : links_) {
            if (distance_to_segment(c, s) < e) return true;
        }
        for (std::size_t k = 0; k < centers.size(); ++k) {
            if (k != self && objects_overlap(obj_, c, centers[k])) return true;
        }
        return false;
    }

    // Lowers object j along -z until it rests on the palm plane, a finger link
    // or another object.
    void settle(std::size_t j) {
        const double e = obj_.half_extent();
        Vec3 free = centers[j];
        const double step = 0.25 * e;
        while (free.z > e) {
            Vec3 next = free;
            next.z = std::max(e, free.z - step);
            if (collides(next, j)) {
                double lo = next.z, hi = free.z;
                for (int it = 0; it < 40; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    Vec3 probe = free;
                    probe.z = mid;
                    (collides(probe, j) ? lo : hi) = mid;
                }
                free.z = hi;
                break;
            }
            free = next;
        }
        centers[j] = free;
    }

    std::vector<Vec3> centers;

private:
    ObjectSpec obj_;
    std::vector<Segment> links_;
};

// Flexes each finger from the commanded pose until one of its links touches an
// object or the proximal joint reaches its limit. Distal joints stay coupled.
HandPose close_fingers(const HandPose& start, const std::vector<Vec3>& centers, const ObjectSpec& obj,
                       const HandGeometry& geom) {
    const double e = obj.half_extent();
    const double step = 1.0 * std::numbers::pi / 180.0;
    HandPose pose = start;
    auto blocked = [&](const HandPose& p, std::size_t f) {
        const auto kp = forward_kinematics(p, geom);
        const Segment links[2] = {{kp.metacarpal[f], kp.distal[f]}, {kp.distal[f], kp.tip[f]}};
        for (const auto& c : centers) {
            for (const auto& s : links) {
                if (distance_to_segment(c, s) < e) return true;
            }
        }
        return false;
    };
    auto at = [&](HandPose p, std::size_t f, double proximal) {
        p.proximal[f] = proximal;
        p.distal[f] = std::min(proximal * geom.distal_coupling_ratio, geom.limits.distal_max);
        return p;
    };
    for (std::size_t f = 0; f < kNumFingers; ++f) {
        double free = pose.proximal[f];
        if (blocked(pose, f)) continue;
        while (free < geom.limits.proximal_max) {
            const double next = std::min(free + step, geom.limits.proximal_max);
            if (blocked(at(pose, f, next), f)) {
                double lo = free, hi = next;
                for (int it = 0; it < 30; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    (blocked(at(pose, f, mid), f) ? hi : lo) = mid;
                }
                free = lo;
                break;
            }
            free = next;
        }
        pose = at(pose, f, free);
    }
    return pose;
}

double clipped_normal(Rng& rng) { return std::clamp(rng.normal(), -3.0, 3.0); }

}  // namespace

std::string to_string(Domain d) { return d == Domain::sim_like ? "sim_like" : "real_like"; }

Domain domain_from_string(const std::string& s) {
    if (s == "sim_like") return Domain::sim_like;
    if (s == "real_like") return Domain::real_like;
    throw ValidationError("unknown domain '" + s + "' (expected sim_like or real_like)");
}

void SceneConfig::validate() const {
    object.validate();
    if (pile_size < 0) throw ValidationError("pile size must be non-negative");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw ValidationError("noise must be non-negative");
}

double SceneConfig::effective_noise() const { return domain == Domain::real_like ? 3.0 * noise : noise; }

SensorScales SensorScales::for_object(const ObjectSpec& obj) { return {3.0 * obj.weight(), 10.0 * obj.weight()}; }

std::array<double, kFeatureDim> GraspSample::features() const {
    std::array<double, kFeatureDim> f{};
    const auto p = pose.to_array();
    std::copy(p.begin(), p.end(), f.begin());
    std::copy(tactile.begin(), tactile.end(), f.begin() + kPoseDim);
    std::copy(strain.begin(), strain.end(), f.begin() + kPoseDim + kNumSensors);
    return f;
}

std::vector<HandPose> pregrasp_grid(const HandGeometry& geom) {
    std::vector<HandPose> poses;
    poses.reserve(18 * 11 * 11 * 11);
    for (int s = 0; s < 18; ++s) {
        for (int a = 0; a < 11; ++a) {
            for (int b = 0; b < 11; ++b) {
                for (int c = 0; c < 11; ++c) {
                    HandPose p;
                    p.spread = 20.0 * s * kDeg;
                    p.proximal = {(30.0 + 6.0 * a) * kDeg, (30.0 + 6.0 * b) * kDeg, (30.0 + 6.0 * c) * kDeg};
                    for (std::size_t f = 0; f < kNumFingers; ++f) {
                        p.distal[f] = p.proximal[f] * geom.distal_coupling_ratio;
                    }
                    poses.push_back(p);
                }
            }
        }
    }
    return poses;
}

std::vector<HandPose> dedupe_symmetric(std::span<const HandPose> poses) {
    std::vector<HandPose> out;
    std::set<std::array<double, kPoseDim>> seen;
    for (const auto& p : poses) {
        HandPose swapped = p;
        std::swap(swapped.proximal[0], swapped.proximal[1]);
        std::swap(swapped.distal[0], swapped.distal[1]);
        const auto canonical = std::min(p.to_array(), swapped.to_array());
        if (seen.insert(canonical).second) out.push_back(HandPose::from_array(canonical));
    }
    return out;
}

SimulationTrace simulate_grasp_trace(const HandPose& pose, const SceneConfig& scene, const HandGeometry& geom) {
    scene.validate();
    const ObjectSpec& obj = scene.object;
    const auto kp = forward_kinematics(pose, geom);
    Rng rng(scene.seed);

    SimulationTrace trace;
    trace.sample.meta = {scene.seed, scene.domain, obj.kind, scene.phase};

    // Candidates are drawn from the keypoint bounding box (grown by one half
    // extent) and kept when they lie inside the grasp hull or within one half
    // extent of it.
    const double e = obj.half_extent();
    const auto points = kp.all();
    Vec3 lo{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(), e};
    Vec3 hi{-std::numeric_limits<double>::max(), -std::numeric_limits<double>::max(), 0.0};
    for (const auto& p : points) {
        lo = {std::min(lo.x, p.x - e), std::min(lo.y, p.y - e), e};
        hi = {std::max(hi.x, p.x + e), std::max(hi.y, p.y + e), std::max(hi.z, p.z + e)};
    }
    hi.z = std::max(hi.z, 2.0 * e);
    std::optional<ConvexHull> hull;
    try {
        hull = convex_hull(points);
    } catch (const DegenerateInput&) {
        hull.reset();
    }

    Scene world(obj, kp);
    for (int j = 0; j < scene.pile_size && !trace.placement_failed; ++j) {
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
            const Vec3 c{rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y), rng.uniform(lo.z, hi.z)};
            if (hull && hull->signed_distance(c) > e) continue;
            if (!world.collides(c, SIZE_MAX)) {
                world.centers.push_back(c);
                placed = true;
                break;
            }
        }
        trace.placement_failed = !placed;
    }
    if (trace.placement_failed) world.centers.clear();

    // Settle bottom-up so lower objects are in place before those above them.
    std::vector<std::size_t> order(world.centers.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return world.centers[a].z < world.centers[b].z; });
    for (std::size_t j : order) world.settle(j);
    trace.centers = world.centers;

    // The recorded pose is the one the hand settles in after closing.
    const HandPose final_pose = close_fingers(pose, trace.centers, obj, geom);
    trace.sample.pose = final_pose;
    const auto frames = sensor_frames(final_pose, geom);

    const std::size_t n = trace.centers.size();
    const double tol = kContactTolerance * obj.characteristic_size;
    trace.contacts.assign(n, {});
    trace.retained.assign(n, 0);
    trace.upward_supported.assign(n, 0);
    trace.carried_weight.assign(n, 0.0);
    const double weight = obj.weight();
    int label = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const Vec3& c = trace.centers[j];
        auto& touched = trace.contacts[j];
        for (std::size_t i = 0; i < kNumSensors; ++i) {
            const bool facing = dot(c - frames[i].position, frames[i].normal) > 0.0;
            if (facing && surface_gap(obj, c, frames[i].position) <= tol) touched.push_back(i);
        }
        // Force-closure proxy: two touched sensors whose normals oppose.
        bool opposed = false;
        for (std::size_t a = 0; a < touched.size() && !opposed; ++a) {
            for (std::size_t b = a + 1; b < touched.size() && !opposed; ++b) {
                opposed = dot(frames[touched[a]].normal, frames[touched[b]].normal) < 0.0;
            }
        }
        trace.retained[j] = opposed;
        label += opposed ? 1 : 0;

        // Pile share is drawn for every object so the stream does not depend
        // on contact outcomes.
        const double pile_share = rng.uniform(kPileShareLo, kPileShareHi);
        if (touched.empty()) continue;
        double carried = 0.0;
        if (opposed) {
            carried = weight;
        } else if (scene.phase == LiftPhase::before_lift) {
            carried = pile_share * weight;
        }
        trace.carried_weight[j] = carried;
        if (carried == 0.0) continue;

        // Least-norm normal forces whose vertical components balance `carried`.
        double sum_sq = 0.0;
        for (std::size_t i : touched) {
            const double up = frames[i].normal.z;
            if (up > 0.0) sum_sq += up * up;
        }
        if (sum_sq > 0.0) {
            trace.upward_supported[j] = 1;
            for (std::size_t i : touched) {
                const double up = frames[i].normal.z;
                if (up > 0.0) trace.tactile_newtons[i] += carried * up / sum_sq;
            }
        } else {
            for (std::size_t i : touched) trace.tactile_newtons[i] += carried / static_cast<double>(touched.size());
        }
    }

    const SensorScales scales = SensorScales::for_object(obj);
    const double sigma = scene.effective_noise();
    const double ceiling = 1.0 + 3.0 * sigma;
    double offset = 0.0;
    if (scene.domain == Domain::real_like) {
        const bool shifted = rng.bernoulli(kRealOffsetChance);
        const double magnitude = rng.uniform(0.0, sigma);
        offset = shifted ? magnitude : 0.0;
    }
    auto noisy = [&](double clean) {
        const double v = std::min(clean, 1.0) + sigma * clipped_normal(rng) + offset;
        return std::clamp(v, 0.0, ceiling);
    };
    auto& sample = trace.sample;
    for (std::size_t i = 0; i < kNumSensors; ++i) sample.tactile[i] = noisy(trace.tactile_newtons[i] / scales.tactile);
    for (std::size_t f = 0; f < kNumFingers; ++f) {
        const std::size_t off = region_offset(finger_region(f));
        double load = 0.0;
        for (std::size_t i = 0; i < kSensorsPerRegion; ++i) load += trace.tactile_newtons[off + i];
        sample.strain[f] = noisy(load / scales.strain);
    }
    sample.label = label;
    return trace;
}

GraspSample simulate_grasp(const HandPose& pose, const SceneConfig& scene, const HandGeometry& geom) {
    return simulate_grasp_trace(pose, scene, geom).sample;
}

TactileMapping default_fingertip_mapping() {
    struct Fine {
        int index;
        bool distal;
        double along;
        double across;
    };
    std::vector<Fine> fine;
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) fine.push_back({r * 4 + c, false, (r + 0.5) / 4.0, (c + 0.5) / 4.0});
    }
    for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 3; ++c) fine.push_back({16 + r * 3 + c, true, (r + 0.5) / 6.0, (c + 0.5) / 3.0});
    }

    TactileMapping mapping;
    for (int row = 0; row < 6; ++row) {
        const bool distal = row >= 3;
        const int r = row % 3;
        for (int col = 0; col < 4; ++col) {
            auto& cell = mapping[row * 4 + col];
            const double a0 = r / 3.0, a1 = (r + 1) / 3.0;
            const double c0 = col / 4.0, c1 = (col + 1) / 4.0;
            for (const auto& f : fine) {
                if (f.distal == distal && f.along >= a0 && f.along < a1 && f.across >= c0 && f.across < c1) {
                    cell.push_back(f.index);
                }
            }
            if (cell.empty()) {
                // Borrow the nearest fine sensors on the same link.
                const double ca = 0.5 * (a0 + a1), cc = 0.5 * (c0 + c1);
                double best = std::numeric_limits<double>::max();
                for (const auto& f : fine) {
                    if (f.distal != distal) continue;
                    best = std::min(best, std::hypot(f.along - ca, f.across - cc));
                }
                for (const auto& f : fine) {
                    if (f.distal == distal && std::hypot(f.along - ca, f.across - cc) <= best + 1e-12) {
                        cell.push_back(f.index);
                    }
                }
            }
        }
    }
    return mapping;
}

std::array<double, kSensorsPerRegion> downsample_tactile(std::span<const double> fine, const TactileMapping& mapping) {
    if (fine.size() != kFineFingerSensors) throw ShapeMismatch("fine fingertip frame must have 34 readings");
    std::array<double, kSensorsPerRegion> coarse{};
    for (std::size_t cell = 0; cell < kSensorsPerRegion; ++cell) {
        const auto& members = mapping[cell];
        if (members.empty()) throw InvalidMapping("coarse cell " + std::to_string(cell) + " has no fine sensors");
        double sum = 0.0;
        for (int idx : members) {
            if (idx < 0 || static_cast<std::size_t>(idx) >= fine.size()) {
                throw InvalidMapping("fine index " + std::to_string(idx) + " out of range");
            }
            sum += fine[idx];
        }
        coarse[cell] = sum / static_cast<double>(members.size());
    }
    return coarse;
}

std::vector<GraspSample> Dataset::subset(std::span<const std::size_t> idx) const {
    std::vector<GraspSample> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(samples.at(i));
    return out;
}

SplitIndices split_indices(std::size_t n, Domain domain, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng(seed);
    rng.shuffle(perm.begin(), perm.end());
    const double train_frac = domain == Domain::sim_like ? 0.6 : 0.4;
    const double val_frac = domain == Domain::sim_like ? 0.2 : 0.1;
    const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n))));
    SplitIndices s;
    s.train.assign(perm.begin(), perm.begin() + n_train);
    s.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    s.test.assign(perm.begin() + n_train + n_val, perm.end());
    return s;
}

Dataset generate_dataset(std::span<const SceneConfig> scenes, std::span<const HandPose> poses, int trials_per_pose,
                         const HandGeometry& geom, std::uint64_t split_seed) {
    if (scenes.empty() || poses.empty() || trials_per_pose <= 0) {
        throw EmptyDataset("dataset generation needs scenes, poses and a positive trial count");
    }
    const SceneConfig& first = scenes.front();
    for (const auto& s : scenes) {
        if (s.domain != first.domain || s.object.kind != first.object.kind || s.phase != first.phase) {
            throw ValidationError("all scenes of one dataset must share domain, object and lift phase");
        }
    }
    Dataset ds;
    ds.samples.reserve(scenes.size() * poses.size() * static_cast<std::size_t>(trials_per_pose));
    for (const auto& scene : scenes) {
        for (std::size_t p = 0; p < poses.size(); ++p) {
            for (int t = 0; t < trials_per_pose; ++t) {
                SceneConfig trial = scene;
                trial.seed = mix_seed(mix_seed(scene.seed, p), static_cast<std::uint64_t>(t));
                ds.samples.push_back(simulate_grasp(poses[p], trial, geom));
            }
        }
    }
    auto& meta = ds.meta;
    meta.domain = first.domain;
    meta.object = first.object.kind;
    meta.phase = first.phase;
    meta.split_seed = split_seed;
    meta.scales = SensorScales::for_object(first.object);
    meta.pose_limits = geom.limits;
    meta.splits = split_indices(ds.samples.size(), first.domain, split_seed);
    for (const auto& s : ds.samples) ++meta.class_histogram[count_class(s.label)];
    return ds;
}

}  // namespace graspcount
