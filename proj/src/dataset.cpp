#include "graspcount/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>

#include "graspcount/errors.hpp"

namespace graspcount {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

template <std::size_t N>
std::array<double, N> fixed_array(const json& j, const char* key) {
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != N) {
        throw FormatError(std::string("field '") + key + "' must hold " + std::to_string(N) + " numbers");
    }
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
        if (!a[i].is_number()) throw FormatError(std::string("field '") + key + "' has a non-numeric entry");
        out[i] = a[i].get<double>();
    }
    return out;
}

std::vector<std::size_t> index_list(const json& j) {
    std::vector<std::size_t> v;
    for (const auto& x : j) v.push_back(x.get<std::size_t>());
    return v;
}

}  // namespace

std::string sample_to_json(const GraspSample& s) {
    ordered_json j;
    j["pose"] = s.pose.to_array();
    j["tactile"] = s.tactile;
    j["strain"] = s.strain;
    j["label"] = s.label;
    j["meta"] = {{"seed", s.meta.seed},
                 {"domain", to_string(s.meta.domain)},
                 {"object", to_string(s.meta.object)},
                 {"phase", to_string(s.meta.phase)}};
    return j.dump();
}

GraspSample sample_from_json(const std::string& line) {
    GraspSample s;
    try {
        const json j = json::parse(line);
        s.pose = HandPose::from_array(fixed_array<kPoseDim>(j, "pose"));
        s.tactile = fixed_array<kNumSensors>(j, "tactile");
        s.strain = fixed_array<kStrainDim>(j, "strain");
        if (!j.at("label").is_number_integer()) throw FormatError("label must be an integer");
        s.label = j.at("label").get<int>();
        if (s.label < 0) throw FormatError("label must be non-negative");
        const auto& m = j.at("meta");
        s.meta.seed = m.at("seed").get<std::uint64_t>();
        s.meta.domain = domain_from_string(m.at("domain").get<std::string>());
        s.meta.object = object_kind_from_string(m.at("object").get<std::string>());
        s.meta.phase = m.contains("phase") ? lift_phase_from_string(m.at("phase").get<std::string>())
                                           : LiftPhase::before_lift;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed sample: ") + e.what());
    } catch (const ValidationError& e) {
        throw FormatError(std::string("malformed sample: ") + e.what());
    }
    return s;
}

std::string meta_to_json(const DatasetMeta& m) {
    ordered_json j;
    j["version"] = 1;
    j["domain"] = to_string(m.domain);
    j["object"] = to_string(m.object);
    j["phase"] = to_string(m.phase);
    j["split_seed"] = m.split_seed;
    j["normalization"] = {{"tactile_scale_newtons", m.scales.tactile},
                          {"strain_scale_newtons", m.scales.strain},
                          {"spread_max_rad", m.pose_limits.spread_max},
                          {"proximal_max_rad", m.pose_limits.proximal_max},
                          {"distal_max_rad", m.pose_limits.distal_max}};
    j["record_layout"] = {{"pose", kPoseDim}, {"tactile", kNumSensors}, {"strain", kStrainDim}, {"label", 1}};
    j["splits"] = {{"train", m.splits.train}, {"val", m.splits.val}, {"test", m.splits.test}};
    j["class_histogram"] = m.class_histogram;
    return j.dump(2);
}

DatasetMeta meta_from_json(const std::string& text) {
    DatasetMeta m;
    try {
        const json j = json::parse(text);
        m.domain = domain_from_string(j.at("domain").get<std::string>());
        m.object = object_kind_from_string(j.at("object").get<std::string>());
        m.phase = lift_phase_from_string(j.at("phase").get<std::string>());
        m.split_seed = j.at("split_seed").get<std::uint64_t>();
        const auto& n = j.at("normalization");
        m.scales = {n.at("tactile_scale_newtons").get<double>(), n.at("strain_scale_newtons").get<double>()};
        m.pose_limits = {n.at("spread_max_rad").get<double>(), n.at("proximal_max_rad").get<double>(),
                         n.at("distal_max_rad").get<double>()};
        const auto& layout = j.at("record_layout");
        if (layout.at("pose").get<std::size_t>() + layout.at("tactile").get<std::size_t>() +
                layout.at("strain").get<std::size_t>() + layout.at("label").get<std::size_t>() !=
            kRecordDim) {
            throw FormatError("record layout is not 107 values");
        }
        const auto& sp = j.at("splits");
        m.splits = {index_list(sp.at("train")), index_list(sp.at("val")), index_list(sp.at("test"))};
        const auto& h = j.at("class_histogram");
        if (h.size() != static_cast<std::size_t>(kNumClasses)) throw FormatError("class histogram must have 5 bins");
        for (int k = 0; k < kNumClasses; ++k) m.class_histogram[k] = h[k].get<std::size_t>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed dataset metadata: ") + e.what());
    } catch (const ValidationError& e) {
        throw FormatError(std::string("malformed dataset metadata: ") + e.what());
    }
    return m;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".meta.json");
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot write " + path.string());
        for (const auto& s : dataset.samples) f << sample_to_json(s) << '\n';
    }
    std::ofstream m(sidecar_path(path), std::ios::binary);
    if (!m) throw DataError("cannot write " + sidecar_path(path).string());
    m << meta_to_json(dataset.meta) << '\n';
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read dataset " + path.string());
    Dataset d;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            d.samples.push_back(sample_from_json(line));
        } catch (const FormatError& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    std::ifstream m(sidecar_path(path), std::ios::binary);
    if (!m) throw DataError("missing dataset metadata " + sidecar_path(path).string());
    d.meta = meta_from_json(std::string(std::istreambuf_iterator<char>(m), {}));

    std::vector<char> seen(d.samples.size(), 0);
    for (const auto* part : {&d.meta.splits.train, &d.meta.splits.val, &d.meta.splits.test}) {
        for (std::size_t i : *part) {
            if (i >= seen.size() || seen[i]) throw FormatError("split indices do not partition the samples");
            seen[i] = 1;
        }
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
        throw FormatError("split indices do not cover every sample");
    }
    return d;
}

void save_poses(std::span<const HandPose> poses, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    for (const auto& p : poses) f << json(p.to_array()).dump() << '\n';
}

std::vector<HandPose> load_poses(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read poses " + path.string());
    std::vector<HandPose> poses;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            if (!j.is_array() || j.size() != kPoseDim) throw FormatError("pose rows must hold 7 angles");
            poses.push_back(HandPose::from_array(j.get<std::array<double, kPoseDim>>()));
        } catch (const json::exception& e) {
            throw FormatError(std::string("malformed pose: ") + e.what());
        }
    }
    return poses;
}

}  // namespace graspcount
