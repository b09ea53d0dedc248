#pragma once

#include <filesystem>
#include <string>

#include "graspcount/simulator.hpp"

namespace graspcount {

/// {pose:[7], tactile:[96], strain:[3], label, meta:{seed, domain, object, phase}}
std::string sample_to_json(const GraspSample& sample);

/// Throws FormatError on malformed rows, including any row whose feature
/// vector is not 106 values (107 with the label).
GraspSample sample_from_json(const std::string& line);

std::string meta_to_json(const DatasetMeta& meta);
DatasetMeta meta_from_json(const std::string& text);

/// `<path>.meta.json`
std::filesystem::path sidecar_path(const std::filesystem::path& path);

/// Writes one sample per line to `path` and the metadata sidecar next to it.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

/// Reads samples and sidecar. Throws DataError subclasses for missing files,
/// malformed rows, or split indices that do not partition the samples.
Dataset load_dataset(const std::filesystem::path& path);

/// Poses as JSON lines of 7-value arrays.
void save_poses(std::span<const HandPose> poses, const std::filesystem::path& path);
std::vector<HandPose> load_poses(const std::filesystem::path& path);

}  // namespace graspcount
