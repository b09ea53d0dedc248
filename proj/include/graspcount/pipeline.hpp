#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graspcount/estimators.hpp"
#include "graspcount/force_regression.hpp"
#include "graspcount/simulator.hpp"

namespace graspcount {

/// Per-class entries are empty for classes absent from the truths.
struct RmseResult {
    std::array<std::optional<double>, kNumClasses> per_class{};
    double overall = 0.0;
};

/// Both inputs are capped to classes {0..4} before comparison.
RmseResult rmse(std::span<const std::int64_t> predictions, std::span<const std::int64_t> truths);

struct ConfusionMatrix {
    std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};  // [truth][prediction]
    double accuracy = 0.0;

    std::size_t total() const;
    std::size_t row_sum(int truth) const;
};

ConfusionMatrix confusion_matrix(std::span<const std::int64_t> predictions, std::span<const std::int64_t> truths);

/// RMSE reconstructed from the confusion counts alone.
RmseResult rmse_from_confusion(const ConfusionMatrix& cm);

enum class EstimatorKind { force, volume, ensemble, baseline };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(const std::string& s);

struct EvalReport {
    EstimatorKind estimator = EstimatorKind::ensemble;
    std::size_t n_samples = 0;
    RmseResult rmse;
    ConfusionMatrix confusion;
    std::optional<double> upper_bound_violation_rate;  // volume estimator only
    bool constant_output = false;

    std::string to_json() const;
    std::string to_table() const;
    /// Largest gap between the stored RMSE values and those rebuilt from the
    /// confusion matrix.
    double consistency_error() const;
};

/// Throws EmptyDataset on empty input and LengthMismatch on unequal lengths.
/// `raw_estimates`, when given, fills the violation rate (truth > estimate).
EvalReport make_report(EstimatorKind kind, std::span<const std::int64_t> predictions,
                       std::span<const std::int64_t> truths,
                       std::optional<std::span<const std::int64_t>> raw_estimates = std::nullopt);

/// Vertical force of a sample's de-normalized tactile snapshot, palm facing up.
double sample_vertical_force(const GraspSample& sample, const DatasetMeta& meta, const HandGeometry& geom = {});

std::vector<ForceSample> force_samples(std::span<const GraspSample> samples, const DatasetMeta& meta,
                                       const HandGeometry& geom = {});

/// Throws UntrainedModel when `model` is empty.
EvalReport evaluate_force(const std::optional<LinearCountModel>& model, std::span<const GraspSample> samples,
                          const DatasetMeta& meta, const HandGeometry& geom = {});

EvalReport evaluate_volume(std::span<const GraspSample> samples, const DatasetMeta& meta,
                           const HandGeometry& geom = {});

/// Throws UntrainedModel when a member has no layers.
EvalReport evaluate_ensemble(const Ensemble& ensemble, std::span<const GraspSample> samples);

/// Most frequent class of `train` (ties to the smaller class).
int majority_class(std::span<const GraspSample> train);

/// Constant-majority predictor evaluated on `test`.
EvalReport evaluate_majority(std::span<const GraspSample> train, std::span<const GraspSample> test);

}  // namespace graspcount
