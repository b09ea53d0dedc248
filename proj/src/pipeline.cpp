#include "graspcount/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <sstream>

#include "graspcount/errors.hpp"
#include "graspcount/geometry.hpp"

namespace graspcount {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
    if (a != b) {
        throw LengthMismatch("predictions and truths differ in length (" + std::to_string(a) + " vs " +
                             std::to_string(b) + ")");
    }
}

std::vector<std::int64_t> truths_of(std::span<const GraspSample> samples) {
    std::vector<std::int64_t> t(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) t[i] = samples[i].label;
    return t;
}

std::string fmt(double v, int prec = 4) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

constexpr const char* kClassNames[kNumClasses] = {"0", "1", "2", "3", ">=4"};

}  // namespace

RmseResult rmse(std::span<const std::int64_t> predictions, std::span<const std::int64_t> truths) {
    check_lengths(predictions.size(), truths.size());
    if (truths.empty()) throw EmptyDataset("rmse of an empty set");
    std::array<double, kNumClasses> sq{};
    std::array<std::size_t, kNumClasses> n{};
    double total = 0.0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const int t = count_class(truths[i]);
        const double d = count_class(predictions[i]) - t;
        sq[t] += d * d;
        ++n[t];
        total += d * d;
    }
    RmseResult r;
    for (int k = 0; k < kNumClasses; ++k) {
        if (n[k] > 0) r.per_class[k] = std::sqrt(sq[k] / static_cast<double>(n[k]));
    }
    r.overall = std::sqrt(total / static_cast<double>(truths.size()));
    return r;
}

std::size_t ConfusionMatrix::total() const {
    std::size_t s = 0;
    for (const auto& row : counts) {
        for (auto c : row) s += c;
    }
    return s;
}

std::size_t ConfusionMatrix::row_sum(int truth) const {
    std::size_t s = 0;
    for (auto c : counts[truth]) s += c;
    return s;
}

ConfusionMatrix confusion_matrix(std::span<const std::int64_t> predictions, std::span<const std::int64_t> truths) {
    check_lengths(predictions.size(), truths.size());
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truths.size(); ++i) ++cm.counts[count_class(truths[i])][count_class(predictions[i])];
    std::size_t diag = 0;
    for (int k = 0; k < kNumClasses; ++k) diag += cm.counts[k][k];
    cm.accuracy = truths.empty() ? 0.0 : static_cast<double>(diag) / static_cast<double>(truths.size());
    return cm;
}

RmseResult rmse_from_confusion(const ConfusionMatrix& cm) {
    RmseResult r;
    double total = 0.0;
    std::size_t n = 0;
    for (int t = 0; t < kNumClasses; ++t) {
        double sq = 0.0;
        std::size_t rows = 0;
        for (int p = 0; p < kNumClasses; ++p) {
            const double d = p - t;
            sq += static_cast<double>(cm.counts[t][p]) * d * d;
            rows += cm.counts[t][p];
        }
        if (rows > 0) r.per_class[t] = std::sqrt(sq / static_cast<double>(rows));
        total += sq;
        n += rows;
    }
    r.overall = n == 0 ? 0.0 : std::sqrt(total / static_cast<double>(n));
    return r;
}

std::string to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::force: return "force";
        case EstimatorKind::volume: return "volume";
        case EstimatorKind::ensemble: return "ensemble";
        case EstimatorKind::baseline: return "baseline";
    }
    return "?";
}

EstimatorKind estimator_kind_from_string(const std::string& s) {
    if (s == "force") return EstimatorKind::force;
    if (s == "volume") return EstimatorKind::volume;
    if (s == "ensemble") return EstimatorKind::ensemble;
    if (s == "baseline") return EstimatorKind::baseline;
    throw ValidationError("unknown estimator '" + s + "' (expected force, volume, ensemble or baseline)");
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["estimator"] = to_string(estimator);
    j["n_samples"] = n_samples;
    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    for (int k = 0; k < kNumClasses; ++k) {
        if (rmse.per_class[k]) {
            per[kClassNames[k]] = *rmse.per_class[k];
        } else {
            per[kClassNames[k]] = "N/A";
        }
    }
    j["per_class_rmse"] = per;
    j["overall_rmse"] = rmse.overall;
    j["accuracy"] = confusion.accuracy;
    j["confusion"] = confusion.counts;
    if (upper_bound_violation_rate) j["upper_bound_violation_rate"] = *upper_bound_violation_rate;
    j["constant_output"] = constant_output;
    return j.dump(2);
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    os << "estimator: " << to_string(estimator) << "   samples: " << n_samples << "\n\n";
    char line[128];
    std::snprintf(line, sizeof line, "%-8s %8s %10s\n", "class", "n", "RMSE");
    os << line;
    for (int k = 0; k < kNumClasses; ++k) {
        const std::string v = rmse.per_class[k] ? fmt(*rmse.per_class[k]) : "N/A";
        std::snprintf(line, sizeof line, "%-8s %8zu %10s\n", kClassNames[k], confusion.row_sum(k), v.c_str());
        os << line;
    }
    std::snprintf(line, sizeof line, "%-8s %8zu %10s\n", "overall", n_samples, fmt(rmse.overall).c_str());
    os << line;
    os << "accuracy: " << fmt(confusion.accuracy) << "\n";
    if (upper_bound_violation_rate) {
        os << "upper-bound violations: " << fmt(100.0 * *upper_bound_violation_rate, 2) << "%\n";
    }
    os << "\nconfusion (rows truth, columns prediction)\n";
    std::snprintf(line, sizeof line, "%-6s", "");
    os << line;
    for (int p = 0; p < kNumClasses; ++p) {
        std::snprintf(line, sizeof line, "%8s", kClassNames[p]);
        os << line;
    }
    os << "\n";
    for (int t = 0; t < kNumClasses; ++t) {
        std::snprintf(line, sizeof line, "%-6s", kClassNames[t]);
        os << line;
        for (int p = 0; p < kNumClasses; ++p) {
            std::snprintf(line, sizeof line, "%8zu", confusion.counts[t][p]);
            os << line;
        }
        os << "\n";
    }
    return os.str();
}

double EvalReport::consistency_error() const {
    const RmseResult r = rmse_from_confusion(confusion);
    double err = std::abs(r.overall - rmse.overall);
    for (int k = 0; k < kNumClasses; ++k) {
        if (r.per_class[k].has_value() != rmse.per_class[k].has_value()) return INFINITY;
        if (r.per_class[k]) err = std::max(err, std::abs(*r.per_class[k] - *rmse.per_class[k]));
    }
    return err;
}

EvalReport make_report(EstimatorKind kind, std::span<const std::int64_t> predictions,
                       std::span<const std::int64_t> truths,
                       std::optional<std::span<const std::int64_t>> raw_estimates) {
    check_lengths(predictions.size(), truths.size());
    if (truths.empty()) throw EmptyDataset("cannot evaluate on an empty split");
    EvalReport r;
    r.estimator = kind;
    r.n_samples = truths.size();
    r.rmse = rmse(predictions, truths);
    r.confusion = confusion_matrix(predictions, truths);
    if (raw_estimates) {
        check_lengths(raw_estimates->size(), truths.size());
        std::size_t bad = 0;
        for (std::size_t i = 0; i < truths.size(); ++i) bad += truths[i] > (*raw_estimates)[i];
        r.upper_bound_violation_rate = static_cast<double>(bad) / static_cast<double>(truths.size());
    }
    r.constant_output = truths.size() > 1 && std::all_of(predictions.begin(), predictions.end(), [&](auto p) {
                            return count_class(p) == count_class(predictions.front());
                        });
    return r;
}

double sample_vertical_force(const GraspSample& sample, const DatasetMeta& meta, const HandGeometry& geom) {
    std::array<double, kNumSensors> newtons{};
    for (std::size_t i = 0; i < kNumSensors; ++i) newtons[i] = std::max(0.0, sample.tactile[i]) * meta.scales.tactile;
    return vertical_force(newtons, sample.pose, geom);
}

std::vector<ForceSample> force_samples(std::span<const GraspSample> samples, const DatasetMeta& meta,
                                       const HandGeometry& geom) {
    std::vector<ForceSample> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out[i] = {sample_vertical_force(samples[i], meta, geom), static_cast<double>(samples[i].label)};
    }
    return out;
}

EvalReport evaluate_force(const std::optional<LinearCountModel>& model, std::span<const GraspSample> samples,
                          const DatasetMeta& meta, const HandGeometry& geom) {
    if (!model) throw UntrainedModel("force estimator has not been fitted");
    if (samples.empty()) throw EmptyDataset("cannot evaluate on an empty split");
    std::vector<std::int64_t> preds(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        preds[i] = predict_count(*model, sample_vertical_force(samples[i], meta, geom));
    }
    const auto truths = truths_of(samples);
    return make_report(EstimatorKind::force, preds, truths);
}

EvalReport evaluate_volume(std::span<const GraspSample> samples, const DatasetMeta& meta, const HandGeometry& geom) {
    if (samples.empty()) throw EmptyDataset("cannot evaluate on an empty split");
    const ObjectSpec obj = ObjectSpec::for_kind(meta.object);
    std::vector<std::int64_t> est(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) est[i] = grasp_volume_estimate(samples[i].pose, geom, obj);
    const auto truths = truths_of(samples);
    return make_report(EstimatorKind::volume, est, truths, std::span<const std::int64_t>(est));
}

EvalReport evaluate_ensemble(const Ensemble& ensemble, std::span<const GraspSample> samples) {
    for (const nn::Model* m : {&ensemble.naive, &ensemble.encoder, &ensemble.encoder_regression,
                               &ensemble.autoencoders.palm.model(), &ensemble.autoencoders.fixed_finger.model(),
                               &ensemble.autoencoders.moving_finger.model()}) {
        if (m->layers().empty()) throw UntrainedModel("ensemble member has no layers");
    }
    if (samples.empty()) throw EmptyDataset("cannot evaluate on an empty split");
    const auto preds = ensemble_predict(samples, ensemble);
    std::vector<std::int64_t> p(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) p[i] = preds[i].predicted_class;
    const auto truths = truths_of(samples);
    return make_report(EstimatorKind::ensemble, p, truths);
}

int majority_class(std::span<const GraspSample> train) {
    if (train.empty()) throw EmptyDataset("majority class of an empty set");
    std::array<std::size_t, kNumClasses> h{};
    for (const auto& s : train) ++h[count_class(s.label)];
    return static_cast<int>(std::max_element(h.begin(), h.end()) - h.begin());
}

EvalReport evaluate_majority(std::span<const GraspSample> train, std::span<const GraspSample> test) {
    const int m = majority_class(train);
    const std::vector<std::int64_t> preds(test.size(), m);
    const auto truths = truths_of(test);
    return make_report(EstimatorKind::baseline, preds, truths);
}

}  // namespace graspcount
