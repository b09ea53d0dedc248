#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "graspcount/nn.hpp"
#include "graspcount/simulator.hpp"

namespace graspcount {

inline constexpr std::size_t kCodeDim = 6;
inline constexpr std::size_t kEncodedFeatureDim = kPoseDim + 4 * kCodeDim + kStrainDim;  // 34

/// One 6x4 tactile frame of a hand region, normalized to [0, 1] by `scale`.
struct TactileGrid {
    Region region = Region::palm;
    std::array<double, kSensorsPerRegion> values{};
    double scale = 1.0;  // newtons per unit reading
};

TactileGrid tactile_grid(const GraspSample& sample, Region region, double scale = 1.0);

struct TactileEncoding {
    Region region = Region::palm;
    std::array<double, kCodeDim> code{};
};

/// Probabilities over the count classes {0, 1, 2, 3, 4+}.
struct ClassDistribution {
    std::array<double, kNumClasses> probs{};

    /// argmax; ties go to the smaller class.
    int argmax() const;
    bool valid(double tol = 1e-9) const;
};

enum class FeatureVariant { naive, encoded };

struct FeatureVector {
    FeatureVariant variant = FeatureVariant::naive;
    std::vector<double> values;  // 106 (naive) or 34 (encoded)
};

/// Pose angles divided by their joint range.
std::array<double, kPoseDim> normalized_pose(const HandPose& pose, const JointLimits& limits);

/// [pose | 96 tactile | 3 strain], pose normalized.
FeatureVector naive_features(const GraspSample& sample, const JointLimits& limits);

/// Convolutional tactile autoencoder over a 6x4 frame.
class Autoencoder {
public:
    /// Layers [0, kEncoderLayers) form the encoder.
    static constexpr std::size_t kEncoderLayers = 9;

    Autoencoder() = default;
    explicit Autoencoder(nn::Model model);

    static Autoencoder build(std::uint64_t seed = 0);

    std::array<double, kCodeDim> encode(std::span<const double> frame) const;
    nn::Matrix encode_batch(const nn::Matrix& frames) const;
    std::array<double, kSensorsPerRegion> reconstruct(std::span<const double> frame) const;

    nn::Model& model() { return model_; }
    const nn::Model& model() const { return model_; }

private:
    nn::Model model_;
};

/// Architecture only: reshape 6x4x1, conv(12), relu, conv(6), relu, maxpool,
/// flatten, dropout(0.5), dense(6) | dense(36), reshape 3x2x6, convT(6), relu,
/// convT(12), relu, upsample, convT(1), flatten.
nn::Model build_autoencoder_model();

/// Palm, fixed finger, and one model shared by both moving fingers.
struct AutoencoderSet {
    Autoencoder palm;
    Autoencoder fixed_finger;
    Autoencoder moving_finger;

    const Autoencoder& for_region(Region r) const;
};

struct StageConfig {
    int epochs = 100;
    std::size_t batch_size = 500;
    double learning_rate = 0.001;
    std::uint64_t seed = 0;
    bool oversample = true;
};

struct AutoencoderHistories {
    std::vector<double> palm;
    std::vector<double> fixed_finger;
    std::vector<double> moving_finger;
};

/// Trains the three autoencoders with MSE on the samples' region frames.
AutoencoderSet train_autoencoders(std::span<const GraspSample> samples, const StageConfig& config,
                                  AutoencoderHistories* histories = nullptr);

/// [pose | palm | fixed | moving 1 | moving 2 | strain] = 34 values.
FeatureVector encode_features(const GraspSample& sample, const AutoencoderSet& aes, const JointLimits& limits);

enum class ClassifierHead { softmax5, regression1 };

/// dense(256), relu, dropout, dense(128), relu, dropout, dense(64), relu, head.
/// Throws InvalidDim unless input_dim is 106 or 34.
nn::Model build_classifier(std::size_t input_dim, ClassifierHead head, std::uint64_t seed = 0);

/// Clamp to [0, 4] and split the mass between floor and ceil.
ClassDistribution regression_to_distribution(double r);

/// Elementwise mean of the three member distributions.
ClassDistribution combine_distributions(const ClassDistribution& naive, const ClassDistribution& encoder,
                                        const ClassDistribution& regression);

struct Ensemble {
    AutoencoderSet autoencoders;
    nn::Model naive;
    nn::Model encoder;
    nn::Model encoder_regression;
    JointLimits pose_limits;
    SensorScales scales;
    ObjectKind object = ObjectKind::sphere;
    StageConfig classifier_config;
    StageConfig autoencoder_config;
};

struct MemberDistributions {
    ClassDistribution naive;
    ClassDistribution encoder;
    ClassDistribution regression;
};

struct EnsemblePrediction {
    ClassDistribution distribution;
    int predicted_class = 0;
    MemberDistributions members;
};

EnsemblePrediction ensemble_predict(const GraspSample& sample, const Ensemble& ensemble);
std::vector<EnsemblePrediction> ensemble_predict(std::span<const GraspSample> samples, const Ensemble& ensemble);

struct ClassifierHistories {
    std::vector<double> naive;
    std::vector<double> encoder;
    std::vector<double> encoder_regression;
};

/// Builds and trains the three ensemble members on top of trained autoencoders.
Ensemble train_classifiers(std::span<const GraspSample> samples, AutoencoderSet autoencoders,
                           const DatasetMeta& meta, const StageConfig& config,
                           ClassifierHistories* histories = nullptr);

/// Training matrices of one member.
nn::TrainSet member_train_set(std::span<const GraspSample> samples, const Ensemble& ensemble, FeatureVariant variant,
                              ClassifierHead head);

/// Mean loss of the three members on `samples` (eval mode, training losses).
double ensemble_loss(std::span<const GraspSample> samples, const Ensemble& ensemble);

struct FineTuneOptions {
    int epochs = 500;
    std::uint64_t seed = 0;
    bool retrain_autoencoders = false;
    std::size_t batch_size = 500;
    bool oversample = true;
};

/// Continues training every member from its current weights on `samples`.
/// Zero epochs return the input unchanged.
Ensemble fine_tune(const Ensemble& pretrained, std::span<const GraspSample> samples, const FineTuneOptions& options,
                   ClassifierHistories* histories = nullptr);

/// Bundle layout: naive.json, encoder.json, encoder_regression.json,
/// ae_palm.json, ae_fixed_finger.json, ae_moving_finger.json, metadata.json.
void save_bundle(const Ensemble& ensemble, const std::filesystem::path& dir);
Ensemble load_bundle(const std::filesystem::path& dir);

/// Autoencoder-only bundle (the three ae_*.json files plus metadata).
void save_autoencoders(const AutoencoderSet& aes, const std::filesystem::path& dir);
AutoencoderSet load_autoencoders(const std::filesystem::path& dir);

/// FNV-1a 64 of the canonical training-configuration JSON.
std::string config_hash(const Ensemble& ensemble);

}  // namespace graspcount
