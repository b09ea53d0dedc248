#include "graspcount/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "graspcount/errors.hpp"

namespace graspcount {

namespace {

using nn::LayerSpec;
using nn::Matrix;

constexpr Region kEncodedOrder[4] = {Region::palm, Region::fixed_finger, Region::moving_finger_1,
                                     Region::moving_finger_2};

Matrix region_frames(std::span<const GraspSample> samples, Region region) {
    Matrix m(samples.size(), kSensorsPerRegion);
    const std::size_t off = region_offset(region);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::copy_n(samples[i].tactile.begin() + off, kSensorsPerRegion, m.row(i).begin());
    }
    return m;
}

Matrix stack(const Matrix& a, const Matrix& b) {
    Matrix m(a.rows + b.rows, a.cols);
    std::copy(a.data.begin(), a.data.end(), m.data.begin());
    std::copy(b.data.begin(), b.data.end(), m.data.begin() + a.data.size());
    return m;
}

Matrix naive_matrix(std::span<const GraspSample> samples, const JointLimits& limits) {
    Matrix m(samples.size(), kFeatureDim);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto f = naive_features(samples[i], limits);
        std::copy(f.values.begin(), f.values.end(), m.row(i).begin());
    }
    return m;
}

Matrix encoded_matrix(std::span<const GraspSample> samples, const AutoencoderSet& aes, const JointLimits& limits) {
    Matrix m(samples.size(), kEncodedFeatureDim);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto pose = normalized_pose(samples[i].pose, limits);
        std::copy(pose.begin(), pose.end(), m.row(i).begin());
        std::copy(samples[i].strain.begin(), samples[i].strain.end(),
                  m.row(i).begin() + kPoseDim + 4 * kCodeDim);
    }
    for (std::size_t r = 0; r < 4; ++r) {
        const Matrix codes = aes.for_region(kEncodedOrder[r]).encode_batch(region_frames(samples, kEncodedOrder[r]));
        for (std::size_t i = 0; i < samples.size(); ++i) {
            std::copy_n(codes.row(i).begin(), kCodeDim, m.row(i).begin() + kPoseDim + r * kCodeDim);
        }
    }
    return m;
}

ClassDistribution to_distribution(std::span<const double> probs) {
    ClassDistribution d;
    std::copy_n(probs.begin(), kNumClasses, d.probs.begin());
    return d;
}

nn::TrainConfig train_config(const StageConfig& stage, nn::Loss loss, std::uint64_t salt) {
    nn::TrainConfig c;
    c.learning_rate = stage.learning_rate;
    c.epochs = stage.epochs;
    c.batch_size = stage.batch_size;
    c.loss = loss;
    c.seed = mix_seed(stage.seed, salt);
    c.oversample = stage.oversample;
    return c;
}

nlohmann::ordered_json stage_json(const StageConfig& c) {
    nlohmann::ordered_json j;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["seed"] = c.seed;
    j["oversample"] = c.oversample;
    return j;
}

StageConfig stage_from_json(const nlohmann::json& j) {
    StageConfig c;
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.oversample = j.at("oversample").get<bool>();
    return c;
}

nlohmann::ordered_json training_json(const Ensemble& e) {
    nlohmann::ordered_json j;
    j["object"] = to_string(e.object);
    j["normalization"] = {{"tactile_scale_newtons", e.scales.tactile},
                          {"strain_scale_newtons", e.scales.strain},
                          {"spread_max_rad", e.pose_limits.spread_max},
                          {"proximal_max_rad", e.pose_limits.proximal_max},
                          {"distal_max_rad", e.pose_limits.distal_max}};
    j["classifier"] = stage_json(e.classifier_config);
    j["autoencoder"] = stage_json(e.autoencoder_config);
    return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    f << text;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TactileGrid tactile_grid(const GraspSample& sample, Region region, double scale) {
    TactileGrid g;
    g.region = region;
    g.scale = scale;
    std::copy_n(sample.tactile.begin() + region_offset(region), kSensorsPerRegion, g.values.begin());
    return g;
}

int ClassDistribution::argmax() const {
    int best = 0;
    for (int k = 1; k < kNumClasses; ++k) {
        if (probs[k] > probs[best]) best = k;
    }
    return best;
}

bool ClassDistribution::valid(double tol) const {
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0)) return false;
        sum += p;
    }
    return std::abs(sum - 1.0) <= tol;
}

std::array<double, kPoseDim> normalized_pose(const HandPose& pose, const JointLimits& limits) {
    return {pose.spread / limits.spread_max,       pose.proximal[0] / limits.proximal_max,
            pose.proximal[1] / limits.proximal_max, pose.proximal[2] / limits.proximal_max,
            pose.distal[0] / limits.distal_max,     pose.distal[1] / limits.distal_max,
            pose.distal[2] / limits.distal_max};
}

FeatureVector naive_features(const GraspSample& sample, const JointLimits& limits) {
    FeatureVector f{FeatureVariant::naive, {}};
    f.values.reserve(kFeatureDim);
    const auto pose = normalized_pose(sample.pose, limits);
    f.values.insert(f.values.end(), pose.begin(), pose.end());
    f.values.insert(f.values.end(), sample.tactile.begin(), sample.tactile.end());
    f.values.insert(f.values.end(), sample.strain.begin(), sample.strain.end());
    return f;
}

nn::Model build_autoencoder_model() {
    return nn::Model(nn::Shape::vector(static_cast<int>(kSensorsPerRegion)),
                     {
                         LayerSpec::reshape({6, 4, 1}),
                         LayerSpec::conv2d(12),
                         LayerSpec::relu(),
                         LayerSpec::conv2d(6),
                         LayerSpec::relu(),
                         LayerSpec::maxpool2x2(),
                         LayerSpec::flatten(),
                         LayerSpec::dropout(0.5),
                         LayerSpec::dense(static_cast<int>(kCodeDim)),
                         LayerSpec::dense(36),
                         LayerSpec::reshape({3, 2, 6}),
                         LayerSpec::conv_transpose2d(6),
                         LayerSpec::relu(),
                         LayerSpec::conv_transpose2d(12),
                         LayerSpec::relu(),
                         LayerSpec::upsample2x2(),
                         LayerSpec::conv_transpose2d(1),
                         LayerSpec::flatten(),
                     });
}

Autoencoder::Autoencoder(nn::Model model) : model_(std::move(model)) {
    const nn::Model reference = build_autoencoder_model();
    if (!model_.same_architecture(reference)) throw ShapeMismatch("model is not a tactile autoencoder");
}

Autoencoder Autoencoder::build(std::uint64_t seed) {
    nn::Model m = build_autoencoder_model();
    m.init(seed);
    return Autoencoder(std::move(m));
}

std::array<double, kCodeDim> Autoencoder::encode(std::span<const double> frame) const {
    if (frame.size() != kSensorsPerRegion) throw ShapeMismatch("tactile frame must have 24 readings");
    const Matrix code = encode_batch(Matrix::from_row(frame));
    std::array<double, kCodeDim> out{};
    std::copy_n(code.data.begin(), kCodeDim, out.begin());
    return out;
}

Matrix Autoencoder::encode_batch(const Matrix& frames) const { return nn::forward(model_, frames, 0, kEncoderLayers); }

std::array<double, kSensorsPerRegion> Autoencoder::reconstruct(std::span<const double> frame) const {
    if (frame.size() != kSensorsPerRegion) throw ShapeMismatch("tactile frame must have 24 readings");
    const Matrix out = nn::forward(model_, Matrix::from_row(frame));
    std::array<double, kSensorsPerRegion> r{};
    std::copy_n(out.data.begin(), kSensorsPerRegion, r.begin());
    return r;
}

const Autoencoder& AutoencoderSet::for_region(Region r) const {
    switch (r) {
        case Region::palm: return palm;
        case Region::fixed_finger: return fixed_finger;
        default: return moving_finger;
    }
}

AutoencoderSet train_autoencoders(std::span<const GraspSample> samples, const StageConfig& config,
                                  AutoencoderHistories* histories) {
    if (samples.empty()) throw EmptyDataset("autoencoder training set is empty");
    AutoencoderSet aes{Autoencoder::build(mix_seed(config.seed, 101)), Autoencoder::build(mix_seed(config.seed, 102)),
                       Autoencoder::build(mix_seed(config.seed, 103))};
    StageConfig stage = config;
    stage.oversample = false;  // reconstruction has no class labels

    auto fit = [&](Autoencoder& ae, Matrix frames, std::uint64_t salt) {
        nn::TrainSet set{frames, frames, {}};
        return nn::train(ae.model(), set, train_config(stage, nn::Loss::mse, salt));
    };
    auto h_palm = fit(aes.palm, region_frames(samples, Region::palm), 1);
    auto h_fixed = fit(aes.fixed_finger, region_frames(samples, Region::fixed_finger), 2);
    auto h_moving = fit(aes.moving_finger,
                        stack(region_frames(samples, Region::moving_finger_1),
                              region_frames(samples, Region::moving_finger_2)),
                        3);
    if (histories) *histories = {std::move(h_palm), std::move(h_fixed), std::move(h_moving)};
    return aes;
}

FeatureVector encode_features(const GraspSample& sample, const AutoencoderSet& aes, const JointLimits& limits) {
    const Matrix m = encoded_matrix(std::span(&sample, 1), aes, limits);
    return {FeatureVariant::encoded, std::vector<double>(m.data.begin(), m.data.end())};
}

nn::Model build_classifier(std::size_t input_dim, ClassifierHead head, std::uint64_t seed) {
    if (input_dim != kFeatureDim && input_dim != kEncodedFeatureDim) {
        throw InvalidDim("classifier input must be 106 (naive) or 34 (encoded), got " + std::to_string(input_dim));
    }
    std::vector<LayerSpec> specs{
        LayerSpec::dense(256), LayerSpec::relu(), LayerSpec::dropout(0.5),
        LayerSpec::dense(128), LayerSpec::relu(), LayerSpec::dropout(0.5),
        LayerSpec::dense(64),  LayerSpec::relu(),
    };
    if (head == ClassifierHead::softmax5) {
        specs.push_back(LayerSpec::dense(kNumClasses));
        specs.push_back(LayerSpec::softmax());
    } else {
        specs.push_back(LayerSpec::dense(1));
    }
    nn::Model m(nn::Shape::vector(static_cast<int>(input_dim)), specs);
    m.init(seed);
    return m;
}

ClassDistribution regression_to_distribution(double r) {
    if (!std::isfinite(r)) throw NonFinite("regression output is not finite");
    const double x = std::clamp(r, 0.0, static_cast<double>(kNumClasses - 1));
    const double lo = std::floor(x);
    const double frac = x - lo;
    ClassDistribution d;
    const auto k = static_cast<std::size_t>(lo);
    d.probs[k] = 1.0 - frac;
    if (frac > 0.0) d.probs[k + 1] = frac;
    return d;
}

ClassDistribution combine_distributions(const ClassDistribution& naive, const ClassDistribution& encoder,
                                        const ClassDistribution& regression) {
    ClassDistribution p;
    for (int k = 0; k < kNumClasses; ++k) p.probs[k] = (naive.probs[k] + encoder.probs[k] + regression.probs[k]) / 3.0;
    return p;
}

std::vector<EnsemblePrediction> ensemble_predict(std::span<const GraspSample> samples, const Ensemble& ensemble) {
    if (samples.empty()) return {};
    const Matrix naive_x = naive_matrix(samples, ensemble.pose_limits);
    const Matrix enc_x = encoded_matrix(samples, ensemble.autoencoders, ensemble.pose_limits);
    const Matrix p_naive = nn::forward(ensemble.naive, naive_x);
    const Matrix p_enc = nn::forward(ensemble.encoder, enc_x);
    const Matrix r = nn::forward(ensemble.encoder_regression, enc_x);
    std::vector<EnsemblePrediction> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto& o = out[i];
        o.members = {to_distribution(p_naive.row(i)), to_distribution(p_enc.row(i)),
                     regression_to_distribution(r(i, 0))};
        o.distribution = combine_distributions(o.members.naive, o.members.encoder, o.members.regression);
        o.predicted_class = o.distribution.argmax();
    }
    return out;
}

EnsemblePrediction ensemble_predict(const GraspSample& sample, const Ensemble& ensemble) {
    return ensemble_predict(std::span(&sample, 1), ensemble).front();
}

nn::TrainSet member_train_set(std::span<const GraspSample> samples, const Ensemble& ensemble, FeatureVariant variant,
                              ClassifierHead head) {
    nn::TrainSet set;
    set.inputs = variant == FeatureVariant::naive ? naive_matrix(samples, ensemble.pose_limits)
                                                  : encoded_matrix(samples, ensemble.autoencoders, ensemble.pose_limits);
    set.labels.resize(samples.size());
    set.targets = Matrix(samples.size(), head == ClassifierHead::softmax5 ? kNumClasses : 1);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const int cls = count_class(samples[i].label);
        set.labels[i] = cls;
        if (head == ClassifierHead::softmax5) {
            set.targets(i, static_cast<std::size_t>(cls)) = 1.0;
        } else {
            set.targets(i, 0) = static_cast<double>(cls);
        }
    }
    return set;
}

Ensemble train_classifiers(std::span<const GraspSample> samples, AutoencoderSet autoencoders, const DatasetMeta& meta,
                           const StageConfig& config, ClassifierHistories* histories) {
    if (samples.empty()) throw EmptyDataset("classifier training set is empty");
    Ensemble e;
    e.autoencoders = std::move(autoencoders);
    e.pose_limits = meta.pose_limits;
    e.scales = meta.scales;
    e.object = meta.object;
    e.classifier_config = config;
    e.naive = build_classifier(kFeatureDim, ClassifierHead::softmax5, mix_seed(config.seed, 201));
    e.encoder = build_classifier(kEncodedFeatureDim, ClassifierHead::softmax5, mix_seed(config.seed, 202));
    e.encoder_regression = build_classifier(kEncodedFeatureDim, ClassifierHead::regression1, mix_seed(config.seed, 203));

    auto h_naive = nn::train(e.naive, member_train_set(samples, e, FeatureVariant::naive, ClassifierHead::softmax5),
                             train_config(config, nn::Loss::categorical_cross_entropy, 11));
    auto h_enc = nn::train(e.encoder, member_train_set(samples, e, FeatureVariant::encoded, ClassifierHead::softmax5),
                           train_config(config, nn::Loss::categorical_cross_entropy, 12));
    auto h_reg = nn::train(e.encoder_regression,
                           member_train_set(samples, e, FeatureVariant::encoded, ClassifierHead::regression1),
                           train_config(config, nn::Loss::mse, 13));
    if (histories) *histories = {std::move(h_naive), std::move(h_enc), std::move(h_reg)};
    return e;
}

double ensemble_loss(std::span<const GraspSample> samples, const Ensemble& e) {
    if (samples.empty()) throw EmptyDataset("loss needs at least one sample");
    const auto naive = member_train_set(samples, e, FeatureVariant::naive, ClassifierHead::softmax5);
    const auto enc = member_train_set(samples, e, FeatureVariant::encoded, ClassifierHead::softmax5);
    const auto reg = member_train_set(samples, e, FeatureVariant::encoded, ClassifierHead::regression1);
    const double l1 =
        nn::compute_loss(nn::forward(e.naive, naive.inputs), naive.targets, nn::Loss::categorical_cross_entropy);
    const double l2 =
        nn::compute_loss(nn::forward(e.encoder, enc.inputs), enc.targets, nn::Loss::categorical_cross_entropy);
    const double l3 = nn::compute_loss(nn::forward(e.encoder_regression, reg.inputs), reg.targets, nn::Loss::mse);
    return (l1 + l2 + l3) / 3.0;
}

Ensemble fine_tune(const Ensemble& pretrained, std::span<const GraspSample> samples, const FineTuneOptions& options,
                   ClassifierHistories* histories) {
    if (options.epochs < 0) throw ValidationError("fine-tune epochs must be non-negative");
    Ensemble e = pretrained;
    if (options.epochs == 0) return e;
    if (samples.empty()) throw EmptyDataset("fine-tune dataset is empty");

    StageConfig stage;
    stage.epochs = options.epochs;
    stage.batch_size = options.batch_size;
    stage.learning_rate = pretrained.classifier_config.learning_rate;
    stage.seed = options.seed;
    stage.oversample = options.oversample;

    if (options.retrain_autoencoders) {
        StageConfig ae_stage = stage;
        ae_stage.oversample = false;
        auto refit = [&](Autoencoder& ae, Matrix frames, std::uint64_t salt) {
            ae.model().reset_optimizer();
            nn::TrainSet set{frames, frames, {}};
            nn::train(ae.model(), set, train_config(ae_stage, nn::Loss::mse, salt));
        };
        refit(e.autoencoders.palm, region_frames(samples, Region::palm), 21);
        refit(e.autoencoders.fixed_finger, region_frames(samples, Region::fixed_finger), 22);
        refit(e.autoencoders.moving_finger,
              stack(region_frames(samples, Region::moving_finger_1), region_frames(samples, Region::moving_finger_2)),
              23);
    }

    // Weights carry over; optimizer moments start fresh as they are not part
    // of the weight files.
    e.naive.reset_optimizer();
    e.encoder.reset_optimizer();
    e.encoder_regression.reset_optimizer();
    auto h_naive = nn::train(e.naive, member_train_set(samples, e, FeatureVariant::naive, ClassifierHead::softmax5),
                             train_config(stage, nn::Loss::categorical_cross_entropy, 31));
    auto h_enc = nn::train(e.encoder, member_train_set(samples, e, FeatureVariant::encoded, ClassifierHead::softmax5),
                           train_config(stage, nn::Loss::categorical_cross_entropy, 32));
    auto h_reg = nn::train(e.encoder_regression,
                           member_train_set(samples, e, FeatureVariant::encoded, ClassifierHead::regression1),
                           train_config(stage, nn::Loss::mse, 33));
    if (histories) *histories = {std::move(h_naive), std::move(h_enc), std::move(h_reg)};
    e.classifier_config = stage;
    return e;
}

std::string config_hash(const Ensemble& ensemble) {
    const std::string canon = training_json(ensemble).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void save_autoencoders(const AutoencoderSet& aes, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_text(dir / "ae_palm.json", aes.palm.model().to_json());
    write_text(dir / "ae_fixed_finger.json", aes.fixed_finger.model().to_json());
    write_text(dir / "ae_moving_finger.json", aes.moving_finger.model().to_json());
}

AutoencoderSet load_autoencoders(const std::filesystem::path& dir) {
    return {Autoencoder(nn::Model::from_json(read_text(dir / "ae_palm.json"))),
            Autoencoder(nn::Model::from_json(read_text(dir / "ae_fixed_finger.json"))),
            Autoencoder(nn::Model::from_json(read_text(dir / "ae_moving_finger.json")))};
}

void save_bundle(const Ensemble& e, const std::filesystem::path& dir) {
    save_autoencoders(e.autoencoders, dir);
    write_text(dir / "naive.json", e.naive.to_json());
    write_text(dir / "encoder.json", e.encoder.to_json());
    write_text(dir / "encoder_regression.json", e.encoder_regression.to_json());
    nlohmann::ordered_json meta;
    meta["version"] = 1;
    meta["classes"] = {"0", "1", "2", "3", ">=4"};
    meta["class_mapping"] = "class = min(count, 4)";
    meta["training"] = training_json(e);
    meta["config_hash"] = config_hash(e);
    write_text(dir / "metadata.json", meta.dump(2));
}

Ensemble load_bundle(const std::filesystem::path& dir) {
    Ensemble e;
    e.autoencoders = load_autoencoders(dir);
    e.naive = nn::Model::from_json(read_text(dir / "naive.json"));
    e.encoder = nn::Model::from_json(read_text(dir / "encoder.json"));
    e.encoder_regression = nn::Model::from_json(read_text(dir / "encoder_regression.json"));
    const auto check = [](const nn::Model& m, std::size_t in, std::size_t out, const char* name) {
        if (m.input_shape().size() != in || m.output_shape().size() != out) {
            throw ShapeMismatch(std::string("bundle member ") + name + " has the wrong input/output width");
        }
    };
    check(e.naive, kFeatureDim, kNumClasses, "naive");
    check(e.encoder, kEncodedFeatureDim, kNumClasses, "encoder");
    check(e.encoder_regression, kEncodedFeatureDim, 1, "encoder_regression");
    try {
        const auto meta = nlohmann::json::parse(read_text(dir / "metadata.json"));
        const auto& t = meta.at("training");
        e.object = object_kind_from_string(t.at("object").get<std::string>());
        const auto& n = t.at("normalization");
        e.scales = {n.at("tactile_scale_newtons").get<double>(), n.at("strain_scale_newtons").get<double>()};
        e.pose_limits = {n.at("spread_max_rad").get<double>(), n.at("proximal_max_rad").get<double>(),
                         n.at("distal_max_rad").get<double>()};
        e.classifier_config = stage_from_json(t.at("classifier"));
        e.autoencoder_config = stage_from_json(t.at("autoencoder"));
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("bad bundle metadata: ") + ex.what());
    }
    return e;
}

}  // namespace graspcount
