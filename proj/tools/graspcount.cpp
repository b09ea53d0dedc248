// Command-line driver: data generation, training, transfer, evaluation.
#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numbers>
#include <optional>
#include <sstream>

#include "graspcount/dataset.hpp"
#include "graspcount/errors.hpp"
#include "graspcount/estimators.hpp"
#include "graspcount/geometry.hpp"
#include "graspcount/pipeline.hpp"
#include "graspcount/rng.hpp"
#include "graspcount/simulator.hpp"

using namespace graspcount;

namespace {

struct Common {
    std::uint64_t seed = 0;
    std::string object = "sphere";
    std::string domain = "sim_like";
    int epochs = -1;
    std::string out;
    std::string config;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--seed", c.seed, "Master seed");
    cmd->add_option("--object", c.object, "Object type")->check(CLI::IsMember({"sphere", "cube"}));
    cmd->add_option("--domain", c.domain, "Noise domain")->check(CLI::IsMember({"sim_like", "real_like"}));
    cmd->add_option("--epochs", c.epochs, "Training epochs");
    cmd->add_option("--out", c.out, "Output path");
    cmd->add_option("--config", c.config, "Hand geometry config file");
}

HandGeometry geometry(const Common& c) { return c.config.empty() ? HandGeometry{} : HandGeometry::load(c.config); }

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ValidationError(std::string(flag) + " is required");
}

void write_file(const std::string& path, const std::string& text) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f << text;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<GraspSample> split_samples(const Dataset& d, const std::string& split) {
    if (split == "all") return d.samples;
    if (split == "train") return d.subset(d.meta.splits.train);
    if (split == "val") return d.subset(d.meta.splits.val);
    if (split == "test") return d.subset(d.meta.splits.test);
    throw ValidationError("unknown split '" + split + "'");
}

StageConfig stage(const Common& c, int default_epochs, std::size_t batch, double lr, bool oversample) {
    StageConfig s;
    s.epochs = c.epochs < 0 ? default_epochs : c.epochs;
    s.batch_size = batch;
    s.learning_rate = lr;
    s.seed = c.seed;
    s.oversample = oversample;
    return s;
}

std::vector<int> parse_ints(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ValidationError("bad integer list '" + text + "'");
        }
    }
    if (out.empty()) throw ValidationError("empty integer list");
    return out;
}

void warn_constant(const EvalReport& r) {
    if (r.constant_output) {
        std::cerr << "warning: " << to_string(r.estimator) << " estimator predicted the same class for every sample\n";
    }
}

int run_gen_data(const Common& c, int n_poses, int trials, const std::string& piles, double noise,
                 const std::string& phase, const std::string& pose_file) {
    require(c.out, "--out");
    const HandGeometry geom = geometry(c);
    std::vector<HandPose> poses;
    if (!pose_file.empty()) {
        poses = load_poses(pose_file);
    } else {
        poses = dedupe_symmetric(pregrasp_grid(geom));
    }
    if (n_poses > 0 && static_cast<std::size_t>(n_poses) < poses.size()) {
        Rng rng(mix_seed(c.seed, 0x706f7365));
        std::vector<std::size_t> idx(poses.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        rng.shuffle(idx.begin(), idx.end());
        idx.resize(static_cast<std::size_t>(n_poses));
        std::sort(idx.begin(), idx.end());
        std::vector<HandPose> picked;
        for (auto i : idx) picked.push_back(poses[i]);
        poses = std::move(picked);
    }
    if (poses.empty()) throw EmptyDataset("no poses to simulate");
    std::vector<SceneConfig> scenes;
    const auto pile_sizes = parse_ints(piles);
    for (std::size_t k = 0; k < pile_sizes.size(); ++k) {
        SceneConfig s;
        s.object = ObjectSpec::for_kind(object_kind_from_string(c.object));
        s.pile_size = pile_sizes[k];
        s.noise = noise;
        s.seed = mix_seed(c.seed, k);
        s.domain = domain_from_string(c.domain);
        s.phase = lift_phase_from_string(phase);
        s.validate();
        scenes.push_back(s);
    }
    const Dataset d = generate_dataset(scenes, poses, trials, geom, c.seed);
    save_dataset(d, c.out);
    std::cout << "wrote " << d.samples.size() << " samples to " << c.out << "\nclass histogram:";
    for (int k = 0; k < kNumClasses; ++k) std::cout << ' ' << d.meta.class_histogram[k];
    std::cout << "\nsplit train/val/test: " << d.meta.splits.train.size() << '/' << d.meta.splits.val.size() << '/'
              << d.meta.splits.test.size() << '\n';
    return 0;
}

int run_dedupe(const Common& c, const std::string& in) {
    const HandGeometry geom = geometry(c);
    const auto raw = in.empty() ? pregrasp_grid(geom) : load_poses(in);
    const auto deduped = dedupe_symmetric(raw);
    std::cout << "raw " << raw.size() << " deduped " << deduped.size() << '\n';
    if (!c.out.empty()) save_poses(deduped, c.out);
    return 0;
}

int run_train_autoencoders(const Common& c, const std::string& data, std::size_t batch, double lr) {
    require(data, "--data");
    require(c.out, "--out");
    const Dataset d = load_dataset(data);
    const auto train = d.subset(d.meta.splits.train);
    AutoencoderHistories h;
    const auto aes = train_autoencoders(train, stage(c, 100, batch, lr, false), &h);
    save_autoencoders(aes, c.out);
    auto last = [](const std::vector<double>& v) { return v.empty() ? NAN : v.back(); };
    std::printf("final reconstruction mse: palm %.6g fixed %.6g moving %.6g\n", last(h.palm), last(h.fixed_finger),
                last(h.moving_finger));
    return 0;
}

int run_train_classifiers(const Common& c, const std::string& data, const std::string& ae_dir, int ae_epochs,
                          std::size_t batch, double lr, bool oversample) {
    require(data, "--data");
    require(c.out, "--out");
    const Dataset d = load_dataset(data);
    const auto train = d.subset(d.meta.splits.train);
    const StageConfig ae_cfg = stage(Common{c.seed, c.object, c.domain, ae_epochs, c.out, c.config}, 100, batch, lr,
                                     false);
    AutoencoderSet aes = ae_dir.empty() ? train_autoencoders(train, ae_cfg) : load_autoencoders(ae_dir);
    ClassifierHistories h;
    Ensemble e = train_classifiers(train, std::move(aes), d.meta, stage(c, 200, batch, lr, oversample), &h);
    e.autoencoder_config = ae_cfg;
    save_bundle(e, c.out);
    auto last = [](const std::vector<double>& v) { return v.empty() ? NAN : v.back(); };
    std::printf("final training loss: naive %.6g encoder %.6g regression %.6g\n", last(h.naive), last(h.encoder),
                last(h.encoder_regression));
    if (!d.meta.splits.val.empty()) {
        const auto val = d.subset(d.meta.splits.val);
        const auto r = evaluate_ensemble(e, val);
        std::printf("validation: overall rmse %.4f accuracy %.4f\n", r.rmse.overall, r.confusion.accuracy);
    }
    return 0;
}

int run_fine_tune(const Common& c, const std::string& model, const std::string& data, std::size_t batch,
                  bool retrain_ae) {
    require(model, "--model");
    require(data, "--data");
    require(c.out, "--out");
    const Ensemble pre = load_bundle(model);
    const Dataset d = load_dataset(data);
    if (d.meta.object != pre.object) throw ValidationError("dataset object differs from the model's object");
    const auto train = d.subset(d.meta.splits.train);
    FineTuneOptions opt;
    opt.epochs = c.epochs < 0 ? 100 : c.epochs;
    opt.seed = c.seed;
    opt.batch_size = batch;
    opt.retrain_autoencoders = retrain_ae;
    const Ensemble tuned = fine_tune(pre, train, opt);
    save_bundle(tuned, c.out);
    if (!d.meta.splits.test.empty()) {
        const auto test = d.subset(d.meta.splits.test);
        std::printf("test loss: pretrained %.6g fine-tuned %.6g\n", ensemble_loss(test, pre),
                    ensemble_loss(test, tuned));
    }
    return 0;
}

int run_eval(const Common& c, const std::string& estimator, const std::string& data, const std::string& model,
             const std::string& split, const std::string& format) {
    require(data, "--data");
    const Dataset d = load_dataset(data);
    const auto samples = split_samples(d, split);
    const HandGeometry geom = geometry(c);
    EvalReport r;
    switch (estimator_kind_from_string(estimator)) {
        case EstimatorKind::force: {
            std::optional<LinearCountModel> m;
            if (!model.empty()) m = LinearCountModel::from_json(read_file(model));
            r = evaluate_force(m, samples, d.meta, geom);
            break;
        }
        case EstimatorKind::volume: r = evaluate_volume(samples, d.meta, geom); break;
        case EstimatorKind::ensemble:
            if (model.empty()) throw UntrainedModel("ensemble evaluation needs --model");
            r = evaluate_ensemble(load_bundle(model), samples);
            break;
        case EstimatorKind::baseline: r = evaluate_majority(d.subset(d.meta.splits.train), samples); break;
    }
    warn_constant(r);
    if (format == "json") {
        std::cout << r.to_json() << '\n';
    } else {
        std::cout << r.to_table();
    }
    if (!c.out.empty()) write_file(c.out, r.to_json() + "\n");
    return 0;
}

int run_predict(const Common& c, const std::string& model, const std::string& data, const std::string& split) {
    require(model, "--model");
    require(data, "--data");
    const Ensemble e = load_bundle(model);
    const Dataset d = load_dataset(data);
    const auto samples = split_samples(d, split);
    const auto preds = ensemble_predict(samples, e);
    std::ostringstream os;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        nlohmann::ordered_json j;
        j["index"] = i;
        j["probs"] = preds[i].distribution.probs;
        j["predicted_class"] = preds[i].predicted_class;
        j["label"] = samples[i].label;
        os << j.dump() << '\n';
    }
    if (c.out.empty()) {
        std::cout << os.str();
    } else {
        write_file(c.out, os.str());
    }
    return 0;
}

int run_volume_bound(const Common& c, const std::vector<double>& pose_in, bool degrees) {
    const HandGeometry geom = geometry(c);
    if (pose_in.size() != 4 && pose_in.size() != kPoseDim) {
        throw ValidationError("--pose takes 4 (spread, p1, p2, p3) or 7 angles");
    }
    const double k = degrees ? std::numbers::pi / 180.0 : 1.0;
    std::array<double, kPoseDim> v{};
    for (std::size_t i = 0; i < pose_in.size(); ++i) v[i] = pose_in[i] * k;
    if (pose_in.size() == 4) {
        for (int f = 0; f < 3; ++f) v[4 + f] = v[1 + f] * geom.distal_coupling_ratio;
    }
    const HandPose pose = HandPose::from_array(v);
    validate_pose(pose, geom.limits);
    const ObjectSpec obj = ObjectSpec::for_kind(object_kind_from_string(c.object));
    const double vol = grasp_volume(pose, geom);
    const auto count = upper_bound_count(vol, obj);
    nlohmann::ordered_json j;
    j["volume_m3"] = vol;
    j["object"] = c.object;
    j["upper_bound_count"] = count;
    std::cout << j.dump(2) << '\n';
    if (!c.out.empty()) write_file(c.out, j.dump(2) + "\n");
    return 0;
}

int run_force_fit(const Common& c, const std::string& data) {
    require(data, "--data");
    require(c.out, "--out");
    const Dataset d = load_dataset(data);
    const HandGeometry geom = geometry(c);
    const auto train = d.subset(d.meta.splits.train);
    const auto fs = force_samples(train, d.meta, geom);
    const LinearCountModel m = fit_linear(fs, d.meta.phase);
    write_file(c.out, m.to_json() + "\n");
    const auto r = evaluate_force(m, train, d.meta, geom);
    warn_constant(r);
    std::printf("slope %.6g counts/N intercept %.6g train rmse %.4f\n", m.slope, m.intercept, r.rmse.overall);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Object-count estimation for multi-object grasps"};
    app.require_subcommand(1);
    Common c;

    auto* gen = app.add_subcommand("gen-data", "Simulate a labeled grasp dataset");
    add_common(gen, c);
    int n_poses = 200, trials = 3;
    std::string piles = "4,8,12", phase = "before_lift", pose_file;
    double noise = 0.02;
    gen->add_option("--poses", n_poses, "Number of pre-grasp poses drawn from the deduplicated grid (0 = all)");
    gen->add_option("--trials", trials, "Trials per pose and pile");
    gen->add_option("--piles", piles, "Comma-separated pile sizes");
    gen->add_option("--noise", noise, "Tactile noise std as a fraction of full scale");
    gen->add_option("--phase", phase, "Snapshot phase")->check(CLI::IsMember({"before_lift", "after_lift"}));
    gen->add_option("--pose-file", pose_file, "Poses to use instead of the grid");

    auto* dedupe = app.add_subcommand("dedupe-poses", "Build the pre-grasp grid and remove mirror duplicates");
    add_common(dedupe, c);
    std::string dedupe_in;
    dedupe->add_option("--in", dedupe_in, "Pose file to deduplicate instead of the grid");

    std::string data, model, ae_dir, split = "test", format = "table", estimator = "ensemble";
    std::size_t batch = 500;
    double lr = 0.001;
    bool no_oversample = false, retrain_ae = false;
    int ae_epochs = -1;

    auto* tae = app.add_subcommand("train-autoencoders", "Train the three tactile autoencoders");
    add_common(tae, c);
    tae->add_option("--data", data, "Dataset file");
    tae->add_option("--batch", batch, "Mini-batch size");
    tae->add_option("--lr", lr, "Adam learning rate");

    auto* tcl = app.add_subcommand("train-classifiers", "Train the ensemble members and write a model bundle");
    add_common(tcl, c);
    tcl->add_option("--data", data, "Dataset file");
    tcl->add_option("--autoencoders", ae_dir, "Directory of trained autoencoders (trained here when omitted)");
    tcl->add_option("--ae-epochs", ae_epochs, "Autoencoder epochs when training them here");
    tcl->add_option("--batch", batch, "Mini-batch size");
    tcl->add_option("--lr", lr, "Adam learning rate");
    tcl->add_flag("--no-oversample", no_oversample, "Disable class oversampling");

    auto* ft = app.add_subcommand("fine-tune", "Continue training a bundle on a new dataset");
    add_common(ft, c);
    ft->add_option("--model", model, "Pretrained bundle directory");
    ft->add_option("--data", data, "Target-domain dataset file");
    ft->add_option("--batch", batch, "Mini-batch size");
    ft->add_flag("--retrain-autoencoders", retrain_ae, "Also continue training the autoencoders");

    auto* ev = app.add_subcommand("eval", "Evaluate an estimator on a dataset split");
    add_common(ev, c);
    ev->add_option("--estimator", estimator, "force, volume, ensemble or baseline");
    ev->add_option("--data", data, "Dataset file");
    ev->add_option("--model", model, "Bundle directory (ensemble) or model JSON (force)");
    ev->add_option("--split", split, "train, val, test or all");
    ev->add_option("--format", format, "Output format")->check(CLI::IsMember({"table", "json"}));

    auto* pr = app.add_subcommand("predict", "Class distributions for every sample of a split");
    add_common(pr, c);
    pr->add_option("--model", model, "Bundle directory");
    pr->add_option("--data", data, "Dataset file");
    pr->add_option("--split", split, "train, val, test or all");

    auto* vb = app.add_subcommand("volume-bound", "Grasp-volume upper bound for one pose");
    add_common(vb, c);
    std::vector<double> pose;
    bool degrees = false;
    vb->add_option("--pose", pose, "spread p1 p2 p3 [d1 d2 d3]")->required()->expected(4, 7);
    vb->add_flag("--degrees", degrees, "Angles are in degrees");

    auto* ff = app.add_subcommand("force-fit", "Fit the force-to-count regressor on a dataset's training split");
    add_common(ff, c);
    ff->add_option("--data", data, "Dataset file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen) return run_gen_data(c, n_poses, trials, piles, noise, phase, pose_file);
        if (*dedupe) return run_dedupe(c, dedupe_in);
        if (*tae) return run_train_autoencoders(c, data, batch, lr);
        if (*tcl) return run_train_classifiers(c, data, ae_dir, ae_epochs, batch, lr, !no_oversample);
        if (*ft) return run_fine_tune(c, model, data, batch, retrain_ae);
        if (*ev) return run_eval(c, estimator, data, model, split, format);
        if (*pr) return run_predict(c, model, data, split);
        if (*vb) return run_volume_bound(c, pose, degrees);
        if (*ff) return run_force_fit(c, data);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
