#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>

#include <CLI11.hpp>

#include "cbc/dataset.hpp"
#include "cbc/errors.hpp"
#include "cbc/gallery.hpp"
#include "cbc/gradcheck.hpp"
#include "cbc/model.hpp"
#include "cbc/train.hpp"

namespace {

struct VariantCode {
    cbc::SpatialKind spatial;
    cbc::FeatureKind feature;
};

VariantCode parse_variant_code(const std::string& code) {
    using S = cbc::SpatialKind;
    using F = cbc::FeatureKind;
    if (code == "spfd") return {S::product, F::direct};
    if (code == "spfw") return {S::product, F::weight};
    if (code == "sdfd") return {S::direction, F::direct};
    if (code == "sdfw") return {S::direction, F::weight};
    if (code == "ufd") return {S::unit, F::direct};
    if (code == "ufw") return {S::unit, F::weight};
    throw cbc::ConfigError("unknown variant '" + code +
                           "' (expected spfd, spfw, sdfd, sdfw, ufd or ufw)");
}

struct TrainArgs {
    std::string config_path, data_path, val_data_path, out_path, save_model_path;
    double val_fraction = 0.2;
    std::size_t epochs = 50;
    std::size_t batch = 32;
    std::uint64_t seed = 0;
    std::vector<double> thresholds{0.75, 0.9};
    std::optional<double> alpha;
    std::string spatial, feature;
    double hflip_prob = 0.0;
    std::vector<double> rotation;
    std::vector<std::size_t> crop;
    bool timing = false;
};

struct CountArgs {
    std::string config_path, baseline_path;
    std::optional<double> alpha;
    std::string spatial, feature;
};

struct SynthArgs {
    std::string variant = "spfd";
    std::size_t kernel = 5;
    std::size_t channels = 3;
    std::string params_path, out_prefix;
    std::uint64_t seed = 0;
};

struct GradcheckArgs {
    std::string variant = "all";
    std::size_t seeds = 100;
    std::uint64_t seed = 0;
};

struct GenDataArgs {
    std::string task = "gratings";
    std::size_t classes = 4;
    std::size_t n_per_class = 200;
    std::size_t size = 16;
    double noise = 0.05;
    std::uint64_t seed = 0;
    std::string out_path;
};

void apply_overrides(cbc::ModelConfig& config, const std::optional<double>& alpha,
                     const std::string& spatial, const std::string& feature) {
    if (!alpha && spatial.empty() && feature.empty()) return;
    cbc::apply_variant(
        config, alpha.value_or(config.defaults.alpha),
        spatial.empty() ? config.defaults.spatial : cbc::parse_spatial_kind(spatial),
        feature.empty() ? config.defaults.feature : cbc::parse_feature_kind(feature));
}

std::string resolve_report_path(const std::string& out, const cbc::TrainReport& report) {
    if (out.empty()) return cbc::report_filename(report);
    if (out.back() == '/' || std::filesystem::is_directory(out))
        return (std::filesystem::path(out) / cbc::report_filename(report)).string();
    return out;
}

int run_train(const TrainArgs& args) {
    cbc::ModelConfig config = cbc::load_model_config(args.config_path);
    apply_overrides(config, args.alpha, args.spatial, args.feature);

    cbc::Dataset train_set = cbc::load_dataset_file(args.data_path);
    cbc::Dataset val_set;
    if (!args.val_data_path.empty()) {
        val_set = cbc::load_dataset_file(args.val_data_path);
    } else {
        auto split = cbc::split_dataset(train_set, args.val_fraction);
        train_set = std::move(split.first);
        val_set = std::move(split.second);
    }

    cbc::TrainOptions options;
    options.epochs = args.epochs;
    options.batch_size = args.batch;
    options.seed = args.seed;
    options.thresholds = args.thresholds;
    options.timing = args.timing;
    options.augment.hflip_prob = args.hflip_prob;
    if (!args.rotation.empty()) {
        if (args.rotation.size() != 2)
            throw cbc::ConfigError("--rotation expects two values: min,max degrees");
        options.augment.rotation_min_deg = args.rotation[0];
        options.augment.rotation_max_deg = args.rotation[1];
    }
    if (!args.crop.empty()) {
        if (args.crop.size() != 2)
            throw cbc::ConfigError("--crop expects two values: size,padding");
        options.augment.crop = std::make_pair(args.crop[0], args.crop[1]);
    }

    cbc::Model model = cbc::build_model(config, args.seed);
    const cbc::TrainReport report = cbc::train(model, train_set, val_set, options);

    for (std::size_t e = 0; e < report.history.size(); ++e) {
        const cbc::EpochStats& s = report.history[e];
        std::cout << "epoch " << (e + 1) << "/" << report.epochs << "  train_loss "
                  << s.train_loss << "  val_loss " << s.val_loss << "  val_acc "
                  << s.val_accuracy << "\n";
    }
    if (report.best_acc) std::cout << "best_acc " << *report.best_acc << "\n";

    const std::string report_path = resolve_report_path(args.out_path, report);
    {
        std::ofstream out(report_path, std::ios::binary);
        if (!out) throw cbc::IoError("cannot open '" + report_path + "' for writing");
        out << cbc::report_json(report).dump(2) << '\n';
        if (!out) throw cbc::IoError("failed writing report '" + report_path + "'");
    }
    std::cout << "report: " << report_path << "\n";

    if (!args.save_model_path.empty()) {
        model.save(args.save_model_path);
        std::cout << "model: " << args.save_model_path << "\n";
    }
    return 0;
}

int run_count_params(const CountArgs& args) {
    cbc::ModelConfig config = cbc::load_model_config(args.config_path);
    apply_overrides(config, args.alpha, args.spatial, args.feature);

    const cbc::ParamCountReport report = cbc::count_params(config);
    std::size_t width = 0;
    for (const auto& row : report.rows) width = std::max(width, row.label.size());
    for (const auto& row : report.rows)
        std::cout << row.label << std::string(width - row.label.size() + 2, ' ') << row.params
                  << (row.counts_as_conv ? "" : "  (head, not counted)") << "\n";
    std::cout << "conv params: " << report.conv_params << "\n";
    std::cout << "head params: " << report.dense_params << "\n";
    std::cout << "total params: " << report.total << "\n";

    cbc::ModelConfig baseline =
        args.baseline_path.empty() ? config : cbc::load_model_config(args.baseline_path);
    std::cout << "baseline (" << baseline.name
              << ") conv params: " << cbc::count_conv_params(baseline) << "\n";
    std::cout << "compression factor: "
              << cbc::format_hundredths(cbc::compression_hundredths(baseline, config)) << "\n";
    return 0;
}

int run_synth(const SynthArgs& args) {
    if (args.kernel == 0 || args.channels == 0)
        throw cbc::ConfigError("synth: kernel and channels must be positive");
    VariantCode variant = parse_variant_code(args.variant);
    if (args.kernel == 1) variant.spatial = cbc::SpatialKind::unit;

    cbc::CbcFilterParams params;
    if (!args.params_path.empty()) {
        std::ifstream in(args.params_path, std::ios::binary);
        if (!in) throw cbc::IoError("cannot open params '" + args.params_path + "'");
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw cbc::ConfigError("params file is not valid JSON: " + std::string(e.what()));
        }
        params = cbc::filter_params_from_json(j, variant.spatial, variant.feature, args.channels);
    } else {
        std::mt19937_64 rng(args.seed);
        std::uniform_real_distribution<double> freq(0.0, 3.14159265358979323846);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * 3.14159265358979323846);
        std::uniform_real_distribution<double> amp(-1.0, 1.0);
        nlohmann::json j = nlohmann::json::object();
        if (variant.spatial == cbc::SpatialKind::product)
            j["spatial"] = {{"freq_x", freq(rng)},
                            {"phase_x", phase(rng)},
                            {"freq_y", freq(rng)},
                            {"phase_y", phase(rng)}};
        else if (variant.spatial == cbc::SpatialKind::direction)
            j["spatial"] = {{"freq_x", freq(rng)}, {"freq_y", freq(rng)}, {"phase", phase(rng)}};
        if (variant.feature == cbc::FeatureKind::direct) {
            j["feature"] = {{"amplitude", amp(rng)}, {"freq_c", freq(rng)}, {"phase_c", phase(rng)}};
        } else {
            std::vector<double> amps(args.channels);
            for (double& a : amps) a = amp(rng);
            j["feature"] = {{"amplitudes", amps}};
        }
        params = cbc::filter_params_from_json(j, variant.spatial, variant.feature, args.channels);
    }

    const cbc::Tensor4 weights =
        cbc::synthesize_weights(params, args.kernel, args.kernel, args.channels);
    const cbc::GalleryPaths paths = cbc::write_filter_gallery(weights, args.out_prefix);
    std::cout << paths.csv << "\n";
    for (const std::string& p : paths.pgms) std::cout << p << "\n";
    return 0;
}

int run_gradcheck(const GradcheckArgs& args) {
    if (args.seeds == 0) throw cbc::ConfigError("gradcheck: --seeds must be positive");
    bool pass = true;
    if (args.variant == "all") {
        pass = cbc::run_gradcheck_suites(args.seeds, args.seed, std::cout);
    } else {
        const VariantCode variant = parse_variant_code(args.variant);
        cbc::GradCheckStats basis, layer;
        for (std::size_t kernel : {1, 3, 5}) {
            basis.merge(cbc::check_basis_gradients(variant.spatial, variant.feature, 3, kernel,
                                                   args.seeds, cbc::mix64(args.seed, kernel),
                                                   1e-6));
            for (double alpha : {0.0, 0.5, 1.0})
                layer.merge(cbc::check_layer_gradients(variant.spatial, variant.feature, alpha,
                                                       kernel, args.seeds,
                                                       cbc::mix64(args.seed, kernel, 17), 1e-5));
        }
        std::cout << "basis " << args.variant << ": " << basis.checked << " checks, "
                  << basis.failed << " failures, max rel err " << basis.max_rel_err << "\n";
        std::cout << "layer " << args.variant << ": " << layer.checked << " checks, "
                  << layer.failed << " failures, max rel err " << layer.max_rel_err << "\n";
        pass = basis.pass() && layer.pass();
    }
    std::cout << (pass ? "gradcheck: all suites passed" : "gradcheck: FAILURES") << "\n";
    return pass ? 0 : 1;
}

int run_gen_data(const GenDataArgs& args) {
    if (args.task != "gratings")
        throw cbc::ConfigError("unknown task '" + args.task + "' (only 'gratings')");
    const cbc::Dataset ds = cbc::generate_gratings(
        args.n_per_class, cbc::default_grating_classes(args.classes), args.size, args.noise,
        args.seed);
    cbc::save_dataset(ds, args.out_path);
    std::cout << "wrote " << ds.samples.size() << " samples (" << args.classes << " classes, "
              << args.size << "x" << args.size << ") to " << args.out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cosine-basis convolution toolkit: train, count, synthesize, verify"};
    app.require_subcommand(1);

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "Train a model and emit a JSON report");
    train->add_option("--config", train_args.config_path, "Model config JSON")->required();
    train->add_option("--data", train_args.data_path, "Training dataset (.cbc1)")->required();
    train->add_option("--val-data", train_args.val_data_path,
                      "Validation dataset; omitted: deterministic split from --data");
    train->add_option("--val-fraction", train_args.val_fraction,
                      "Validation fraction for the deterministic split");
    train->add_option("--epochs", train_args.epochs, "Epochs");
    train->add_option("--batch", train_args.batch, "Batch size");
    train->add_option("--seed", train_args.seed, "Run seed (init, shuffle, augmentation)");
    train->add_option("--thresholds", train_args.thresholds, "Accuracy thresholds")
        ->delimiter(',');
    train->add_option("--alpha", train_args.alpha, "Override: CBC filter fraction for all convs");
    train->add_option("--spatial", train_args.spatial,
                      "Override: spatial basis (product|direction|unit)");
    train->add_option("--feature", train_args.feature, "Override: feature basis (direct|weight)");
    train->add_option("--hflip-prob", train_args.hflip_prob, "Augment: horizontal flip prob");
    train->add_option("--rotation", train_args.rotation, "Augment: min,max degrees")
        ->delimiter(',');
    train->add_option("--crop", train_args.crop, "Augment: size,padding")->delimiter(',');
    train->add_flag("--timing", train_args.timing, "Include wall time in the report");
    train->add_option("--out", train_args.out_path,
                      "Report path (or directory; default: ./report_<hash>_s<seed>.json)");
    train->add_option("--save-model", train_args.save_model_path, "Write final model JSON");

    CountArgs count_args;
    CLI::App* count = app.add_subcommand("count-params", "Static parameter accounting");
    count->add_option("--config", count_args.config_path, "Model config JSON")->required();
    count->add_option("--baseline", count_args.baseline_path,
                      "Baseline config (default: the config itself)");
    count->add_option("--alpha", count_args.alpha, "Override: CBC filter fraction");
    count->add_option("--spatial", count_args.spatial, "Override: spatial basis");
    count->add_option("--feature", count_args.feature, "Override: feature basis");

    SynthArgs synth_args;
    CLI::App* synth = app.add_subcommand("synth", "Synthesize one filter; dump CSV + PGM");
    synth->add_option("--variant", synth_args.variant, "spfd|spfw|sdfd|sdfw|ufd|ufw")->required();
    synth->add_option("--kernel", synth_args.kernel, "Kernel extent")->required();
    synth->add_option("--channels", synth_args.channels, "Input channels")->required();
    synth->add_option("--params", synth_args.params_path,
                      "Filter parameter JSON (omitted: random draw from --seed)");
    synth->add_option("--seed", synth_args.seed, "Seed for the random parameter draw");
    synth->add_option("--out-prefix", synth_args.out_prefix, "Output path prefix")->required();

    GradcheckArgs grad_args;
    CLI::App* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suites");
    grad->add_option("--variant", grad_args.variant, "Variant code or 'all'");
    grad->add_option("--seeds", grad_args.seeds, "Random instances per combination");
    grad->add_option("--seed", grad_args.seed, "Base seed");

    GenDataArgs gen_args;
    CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    gen->add_option("--task", gen_args.task, "Task (gratings)");
    gen->add_option("--classes", gen_args.classes, "Number of classes");
    gen->add_option("--n", gen_args.n_per_class, "Samples per class");
    gen->add_option("--size", gen_args.size, "Image extent");
    gen->add_option("--noise", gen_args.noise, "Gaussian pixel noise sigma");
    gen->add_option("--seed", gen_args.seed, "Seed");
    gen->add_option("--out", gen_args.out_path, "Output .cbc1 path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return run_train(train_args);
        if (count->parsed()) return run_count_params(count_args);
        if (synth->parsed()) return run_synth(synth_args);
        if (grad->parsed()) return run_gradcheck(grad_args);
        if (gen->parsed()) return run_gen_data(gen_args);
    } catch (const cbc::Error& e) {
        std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
