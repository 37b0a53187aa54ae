#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "phenoseq/data.hpp"
#include "phenoseq/experiments.hpp"
#include "phenoseq/explain.hpp"

using namespace phenoseq;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Flags {
    std::uint64_t seed = 42;
    std::string profile = "desk";
    std::string data;
    std::string out;
    std::string model = "cnn-lstm";
    std::string sessions;
    std::size_t repeats = 1;
    std::size_t folds = 5;
    bool no_grouping = false;
    int plants = 5;
    std::string models;
    std::size_t k_min = 1;
    std::size_t k_max = 10;
    double sigma = noise_sigma_for(1.0);
    std::string checkpoint;
    std::string image;
    std::string target_class;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--seed", f.seed, "Experiment seed")->capture_default_str();
    cmd->add_option("--profile", f.profile, "desk or paper")->capture_default_str();
    cmd->add_option("--out", f.out, "Output directory");
}

void add_training(CLI::App* cmd, Flags& f) {
    add_common(cmd, f);
    cmd->add_option("--data", f.data, "Dataset manifest CSV");
    cmd->add_option("--model", f.model, "cnn or cnn-lstm")->capture_default_str();
    cmd->add_option("--sessions", f.sessions, "Keep sessions 1..n");
}

RunOptions run_options(const Flags& f) {
    RunOptions o;
    o.seed = f.seed;
    o.profile = make_profile(f.profile);
    o.profile.folds = f.folds;
    o.model = parse_model_kind(f.model);
    o.repeats = f.repeats;
    o.group_twins = !f.no_grouping;
    o.out = f.out;
    if (!f.sessions.empty()) {
        const std::vector<int> list = parse_session_list(f.sessions);
        if (list.size() != 1) throw ValidationError("--sessions takes a single count here");
        o.sessions = list.front();
    }
    return o;
}

void print_result(const ExperimentReport& report, const std::string& out) {
    const MetricSet m = compute_metrics(report.pooled);
    std::cout << report.experiment << ": pooled acc " << format_metric(m.overall_accuracy) << ", se "
              << format_metric(m.macro_sensitivity) << ", sp " << format_metric(m.macro_specificity) << ", pre "
              << format_metric(m.macro_precision) << "\n";
    if (report.summary.count > 0) {
        std::cout << "  mean acc over " << report.summary.count << " " << report.summary.units << ": "
                  << format_metric(report.summary.mean.overall_accuracy);
        if (report.summary.std) std::cout << " (std " << format_metric(report.summary.std->overall_accuracy) << ")";
        std::cout << "\n";
    }
    if (!out.empty()) std::cout << "  report: " << (std::filesystem::path(out) / "report.json").string() << "\n";
}

std::size_t parse_target_class(const std::string& text) {
    if (text == "BF" || text == "C" || text == "YS") return class_index(parse_class(text));
    std::size_t used = 0;
    long value = -1;
    try {
        value = std::stol(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size() || value < 0) {
        throw ValidationError("invalid class '" + text + "' (expected BF, C, YS or 0..2)");
    }
    return static_cast<std::size_t>(value);
}

int run(int argc, char** argv) {
    CLI::App app{"Water-stress classification from plant image sequences"};
    app.require_subcommand(1);
    Flags f;

    CLI::App* gen = app.add_subcommand("gen-data", "Generate the synthetic progressive-stress dataset");
    add_common(gen, f);
    gen->add_option("--plants", f.plants, "Plants per class")->capture_default_str();
    gen->add_option("--sessions", f.sessions, "Sessions per plant (default 32)");

    CLI::App* train = app.add_subcommand("train", "Train one model on the whole dataset");
    add_training(train, f);

    CLI::App* crossval = app.add_subcommand("crossval", "Stratified k-fold cross-validation");
    add_training(crossval, f);
    crossval->add_option("--repeats", f.repeats, "Cross-validation repeats")->capture_default_str();
    crossval->add_option("--folds", f.folds, "Number of folds k")->capture_default_str();
    crossval->add_flag("--no-twin-grouping", f.no_grouping, "Let cross-class twins fall in different folds");

    CLI::App* robust = app.add_subcommand("robustness", "Noise robustness of saved cnn-lstm fold models");
    add_common(robust, f);
    robust->add_option("--data", f.data, "Dataset manifest CSV");
    robust->add_option("--models", f.models, "Output directory of a cnn-lstm crossval run")->required();
    robust->add_option("--k-min", f.k_min, "Fewest perturbed frames")->capture_default_str();
    robust->add_option("--k-max", f.k_max, "Most perturbed frames")->capture_default_str();
    robust->add_option("--sigma", f.sigma, "Noise standard deviation on the [0, 1] scale")->capture_default_str();

    CLI::App* ablation = app.add_subcommand("ablation", "Cross-validation per session count");
    add_training(ablation, f);
    ablation->add_option("--repeats", f.repeats, "Cross-validation repeats")->capture_default_str();
    ablation->add_option("--folds", f.folds, "Number of folds k")->capture_default_str();
    ablation->add_flag("--no-twin-grouping", f.no_grouping, "Let cross-class twins fall in different folds");

    CLI::App* cam = app.add_subcommand("gradcam", "Grad-CAM map for one image under a cnn checkpoint");
    cam->add_option("--checkpoint", f.checkpoint, "cnn checkpoint JSON")->required();
    cam->add_option("--image", f.image, "P6 PPM image")->required();
    cam->add_option("--class", f.target_class, "BF, C, YS or 0..2")->required();
    cam->add_option("--out", f.out, "Output directory (default: next to the image)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    if (gen->parsed()) {
        if (f.out.empty()) throw ValidationError("gen-data needs --out <dir>");
        SyntheticConfig sc;
        sc.seed = f.seed;
        sc.plants_per_class = f.plants;
        sc.image_size = make_profile(f.profile).model.image_size;
        if (!f.sessions.empty()) {
            const std::vector<int> list = parse_session_list(f.sessions);
            if (list.size() != 1) throw ValidationError("--sessions takes a single count here");
            sc.sessions = list.front();
        }
        const GeneratedDataset g = generate_synthetic(f.out, sc);
        std::cout << "manifest: " << g.manifest_path.string() << "\n"
                  << "images: " << g.images << "\nsequences: " << g.sequences << "\n"
                  << "dataset hash: " << hex64(hash_dataset_files(g.manifest_path)) << "\n";
        return 0;
    }
    if (train->parsed()) {
        if (f.out.empty()) throw ValidationError("train needs --out <dir>");
        const Dataset data = load_dataset_checked(f.data);
        const TrainResult r = run_train(data, run_options(f));
        std::cout << "trained " << f.model << " for " << r.loss_history.size() << " epochs, final mean loss "
                  << r.loss_history.back() << "\n  checkpoint: "
                  << (std::filesystem::path(f.out) / "model.json").string() << "\n";
        return 0;
    }
    if (crossval->parsed()) {
        const Dataset data = load_dataset_checked(f.data);
        print_result(run_crossval(data, run_options(f)), f.out);
        return 0;
    }
    if (robust->parsed()) {
        const Dataset data = load_dataset_checked(f.data);
        RobustnessOptions o;
        o.seed = f.seed;
        o.k_min = f.k_min;
        o.k_max = f.k_max;
        o.sigma = f.sigma;
        o.models = f.models;
        o.out = f.out;
        print_result(run_robustness(data, o), f.out);
        return 0;
    }
    if (ablation->parsed()) {
        const Dataset data = load_dataset_checked(f.data);
        Flags g = f;
        g.sessions.clear();
        const std::vector<int> list =
            f.sessions.empty() ? std::vector<int>{4, 8, 12, 16, 20, 24, 28, 32} : parse_session_list(f.sessions);
        const ExperimentReport report = run_ablation(data, run_options(g), list);
        print_result(report, f.out);
        for (const auto& row : report.extra.at("table")) {
            std::cout << "  S" << row.at("sessions").get<int>() << " acc "
                      << (row.at("metrics").at("acc").is_null() ? std::string("undefined")
                                                                : std::to_string(row.at("metrics").at("acc").get<double>()))
                      << "\n";
        }
        return 0;
    }
    if (cam->parsed()) {
        if (!std::filesystem::is_regular_file(f.checkpoint)) {
            throw ValidationError("checkpoint not found: " + f.checkpoint);
        }
        if (!std::filesystem::is_regular_file(f.image)) throw ValidationError("image not found: " + f.image);
        const std::size_t target = parse_target_class(f.target_class);
        const CnnClassifier model = classifier_from_checkpoint(load_checkpoint(f.checkpoint));
        const GradCamResult r = gradcam(model, read_ppm(f.image), target);
        const GradCamFiles files = write_gradcam(f.image, r, f.out);
        std::cout << "map " << r.map.dim(0) << "x" << r.map.dim(1) << "\n  " << files.csv.string() << "\n  "
                  << files.ppm.string() << "\n";
        return 0;
    }
    return kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return kExitRuntime;
    }
}
