#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "phenoseq/experiments.hpp"

using namespace phenoseq;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Profile tiny_profile() {
    Profile p = make_profile("desk");
    p.name = "tiny";
    p.model.image_size = 16;
    p.model.extractor.channels = {4, 8};
    p.model.hidden_units = 12;
    p.model.lstm_hidden = 6;
    p.train.epochs = 3;
    p.train.batch_size = 8;
    p.augmented_variants = 1;
    p.folds = 3;
    return p;
}

const Dataset& tiny_data() {
    static const Dataset data = [] {
        SyntheticConfig c;
        c.image_size = 16;
        c.plants_per_class = 1;
        c.sessions = 6;
        c.angles = 4;
        return dataset_from_sequences(synthesize_sequences(c));
    }();
    return data;
}

RunOptions tiny_options(const fs::path& out = {}) {
    RunOptions o;
    o.profile = tiny_profile();
    o.out = out;
    return o;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("phenoseq_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(PHENOSEQ_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Options, ParsingAndProfiles) {
    EXPECT_EQ(parse_session_list("4,8,32"), (std::vector<int>{4, 8, 32}));
    EXPECT_EQ(parse_session_list("12"), (std::vector<int>{12}));
    EXPECT_THROW(parse_session_list("0"), ValidationError);
    EXPECT_THROW(parse_session_list("33"), ValidationError);
    EXPECT_THROW(parse_session_list("4,x"), ValidationError);
    EXPECT_THROW(parse_session_list(""), ValidationError);
    EXPECT_EQ(parse_model_kind("cnn"), ModelKind::Cnn);
    EXPECT_EQ(model_kind_name(ModelKind::CnnLstm), "cnn-lstm");
    EXPECT_THROW(parse_model_kind("rnn"), ValidationError);
    const Profile paper = make_profile("paper");
    EXPECT_EQ(paper.model.image_size, 224u);
    EXPECT_EQ(paper.model.hidden_units, 512u);
    EXPECT_EQ(paper.train.epochs, 200u);
    EXPECT_EQ(paper.train.batch_size, 32u);
    EXPECT_DOUBLE_EQ(paper.train.adam.learning_rate, 1e-4);
    EXPECT_DOUBLE_EQ(paper.train.adam.epsilon, 1e-7);
    EXPECT_THROW(make_profile("laptop"), ValidationError);
}

TEST(Summary, SampleStandardDeviation) {
    ConfusionMatrix a, b;
    a.accumulate(0, 0);
    b.accumulate(0, 1);
    const MetricSummary s = summarize("folds", {a, b});
    EXPECT_EQ(s.count, 2u);
    EXPECT_DOUBLE_EQ(*s.mean.overall_accuracy, 0.5);
    EXPECT_NEAR(*s.std->overall_accuracy, std::sqrt(0.5), 1e-15);
    EXPECT_FALSE(summarize("folds", {a}).std);
}

TEST(Crossval, ReportSchema) {
    const fs::path out = fresh_dir("cv_schema");
    const ExperimentReport report = run_crossval(tiny_data(), tiny_options(out));
    const json j = json::parse(slurp(out / "report.json"));
    EXPECT_EQ(j.at("experiment"), "crossval");
    for (const char* key : {"seed", "profile", "model", "dataset_hash", "folds", "repeats", "network", "training"}) {
        EXPECT_TRUE(j.at("config").contains(key)) << key;
    }
    ASSERT_EQ(j.at("folds").size(), 3u);
    std::uint64_t total = 0;
    for (const json& f : j.at("folds")) {
        EXPECT_TRUE(f.contains("fold"));
        ASSERT_EQ(f.at("confusion").size(), 3u);
        for (const json& row : f.at("confusion")) {
            ASSERT_EQ(row.size(), 3u);
            for (const json& v : row) total += v.get<std::uint64_t>();
        }
        for (const char* m : {"acc", "se", "sp", "pre"}) EXPECT_TRUE(f.at("metrics").contains(m)) << m;
    }
    EXPECT_EQ(total, tiny_data().sequences.size());
    EXPECT_TRUE(j.at("pooled").contains("metrics"));
    EXPECT_TRUE(j.at("summary").contains("mean"));
    EXPECT_TRUE(j.at("summary").contains("std"));
    EXPECT_EQ(report.pooled.total(), tiny_data().sequences.size());
    for (const char* file : {"report.csv", "confusion.csv", "confusion_probability.csv", "fold_plan.json",
                             "models/r0_f0.json", "loss/r0_f2.csv"}) {
        EXPECT_TRUE(fs::exists(out / file)) << file;
    }
}

TEST(Crossval, DeterministicApartFromWallClock) {
    const ExperimentReport a = run_crossval(tiny_data(), tiny_options());
    const ExperimentReport b = run_crossval(tiny_data(), tiny_options());
    EXPECT_EQ(a.to_json(false), b.to_json(false));
    EXPECT_EQ(a.to_csv(), b.to_csv());
    RunOptions other = tiny_options();
    other.seed = 7;
    EXPECT_NE(run_crossval(tiny_data(), other).to_json(false), a.to_json(false));
}

TEST(Crossval, CnnModelCountsEveryFrame) {
    RunOptions o = tiny_options();
    o.model = ModelKind::Cnn;
    const ExperimentReport r = run_crossval(tiny_data(), o);
    EXPECT_EQ(r.pooled.total(), tiny_data().sequences.size() * 6);
}

TEST(Crossval, RejectsBadOptions) {
    RunOptions o = tiny_options();
    o.repeats = 0;
    EXPECT_THROW(run_crossval(tiny_data(), o), ValidationError);
    o = tiny_options();
    o.profile.model.image_size = 32;
    EXPECT_THROW(run_crossval(tiny_data(), o), ValidationError);
    o = tiny_options();
    o.sessions = 8;  // the tiny data only has 6 sessions
    EXPECT_NO_THROW(run_crossval(tiny_data(), o));
    EXPECT_THROW(load_dataset_checked("/nonexistent/manifest.csv"), ValidationError);
    EXPECT_THROW(load_dataset_checked(""), ValidationError);
}

TEST(Ablation, LargestSessionCountEqualsPlainCrossval) {
    const ExperimentReport ablation = run_ablation(tiny_data(), tiny_options(), {2, 6});
    const ExperimentReport cv = run_crossval(tiny_data(), tiny_options());
    ASSERT_EQ(ablation.extra.at("table").size(), 2u);
    EXPECT_EQ(ablation.pooled, cv.pooled);
    EXPECT_EQ(ablation.extra.at("table")[1].at("sessions"), 6);
    RunOptions truncated = tiny_options();
    truncated.sessions = 2;
    EXPECT_EQ(ablation.extra.at("table")[0].at("confusion"),
              json::parse(run_crossval(tiny_data(), truncated).to_json(false)).at("pooled").at("confusion"));
    EXPECT_THROW(run_ablation(tiny_data(), tiny_options(), {}), ValidationError);
}

TEST(Robustness, ZeroNoiseReproducesCleanAccuracy) {
    const fs::path models = fresh_dir("rob_models");
    run_crossval(tiny_data(), tiny_options(models));
    RobustnessOptions o;
    o.models = models;
    o.sigma = 0.0;
    o.k_max = 6;
    const ExperimentReport r = run_robustness(tiny_data(), o);
    const double clean = *compute_metrics(r.pooled).overall_accuracy;
    EXPECT_EQ(r.summary.count, 6u);
    EXPECT_DOUBLE_EQ(*r.summary.mean.overall_accuracy, clean);
    EXPECT_EQ(*r.summary.std->overall_accuracy, 0.0);
    EXPECT_EQ(r.extra.at("cycles").size(), 6u);

    o.k_max = 7;
    EXPECT_THROW(run_robustness(tiny_data(), o), ValidationError);
    o.k_max = 2;
    o.models = fresh_dir("rob_missing");
    EXPECT_THROW(run_robustness(tiny_data(), o), ValidationError);
}

TEST(Robustness, NoisyCyclesAreDeterministic) {
    const fs::path models = fresh_dir("rob_models_noisy");
    run_crossval(tiny_data(), tiny_options(models));
    RobustnessOptions o;
    o.models = models;
    o.k_max = 3;
    EXPECT_EQ(run_robustness(tiny_data(), o).to_json(false), run_robustness(tiny_data(), o).to_json(false));
}

TEST(Robustness, RejectsCnnModelsAndOtherData) {
    const fs::path models = fresh_dir("rob_models_cnn");
    RunOptions cnn = tiny_options(models);
    cnn.model = ModelKind::Cnn;
    run_crossval(tiny_data(), cnn);
    RobustnessOptions o;
    o.models = models;
    o.k_max = 2;
    EXPECT_THROW(run_robustness(tiny_data(), o), ValidationError);

    const fs::path lstm = fresh_dir("rob_models_hash");
    run_crossval(tiny_data(), tiny_options(lstm));
    o.models = lstm;
    SyntheticConfig c;
    c.image_size = 16;
    c.plants_per_class = 1;
    c.sessions = 6;
    c.angles = 4;
    c.seed = 5;
    EXPECT_THROW(run_robustness(dataset_from_sequences(synthesize_sequences(c)), o), ValidationError);
}

TEST(Train, WritesCheckpointAndLoss) {
    const fs::path out = fresh_dir("train");
    const TrainResult r = run_train(tiny_data(), tiny_options(out));
    EXPECT_EQ(r.loss_history.size(), 3u);
    const CnnLstmModel m = cnn_lstm_from_checkpoint(load_checkpoint(out / "model.json"));
    EXPECT_EQ(m.config.image_size, 16u);
    EXPECT_TRUE(fs::exists(out / "loss.csv"));
}

TEST(Cli, ExitCodes) {
    const fs::path dir = fresh_dir("cli");
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli(""), 1);
    EXPECT_EQ(run_cli("frobnicate"), 1);
    EXPECT_EQ(run_cli("crossval --data /nonexistent/manifest.csv"), 1);
    EXPECT_EQ(run_cli("crossval --data x.csv --model rnn"), 1);
    EXPECT_EQ(run_cli("crossval --data x.csv --profile laptop"), 1);
    EXPECT_EQ(run_cli("ablation --data x.csv --sessions 0"), 1);
    EXPECT_EQ(run_cli("gradcam --checkpoint /nonexistent.json --image x.ppm --class BF"), 1);
    EXPECT_EQ(run_cli("gen-data"), 1);
    EXPECT_EQ(run_cli("gen-data --out " + (dir / "data").string() + " --plants 1 --sessions 2"), 0);
    EXPECT_TRUE(fs::exists(dir / "data" / "manifest.csv"));
    // Data generated at the desk size but used with a mismatched --sessions list is a validation error.
    EXPECT_EQ(run_cli("crossval --data " + (dir / "data" / "manifest.csv").string() + " --sessions 4,8"), 1);
    // A directory where the output file should go cannot be written: runtime failure.
    fs::create_directories(dir / "blocked" / "report.json");
    EXPECT_EQ(run_cli("crossval --data " + (dir / "data" / "manifest.csv").string() + " --folds 2 --out " +
                      (dir / "blocked").string()),
              2);
}

TEST(Cli, GradCamEndToEnd) {
    const fs::path dir = fresh_dir("cli_cam");
    ASSERT_EQ(run_cli("gen-data --out " + (dir / "data").string() + " --plants 1 --sessions 2"), 0);
    ASSERT_EQ(run_cli("train --model cnn --data " + (dir / "data" / "manifest.csv").string() + " --out " +
                      (dir / "model").string()),
              0);
    const std::vector<ImageSequence> seqs = load_dataset(dir / "data" / "manifest.csv");
    const fs::path image = dir / "data" / "synthetic" / "BF" / "BF-01" / "s2_a0.ppm";
    ASSERT_TRUE(fs::exists(image));
    EXPECT_EQ(run_cli("gradcam --checkpoint " + (dir / "model" / "model.json").string() + " --image " + image.string() +
                      " --class YS --out " + (dir / "cam").string()),
              0);
    EXPECT_TRUE(fs::exists(dir / "cam" / "s2_a0.cam.csv"));
    EXPECT_TRUE(fs::exists(dir / "cam" / "s2_a0.cam.ppm"));
    EXPECT_EQ(run_cli("gradcam --checkpoint " + (dir / "model" / "model.json").string() + " --image " + image.string() +
                      " --class 3"),
              1);
}
