#include "phenoseq/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "phenoseq/simd/kernels.hpp"

namespace phenoseq {

using nlohmann::ordered_json;

std::string_view model_kind_name(ModelKind kind) { return kind == ModelKind::Cnn ? "cnn" : "cnn-lstm"; }

ModelKind parse_model_kind(std::string_view name) {
    if (name == "cnn") return ModelKind::Cnn;
    if (name == "cnn-lstm") return ModelKind::CnnLstm;
    throw ValidationError("unknown model '" + std::string(name) + "' (expected cnn or cnn-lstm)");
}

Profile make_profile(std::string_view name) {
    Profile p;
    p.name = std::string(name);
    if (name == "desk") {
        p.model.image_size = 64;
        p.model.hidden_units = 128;
        p.train.epochs = 30;
        // 30 epochs of 3 minibatches are too few Adam steps at 1e-4 to converge.
        p.train.adam.learning_rate = 1e-3;
    } else if (name == "paper") {
        p.model.image_size = 224;
        p.model.hidden_units = 512;
        p.train.epochs = 200;
        p.train.adam.learning_rate = 1e-4;
    } else {
        throw ValidationError("unknown profile '" + std::string(name) + "' (expected desk or paper)");
    }
    return p;
}

std::vector<int> parse_session_list(std::string_view text) {
    std::vector<int> out;
    std::string item;
    std::istringstream in{std::string(text)};
    while (std::getline(in, item, ',')) {
        std::size_t used = 0;
        int n = 0;
        try {
            n = std::stoi(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw ValidationError("invalid session count '" + item + "'");
        if (n < 1 || n > kMaxSessions) {
            throw ValidationError("session count " + std::to_string(n) + " outside 1.." + std::to_string(kMaxSessions));
        }
        out.push_back(n);
    }
    if (out.empty()) throw ValidationError("empty session list");
    return out;
}

Dataset dataset_from_sequences(std::vector<ImageSequence> sequences) {
    if (sequences.empty()) throw ValidationError("dataset has no sequences");
    Dataset d;
    d.hash = hex64(hash_sequences(sequences));
    d.sequences = std::move(sequences);
    return d;
}

Dataset load_dataset_checked(const std::filesystem::path& manifest) {
    if (manifest.empty()) throw ValidationError("no dataset given (use --data <manifest.csv>)");
    if (!std::filesystem::is_regular_file(manifest)) {
        throw ValidationError("dataset manifest not found: " + manifest.string());
    }
    return dataset_from_sequences(load_dataset(manifest));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace {

ordered_json optional_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json confusion_json(const ConfusionMatrix& cm) {
    ordered_json rows = ordered_json::array();
    for (std::size_t a = 0; a < kNumClasses; ++a) {
        ordered_json row = ordered_json::array();
        for (std::size_t p = 0; p < kNumClasses; ++p) row.push_back(cm.count(a, p));
        rows.push_back(std::move(row));
    }
    return rows;
}

ordered_json result_json(const ConfusionMatrix& cm) {
    return {{"confusion", confusion_json(cm)}, {"metrics", metrics_json(compute_metrics(cm))}};
}

using MetricField = std::optional<double> MetricSet::*;
constexpr std::array<std::pair<const char*, MetricField>, 5> kMetricFields{{
    {"acc", &MetricSet::overall_accuracy},
    {"avg_acc", &MetricSet::average_accuracy},
    {"se", &MetricSet::macro_sensitivity},
    {"sp", &MetricSet::macro_specificity},
    {"pre", &MetricSet::macro_precision},
}};

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string metric_csv_cells(const MetricSet& m) {
    std::string out;
    for (const auto& [name, field] : kMetricFields) out += "," + format_metric(m.*field);
    return out;
}

std::string metric_csv_header() {
    std::string out;
    for (const auto& [name, field] : kMetricFields) out += std::string(",") + name;
    return out;
}

}  // namespace

ordered_json metrics_json(const MetricSet& m) {
    ordered_json j = ordered_json::object();
    for (const auto& [name, field] : kMetricFields) j[name] = optional_json(m.*field);
    return j;
}

MetricSummary summarize(const std::string& units, const std::vector<ConfusionMatrix>& per_unit) {
    MetricSummary s;
    s.units = units;
    s.count = per_unit.size();
    if (per_unit.empty()) return s;
    std::vector<MetricSet> sets;
    for (const ConfusionMatrix& cm : per_unit) sets.push_back(compute_metrics(cm));
    MetricSet stdev;
    for (const auto& [name, field] : kMetricFields) {
        double total = 0.0;
        bool defined = true;
        for (const MetricSet& m : sets) {
            if (!(m.*field)) {
                defined = false;
                break;
            }
            total += *(m.*field);
        }
        if (!defined) continue;
        const double n = static_cast<double>(sets.size());
        const double mean = total / n;
        s.mean.*field = mean;
        if (sets.size() >= 2) {
            double sq = 0.0;
            for (const MetricSet& m : sets) sq += (*(m.*field) - mean) * (*(m.*field) - mean);
            stdev.*field = std::sqrt(sq / (n - 1.0));
        }
    }
    if (sets.size() >= 2) s.std = stdev;
    return s;
}

std::string ExperimentReport::to_json(bool include_wall_clock) const {
    ordered_json j;
    j["experiment"] = experiment;
    j["config"] = config;
    ordered_json fold_list = ordered_json::array();
    for (const FoldRecord& f : folds) {
        ordered_json entry;
        entry["fold"] = f.fold;
        entry["repeat"] = f.repeat;
        if (f.sessions) entry["sessions"] = *f.sessions;
        entry["confusion"] = confusion_json(f.confusion);
        entry["metrics"] = metrics_json(compute_metrics(f.confusion));
        fold_list.push_back(std::move(entry));
    }
    j["folds"] = std::move(fold_list);
    j["pooled"] = result_json(pooled);
    j["summary"] = {{"units", summary.units},
                    {"count", summary.count},
                    {"mean", metrics_json(summary.mean)},
                    {"std", summary.std ? metrics_json(*summary.std) : ordered_json(nullptr)}};
    for (const auto& [key, value] : extra.items()) j[key] = value;
    if (include_wall_clock) j["wall_clock_seconds"] = wall_clock_seconds;
    return j.dump(2) + "\n";
}

std::string ExperimentReport::to_csv() const {
    std::string out = "repeat,fold,sessions" + metric_csv_header() + "\n";
    for (const FoldRecord& f : folds) {
        out += std::to_string(f.repeat) + "," + std::to_string(f.fold) + "," +
               (f.sessions ? std::to_string(*f.sessions) : std::string()) + metric_csv_cells(compute_metrics(f.confusion)) +
               "\n";
    }
    out += "pooled,pooled," + metric_csv_cells(compute_metrics(pooled)) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Seeds and evaluation
// ---------------------------------------------------------------------------

RngStream extractor_rng(std::uint64_t seed) { return RngStream(seed, hash_key("extractor")); }

RngStream head_rng(std::uint64_t seed, std::size_t repeat, std::size_t fold) {
    return RngStream(seed, hash_key("head")).substream(repeat).substream(fold);
}

std::uint64_t train_seed(std::uint64_t seed, std::size_t repeat, std::size_t fold) {
    return RngStream(seed, hash_key("train")).substream(repeat).substream(fold).next_u64();
}

ConfusionMatrix evaluate_cnn_lstm(const CnnLstmModel& model, const FeatureBank& bank,
                                  const std::vector<std::size_t>& test) {
    ConfusionMatrix cm;
    for (std::size_t s : test) {
        cm.accumulate(class_index(bank.labels[s]), argmax(cnn_lstm_logits_from_features(model, bank.clean(s))));
    }
    return cm;
}

ConfusionMatrix evaluate_cnn(const CnnClassifier& model, const FeatureBank& bank, const std::vector<std::size_t>& test) {
    ConfusionMatrix cm;
    for (std::size_t s : test) {
        for (const Tensor& f : bank.clean(s)) {
            cm.accumulate(class_index(bank.labels[s]), argmax(classifier_logits_from_features(model, f)));
        }
    }
    return cm;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void require_image_size(const Dataset& data, const Profile& profile) {
    const Shape expected{3, profile.model.image_size, profile.model.image_size};
    const Shape& got = data.sequences.front().frames.front().shape();
    if (got != expected) {
        throw ValidationError("dataset frames are " + shape_to_string(got) + " but profile '" + profile.name +
                              "' expects " + shape_to_string(expected) + "; regenerate the data with that profile");
    }
}

std::vector<ImageSequence> sessions_view(const std::vector<ImageSequence>& sequences, std::optional<int> sessions) {
    if (!sessions) return sequences;
    std::vector<ImageSequence> out;
    out.reserve(sequences.size());
    for (const ImageSequence& seq : sequences) {
        out.push_back(truncate_sessions(seq, *sessions));
        if (out.back().length() == 0) {
            throw ValidationError("sessions=" + std::to_string(*sessions) + " leaves " + seq.plant_id + " angle " +
                                  std::to_string(seq.angle_index) + " without frames");
        }
    }
    return out;
}

ordered_json config_json(const Dataset& data, const RunOptions& o) {
    const Profile& p = o.profile;
    const ModelConfig& m = p.model;
    ordered_json j;
    j["seed"] = o.seed;
    j["profile"] = p.name;
    j["model"] = model_kind_name(o.model);
    j["dataset_hash"] = data.hash;
    j["sequences"] = data.sequences.size();
    j["sessions"] = o.sessions ? ordered_json(*o.sessions) : ordered_json(nullptr);
    j["folds"] = p.folds;
    j["repeats"] = o.repeats;
    j["fold_grouping"] = o.group_twins ? "twins" : "none";
    j["network"] = {{"image_size", m.image_size},
                    {"extractor_channels", m.extractor.channels},
                    {"kernel_size", m.extractor.kernel_size},
                    {"pool", m.extractor.pool},
                    {"feature_dim", m.extractor.feature_dim()},
                    {"hidden_units", m.hidden_units},
                    {"lstm_hidden", m.lstm_hidden},
                    {"classes", m.classes}};
    j["training"] = {{"mode", p.train.freeze_extractor ? "frozen-extractor" : "joint"},
                     {"extractor_weights", "seeded random initialization standing in for pretrained weights"},
                     {"batch_size", p.train.batch_size},
                     {"epochs", p.train.epochs},
                     {"learning_rate", p.train.adam.learning_rate},
                     {"beta1", p.train.adam.beta1},
                     {"beta2", p.train.adam.beta2},
                     {"epsilon", p.train.adam.epsilon}};
    j["augmentation"] = {{"flip_probability", p.augment.flip_probability},
                         {"rotation_degrees", p.augment.rotation_degrees},
                         {"shear_degrees", p.augment.shear_degrees},
                         {"translation_pixels", p.augment.translation_pixels},
                         {"noise_probability", p.augment.noise_probability},
                         {"noise_sigma", p.augment.noise_sigma()},
                         {"variants", p.augmented_variants}};
    j["kernels"] = simd::active_kernels().name;
    return j;
}

struct CrossvalRun {
    std::vector<FoldRecord> folds;
    std::vector<ConfusionMatrix> per_repeat;
    ConfusionMatrix pooled;
    std::vector<FoldPlan> plans;
};

/// Trains and evaluates every (repeat, fold) on a prepared bank.
CrossvalRun crossval_on_bank(const FeatureBank& bank, const std::vector<ImageSequence>& sequences,
                             const FeatureExtractor& extractor, const RunOptions& o, std::optional<int> sessions,
                             const std::filesystem::path& out) {
    const Profile& p = o.profile;
    const std::vector<std::size_t> groups = twin_groups(sequences);
    CrossvalRun run;
    for (std::size_t r = 0; r < o.repeats; ++r) {
        FoldPlan plan = o.group_twins ? stratified_group_kfold(bank.labels, groups, p.folds, o.seed, r)
                                      : stratified_kfold(bank.labels, p.folds, o.seed, r);
        ConfusionMatrix repeat_cm;
        for (std::size_t f = 0; f < p.folds; ++f) {
            const std::vector<std::size_t> train = plan.train_indices(f);
            const std::vector<std::size_t> test = plan.test_indices(f);
            TrainConfig tc = p.train;
            tc.seed = train_seed(o.seed, r, f);
            RngStream ext = extractor_rng(o.seed);
            RngStream head = head_rng(o.seed, r, f);
            FoldRecord rec{r, f, sessions, {}};
            std::optional<Checkpoint> checkpoint;
            TrainResult result;
            if (o.model == ModelKind::CnnLstm) {
                CnnLstmModel model = CnnLstmModel::init(p.model, ext, head);
                model.extractor = extractor;
                result = train_cnn_lstm_on_bank(model, bank, train, tc);
                rec.confusion = evaluate_cnn_lstm(model, bank, test);
                if (!out.empty()) checkpoint = make_checkpoint(model, o.seed, tc.epochs);
            } else {
                CnnClassifier model = CnnClassifier::init(p.model, ext, head);
                model.extractor = extractor;
                result = train_cnn_on_bank(model, bank, train, tc);
                rec.confusion = evaluate_cnn(model, bank, test);
                if (!out.empty()) checkpoint = make_checkpoint(model, o.seed, tc.epochs);
            }
            if (!out.empty()) {
                const std::string stem = "r" + std::to_string(r) + "_f" + std::to_string(f);
                save_checkpoint(out / "models" / (stem + ".json"), *checkpoint);
                write_loss_history(out / "loss" / (stem + ".csv"), result.loss_history);
            }
            repeat_cm.merge(rec.confusion);
            run.folds.push_back(std::move(rec));
        }
        run.pooled.merge(repeat_cm);
        run.per_repeat.push_back(repeat_cm);
        run.plans.push_back(std::move(plan));
    }
    return run;
}

void write_fold_plan(const std::filesystem::path& path, const Dataset& data, const RunOptions& o,
                     const std::vector<FoldPlan>& plans) {
    ordered_json j;
    j["seed"] = o.seed;
    j["profile"] = o.profile.name;
    j["model"] = model_kind_name(o.model);
    j["dataset_hash"] = data.hash;
    j["sessions"] = o.sessions ? ordered_json(*o.sessions) : ordered_json(nullptr);
    j["folds"] = o.profile.folds;
    j["repeats"] = o.repeats;
    j["fold_grouping"] = o.group_twins ? "twins" : "none";
    ordered_json fold_of = ordered_json::array();
    for (const FoldPlan& plan : plans) fold_of.push_back(plan.fold_of);
    j["fold_of"] = std::move(fold_of);
    write_text(path, j.dump(2) + "\n");
}

void write_common_outputs(const std::filesystem::path& out, const ExperimentReport& report) {
    write_text(out / "report.json", report.to_json());
    write_text(out / "report.csv", report.to_csv());
    write_text(out / "confusion.csv", report.pooled.to_csv());
    write_text(out / "confusion_probability.csv", report.pooled.to_probability_csv());
}

void validate_run(const Dataset& data, const RunOptions& o) {
    if (o.repeats == 0) throw ValidationError("repeats must be >= 1");
    if (o.profile.folds < 2) throw ValidationError("k must be >= 2");
    o.profile.train.validate();
    o.profile.augment.validate();
    require_image_size(data, o.profile);
}

}  // namespace

ExperimentReport run_crossval(const Dataset& data, const RunOptions& o) {
    const auto t0 = std::chrono::steady_clock::now();
    validate_run(data, o);
    const std::vector<ImageSequence> sequences = sessions_view(data.sequences, o.sessions);
    RngStream ext = extractor_rng(o.seed);
    const FeatureExtractor extractor = FeatureExtractor::init(o.profile.model.extractor, ext);
    const FeatureBank bank =
        build_feature_bank(extractor, sequences, o.profile.augment, o.profile.augmented_variants, o.seed);
    CrossvalRun run = crossval_on_bank(bank, sequences, extractor, o, o.sessions, o.out);

    ExperimentReport report;
    report.experiment = "crossval";
    report.config = config_json(data, o);
    report.folds = std::move(run.folds);
    report.pooled = run.pooled;
    report.summary = summarize("repeats", run.per_repeat);
    report.wall_clock_seconds = seconds_since(t0);
    if (!o.out.empty()) {
        write_fold_plan(o.out / "fold_plan.json", data, o, run.plans);
        write_common_outputs(o.out, report);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

ExperimentReport run_ablation(const Dataset& data, const RunOptions& o, const std::vector<int>& sessions) {
    const auto t0 = std::chrono::steady_clock::now();
    validate_run(data, o);
    if (sessions.empty()) throw ValidationError("ablation needs at least one session count");
    for (int n : sessions) {
        if (n < 1 || n > kMaxSessions) {
            throw ValidationError("session count " + std::to_string(n) + " outside 1.." + std::to_string(kMaxSessions));
        }
    }
    RngStream ext = extractor_rng(o.seed);
    const FeatureExtractor extractor = FeatureExtractor::init(o.profile.model.extractor, ext);
    const FeatureBank bank =
        build_feature_bank(extractor, data.sequences, o.profile.augment, o.profile.augmented_variants, o.seed);

    ExperimentReport report;
    report.experiment = "ablation";
    RunOptions cfg = o;
    cfg.sessions.reset();
    report.config = config_json(data, cfg);
    report.config["session_list"] = sessions;

    ordered_json table = ordered_json::array();
    std::vector<ConfusionMatrix> per_count;
    std::string table_csv = "metric";
    std::string plot_csv = "sessions" + metric_csv_header() + "\n";
    std::vector<MetricSet> rows;
    for (int n : sessions) {
        const FeatureBank truncated = truncate_bank(bank, data.sequences, n);
        CrossvalRun run = crossval_on_bank(truncated, data.sequences, extractor, o, n, {});
        for (FoldRecord& f : run.folds) report.folds.push_back(std::move(f));
        const MetricSet m = compute_metrics(run.pooled);
        table.push_back({{"sessions", n}, {"confusion", confusion_json(run.pooled)}, {"metrics", metrics_json(m)}});
        per_count.push_back(run.pooled);
        rows.push_back(m);
        table_csv += ",S" + std::to_string(n);
        plot_csv += std::to_string(n) + metric_csv_cells(m) + "\n";
        if (n == *std::max_element(sessions.begin(), sessions.end())) report.pooled = run.pooled;
    }
    table_csv += "\n";
    for (const auto& [name, field] : kMetricFields) {
        table_csv += name;
        for (const MetricSet& m : rows) table_csv += "," + format_metric(m.*field);
        table_csv += "\n";
    }
    report.summary = summarize("session_counts", per_count);
    report.extra["table"] = std::move(table);
    report.wall_clock_seconds = seconds_since(t0);
    if (!o.out.empty()) {
        write_common_outputs(o.out, report);
        write_text(o.out / "ablation_table.csv", table_csv);
        write_text(o.out / "ablation_plot.csv", plot_csv);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Robustness
// ---------------------------------------------------------------------------

ExperimentReport run_robustness(const Dataset& data, const RobustnessOptions& o) {
    const auto t0 = std::chrono::steady_clock::now();
    if (o.k_min < 1 || o.k_max < o.k_min) throw ValidationError("robustness needs 1 <= k_min <= k_max");
    if (!(o.sigma >= 0.0) || !std::isfinite(o.sigma)) throw ValidationError("noise sigma must be >= 0");
    const std::filesystem::path plan_path = o.models / "fold_plan.json";
    if (!std::filesystem::is_regular_file(plan_path)) {
        throw ValidationError("no cross-validation models at " + o.models.string() + " (missing fold_plan.json)");
    }
    ordered_json plan_json;
    {
        std::ifstream in(plan_path);
        try {
            plan_json = ordered_json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("malformed " + plan_path.string() + ": " + e.what());
        }
    }
    if (plan_json.at("model").get<std::string>() != "cnn-lstm") {
        throw ValidationError("robustness needs cnn-lstm cross-validation models");
    }
    if (plan_json.at("dataset_hash").get<std::string>() != data.hash) {
        throw ValidationError("dataset hash " + data.hash + " differs from the one the models were trained on (" +
                              plan_json.at("dataset_hash").get<std::string>() + ")");
    }
    std::optional<int> sessions;
    if (!plan_json.at("sessions").is_null()) sessions = plan_json.at("sessions").get<int>();
    const std::vector<ImageSequence> sequences = sessions_view(data.sequences, sessions);
    std::size_t shortest = sequences.front().length();
    for (const ImageSequence& s : sequences) shortest = std::min(shortest, s.length());
    if (o.k_max > shortest) {
        throw ValidationError("k_max=" + std::to_string(o.k_max) + " exceeds the shortest sequence length " +
                              std::to_string(shortest));
    }
    const std::size_t repeats = plan_json.at("repeats").get<std::size_t>();
    const std::size_t folds = plan_json.at("folds").get<std::size_t>();
    const auto fold_of = plan_json.at("fold_of").get<std::vector<std::vector<std::size_t>>>();
    if (fold_of.size() != repeats) throw ValidationError("fold_plan.json: repeat count mismatch");

    struct Member {
        std::size_t repeat, fold;
        CnnLstmModel model;
        std::vector<std::size_t> test;
        std::vector<std::vector<Tensor>> clean;  // features per test sequence
    };
    std::vector<Member> members;
    ExperimentReport report;
    report.experiment = "robustness";
    for (std::size_t r = 0; r < repeats; ++r) {
        if (fold_of[r].size() != sequences.size()) throw ValidationError("fold_plan.json does not match the dataset");
        FoldPlan plan{folds, r, fold_of[r]};
        for (std::size_t f = 0; f < folds; ++f) {
            const auto path = o.models / "models" / ("r" + std::to_string(r) + "_f" + std::to_string(f) + ".json");
            Member m{r, f, cnn_lstm_from_checkpoint(load_checkpoint(path)), plan.test_indices(f), {}};
            ConfusionMatrix cm;
            for (std::size_t s : m.test) {
                std::vector<Tensor> feats;
                for (const Tensor& frame : sequences[s].frames) feats.push_back(m.model.extractor.extract(frame));
                cm.accumulate(class_index(sequences[s].label), argmax(cnn_lstm_logits_from_features(m.model, feats)));
                m.clean.push_back(std::move(feats));
            }
            report.pooled.merge(cm);
            report.folds.push_back({r, f, sessions, cm});
            members.push_back(std::move(m));
        }
    }

    ordered_json cycles = ordered_json::array();
    std::vector<ConfusionMatrix> per_cycle;
    std::string cycles_csv = "k" + metric_csv_header() + "\n";
    const RngStream root(o.seed, hash_key("perturb"));
    for (std::size_t k = o.k_min; k <= o.k_max; ++k) {
        ConfusionMatrix cm;
        for (const Member& m : members) {
            for (std::size_t i = 0; i < m.test.size(); ++i) {
                const std::size_t s = m.test[i];
                RngStream rng = root.substream(k).substream(m.repeat).substream(s);
                const PerturbedSequence p = perturb_test_sequence(sequences[s], k, rng, o.sigma);
                std::vector<Tensor> feats = m.clean[i];
                for (std::size_t t : p.perturbed_frames) feats[t] = m.model.extractor.extract(p.sequence.frames[t]);
                cm.accumulate(class_index(sequences[s].label), argmax(cnn_lstm_logits_from_features(m.model, feats)));
            }
        }
        const MetricSet metrics = compute_metrics(cm);
        cycles.push_back({{"k", k}, {"confusion", confusion_json(cm)}, {"metrics", metrics_json(metrics)}});
        cycles_csv += std::to_string(k) + metric_csv_cells(metrics) + "\n";
        per_cycle.push_back(cm);
    }

    report.config = {{"seed", o.seed},
                     {"models_seed", plan_json.at("seed")},
                     {"profile", plan_json.at("profile")},
                     {"model", "cnn-lstm"},
                     {"dataset_hash", data.hash},
                     {"sequences", sequences.size()},
                     {"sessions", sessions ? ordered_json(*sessions) : ordered_json(nullptr)},
                     {"folds", folds},
                     {"repeats", repeats},
                     {"k_min", o.k_min},
                     {"k_max", o.k_max},
                     {"noise_sigma", o.sigma},
                     {"kernels", simd::active_kernels().name}};
    report.summary = summarize("cycles", per_cycle);
    const MetricSet clean = compute_metrics(report.pooled);
    report.extra["cycles"] = std::move(cycles);
    report.extra["clean_minus_mean"] = {{"acc", clean.overall_accuracy && report.summary.mean.overall_accuracy
                                                    ? ordered_json(*clean.overall_accuracy -
                                                                   *report.summary.mean.overall_accuracy)
                                                    : ordered_json(nullptr)}};
    report.wall_clock_seconds = seconds_since(t0);
    if (!o.out.empty()) {
        write_common_outputs(o.out, report);
        write_text(o.out / "cycles.csv", cycles_csv);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Single training run
// ---------------------------------------------------------------------------

TrainResult run_train(const Dataset& data, const RunOptions& o) {
    validate_run(data, o);
    const std::vector<ImageSequence> sequences = sessions_view(data.sequences, o.sessions);
    TrainConfig tc = o.profile.train;
    tc.seed = train_seed(o.seed, 0, 0);
    RngStream ext = extractor_rng(o.seed);
    RngStream head = head_rng(o.seed, 0, 0);
    TrainResult result;
    std::optional<Checkpoint> checkpoint;
    if (o.model == ModelKind::CnnLstm) {
        CnnLstmModel model = CnnLstmModel::init(o.profile.model, ext, head);
        result = train_cnn_lstm(model, sequences, tc, o.profile.augment, o.profile.augmented_variants);
        checkpoint = make_checkpoint(model, o.seed, tc.epochs);
    } else {
        CnnClassifier model = CnnClassifier::init(o.profile.model, ext, head);
        result = train_cnn(model, sequences, tc, o.profile.augment, o.profile.augmented_variants);
        checkpoint = make_checkpoint(model, o.seed, tc.epochs);
    }
    if (!o.out.empty()) {
        save_checkpoint(o.out / "model.json", *checkpoint);
        write_loss_history(o.out / "loss.csv", result.loss_history);
    }
    return result;
}

}  // namespace phenoseq
