// leakcrf command-line tool: generate, train, infer, fuse, evaluate, sweep.

#include <CLI/CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <leakcrf/leakcrf.hpp>

namespace fs = std::filesystem;
using namespace leakcrf;

namespace {

struct DataDir {
    WaterNetwork net;
    std::vector<DemandPattern> patterns;
    std::shared_ptr<const SensorLayout> layout;
    int hop_radius = kDefaultHopRadius;
};

DataDir load_data_dir(const std::string& dir) {
    DataDir d;
    const auto p = fs::path(dir);
    d.net = load_network((p / "network.json").string());
    const auto pat = (p / "patterns.json").string();
    d.patterns = patterns_from_json(detail::parse_json_text(detail::read_text_file(pat), pat), pat);
    const auto lay = (p / "layout.json").string();
    d.layout = std::make_shared<const SensorLayout>(
        layout_from_json(detail::parse_json_text(detail::read_text_file(lay), lay), lay));
    validate_layout(d.net, *d.layout);
    const auto gen = (p / "generate.json").string();
    if (fs::exists(gen)) {
        const auto doc = detail::parse_json_text(detail::read_text_file(gen), gen);
        d.hop_radius = doc.value("hop_radius", kDefaultHopRadius);
    }
    return d;
}

Table probability_table(const std::vector<std::vector<double>>& p1) {
    Table t;
    t.comments = {" leakcrf marginals v1"};
    t.header = {"sample"};
    const std::size_t n = p1.empty() ? 0 : p1.front().size();
    for (std::size_t v = 0; v < n; ++v) t.header.push_back("n" + std::to_string(v));
    for (std::size_t i = 0; i < p1.size(); ++i) {
        std::vector<double> row{static_cast<double>(i)};
        row.insert(row.end(), p1[i].begin(), p1[i].end());
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::vector<std::vector<double>> probabilities_from_table(const Table& t) {
    std::vector<std::vector<double>> out;
    for (const auto& row : t.rows) out.emplace_back(row.begin() + 1, row.end());
    return out;
}

void check_model_matches(const CrfModel& m, const SensorLayout& layout) {
    m.check();
    if (m.feature_config.layout_hash != 0 && m.feature_config.layout_hash != layout.hash())
        throw DimensionError("model was trained on a different sensor layout");
    if (m.feature_config.node_dim != kNodeFeatureDim)
        throw DimensionError("model expects " + std::to_string(m.feature_config.node_dim) + " node features, this build produces " +
                             std::to_string(kNodeFeatureDim));
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
    int nodes = 96;
    std::uint64_t seed = 1;
    std::string out;
    std::size_t n_train = 2000;
    std::size_t n_test = 400;
    double noise = 0.5;
    int hop_radius = kDefaultHopRadius;
    int max_leaks = 3;
};

int cmd_generate(const GenerateArgs& a) {
    fs::create_directories(a.out);
    const auto dir = fs::path(a.out);
    const auto net = generate_benchmark_network(a.nodes, a.seed);
    const auto patterns = generate_demand_patterns(kBenchmarkPatternCount, a.seed);
    auto layout = std::make_shared<const SensorLayout>(SensorLayout::full(net));
    save_network(net, (dir / "network.json").string());
    detail::write_text_file((dir / "patterns.json").string(), patterns_to_json(patterns).dump(2) + "\n");
    detail::write_text_file((dir / "layout.json").string(), layout_to_json(*layout).dump(2) + "\n");

    ScenarioConfig sc;
    sc.max_leaks = a.max_leaks;
    const FeatureExtractor fx(net, layout, a.hop_radius);
    const std::pair<const char*, std::size_t> splits[] = {{"train", a.n_train}, {"test", a.n_test}};
    std::uint64_t tag = 1;
    for (const auto& [split, count] : splits) {
        DatasetSpec spec{count, sc, kStepsPerDay - 1, a.noise, derive_seed(a.seed, {tag++})};
        const auto ds = generate_dataset(net, patterns, layout, spec);
        save_dataset(ds, a.out, split);
        save_features(featurize(ds, fx), fx, a.out, split);
    }
    nlohmann::json manifest{{"format_version", 1},  {"nodes", a.nodes},         {"seed", a.seed},
                            {"n_train", a.n_train}, {"n_test", a.n_test},       {"sensor_noise_sigma", a.noise},
                            {"max_leaks", a.max_leaks}, {"hop_radius", a.hop_radius}};
    detail::write_text_file((dir / "generate.json").string(), manifest.dump(2) + "\n");
    std::cout << "wrote network (" << net.node_count() << " nodes, " << net.pipes.size() << " pipes) and "
              << a.n_train << "/" << a.n_test << " samples to " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string data, out, metrics;
    TrainingConfig cfg = benchmark_training();
};

int cmd_train(const TrainArgs& a) {
    const auto d = load_data_dir(a.data);
    const auto ds = load_dataset(a.data, "train");
    const FeatureExtractor fx(d.net, ds.baseline.layout, d.hop_radius);
    const auto samples = featurize(ds, fx);
    const auto run = train(samples, CrfGraph::from_network(d.net), a.cfg, {d.hop_radius, kNodeFeatureDim, fx.layout_hash()});
    save_model(run.model, a.out);
    if (!a.metrics.empty()) write_table(metrics_table(run), a.metrics);
    const auto& last = run.epochs.back();
    std::cout << "trained on " << run.train_count << " samples (" << run.calibration_count << " held out for calibration), "
              << run.epochs.size() << " epochs, final objective " << format_number(last.objective) << "\n";
    return 0;
}

struct InferArgs {
    std::string model, data, split = "test", out, marginals;
    Solver solver = Solver::automatic;
    std::uint64_t seed = 0;
};

int cmd_infer(const InferArgs& a) {
    const auto d = load_data_dir(a.data);
    const auto ds = load_dataset(a.data, a.split);
    const auto model = load_model(a.model);
    check_model_matches(model, *ds.baseline.layout);
    const FeatureExtractor fx(d.net, ds.baseline.layout, model.feature_config.hop_radius);
    const auto g = CrfGraph::from_network(d.net);
    std::vector<LabelAssignment> labels(ds.x.size());
    std::vector<std::vector<double>> p1(ds.x.size());
    for (std::size_t i = 0; i < ds.x.size(); ++i) {
        InferenceOptions io;
        io.solver = a.solver;
        io.seed = derive_seed(a.seed, {i});
        const auto f = fx.all_node_features(ds.x[i], ds.baseline);
        if (a.marginals.empty()) {
            labels[i] = map_infer(model, g, f, io);
        } else {
            auto r = phase_one(model, g, f, io);
            labels[i] = std::move(r.labels);
            p1[i] = std::move(r.p1);
        }
    }
    write_table(labels_table(labels, "sample"), a.out);
    if (!a.marginals.empty()) write_table(probability_table(p1), a.marginals);
    std::cout << "labelled " << labels.size() << " samples\n";
    return 0;
}

struct FuseArgs {
    std::string data, split = "test", pred, marginals, reports, reports_out, out, audit;
    double p = 0.7, sigma = 0.5, gamma = 2.0, gate = 0.0, false_rate = 0.0;
    std::uint64_t seed = 0;
};

int cmd_fuse(const FuseArgs& a) {
    const auto d = load_data_dir(a.data);
    const auto pred = labels_from_table(read_table(a.pred));
    const auto p1 = probabilities_from_table(read_table(a.marginals));
    if (pred.size() != p1.size()) throw ValidationError("prediction and marginal files have different sample counts");

    std::vector<std::vector<HumanReport>> reports;
    if (!a.reports.empty()) {
        reports = reports_from_table(read_table(a.reports), pred.size());
    } else {
        const auto ds = load_dataset(a.data, a.split);
        if (ds.scenarios.size() != pred.size()) throw ValidationError("prediction count does not match the dataset split");
        const ReportSimConfig rc{a.p, a.sigma, a.gamma, a.false_rate};
        for (std::size_t i = 0; i < ds.scenarios.size(); ++i)
            reports.push_back(simulate_reports(ds.scenarios[i], d.net, rc, derive_seed(a.seed, {i})));
        if (!a.reports_out.empty()) write_table(reports_table(reports), a.reports_out);
    }

    std::vector<LabelAssignment> fused(pred.size());
    std::vector<std::vector<FusionStep>> audit(pred.size());
    long unresolved = 0, dropped = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto cliques = build_cliques(reports[i], d.net, a.gamma);
        const auto r = greedy_fuse(leak_set(pred[i]), cliques, p1[i], {a.gate});
        fused[i] = to_labels(r.leaks, d.net.node_count());
        audit[i] = r.audit;
        unresolved += r.unresolved;
        dropped += cliques.dropped;
    }
    write_table(labels_table(fused, "sample"), a.out);
    if (!a.audit.empty()) write_table(audit_table(audit), a.audit);
    std::cout << "fused " << fused.size() << " samples; unresolved reports " << unresolved << ", reports without nodes "
              << dropped << "\n";
    return 0;
}

int cmd_evaluate(const std::string& pred_file, const std::string& truth_file) {
    const auto pred = labels_from_table(read_table(pred_file));
    const auto truth = labels_from_table(read_table(truth_file));
    if (pred.size() != truth.size() || pred.empty())
        throw ValidationError("prediction and truth files must have the same nonzero number of rows");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i].size() != truth[i].size()) throw DimensionError("row " + std::to_string(i) + ": node counts differ");
        sum += hamming_score(leak_set(pred[i]), leak_set(truth[i]));
    }
    std::cout << format_number(sum / static_cast<double>(pred.size())) << "\n";
    return 0;
}

struct SweepArgs {
    std::string config, out, metrics, model;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    bool runtime = false;
};

int cmd_sweep(const SweepArgs& a) {
    auto cfg = a.config.empty() ? ExperimentConfig{} : load_experiment_config(a.config);
    if (a.seed) cfg.master_seed = *a.seed;
    if (a.threads) cfg.threads = *a.threads;
    if (a.runtime) cfg.record_runtime = true;
    const auto out = run_experiment(cfg);
    write_table(results_table(out.records), a.out);
    if (!a.model.empty()) save_model(out.model, a.model);
    if (!a.metrics.empty()) {
        TrainingRun run;
        run.epochs = out.epochs;
        write_table(metrics_table(run), a.metrics);
    }
    for (const auto& msg : out.diagnostics) std::cerr << "warning: " << msg << "\n";
    std::cout << table_to_string(results_table(out.records));
    return out.diagnostics.empty() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-phase leak localisation: CRF over sensor data, then fusion with human reports"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "leakcrf 1.0.0");

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "Generate a benchmark network and train/test datasets");
    gen->add_option("--nodes", ga.nodes, "Node count")->check(CLI::Range(3, 100000))->capture_default_str();
    gen->add_option("--seed", ga.seed, "Master seed")->capture_default_str();
    gen->add_option("--out", ga.out, "Output directory")->required();
    gen->add_option("--train", ga.n_train, "Training samples")->capture_default_str();
    gen->add_option("--test", ga.n_test, "Test samples")->capture_default_str();
    gen->add_option("--noise", ga.noise, "Sensor noise sigma (m or L/s)")->check(CLI::NonNegativeNumber)->capture_default_str();
    gen->add_option("--k", ga.hop_radius, "Feature hop radius")->check(CLI::NonNegativeNumber)->capture_default_str();
    gen->add_option("--max-leaks", ga.max_leaks, "Maximum simultaneous leaks")->capture_default_str();

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "Train a CRF model on <data>/train_*");
    tr->add_option("--data", ta.data, "Directory written by generate")->required()->check(CLI::ExistingDirectory);
    tr->add_option("--out", ta.out, "Model file (JSON)")->required();
    tr->add_option("--metrics", ta.metrics, "Per-epoch metrics table");
    tr->add_option("--C", ta.cfg.c_penalty, "Regularisation weight")->capture_default_str();
    tr->add_option("--epochs", ta.cfg.max_epochs, "Maximum epochs")->capture_default_str();
    tr->add_option("--eta0", ta.cfg.eta0, "Initial step size")->capture_default_str();
    tr->add_option("--decay", ta.cfg.decay, "Step-size decay")->capture_default_str();
    tr->add_option("--tolerance", ta.cfg.tolerance, "Relative objective change that stops training")->capture_default_str();
    tr->add_option("--seed", ta.cfg.seed, "Training seed")->capture_default_str();

    InferArgs ia;
    const std::map<std::string, Solver> solvers{{"auto", Solver::automatic},
                                                {"icm", Solver::icm},
                                                {"graphcut", Solver::graph_cut},
                                                {"brute", Solver::brute_force}};
    auto* inf = app.add_subcommand("infer", "Phase I: MAP labels (and calibrated marginals) per sample");
    inf->add_option("--model", ia.model, "Model file")->required()->check(CLI::ExistingFile);
    inf->add_option("--data", ia.data, "Directory written by generate")->required()->check(CLI::ExistingDirectory);
    inf->add_option("--split", ia.split, "Dataset split")->capture_default_str();
    inf->add_option("--out", ia.out, "Predicted labels table")->required();
    inf->add_option("--marginals", ia.marginals, "Calibrated p(leak) table");
    inf->add_option("--solver", ia.solver, "auto, icm, graphcut or brute")->transform(CLI::CheckedTransformer(solvers));
    inf->add_option("--seed", ia.seed, "Seed for ICM restarts")->capture_default_str();

    FuseArgs fa;
    auto* fu = app.add_subcommand("fuse", "Phase II: repair predictions with human-report cliques");
    fu->add_option("--data", fa.data, "Directory written by generate")->required()->check(CLI::ExistingDirectory);
    fu->add_option("--split", fa.split, "Dataset split the predictions belong to")->capture_default_str();
    fu->add_option("--pred", fa.pred, "Phase I labels table")->required()->check(CLI::ExistingFile);
    fu->add_option("--marginals", fa.marginals, "Phase I marginals table")->required()->check(CLI::ExistingFile);
    auto* rep = fu->add_option("--reports", fa.reports, "Reports table (scenario, step, x, y)")->check(CLI::ExistingFile);
    fu->add_option("--p", fa.p, "Report probability when simulating reports")->check(CLI::Range(0.0, 1.0))->excludes(rep);
    fu->add_option("--sigma", fa.sigma, "Report location noise (m)")->excludes(rep);
    fu->add_option("--false-rate", fa.false_rate, "Spurious reports per scenario")->excludes(rep);
    fu->add_option("--seed", fa.seed, "Report simulation seed")->excludes(rep);
    fu->add_option("--reports-out", fa.reports_out, "Write simulated reports here")->excludes(rep);
    fu->add_option("--gamma", fa.gamma, "Clique radius (m)")->check(CLI::PositiveNumber)->capture_default_str();
    fu->add_option("--Gamma", fa.gate, "Entropy gate (nats)")->check(CLI::NonNegativeNumber)->capture_default_str();
    fu->add_option("--out", fa.out, "Fused labels table")->required();
    fu->add_option("--audit", fa.audit, "Audit log (clique, chosen node, entropy)");

    std::string pred_file, truth_file;
    auto* ev = app.add_subcommand("evaluate", "Mean Hamming score of predicted vs true label tables");
    ev->add_option("--pred", pred_file, "Predicted labels")->required()->check(CLI::ExistingFile);
    ev->add_option("--truth", truth_file, "True labels")->required()->check(CLI::ExistingFile);

    SweepArgs sa;
    auto* sw = app.add_subcommand("sweep", "Full experiment: generate, train, Phase I, Phase II over the (p, gamma, Gamma) grid");
    sw->add_option("--config", sa.config, "Experiment config (JSON); defaults when omitted")->check(CLI::ExistingFile);
    sw->add_option("--seed", sa.seed, "Override the master seed");
    sw->add_option("--threads", sa.threads, "Worker threads");
    sw->add_option("--out", sa.out, "Results table")->required();
    sw->add_option("--metrics", sa.metrics, "Training metrics table");
    sw->add_option("--model", sa.model, "Write the trained model here");
    sw->add_flag("--runtime", sa.runtime, "Record wall-clock seconds (results are then not byte-reproducible)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen) return cmd_generate(ga);
        if (*tr) return cmd_train(ta);
        if (*inf) return cmd_infer(ia);
        if (*fu) return cmd_fuse(fa);
        if (*ev) return cmd_evaluate(pred_file, truth_file);
        if (*sw) return cmd_sweep(sa);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
