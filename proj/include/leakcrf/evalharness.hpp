#pragma once

// End-to-end experiment: generate data, train, Phase I MAP prediction, Phase II
// report fusion over a (p, gamma, Gamma) grid, Hamming-score evaluation.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "crf.hpp"
#include "dataset.hpp"
#include "features.hpp"
#include "fusion.hpp"
#include "hydrosim.hpp"
#include "network.hpp"
#include "random.hpp"
#include "ssvm.hpp"
#include "table.hpp"

namespace leakcrf {

/// |P n T| / |P u T|; two empty sets agree perfectly and score 1.
inline double hamming_score(const LeakSet& predicted, const LeakSet& truth) {
    if (predicted.empty() && truth.empty()) return 1.0;
    std::size_t inter = 0;
    for (auto v : predicted) inter += truth.count(v);
    const auto uni = predicted.size() + truth.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

inline LeakSet leak_set(const LabelAssignment& y) {
    LeakSet s;
    for (std::size_t v = 0; v < y.size(); ++v)
        if (y[v]) s.insert(static_cast<NodeId>(v));
    return s;
}

inline LabelAssignment to_labels(const LeakSet& s, std::size_t n) {
    LabelAssignment y(n, 0);
    for (auto v : s) {
        if (v < 0 || static_cast<std::size_t>(v) >= n) throw ValidationError("leak set member outside the graph");
        y[v] = 1;
    }
    return y;
}

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Callers write results by index.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < count;) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
    }
    if (failure) std::rethrow_exception(failure);
}

struct FusionCell {
    double gamma = 2.0;
    double entropy_gate = 0.0;
};

/// Training settings for the benchmark sweep: the smaller initial step keeps the
/// per-epoch objective from oscillating on the noisy 96-node data.
inline TrainingConfig benchmark_training() {
    TrainingConfig t;
    t.eta0 = 0.01;
    return t;
}

struct ExperimentConfig {
    // network: a file, or generated from (nodes, seed)
    std::string network_file;
    std::string patterns_file;
    int network_nodes = 96;
    std::uint64_t network_seed = 1;

    std::size_t n_train = 2000;
    std::size_t n_test = 400;
    ScenarioConfig scenarios;
    std::optional<SensorLayout> layout;  // full layout when absent
    double sensor_noise_sigma = 0.5;  // noise-free full sensing makes Phase I near perfect
    int observation_step = kStepsPerDay - 1;
    int hop_radius = kDefaultHopRadius;
    TrainingConfig training = benchmark_training();

    std::vector<double> p_values = {0.3, 0.7};
    std::vector<FusionCell> fusion_grid = {{2.0, 0.0}, {3.0, 0.04}};
    double location_noise_sigma = 0.5;
    double false_report_rate = 0.0;

    std::uint64_t master_seed = 0;
    unsigned threads = 1;
    bool record_runtime = false;  // wall-clock seconds in the results table (breaks byte-identity)

    void validate() const {
        if (n_train < 1 || n_test < 1) throw ValidationError("dataset sizes must be >= 1");
        if (p_values.empty() || fusion_grid.empty()) throw ValidationError("parameter grids must be nonempty");
        for (double p : p_values)
            if (!(p >= 0 && p <= 1)) throw ValidationError("p values must lie in [0, 1]");
        for (const auto& c : fusion_grid) {
            if (!(c.gamma > 0)) throw ValidationError("gamma must be > 0");
            if (!(c.entropy_gate >= 0)) throw ValidationError("Gamma must be >= 0");
        }
        if (hop_radius < 0) throw ValidationError("hop_radius must be >= 0");
    }
};

struct ResultRecord {
    std::optional<double> p;  // empty for the Phase I baseline row
    std::optional<double> gamma;
    std::optional<double> entropy_gate;
    double hamming_score_baseline = 0.0;
    double hamming_score_fused = 0.0;
    long unresolved_report_count = 0;
    double runtime_s = 0.0;
};

struct ExperimentOutput {
    std::vector<ResultRecord> records;  // baseline first, then p-major grid order
    CrfModel model;
    std::vector<EpochMetrics> epochs;
    std::vector<std::string> diagnostics;  // cells that failed
};

/// Phase I for one sample: MAP leak set and calibrated p1 per node.
struct PhaseOne {
    LabelAssignment labels;
    std::vector<double> p1;
};

inline PhaseOne phase_one(const CrfModel& m, const CrfGraph& g, const NodeFeatures& f, const InferenceOptions& opt) {
    if (!m.calibration) throw Error("model has no calibration; train it with a calibration pass first");
    const auto pot = make_potentials(m, g, f);
    PhaseOne r;
    r.labels = map_infer(pot, g, opt);
    r.p1 = calibrated_probabilities(node_margins(pot, g, r.labels), *m.calibration).p1;
    return r;
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& g : c.fusion_grid) grid.push_back({{"gamma", g.gamma}, {"Gamma", g.entropy_gate}});
    nlohmann::json doc{
        {"format_version", 1},
        {"network", {{"file", c.network_file}, {"patterns_file", c.patterns_file}, {"nodes", c.network_nodes}, {"seed", c.network_seed}}},
        {"n_train", c.n_train},
        {"n_test", c.n_test},
        {"scenarios",
         {{"max_leaks", c.scenarios.max_leaks},
          {"min_emitter", c.scenarios.min_emitter},
          {"max_emitter", c.scenarios.max_emitter},
          {"min_start_step", c.scenarios.min_start_step},
          {"max_start_step", c.scenarios.max_start_step}}},
        {"sensor_noise_sigma", c.sensor_noise_sigma},
        {"observation_step", c.observation_step},
        {"hop_radius", c.hop_radius},
        {"training",
         {{"C", c.training.c_penalty},
          {"max_epochs", c.training.max_epochs},
          {"eta0", c.training.eta0},
          {"decay", c.training.decay},
          {"tolerance", c.training.tolerance},
          {"calibration_fraction", c.training.calibration_fraction},
          {"icm_restarts", c.training.inference.restarts}}},
        {"reports",
         {{"p_values", c.p_values},
          {"location_noise_sigma", c.location_noise_sigma},
          {"false_report_rate", c.false_report_rate}}},
        {"fusion_grid", grid},
        {"master_seed", c.master_seed},
        {"threads", c.threads},
        {"record_runtime", c.record_runtime}};
    if (c.layout) doc["layout"] = layout_to_json(*c.layout);
    return doc;
}

/// Reads a sweep config; every field is optional and falls back to the defaults.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& doc, const std::string& origin = "config") {
    detail::check_format_version(doc, 1, origin);
    ExperimentConfig c;
    auto opt = [](const nlohmann::json& obj, const char* key, auto& out, const std::string& ctx) {
        if (!obj.is_object() || !obj.contains(key)) return;
        try {
            out = obj.at(key).get<std::decay_t<decltype(out)>>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(ctx + "." + key + ": " + e.what());
        }
    };
    if (doc.contains("network")) {
        const auto& n = doc["network"];
        opt(n, "file", c.network_file, origin + ".network");
        opt(n, "patterns_file", c.patterns_file, origin + ".network");
        opt(n, "nodes", c.network_nodes, origin + ".network");
        opt(n, "seed", c.network_seed, origin + ".network");
    }
    opt(doc, "n_train", c.n_train, origin);
    opt(doc, "n_test", c.n_test, origin);
    if (doc.contains("scenarios")) {
        const auto& s = doc["scenarios"];
        const auto ctx = origin + ".scenarios";
        opt(s, "max_leaks", c.scenarios.max_leaks, ctx);
        opt(s, "min_emitter", c.scenarios.min_emitter, ctx);
        opt(s, "max_emitter", c.scenarios.max_emitter, ctx);
        opt(s, "min_start_step", c.scenarios.min_start_step, ctx);
        opt(s, "max_start_step", c.scenarios.max_start_step, ctx);
    }
    if (doc.contains("layout")) c.layout = layout_from_json(doc["layout"], origin + ".layout");
    opt(doc, "sensor_noise_sigma", c.sensor_noise_sigma, origin);
    opt(doc, "observation_step", c.observation_step, origin);
    opt(doc, "hop_radius", c.hop_radius, origin);
    if (doc.contains("training")) {
        const auto& t = doc["training"];
        const auto ctx = origin + ".training";
        opt(t, "C", c.training.c_penalty, ctx);
        opt(t, "max_epochs", c.training.max_epochs, ctx);
        opt(t, "eta0", c.training.eta0, ctx);
        opt(t, "decay", c.training.decay, ctx);
        opt(t, "tolerance", c.training.tolerance, ctx);
        opt(t, "calibration_fraction", c.training.calibration_fraction, ctx);
        opt(t, "icm_restarts", c.training.inference.restarts, ctx);
    }
    if (doc.contains("reports")) {
        const auto& r = doc["reports"];
        const auto ctx = origin + ".reports";
        opt(r, "p_values", c.p_values, ctx);
        opt(r, "location_noise_sigma", c.location_noise_sigma, ctx);
        opt(r, "false_report_rate", c.false_report_rate, ctx);
    }
    if (doc.contains("fusion_grid")) {
        c.fusion_grid.clear();
        for (std::size_t i = 0; i < doc["fusion_grid"].size(); ++i) {
            const auto ctx = origin + ".fusion_grid[" + std::to_string(i) + "]";
            const auto& g = doc["fusion_grid"][i];
            c.fusion_grid.push_back({detail::get_field<double>(g, "gamma", ctx), detail::get_field<double>(g, "Gamma", ctx)});
        }
    }
    opt(doc, "master_seed", c.master_seed, origin);
    opt(doc, "threads", c.threads, origin);
    opt(doc, "record_runtime", c.record_runtime, origin);
    c.validate();
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    return experiment_config_from_json(detail::parse_json_text(detail::read_text_file(path), path), path);
}

/// Network and demand patterns named by the config.
inline std::pair<WaterNetwork, std::vector<DemandPattern>> experiment_network(const ExperimentConfig& c) {
    WaterNetwork net = c.network_file.empty() ? generate_benchmark_network(c.network_nodes, c.network_seed)
                                              : load_network(c.network_file);
    std::vector<DemandPattern> patterns;
    if (!c.patterns_file.empty()) {
        patterns = patterns_from_json(detail::parse_json_text(detail::read_text_file(c.patterns_file), c.patterns_file),
                                      c.patterns_file);
    } else {
        int count = 1;
        for (const auto& n : net.nodes) count = std::max(count, n.demand_pattern_id + 1);
        patterns = generate_demand_patterns(count, c.network_seed);
    }
    return {std::move(net), std::move(patterns)};
}

inline ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    using clock = std::chrono::steady_clock;
    const auto t_start = clock::now();
    auto [net, patterns] = experiment_network(cfg);
    auto layout = std::make_shared<const SensorLayout>(cfg.layout ? *cfg.layout : SensorLayout::full(net));
    validate_layout(net, *layout);
    const auto graph = CrfGraph::from_network(net);
    const FeatureExtractor fx(net, layout, cfg.hop_radius);

    const std::uint64_t seed = cfg.master_seed;
    DatasetSpec train_spec{cfg.n_train, cfg.scenarios, cfg.observation_step, cfg.sensor_noise_sigma, derive_seed(seed, {1})};
    DatasetSpec test_spec{cfg.n_test, cfg.scenarios, cfg.observation_step, cfg.sensor_noise_sigma, derive_seed(seed, {2})};
    const auto train_ds = generate_dataset(net, patterns, layout, train_spec);
    const auto test_ds = generate_dataset(net, patterns, layout, test_spec);

    TrainingConfig tc = cfg.training;
    tc.seed = derive_seed(seed, {4});
    const auto train_data = featurize(train_ds, fx);
    auto run = train(train_data, graph, tc, {cfg.hop_radius, kNodeFeatureDim, layout->hash()});
    const auto& model = run.model;

    // Phase I on every test scenario
    const auto n_test = test_ds.x.size();
    std::vector<PhaseOne> phase1(n_test);
    std::vector<LeakSet> truth(n_test);
    parallel_for(n_test, cfg.threads, [&](std::size_t i) {
        InferenceOptions io = tc.inference;
        io.seed = derive_seed(seed, {5, i});
        phase1[i] = phase_one(model, graph, fx.all_node_features(test_ds.x[i], test_ds.baseline), io);
        truth[i] = leak_set(test_ds.y[i]);
    });
    double base_sum = 0.0;
    for (std::size_t i = 0; i < n_test; ++i) base_sum += hamming_score(leak_set(phase1[i].labels), truth[i]);
    const double base_score = base_sum / static_cast<double>(n_test);
    const auto t_phase1 = clock::now();

    ExperimentOutput out;
    out.model = model;
    out.epochs = run.epochs;
    auto seconds = [](auto a, auto b) { return std::chrono::duration<double>(b - a).count(); };
    ResultRecord baseline;
    baseline.hamming_score_baseline = baseline.hamming_score_fused = base_score;
    baseline.runtime_s = cfg.record_runtime ? seconds(t_start, t_phase1) : 0.0;
    out.records.push_back(baseline);

    // Phase II per grid cell; reports share one seed per scenario across p values
    std::vector<ResultRecord> cells(cfg.p_values.size() * cfg.fusion_grid.size());
    std::vector<std::string> errors(cells.size());
    parallel_for(cells.size(), cfg.threads, [&](std::size_t k) {
        const auto t0 = clock::now();
        const double p = cfg.p_values[k / cfg.fusion_grid.size()];
        const auto& cell = cfg.fusion_grid[k % cfg.fusion_grid.size()];
        auto& rec = cells[k];
        rec.p = p;
        rec.gamma = cell.gamma;
        rec.entropy_gate = cell.entropy_gate;
        rec.hamming_score_baseline = base_score;
        try {
            ReportSimConfig rc{p, cfg.location_noise_sigma, cell.gamma, cfg.false_report_rate};
            double fused_sum = 0.0;
            for (std::size_t i = 0; i < n_test; ++i) {
                const auto reports = simulate_reports(test_ds.scenarios[i], net, rc, derive_seed(seed, {3, i}));
                const auto cliques = build_cliques(reports, net, cell.gamma);
                const auto fused = greedy_fuse(leak_set(phase1[i].labels), cliques, phase1[i].p1, {cell.entropy_gate});
                fused_sum += hamming_score(fused.leaks, truth[i]);
                rec.unresolved_report_count += fused.unresolved;
            }
            rec.hamming_score_fused = fused_sum / static_cast<double>(n_test);
        } catch (const std::exception& e) {
            rec.hamming_score_fused = std::nan("");
            errors[k] = "cell p=" + format_number(p) + " gamma=" + format_number(cell.gamma) +
                        " Gamma=" + format_number(cell.entropy_gate) + ": " + e.what();
        }
        rec.runtime_s = cfg.record_runtime ? seconds(t0, clock::now()) : 0.0;
    });
    for (auto& e : errors)
        if (!e.empty()) out.diagnostics.push_back(std::move(e));
    out.records.insert(out.records.end(), cells.begin(), cells.end());
    return out;
}

/// Delimited results table: p, gamma, Gamma, score_baseline, score_fused, unresolved, runtime_s.
/// The baseline row leaves p, gamma and Gamma as nan.
inline Table results_table(const std::vector<ResultRecord>& records) {
    Table t;
    t.comments = {" leakcrf results v1"};
    t.header = {"p", "gamma", "Gamma", "score_baseline", "score_fused", "unresolved", "runtime_s"};
    const double nan = std::nan("");
    for (const auto& r : records)
        t.rows.push_back({r.p.value_or(nan), r.gamma.value_or(nan), r.entropy_gate.value_or(nan),
                          r.hamming_score_baseline, r.hamming_score_fused, static_cast<double>(r.unresolved_report_count),
                          r.runtime_s});
    return t;
}

}  // namespace leakcrf
