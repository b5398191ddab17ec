#include <gtest/gtest.h>

#include <filesystem>

#include "test_support.hpp"

using namespace leakcrf;
using namespace leakcrf::testing;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.network_nodes = 30;
    c.network_seed = 5;
    c.n_train = 120;
    c.n_test = 30;
    c.training.max_epochs = 6;
    c.master_seed = 9;
    return c;
}

/// Trained model plus a held-out split on a 40-node network, shared by the quality tests.
struct TrainedFixture {
    WaterNetwork net;
    std::vector<DemandPattern> patterns;
    std::shared_ptr<const SensorLayout> layout;
    CrfGraph graph;
    FeatureExtractor fx;
    CrfModel model;
    Dataset test;

    static const TrainedFixture& get() {
        static const TrainedFixture f = [] {
            auto net = generate_benchmark_network(40, 2);
            auto patterns = generate_demand_patterns(kBenchmarkPatternCount, 2);
            auto layout = full_layout(net);
            auto graph = CrfGraph::from_network(net);
            FeatureExtractor fx(net, layout, kDefaultHopRadius);
            const auto train_ds = generate_dataset(net, patterns, layout, {400, {}, kStepsPerDay - 1, 0.5, 1});
            auto tc = benchmark_training();
            tc.max_epochs = 20;
            auto model = train(featurize(train_ds, fx), graph, tc).model;
            auto test = generate_dataset(net, patterns, layout, {100, {}, kStepsPerDay - 1, 0.5, 2});
            return TrainedFixture{net, patterns, layout, graph, fx, model, test};
        }();
        return f;
    }
};

}  // namespace

TEST(HammingScore, Examples) {
    EXPECT_EQ(hamming_score({}, {}), 1.0);
    EXPECT_EQ(hamming_score({1}, {}), 0.0);
    EXPECT_EQ(hamming_score({}, {4}), 0.0);
    EXPECT_EQ(hamming_score({1, 2}, {1, 2}), 1.0);
    EXPECT_DOUBLE_EQ(hamming_score({1, 2}, {2, 3}), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(hamming_score({1, 2, 3}, {2}), 1.0 / 3.0);
    EXPECT_EQ(hamming_score({5}, {7}), 0.0);
}

TEST(HammingScore, LabelConversions) {
    EXPECT_EQ(leak_set({0, 1, 0, 1}), (LeakSet{1, 3}));
    EXPECT_EQ(to_labels({0, 2}, 4), (LabelAssignment{1, 0, 1, 0}));
    EXPECT_THROW(to_labels({4}, 4), ValidationError);
}

TEST(Experiment, NoLeaksScoresOne) {
    auto c = small_config();
    c.scenarios.max_leaks = 0;
    c.sensor_noise_sigma = 0.0;
    const auto out = run_experiment(c);
    EXPECT_TRUE(out.diagnostics.empty());
    ASSERT_EQ(out.records.size(), 1 + c.p_values.size() * c.fusion_grid.size());
    for (const auto& r : out.records) {
        EXPECT_EQ(r.hamming_score_baseline, 1.0);
        EXPECT_EQ(r.hamming_score_fused, 1.0);
        EXPECT_EQ(r.unresolved_report_count, 0);
    }
}

TEST(Experiment, ResultsAreDeterministicAcrossThreadCounts) {
    auto c = small_config();
    const auto a = table_to_string(results_table(run_experiment(c).records));
    c.threads = 3;
    const auto b = table_to_string(results_table(run_experiment(c).records));
    EXPECT_EQ(a, b);
    c.master_seed = 10;
    EXPECT_NE(a, table_to_string(results_table(run_experiment(c).records)));
}

TEST(Experiment, RecordLayoutAndBaselineRow) {
    const auto c = small_config();
    const auto out = run_experiment(c);
    const auto& base = out.records.front();
    EXPECT_FALSE(base.p.has_value());
    EXPECT_EQ(base.runtime_s, 0.0);
    for (std::size_t k = 1; k < out.records.size(); ++k) {
        const auto& r = out.records[k];
        EXPECT_EQ(*r.p, c.p_values[(k - 1) / c.fusion_grid.size()]);
        EXPECT_EQ(*r.gamma, c.fusion_grid[(k - 1) % c.fusion_grid.size()].gamma);
        EXPECT_EQ(r.hamming_score_baseline, base.hamming_score_baseline);
    }
    const auto t = results_table(out.records);
    EXPECT_EQ(t.header.size(), 7u);
    EXPECT_TRUE(std::isnan(t.rows[0][0]));
    EXPECT_FALSE(out.epochs.empty());
}

TEST(Experiment, ConfigJsonRoundTrip) {
    auto c = small_config();
    c.p_values = {0.1, 0.55, 1.0};
    c.fusion_grid = {{1.5, 0.0}, {2.25, 0.1}};
    c.layout = SensorLayout{{0, 3, 7}, {1, 2}};
    c.training.c_penalty = 0.125;
    c.false_report_rate = 0.75;
    const auto doc = experiment_config_to_json(c);
    EXPECT_EQ(experiment_config_to_json(experiment_config_from_json(doc)).dump(), doc.dump());
    auto bad = doc;
    bad["reports"]["p_values"] = {1.5};
    EXPECT_THROW(experiment_config_from_json(bad), ValidationError);
}

TEST(Dataset, SaveLoadRoundTrip) {
    const auto net = generate_benchmark_network(20, 3);
    const auto patterns = generate_demand_patterns(kBenchmarkPatternCount, 3);
    const auto layout = std::make_shared<const SensorLayout>(SensorLayout{{0, 4, 9, 13}, {2, 5}});
    const auto ds = generate_dataset(net, patterns, layout, {12, {}, 50, 0.3, 8});
    const auto dir = (std::filesystem::temp_directory_path() / "leakcrf_ds_test").string();
    save_dataset(ds, dir, "train");
    const auto back = load_dataset(dir, "train");
    EXPECT_EQ(back.step, 50);
    EXPECT_EQ(back.scenarios, ds.scenarios);
    EXPECT_EQ(back.y, ds.y);
    EXPECT_EQ(back.baseline.values, ds.baseline.values);
    ASSERT_EQ(back.x.size(), ds.x.size());
    for (std::size_t i = 0; i < ds.x.size(); ++i) EXPECT_EQ(back.x[i].values, ds.x[i].values);
    EXPECT_EQ(back.baseline.layout_hash(), layout->hash());
}

TEST(Dataset, LabelsMatchScenarios) {
    const auto net = generate_benchmark_network(25, 6);
    const auto ds = generate_dataset(net, generate_demand_patterns(kBenchmarkPatternCount, 6), full_layout(net), {40, {}, 30, 0.0, 4});
    for (std::size_t i = 0; i < ds.x.size(); ++i) {
        LeakSet active;
        for (const auto& l : ds.scenarios[i].leaks)
            if (l.start_step <= 30) active.insert(l.node);
        EXPECT_EQ(leak_set(ds.y[i]), active);
    }
}

TEST(Quality, LeakNodesAreDetected) {
    const auto& f = TrainedFixture::get();
    int leaks = 0, found = 0;
    for (std::size_t i = 0; i < f.test.x.size() && leaks < 50; ++i) {
        const auto y = map_infer(f.model, f.graph, f.fx.all_node_features(f.test.x[i], f.test.baseline));
        for (std::size_t v = 0; v < y.size() && leaks < 50; ++v)
            if (f.test.y[i][v]) {
                ++leaks;
                found += y[v];
            }
    }
    ASSERT_EQ(leaks, 50);
    EXPECT_GE(found, 45);
}

TEST(Quality, CalibrationImprovesBrierScore) {
    const auto& f = TrainedFixture::get();
    double cal = 0.0, raw = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < f.test.x.size(); ++i) {
        const auto feats = f.fx.all_node_features(f.test.x[i], f.test.baseline);
        const auto pot = make_potentials(f.model, f.graph, feats);
        const auto margins = node_margins(pot, f.graph, map_infer(pot, f.graph));
        const auto p = calibrated_probabilities(margins, *f.model.calibration).p1;
        for (std::size_t v = 0; v < margins.size(); ++v) {
            const double t = f.test.y[i][v];
            cal += (p[v] - t) * (p[v] - t);
            raw += (sigmoid(margins[v]) - t) * (sigmoid(margins[v]) - t);
            ++count;
        }
    }
    EXPECT_LE(cal / count, raw / count);
}
