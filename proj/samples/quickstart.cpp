// Walks through both phases on a small generated network:
// simulate a leak day, train a CRF on labelled snapshots, localise the leaks of
// one held-out scenario and repair the prediction with simulated citizen reports.

#include <iostream>
#include <memory>

#include <leakcrf/leakcrf.hpp>

using namespace leakcrf;

namespace {

void print_set(const char* label, const LeakSet& s) {
    std::cout << label << " {";
    const char* sep = "";
    for (auto v : s) {
        std::cout << sep << v;
        sep = ", ";
    }
    std::cout << "}\n";
}

}  // namespace

int main() {
    const std::uint64_t seed = 7;
    const auto net = generate_benchmark_network(48, seed);
    const auto patterns = generate_demand_patterns(kBenchmarkPatternCount, seed);
    auto layout = std::make_shared<const SensorLayout>(SensorLayout::full(net));
    std::cout << "network: " << net.node_count() << " nodes, " << net.pipes.size() << " pipes, "
              << layout->dimension() << " sensors\n";

    // A full day with one scenario, to show the time-series simulator.
    const auto day = simulate(net, generate_scenario(net, {}, seed), patterns, *layout, {});
    int leaking = 0;
    for (auto l : day.labels.back()) leaking += l;
    std::cout << "simulated " << day.states.size() << " steps; " << leaking << " node(s) leaking at the last step\n";

    // Phase I: train on end-of-day snapshots.
    DatasetSpec spec;
    spec.count = 300;
    spec.sensor_noise_sigma = 0.5;
    spec.seed = derive_seed(seed, {1});
    const auto train_ds = generate_dataset(net, patterns, layout, spec);
    spec.count = 20;
    spec.seed = derive_seed(seed, {2});
    const auto test_ds = generate_dataset(net, patterns, layout, spec);

    const FeatureExtractor fx(net, layout, kDefaultHopRadius);
    const auto graph = CrfGraph::from_network(net);
    TrainingConfig tc = benchmark_training();
    tc.max_epochs = 15;
    tc.seed = seed;
    const auto run = train(featurize(train_ds, fx), graph, tc, {kDefaultHopRadius, kNodeFeatureDim, layout->hash()});
    std::cout << "training objective: " << run.epochs.front().objective << " -> " << run.epochs.back().objective
              << " after " << run.epochs.size() << " epochs\n";

    // Phase II on the held-out scenarios.
    double base = 0.0, fused_score = 0.0;
    for (std::size_t i = 0; i < test_ds.x.size(); ++i) {
        const auto p1 = phase_one(run.model, graph, fx.all_node_features(test_ds.x[i], test_ds.baseline), {});
        const auto truth = leak_set(test_ds.y[i]);
        const auto reports = simulate_reports(test_ds.scenarios[i], net, {0.7, 0.5, 2.0, 0.0}, derive_seed(seed, {3, i}));
        const auto fused = greedy_fuse(leak_set(p1.labels), build_cliques(reports, net, 2.0), p1.p1, {0.0});
        base += hamming_score(leak_set(p1.labels), truth);
        fused_score += hamming_score(fused.leaks, truth);
        if (i == 0) {
            print_set("scenario 0 truth:  ", truth);
            print_set("scenario 0 phase I:", leak_set(p1.labels));
            print_set("scenario 0 fused:  ", fused.leaks);
        }
    }
    const auto n = static_cast<double>(test_ds.x.size());
    std::cout << "mean Hamming score over " << test_ds.x.size() << " scenarios: phase I " << base / n << ", fused "
              << fused_score / n << "\n";
}
