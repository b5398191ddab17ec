#pragma once

// Labelled observation datasets: one sample per random leak scenario, observed at a
// single time step against the no-leak baseline of that step.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "features.hpp"
#include "hydrosim.hpp"
#include "network.hpp"
#include "random.hpp"
#include "ssvm.hpp"
#include "table.hpp"

namespace leakcrf {

struct DatasetSpec {
    std::size_t count = 0;
    ScenarioConfig scenarios;
    int step = kStepsPerDay - 1;
    double sensor_noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

struct Dataset {
    std::vector<Scenario> scenarios;
    std::vector<ObservationVector> x;
    std::vector<LabelAssignment> y;  // labels at the observed step
    ObservationVector baseline;      // noise-free, no-leak reading at the same step
    int step = 0;
};

/// No-leak sensor readings at `step`.
inline ObservationVector baseline_observation(const WaterNetwork& net, const std::vector<DemandPattern>& patterns,
                                              std::shared_ptr<const SensorLayout> layout, int step,
                                              const SolverOptions& solver = {}) {
    const auto st = solve_steady_state(net, demands_at(net, patterns, step), {}, solver);
    return {read_sensors(net, *layout, st), step, layout};
}

/// Scenario i is drawn with seed derive_seed(spec.seed, {i}). The observation equals
/// simulate(...).observations[step] for that scenario (computed for the one step only).
inline Dataset generate_dataset(const WaterNetwork& net, const std::vector<DemandPattern>& patterns,
                                std::shared_ptr<const SensorLayout> layout, const DatasetSpec& spec,
                                const SolverOptions& solver = {}) {
    validate_layout(net, *layout);
    if (spec.step < 0 || spec.step >= kStepsPerDay) throw ValidationError("dataset step out of range");
    Dataset ds;
    ds.step = spec.step;
    ds.baseline = baseline_observation(net, patterns, layout, spec.step, solver);
    const auto demands = demands_at(net, patterns, spec.step);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < spec.count; ++i) {
        auto sc = generate_scenario(net, spec.scenarios, derive_seed(spec.seed, {i}));
        const auto st = solve_steady_state(net, demands, leaks_active_at(sc, spec.step), solver);
        auto x = read_sensors(net, *layout, st);
        if (spec.sensor_noise_sigma > 0) {
            auto rng = make_rng(spec.seed, {i, 0x6e6f6973});
            for (auto& v : x) v += spec.sensor_noise_sigma * noise(rng);
        }
        LabelAssignment y(net.node_count(), 0);
        for (const auto& l : sc.leaks)
            if (spec.step >= l.start_step) y[l.node] = 1;
        ds.x.push_back({std::move(x), spec.step, layout});
        ds.y.push_back(std::move(y));
        ds.scenarios.push_back(std::move(sc));
    }
    return ds;
}

inline std::vector<FeaturizedSample> featurize(const Dataset& ds, const FeatureExtractor& fx) {
    std::vector<FeaturizedSample> out;
    out.reserve(ds.x.size());
    for (std::size_t i = 0; i < ds.x.size(); ++i) out.push_back({fx.all_node_features(ds.x[i], ds.baseline), ds.y[i]});
    return out;
}

// ---------------------------------------------------------------------------
// persistence: <dir>/<split>_observations.csv, <split>_labels.csv,
// <split>_baseline.csv and <split>_scenarios.json

inline void save_dataset(const Dataset& ds, const std::string& dir, const std::string& split) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const auto base = (fs::path(dir) / split).string();
    const auto& layout = *ds.baseline.layout;

    Table obs;
    obs.comments = {" leakcrf observations v1"};
    obs.header = {"sample"};
    for (auto& s : sensor_names(layout)) obs.header.push_back(s);
    for (std::size_t i = 0; i < ds.x.size(); ++i) {
        std::vector<double> row{static_cast<double>(i)};
        row.insert(row.end(), ds.x[i].values.begin(), ds.x[i].values.end());
        obs.rows.push_back(std::move(row));
    }
    write_table(obs, base + "_observations.csv");

    Table bl = obs;
    bl.header[0] = "step";
    bl.rows = {{static_cast<double>(ds.step)}};
    bl.rows[0].insert(bl.rows[0].end(), ds.baseline.values.begin(), ds.baseline.values.end());
    write_table(bl, base + "_baseline.csv");

    write_table(labels_table(ds.y, "sample"), base + "_labels.csv");

    nlohmann::json manifest{{"format_version", 1},
                            {"step", ds.step},
                            {"layout_hash", layout.hash()},
                            {"scenarios", nlohmann::json::array()}};
    for (const auto& sc : ds.scenarios) manifest["scenarios"].push_back(scenario_to_json(sc));
    detail::write_text_file(base + "_scenarios.json", manifest.dump(2) + "\n");
}

inline Dataset load_dataset(const std::string& dir, const std::string& split) {
    namespace fs = std::filesystem;
    const auto base = (fs::path(dir) / split).string();
    const auto obs = read_table(base + "_observations.csv");
    const auto bl = read_table(base + "_baseline.csv");
    const auto labels = labels_from_table(read_table(base + "_labels.csv"));
    const auto manifest = detail::parse_json_text(detail::read_text_file(base + "_scenarios.json"), base + "_scenarios.json");
    detail::check_format_version(manifest, 1, base + "_scenarios.json");

    auto layout = std::make_shared<const SensorLayout>(
        layout_from_sensor_names(std::vector<std::string>(obs.header.begin() + 1, obs.header.end())));
    if (layout->hash() != detail::get_field<std::uint64_t>(manifest, "layout_hash", base + "_scenarios.json"))
        throw ParseError(base + "_observations.csv: sensor columns do not match the recorded layout hash");
    if (bl.rows.size() != 1 || bl.header.size() != obs.header.size())
        throw ParseError(base + "_baseline.csv: expected one row with the observation columns");
    if (labels.size() != obs.rows.size())
        throw ParseError(base + "_labels.csv: row count differs from the observations");

    Dataset ds;
    ds.step = detail::get_field<int>(manifest, "step", base + "_scenarios.json");
    ds.baseline = {std::vector<double>(bl.rows[0].begin() + 1, bl.rows[0].end()), ds.step, layout};
    for (const auto& row : obs.rows) ds.x.push_back({std::vector<double>(row.begin() + 1, row.end()), ds.step, layout});
    ds.y = labels;
    const auto& sc = detail::require(manifest, "scenarios", base + "_scenarios.json");
    for (std::size_t i = 0; i < sc.size(); ++i)
        ds.scenarios.push_back(scenario_from_json(sc[i], base + "_scenarios.json.scenarios[" + std::to_string(i) + "]"));
    if (ds.scenarios.size() != ds.x.size())
        throw ParseError(base + "_scenarios.json: scenario count differs from the observations");
    return ds;
}

/// <split>_features.csv (sample, node, f0..f{d-1}) and its manifest <split>_features.json.
inline void save_features(const std::vector<FeaturizedSample>& data, const FeatureExtractor& fx, const std::string& dir,
                          const std::string& split) {
    namespace fs = std::filesystem;
    const auto base = (fs::path(dir) / split).string();
    const std::size_t d = data.empty() ? kNodeFeatureDim : data.front().features.dim;
    Table t;
    t.comments = {" leakcrf node features v1"};
    t.header = {"sample", "node"};
    for (std::size_t i = 0; i < d; ++i) t.header.push_back("f" + std::to_string(i));
    for (std::size_t s = 0; s < data.size(); ++s)
        for (std::size_t v = 0; v < data[s].features.num_nodes; ++v) {
            std::vector<double> row{static_cast<double>(s), static_cast<double>(v)};
            const auto r = data[s].features.row(v);
            row.insert(row.end(), r.begin(), r.end());
            t.rows.push_back(std::move(row));
        }
    write_table(t, base + "_features.csv");
    nlohmann::json manifest{{"format_version", 1},
                            {"d_f", d},
                            {"k", fx.hop_radius()},
                            {"layout_hash", fx.layout_hash()},
                            {"samples", data.size()}};
    detail::write_text_file(base + "_features.json", manifest.dump(2) + "\n");
}

}  // namespace leakcrf
