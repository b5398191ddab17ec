#pragma once

// Fixtures and independent oracles shared by the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <leakcrf/leakcrf.hpp>

namespace leakcrf::testing {

/// Source (node 0, head H) feeding a straight chain of n-1 junctions at zero elevation.
inline WaterNetwork line_network(int n, double head = 50.0, double length = 100.0, double diameter = 0.3,
                                 double roughness = 100.0) {
    WaterNetwork net;
    for (int i = 0; i < n; ++i) net.nodes.push_back({i, {2.5 * i, 0.0}, 0.0, 0.0, 0});
    for (int i = 0; i + 1 < n; ++i) net.pipes.push_back({i, i, i + 1, length, diameter, roughness, PipeStatus::open});
    net.sources.push_back({0, head});
    validate_network(net);
    return net;
}

inline std::shared_ptr<const SensorLayout> full_layout(const WaterNetwork& net) {
    return std::make_shared<const SensorLayout>(SensorLayout::full(net));
}

/// Erdos-Renyi style graph with edge probability p.
inline CrfGraph random_graph(Rng& rng, std::size_t n, double p) {
    std::bernoulli_distribution edge(p);
    std::vector<std::pair<NodeId, NodeId>> e;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
            if (edge(rng)) e.emplace_back(static_cast<NodeId>(a), static_cast<NodeId>(b));
    return CrfGraph::from_edges(n, std::move(e));
}

inline NodeFeatures random_features(Rng& rng, std::size_t n, std::size_t d) {
    std::normal_distribution<double> g(0.0, 1.0);
    NodeFeatures f(n, d);
    for (auto& v : f.values) v = g(rng);
    return f;
}

inline CrfModel random_model(Rng& rng, std::size_t d, double unary_scale = 1.0, double pair_scale = 1.0) {
    std::normal_distribution<double> g(0.0, 1.0);
    auto m = CrfModel::zeros(d);
    for (std::size_t i = 0; i < 2 * d; ++i) m.w[i] = unary_scale * g(rng);
    for (std::size_t i = 2 * d; i < m.w.size(); ++i) m.w[i] = pair_scale * g(rng);
    return m;
}

/// w . theta(x, y), summed term by term without building theta or potentials.
inline double oracle_score(const std::vector<double>& w, const CrfGraph& g, const NodeFeatures& f,
                           const LabelAssignment& y) {
    const auto d = f.dim;
    double s = 0.0;
    for (std::size_t v = 0; v < g.num_nodes; ++v)
        for (std::size_t i = 0; i < d; ++i) s += w[y[v] * d + i] * f.values[v * d + i];
    const double w00 = w[2 * d], w01 = w[2 * d + 1], w10 = w[2 * d + 2], w11 = w[2 * d + 3];
    for (auto [a, b] : g.edges) {
        if (y[a] == 0 && y[b] == 0) s += w00;
        else if (y[a] == 1 && y[b] == 1) s += w11;
        else s += 0.5 * (w01 + w10);
    }
    return s;
}

inline int oracle_hamming(const LabelAssignment& a, const LabelAssignment& b) {
    int d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
    return d;
}

inline LabelAssignment labels_from_mask(std::uint64_t mask, std::size_t n) {
    LabelAssignment y(n);
    for (std::size_t v = 0; v < n; ++v) y[v] = (mask >> v) & 1u;
    return y;
}

/// Exhaustive maximum of objective(y) over all 2^n labelings.
template <class F>
double oracle_max(std::size_t n, F&& objective) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask)
        best = std::max(best, objective(labels_from_mask(mask, n)));
    return best;
}

/// Lowest energy (= -score) over all labelings.
inline double oracle_min_energy(const CrfModel& m, const CrfGraph& g, const NodeFeatures& f) {
    return -oracle_max(g.num_nodes, [&](const LabelAssignment& y) { return oracle_score(m.w, g, f, y); });
}

/// max_y [Delta(y, y_true) + w.theta(y)] - w.theta(y_true), exhaustively.
inline double oracle_hinge(const CrfModel& m, const CrfGraph& g, const NodeFeatures& f, const LabelAssignment& y_true) {
    const double truth = oracle_score(m.w, g, f, y_true);
    return oracle_max(g.num_nodes, [&](const LabelAssignment& y) {
               return oracle_hamming(y, y_true) + oracle_score(m.w, g, f, y);
           }) -
           truth;
}

/// Closed-form Hazen-Williams head loss (m) for a flow given in L/s, SI formula.
inline double oracle_hw_headloss(double q_lps, double length, double diameter, double roughness) {
    const double q = q_lps / 1000.0;  // m^3/s
    return 10.67 * length * std::pow(q, 1.852) / (std::pow(roughness, 1.852) * std::pow(diameter, 4.87));
}

}  // namespace leakcrf::testing
