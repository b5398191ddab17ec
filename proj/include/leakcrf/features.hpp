#pragma once

// Observation vectors, localised per-node features and the joint feature map
// theta(x, y) = [unary block for label 0 | unary block for label 1 | edge label-pair counts].

#include <algorithm>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "hydrosim.hpp"
#include "network.hpp"

namespace leakcrf {

using LabelAssignment = std::vector<std::uint8_t>;

/// mean, min, max of neighbourhood residuals; own pressure residual; net inflow residual; bias
inline constexpr int kNodeFeatureDim = 6;
inline constexpr int kDefaultHopRadius = 2;
inline constexpr int kPairwiseDim = 4;     // (0,0), (0,1), (1,0), (1,1)

inline constexpr std::size_t joint_feature_dim(std::size_t node_dim) { return 2 * node_dim + kPairwiseDim; }

/// Index of the pairwise weight for labels (a, b) inside the pair block.
inline constexpr std::size_t pair_slot(int a, int b) { return static_cast<std::size_t>(2 * a + b); }

struct ObservationVector {
    std::vector<double> values;
    int step = 0;
    std::shared_ptr<const SensorLayout> layout;

    std::uint64_t layout_hash() const { return layout ? layout->hash() : 0; }
};

/// Undirected CRF graph: one edge per node pair joined by at least one open pipe.
struct CrfGraph {
    std::size_t num_nodes = 0;
    std::vector<std::pair<NodeId, NodeId>> edges;  // first < second, sorted
    std::vector<std::vector<NodeId>> adj;

    static CrfGraph from_edges(std::size_t n, std::vector<std::pair<NodeId, NodeId>> edges) {
        CrfGraph g;
        g.num_nodes = n;
        for (auto& e : edges) {
            if (e.first == e.second || e.first < 0 || e.second < 0 || static_cast<std::size_t>(e.first) >= n ||
                static_cast<std::size_t>(e.second) >= n)
                throw ValidationError("invalid CRF edge");
            if (e.first > e.second) std::swap(e.first, e.second);
        }
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
        g.edges = std::move(edges);
        g.adj.assign(n, {});
        for (auto [a, b] : g.edges) {
            g.adj[a].push_back(b);
            g.adj[b].push_back(a);
        }
        for (auto& a : g.adj) std::sort(a.begin(), a.end());
        return g;
    }

    static CrfGraph from_network(const WaterNetwork& net) {
        std::vector<std::pair<NodeId, NodeId>> e;
        for (const auto& p : net.pipes)
            if (p.is_open()) e.emplace_back(p.from, p.to);
        return from_edges(net.node_count(), std::move(e));
    }
};

/// Row-major [node][feature] matrix.
struct NodeFeatures {
    std::size_t num_nodes = 0;
    std::size_t dim = 0;
    std::vector<double> values;

    NodeFeatures() = default;
    NodeFeatures(std::size_t n, std::size_t d) : num_nodes(n), dim(d), values(n * d, 0.0) {}

    std::span<double> row(std::size_t v) { return {values.data() + v * dim, dim}; }
    std::span<const double> row(std::size_t v) const { return {values.data() + v * dim, dim}; }
};

// ---------------------------------------------------------------------------

inline ObservationVector extract_observations(const SimulationResult& result, const SensorLayout& layout, int step) {
    if (step < 0 || static_cast<std::size_t>(step) >= result.observations.size())
        throw ValidationError("step " + std::to_string(step) + " is out of range");
    if (layout.hash() != result.layout.hash() || layout != result.layout)
        throw DimensionError("layout does not match the layout the simulation recorded");
    return {result.observations[step], step, std::make_shared<const SensorLayout>(layout)};
}

/// Per-node neighbourhoods for one (network, layout, hop radius). A pressure sensor
/// belongs to v's neighbourhood when its node is within k hops; a flow sensor when
/// both pipe endpoints are.
class FeatureExtractor {
public:
    FeatureExtractor(const WaterNetwork& net, std::shared_ptr<const SensorLayout> layout, int k = kDefaultHopRadius)
        : layout_(std::move(layout)), k_(k), n_(net.node_count()) {
        if (!layout_) throw ValidationError("feature extractor needs a sensor layout");
        if (k < 0) throw ValidationError("hop radius k must be >= 0");
        validate_layout(net, *layout_);
        hash_ = layout_->hash();
        const auto adj = adjacency(net);
        const auto np = layout_->pressure_sensors.size();
        sensors_.resize(n_);
        incident_.resize(n_);
        own_.assign(n_, -1);
        for (std::size_t f = 0; f < layout_->flow_sensors.size(); ++f) {
            const auto& p = net.pipes[layout_->flow_sensors[f]];
            if (!p.is_open()) continue;
            incident_[p.to].push_back({static_cast<int>(np + f), +1.0});
            incident_[p.from].push_back({static_cast<int>(np + f), -1.0});
        }
        for (std::size_t s = 0; s < np; ++s) own_[layout_->pressure_sensors[s]] = static_cast<int>(s);
        for (std::size_t v = 0; v < n_; ++v) {
            const auto dist = hop_distances(adj, static_cast<NodeId>(v));
            auto near = [&](NodeId u) { return dist[u] >= 0 && dist[u] <= k; };
            for (std::size_t s = 0; s < np; ++s)
                if (near(layout_->pressure_sensors[s])) sensors_[v].push_back({static_cast<int>(s), false});
            for (std::size_t f = 0; f < layout_->flow_sensors.size(); ++f) {
                const auto& p = net.pipes[layout_->flow_sensors[f]];
                if (near(p.from) && near(p.to)) sensors_[v].push_back({static_cast<int>(np + f), true});
            }
        }
    }

    int hop_radius() const noexcept { return k_; }
    std::uint64_t layout_hash() const noexcept { return hash_; }
    const SensorLayout& layout() const noexcept { return *layout_; }

    /// Residual of one sensor: pressure difference, or change in flow magnitude
    /// (flow sign only encodes the stored pipe orientation).
    static double residual(double x, double base, bool is_flow) noexcept {
        return is_flow ? std::abs(x) - std::abs(base) : x - base;
    }

    void node_features(const ObservationVector& x, const ObservationVector& baseline, NodeId v,
                       std::span<double> out) const {
        check(x, baseline);
        if (v < 0 || static_cast<std::size_t>(v) >= n_) throw ValidationError("invalid node id " + std::to_string(v));
        double sum = 0.0, lo = 0.0, hi = 0.0;
        const auto& nb = sensors_[v];
        for (std::size_t i = 0; i < nb.size(); ++i) {
            const auto [s, is_flow] = nb[i];
            const double r = residual(x.values[s], baseline.values[s], is_flow);
            sum += r;
            lo = i == 0 ? r : std::min(lo, r);
            hi = i == 0 ? r : std::max(hi, r);
        }
        out[0] = nb.empty() ? 0.0 : sum / static_cast<double>(nb.size());
        out[1] = lo;
        out[2] = hi;
        out[3] = own_[v] >= 0 ? x.values[own_[v]] - baseline.values[own_[v]] : 0.0;
        // change in measured net inflow; equals the extra outflow (a leak) at v when all incident pipes are sensed
        double inflow = 0.0;
        for (const auto& [s, sign] : incident_[v]) inflow += sign * (x.values[s] - baseline.values[s]);
        out[4] = inflow;
        out[5] = 1.0;
    }

    std::vector<double> node_features(const ObservationVector& x, const ObservationVector& baseline, NodeId v) const {
        std::vector<double> f(kNodeFeatureDim);
        node_features(x, baseline, v, f);
        return f;
    }

    NodeFeatures all_node_features(const ObservationVector& x, const ObservationVector& baseline) const {
        NodeFeatures f(n_, kNodeFeatureDim);
        for (std::size_t v = 0; v < n_; ++v) node_features(x, baseline, static_cast<NodeId>(v), f.row(v));
        return f;
    }

private:
    void check(const ObservationVector& x, const ObservationVector& baseline) const {
        if (x.layout_hash() != hash_ || baseline.layout_hash() != hash_)
            throw DimensionError("observation layout does not match the feature layout");
        if (x.values.size() != layout_->dimension() || baseline.values.size() != layout_->dimension())
            throw DimensionError("observation length does not match the sensor layout");
    }

    struct SensorRef {
        int index;
        bool is_flow;
    };

    std::shared_ptr<const SensorLayout> layout_;
    int k_;
    std::size_t n_;
    std::uint64_t hash_ = 0;
    struct IncidentFlow {
        int index;
        double sign;  // +1 when positive flow enters v
    };

    std::vector<std::vector<SensorRef>> sensors_;
    std::vector<std::vector<IncidentFlow>> incident_;
    std::vector<int> own_;
};

inline std::vector<double> node_features(const ObservationVector& x, const ObservationVector& baseline,
                                         const WaterNetwork& net, NodeId v, int k = kDefaultHopRadius) {
    if (x.layout_hash() != baseline.layout_hash()) throw DimensionError("x and baseline use different layouts");
    return FeatureExtractor(net, x.layout, k).node_features(x, baseline, v);
}

inline void check_labels(const LabelAssignment& y, std::size_t n) {
    if (y.size() != n)
        throw DimensionError("label vector has " + std::to_string(y.size()) + " entries for " + std::to_string(n) +
                             " nodes");
    for (auto l : y)
        if (l > 1) throw ValidationError("label outside {0, 1}");
}

/// theta(x, y) over precomputed node features.
inline std::vector<double> joint_feature(const CrfGraph& g, const NodeFeatures& f, const LabelAssignment& y) {
    if (f.num_nodes != g.num_nodes) throw DimensionError("feature rows do not match graph nodes");
    check_labels(y, g.num_nodes);
    const auto d = f.dim;
    std::vector<double> theta(joint_feature_dim(d), 0.0);
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
        const auto row = f.row(v);
        const std::size_t off = y[v] * d;
        for (std::size_t i = 0; i < d; ++i) theta[off + i] += row[i];
    }
    // undirected: a discordant edge counts half toward (0,1) and half toward (1,0)
    for (auto [a, b] : g.edges) {
        const int ya = y[a], yb = y[b];
        if (ya == yb) {
            theta[2 * d + pair_slot(ya, yb)] += 1.0;
        } else {
            theta[2 * d + pair_slot(0, 1)] += 0.5;
            theta[2 * d + pair_slot(1, 0)] += 0.5;
        }
    }
    return theta;
}

inline std::vector<double> joint_feature(const WaterNetwork& net, const ObservationVector& x, const LabelAssignment& y,
                                         const ObservationVector& baseline, int k = kDefaultHopRadius) {
    check_labels(y, net.node_count());
    FeatureExtractor fx(net, x.layout, k);
    return joint_feature(CrfGraph::from_network(net), fx.all_node_features(x, baseline), y);
}

}  // namespace leakcrf
