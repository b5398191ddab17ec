#pragma once

// Water-network graph model: nodes (pipe joints), pipes, fixed-head sources
// and sensor layouts, plus the versioned JSON network file format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "random.hpp"

namespace leakcrf {

using NodeId = int;
using PipeId = int;

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

/// Planar Euclidean distance, meters.
inline double distance(const Point2& a, const Point2& b) noexcept {
    return std::hypot(a.x - b.x, a.y - b.y);
}

struct NodeRecord {
    NodeId id = 0;
    Point2 coord;
    double elevation = 0.0;    // m
    double base_demand = 0.0;  // L/s
    int demand_pattern_id = 0;

    friend bool operator==(const NodeRecord&, const NodeRecord&) = default;
};

enum class PipeStatus { open, closed };

struct PipeRecord {
    PipeId id = 0;
    NodeId from = 0;  // stored endpoint order defines the sign of flow
    NodeId to = 0;
    double length = 1.0;     // m
    double diameter = 0.1;   // m
    double roughness = 100;  // Hazen-Williams C
    PipeStatus status = PipeStatus::open;

    bool is_open() const noexcept { return status == PipeStatus::open; }

    friend bool operator==(const PipeRecord&, const PipeRecord&) = default;
};

struct Source {
    NodeId node = 0;
    double head = 0.0;  // m

    friend bool operator==(const Source&, const Source&) = default;
};

struct WaterNetwork {
    std::vector<NodeRecord> nodes;
    std::vector<PipeRecord> pipes;
    std::vector<Source> sources;

    std::size_t node_count() const noexcept { return nodes.size(); }
    std::size_t pipe_count() const noexcept { return pipes.size(); }

    bool is_source(NodeId v) const noexcept {
        return std::any_of(sources.begin(), sources.end(), [v](const Source& s) { return s.node == v; });
    }

    /// Node ids that are not sources, ascending.
    std::vector<NodeId> junctions() const {
        std::vector<NodeId> out;
        for (const auto& n : nodes)
            if (!is_source(n.id)) out.push_back(n.id);
        return out;
    }

    friend bool operator==(const WaterNetwork&, const WaterNetwork&) = default;
};

struct SensorLayout {
    std::vector<NodeId> pressure_sensors;
    std::vector<PipeId> flow_sensors;

    std::size_t dimension() const noexcept { return pressure_sensors.size() + flow_sensors.size(); }

    /// Every node carries a pressure sensor and every pipe a flow sensor.
    static SensorLayout full(const WaterNetwork& net) {
        SensorLayout l;
        for (const auto& n : net.nodes) l.pressure_sensors.push_back(n.id);
        for (const auto& p : net.pipes) l.flow_sensors.push_back(p.id);
        return l;
    }

    /// Stable FNV-1a fingerprint of the sensor order.
    std::uint64_t hash() const noexcept {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto feed = [&h](std::int64_t v) {
            for (int i = 0; i < 8; ++i) {
                h ^= static_cast<std::uint64_t>((v >> (8 * i)) & 0xff);
                h *= 0x100000001b3ULL;
            }
        };
        feed(static_cast<std::int64_t>(pressure_sensors.size()));
        for (auto v : pressure_sensors) feed(v);
        feed(static_cast<std::int64_t>(flow_sensors.size()));
        for (auto p : flow_sensors) feed(p);
        return h;
    }

    friend bool operator==(const SensorLayout&, const SensorLayout&) = default;
};

// ---------------------------------------------------------------------------
// validation

namespace detail {

template <class Records>
void check_ids_contiguous(const Records& recs, const char* what) {
    std::vector<int> seen(recs.size(), 0);
    for (const auto& r : recs) {
        if (r.id < 0 || static_cast<std::size_t>(r.id) >= recs.size())
            throw ValidationError(std::string(what) + " ids must be contiguous from 0; found id " + std::to_string(r.id) +
                                  " with " + std::to_string(recs.size()) + " " + what + "s");
        if (seen[r.id]++)
            throw ValidationError(std::string("duplicate ") + what + " id " + std::to_string(r.id));
    }
}

}  // namespace detail

/// Checks every structural invariant and sorts records by id. Throws ValidationError.
inline void validate_network(WaterNetwork& net) {
    // duplicates are reported before contiguity so the message names the repeated id
    {
        std::set<int> ids;
        for (const auto& n : net.nodes)
            if (!ids.insert(n.id).second) throw ValidationError("duplicate node id " + std::to_string(n.id));
        ids.clear();
        for (const auto& p : net.pipes)
            if (!ids.insert(p.id).second) throw ValidationError("duplicate pipe id " + std::to_string(p.id));
    }
    detail::check_ids_contiguous(net.nodes, "node");
    detail::check_ids_contiguous(net.pipes, "pipe");
    std::sort(net.nodes.begin(), net.nodes.end(), [](auto& a, auto& b) { return a.id < b.id; });
    std::sort(net.pipes.begin(), net.pipes.end(), [](auto& a, auto& b) { return a.id < b.id; });

    const auto n = static_cast<int>(net.nodes.size());
    for (const auto& v : net.nodes) {
        const auto tag = "node " + std::to_string(v.id);
        if (!std::isfinite(v.elevation)) throw ValidationError(tag + ": elevation must be finite");
        if (!std::isfinite(v.coord.x) || !std::isfinite(v.coord.y))
            throw ValidationError(tag + ": coordinates must be finite");
        if (!(v.base_demand >= 0.0) || !std::isfinite(v.base_demand))
            throw ValidationError(tag + ": base_demand must be >= 0");
    }
    for (const auto& p : net.pipes) {
        const auto tag = "pipe " + std::to_string(p.id);
        if (p.from < 0 || p.from >= n || p.to < 0 || p.to >= n)
            throw ValidationError(tag + ": endpoint is not a valid node id");
        if (p.from == p.to) throw ValidationError(tag + ": endpoints must be distinct");
        if (!(p.length > 0.0)) throw ValidationError(tag + ": length must be > 0");
        if (!(p.diameter > 0.0)) throw ValidationError(tag + ": diameter must be > 0");
        if (!(p.roughness >= 50.0 && p.roughness <= 200.0))
            throw ValidationError(tag + ": roughness must lie in [50, 200]");
    }
    if (net.sources.empty()) throw ValidationError("network must have at least one source");
    std::set<NodeId> src;
    for (const auto& s : net.sources) {
        if (s.node < 0 || s.node >= n)
            throw ValidationError("source references invalid node id " + std::to_string(s.node));
        if (!src.insert(s.node).second) throw ValidationError("duplicate source node " + std::to_string(s.node));
        if (!std::isfinite(s.head)) throw ValidationError("source " + std::to_string(s.node) + ": head must be finite");
    }
}

inline void validate_layout(const WaterNetwork& net, const SensorLayout& layout) {
    std::set<int> seen;
    for (auto v : layout.pressure_sensors) {
        if (v < 0 || static_cast<std::size_t>(v) >= net.node_count())
            throw ValidationError("pressure sensor references invalid node id " + std::to_string(v));
        if (!seen.insert(v).second) throw ValidationError("duplicate pressure sensor at node " + std::to_string(v));
    }
    seen.clear();
    for (auto p : layout.flow_sensors) {
        if (p < 0 || static_cast<std::size_t>(p) >= net.pipe_count())
            throw ValidationError("flow sensor references invalid pipe id " + std::to_string(p));
        if (!seen.insert(p).second) throw ValidationError("duplicate flow sensor on pipe " + std::to_string(p));
    }
}

// ---------------------------------------------------------------------------
// topology

/// Nodes sharing an open pipe with v, ascending.
inline std::vector<NodeId> neighbors(const WaterNetwork& net, NodeId v) {
    if (v < 0 || static_cast<std::size_t>(v) >= net.node_count())
        throw ValidationError("invalid node id " + std::to_string(v));
    std::set<NodeId> out;
    for (const auto& p : net.pipes) {
        if (!p.is_open()) continue;
        if (p.from == v) out.insert(p.to);
        if (p.to == v) out.insert(p.from);
    }
    return {out.begin(), out.end()};
}

/// Open-pipe adjacency lists for all nodes (ascending, deduplicated).
inline std::vector<std::vector<NodeId>> adjacency(const WaterNetwork& net) {
    std::vector<std::set<NodeId>> sets(net.node_count());
    for (const auto& p : net.pipes) {
        if (!p.is_open()) continue;
        sets[p.from].insert(p.to);
        sets[p.to].insert(p.from);
    }
    std::vector<std::vector<NodeId>> adj(net.node_count());
    for (std::size_t i = 0; i < sets.size(); ++i) adj[i].assign(sets[i].begin(), sets[i].end());
    return adj;
}

/// Hop distance from v over open pipes; -1 when unreachable.
inline std::vector<int> hop_distances(const std::vector<std::vector<NodeId>>& adj, NodeId v) {
    std::vector<int> dist(adj.size(), -1);
    std::queue<NodeId> q;
    dist[v] = 0;
    q.push(v);
    while (!q.empty()) {
        auto u = q.front();
        q.pop();
        for (auto w : adj[u])
            if (dist[w] < 0) {
                dist[w] = dist[u] + 1;
                q.push(w);
            }
    }
    return dist;
}

/// Nodes with no open-pipe path to any source.
inline std::vector<NodeId> unreachable_nodes(const WaterNetwork& net) {
    const auto adj = adjacency(net);
    std::vector<char> seen(net.node_count(), 0);
    std::queue<NodeId> q;
    for (const auto& s : net.sources) {
        seen[s.node] = 1;
        q.push(s.node);
    }
    while (!q.empty()) {
        auto u = q.front();
        q.pop();
        for (auto w : adj[u])
            if (!seen[w]) {
                seen[w] = 1;
                q.push(w);
            }
    }
    std::vector<NodeId> out;
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (!seen[i]) out.push_back(static_cast<NodeId>(i));
    return out;
}

// ---------------------------------------------------------------------------
// benchmark generator

/// Jittered-grid spacing of generated networks (m). Small enough that report radii of
/// a few meters cover one to a handful of nodes.
inline constexpr double kBenchmarkGridSpacing = 2.5;
inline constexpr int kBenchmarkPatternCount = 3;

/// Random connected desk-scale network: nodes on a jittered grid, a random spanning
/// tree over 8-neighbour grid links plus extra loops, average degree in [2, 3].
inline WaterNetwork generate_benchmark_network(int n_nodes, std::uint64_t seed) {
    if (n_nodes < 3) throw ValidationError("generate_benchmark_network: n_nodes must be >= 3");
    auto rng = make_rng(seed, {0x6e6574});
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_nodes))));
    WaterNetwork net;
    net.nodes.resize(n_nodes);
    const double phase_x = unit(rng) * 6.28, phase_y = unit(rng) * 6.28;
    for (int i = 0; i < n_nodes; ++i) {
        auto& nd = net.nodes[i];
        const int r = i / cols, c = i % cols;
        nd.id = i;
        nd.coord = {c * kBenchmarkGridSpacing + (unit(rng) - 0.5) * 0.5 * kBenchmarkGridSpacing,
                    r * kBenchmarkGridSpacing + (unit(rng) - 0.5) * 0.5 * kBenchmarkGridSpacing};
        nd.elevation = 5.0 + 3.0 * std::sin(0.3 * c + phase_x) + 2.0 * std::cos(0.25 * r + phase_y) + unit(rng);
        nd.base_demand = 0.5 + 1.5 * unit(rng);
        nd.demand_pattern_id = static_cast<int>(rng() % kBenchmarkPatternCount);
    }

    // candidate links: 8-neighbourhood on the grid
    std::vector<std::pair<int, int>> candidates;
    for (int i = 0; i < n_nodes; ++i) {
        const int r = i / cols, c = i % cols;
        const int dr[] = {0, 1, 1, 1};
        const int dc[] = {1, -1, 0, 1};
        for (int k = 0; k < 4; ++k) {
            const int rr = r + dr[k], cc = c + dc[k];
            if (cc < 0 || cc >= cols) continue;
            const int j = rr * cols + cc;
            if (j < n_nodes && j != i) candidates.emplace_back(std::min(i, j), std::max(i, j));
        }
    }
    std::shuffle(candidates.begin(), candidates.end(), rng);
    // axis-aligned links first so trees look like street grids
    std::stable_partition(candidates.begin(), candidates.end(), [cols](auto e) {
        const int d = e.second - e.first;
        return d == 1 || d == cols;
    });

    std::vector<int> parent(n_nodes);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&parent](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::vector<std::pair<int, int>> chosen, spare;
    for (auto e : candidates) {
        const int a = find(e.first), b = find(e.second);
        if (a != b) {
            parent[a] = b;
            chosen.push_back(e);
        } else {
            spare.push_back(e);
        }
    }
    // a grid graph with diagonals is always connected, so chosen is a spanning tree
    const int extra_min = std::max(1, static_cast<int>(std::ceil(0.05 * n_nodes)));
    const int extra_max = std::max(extra_min, static_cast<int>(std::floor(0.30 * n_nodes)));
    int extra = extra_min + static_cast<int>(rng() % static_cast<std::uint64_t>(extra_max - extra_min + 1));
    extra = std::min<int>(extra, static_cast<int>(spare.size()));
    chosen.insert(chosen.end(), spare.begin(), spare.begin() + extra);
    std::sort(chosen.begin(), chosen.end());

    const double diameters[] = {0.15, 0.2, 0.25, 0.3};
    for (std::size_t k = 0; k < chosen.size(); ++k) {
        PipeRecord p;
        p.id = static_cast<PipeId>(k);
        p.from = chosen[k].first;
        p.to = chosen[k].second;
        p.length = 100.0 + 300.0 * unit(rng);
        p.diameter = diameters[rng() % 4];
        p.roughness = 90.0 + 50.0 * unit(rng);
        net.pipes.push_back(p);
    }

    double max_elev = 0.0;
    for (const auto& nd : net.nodes) max_elev = std::max(max_elev, nd.elevation);
    std::vector<NodeId> src = {0};
    if (n_nodes >= 40) src.push_back(n_nodes - 1);
    for (auto s : src) {
        net.nodes[s].base_demand = 0.0;
        net.sources.push_back({s, max_elev + 45.0 + 10.0 * unit(rng)});
    }
    validate_network(net);
    return net;
}

// ---------------------------------------------------------------------------
// file format (JSON, format_version 1)

inline constexpr int kNetworkFormatVersion = 1;

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, const std::string& ctx) {
    if (!obj.is_object() || !obj.contains(key)) throw ParseError(ctx + ": missing field '" + key + "'");
    return obj.at(key);
}

template <class T>
T get_field(const nlohmann::json& obj, const char* key, const std::string& ctx) {
    const auto& v = require(obj, key, ctx);
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(ctx + "." + key + ": " + e.what());
    }
}

inline nlohmann::json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(origin + ": " + e.what());
    }
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path);
    out << text;
}

inline void check_format_version(const nlohmann::json& doc, int expected, const std::string& origin) {
    const auto v = get_field<int>(doc, "format_version", origin);
    if (v != expected)
        throw ParseError(origin + ": unsupported format_version " + std::to_string(v) + " (expected " +
                         std::to_string(expected) + ")");
}

}  // namespace detail

inline nlohmann::json network_to_json(const WaterNetwork& net) {
    nlohmann::json doc;
    doc["format_version"] = kNetworkFormatVersion;
    auto& nodes = doc["nodes"] = nlohmann::json::array();
    for (const auto& n : net.nodes)
        nodes.push_back({{"id", n.id},
                         {"coord", {n.coord.x, n.coord.y}},
                         {"elevation", n.elevation},
                         {"base_demand", n.base_demand},
                         {"demand_pattern_id", n.demand_pattern_id}});
    auto& pipes = doc["pipes"] = nlohmann::json::array();
    for (const auto& p : net.pipes)
        pipes.push_back({{"id", p.id},
                         {"endpoints", {p.from, p.to}},
                         {"length", p.length},
                         {"diameter", p.diameter},
                         {"roughness", p.roughness},
                         {"status", p.is_open() ? "open" : "closed"}});
    auto& sources = doc["sources"] = nlohmann::json::array();
    for (const auto& s : net.sources) sources.push_back({{"node", s.node}, {"head", s.head}});
    return doc;
}

inline std::string serialize_network(const WaterNetwork& net) { return network_to_json(net).dump(2) + "\n"; }

inline WaterNetwork network_from_json(const nlohmann::json& doc, const std::string& origin = "network") {
    using detail::get_field;
    using detail::require;
    detail::check_format_version(doc, kNetworkFormatVersion, origin);
    WaterNetwork net;
    const auto& nodes = require(doc, "nodes", origin);
    if (!nodes.is_array()) throw ParseError(origin + ".nodes: expected array");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto ctx = origin + ".nodes[" + std::to_string(i) + "]";
        NodeRecord n;
        n.id = get_field<int>(nodes[i], "id", ctx);
        const auto c = get_field<std::vector<double>>(nodes[i], "coord", ctx);
        if (c.size() != 2) throw ParseError(ctx + ".coord: expected [x, y]");
        n.coord = {c[0], c[1]};
        n.elevation = get_field<double>(nodes[i], "elevation", ctx);
        n.base_demand = get_field<double>(nodes[i], "base_demand", ctx);
        n.demand_pattern_id = get_field<int>(nodes[i], "demand_pattern_id", ctx);
        net.nodes.push_back(n);
    }
    const auto& pipes = require(doc, "pipes", origin);
    if (!pipes.is_array()) throw ParseError(origin + ".pipes: expected array");
    for (std::size_t i = 0; i < pipes.size(); ++i) {
        const auto ctx = origin + ".pipes[" + std::to_string(i) + "]";
        PipeRecord p;
        p.id = get_field<int>(pipes[i], "id", ctx);
        const auto e = get_field<std::vector<int>>(pipes[i], "endpoints", ctx);
        if (e.size() != 2) throw ParseError(ctx + ".endpoints: expected [a, b]");
        p.from = e[0];
        p.to = e[1];
        p.length = get_field<double>(pipes[i], "length", ctx);
        p.diameter = get_field<double>(pipes[i], "diameter", ctx);
        p.roughness = get_field<double>(pipes[i], "roughness", ctx);
        const auto status = get_field<std::string>(pipes[i], "status", ctx);
        if (status == "open")
            p.status = PipeStatus::open;
        else if (status == "closed")
            p.status = PipeStatus::closed;
        else
            throw ParseError(ctx + ".status: expected 'open' or 'closed', got '" + status + "'");
        net.pipes.push_back(p);
    }
    const auto& sources = require(doc, "sources", origin);
    if (!sources.is_array()) throw ParseError(origin + ".sources: expected array");
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const auto ctx = origin + ".sources[" + std::to_string(i) + "]";
        net.sources.push_back({get_field<int>(sources[i], "node", ctx), get_field<double>(sources[i], "head", ctx)});
    }
    validate_network(net);
    return net;
}

inline WaterNetwork parse_network(const std::string& text, const std::string& origin = "network") {
    return network_from_json(detail::parse_json_text(text, origin), origin);
}

inline WaterNetwork load_network(const std::string& path) {
    return parse_network(detail::read_text_file(path), path);
}

inline void save_network(const WaterNetwork& net, const std::string& path) {
    detail::write_text_file(path, serialize_network(net));
}

inline nlohmann::json layout_to_json(const SensorLayout& l) {
    return {{"format_version", 1}, {"pressure_sensors", l.pressure_sensors}, {"flow_sensors", l.flow_sensors}};
}

inline SensorLayout layout_from_json(const nlohmann::json& doc, const std::string& origin = "layout") {
    detail::check_format_version(doc, 1, origin);
    SensorLayout l;
    l.pressure_sensors = detail::get_field<std::vector<int>>(doc, "pressure_sensors", origin);
    l.flow_sensors = detail::get_field<std::vector<int>>(doc, "flow_sensors", origin);
    return l;
}

}  // namespace leakcrf
