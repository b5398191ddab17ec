#pragma once

// Steady-state hydraulics (Hazen-Williams pipes, emitter leaks) and the 24 h
// extended-period driver that produces labelled pressure/flow observations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <nlohmann/json.hpp>

#include "error.hpp"
#include "network.hpp"
#include "random.hpp"
#include "table.hpp"

namespace leakcrf {

inline constexpr int kStepsPerDay = 96;  // 15-minute sampling over 24 h
inline constexpr double kHazenWilliamsExponent = 1.852;

// ---------------------------------------------------------------------------
// demand patterns

struct DemandPattern {
    int id = 0;
    std::vector<double> multipliers;  // kStepsPerDay entries

    friend bool operator==(const DemandPattern&, const DemandPattern&) = default;
};

inline void validate_pattern(const DemandPattern& p) {
    const auto tag = "pattern " + std::to_string(p.id);
    if (p.multipliers.size() != static_cast<std::size_t>(kStepsPerDay))
        throw ValidationError(tag + ": expected " + std::to_string(kStepsPerDay) + " multipliers, got " +
                              std::to_string(p.multipliers.size()));
    for (double m : p.multipliers)
        if (!(m >= 0.0) || !std::isfinite(m)) throw ValidationError(tag + ": multipliers must be finite and >= 0");
    const double mean = std::accumulate(p.multipliers.begin(), p.multipliers.end(), 0.0) / kStepsPerDay;
    if (mean < 0.5 || mean > 1.5) throw ValidationError(tag + ": mean multiplier must lie in [0.5, 1.5]");
}

/// Diurnal residential-style curves (morning and evening peaks), normalised to mean 1.
inline std::vector<DemandPattern> generate_demand_patterns(int count, std::uint64_t seed) {
    auto rng = make_rng(seed, {0x706174});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<DemandPattern> out;
    for (int id = 0; id < count; ++id) {
        DemandPattern p{id, std::vector<double>(kStepsPerDay)};
        const double am = 7.0 + 2.0 * unit(rng), pm = 18.0 + 3.0 * unit(rng);
        const double a = 0.6 + 0.4 * unit(rng), b = 0.5 + 0.5 * unit(rng);
        for (int t = 0; t < kStepsPerDay; ++t) {
            const double h = t * 0.25;
            p.multipliers[t] = 0.4 + a * std::exp(-0.5 * std::pow((h - am) / 1.5, 2)) +
                               b * std::exp(-0.5 * std::pow((h - pm) / 2.0, 2)) + 0.1 * unit(rng);
        }
        const double mean = std::accumulate(p.multipliers.begin(), p.multipliers.end(), 0.0) / kStepsPerDay;
        for (auto& m : p.multipliers) m /= mean;
        out.push_back(std::move(p));
    }
    return out;
}

inline nlohmann::json patterns_to_json(const std::vector<DemandPattern>& patterns) {
    nlohmann::json doc{{"format_version", 1}, {"patterns", nlohmann::json::array()}};
    for (const auto& p : patterns) doc["patterns"].push_back({{"id", p.id}, {"multipliers", p.multipliers}});
    return doc;
}

inline std::vector<DemandPattern> patterns_from_json(const nlohmann::json& doc, const std::string& origin = "patterns") {
    detail::check_format_version(doc, 1, origin);
    std::vector<DemandPattern> out;
    const auto& arr = detail::require(doc, "patterns", origin);
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto ctx = origin + ".patterns[" + std::to_string(i) + "]";
        DemandPattern p{detail::get_field<int>(arr[i], "id", ctx),
                        detail::get_field<std::vector<double>>(arr[i], "multipliers", ctx)};
        validate_pattern(p);
        out.push_back(std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------------------
// leak scenarios

struct LeakEvent {
    NodeId node = 0;
    double emitter_coeff = 1.0;  // L/s per sqrt(m) of pressure head
    int start_step = 0;

    friend bool operator==(const LeakEvent&, const LeakEvent&) = default;
};

struct Scenario {
    std::vector<LeakEvent> leaks;
    std::uint64_t seed = 0;

    friend bool operator==(const Scenario&, const Scenario&) = default;
};

struct ScenarioConfig {
    int max_leaks = 3;
    double min_emitter = 0.5;
    double max_emitter = 1.5;
    int min_start_step = 0;
    int max_start_step = kStepsPerDay - 1;
};

inline void validate_scenario(const WaterNetwork& net, const Scenario& s) {
    std::vector<char> used(net.node_count(), 0);
    for (const auto& l : s.leaks) {
        if (l.node < 0 || static_cast<std::size_t>(l.node) >= net.node_count())
            throw ValidationError("leak at invalid node id " + std::to_string(l.node));
        if (used[l.node]++) throw ValidationError("duplicate leak node " + std::to_string(l.node));
        if (!(l.emitter_coeff > 0.0)) throw ValidationError("leak emitter_coeff must be > 0");
        if (l.start_step < 0 || l.start_step >= kStepsPerDay)
            throw ValidationError("leak start_step must lie in [0, " + std::to_string(kStepsPerDay - 1) + "]");
    }
}

/// Leak count uniform in [0, max_leaks]; nodes uniform without replacement over junctions.
inline Scenario generate_scenario(const WaterNetwork& net, const ScenarioConfig& cfg, std::uint64_t seed) {
    const auto junctions = net.junctions();
    if (cfg.max_leaks < 0) throw ValidationError("max_leaks must be >= 0");
    if (static_cast<std::size_t>(cfg.max_leaks) > junctions.size())
        throw ValidationError("max_leaks (" + std::to_string(cfg.max_leaks) + ") exceeds junction count (" +
                              std::to_string(junctions.size()) + ")");
    if (!(cfg.min_emitter > 0.0) || cfg.max_emitter < cfg.min_emitter)
        throw ValidationError("emitter size range must be nonempty and positive");
    if (cfg.min_start_step < 0 || cfg.max_start_step >= kStepsPerDay || cfg.max_start_step < cfg.min_start_step)
        throw ValidationError("start step range must be nonempty within the day");

    auto rng = make_rng(seed, {0x736365});
    Scenario s;
    s.seed = seed;
    const int count = std::uniform_int_distribution<int>(0, cfg.max_leaks)(rng);
    std::vector<NodeId> picked;
    std::sample(junctions.begin(), junctions.end(), std::back_inserter(picked), count, rng);
    std::shuffle(picked.begin(), picked.end(), rng);
    std::uniform_real_distribution<double> size(cfg.min_emitter, cfg.max_emitter);
    std::uniform_int_distribution<int> start(cfg.min_start_step, cfg.max_start_step);
    for (auto v : picked) s.leaks.push_back({v, size(rng), start(rng)});
    return s;
}

inline nlohmann::json scenario_to_json(const Scenario& s) {
    nlohmann::json leaks = nlohmann::json::array();
    for (const auto& l : s.leaks)
        leaks.push_back({{"node", l.node}, {"emitter_coeff", l.emitter_coeff}, {"start_step", l.start_step}});
    return {{"seed", s.seed}, {"leaks", leaks}};
}

inline Scenario scenario_from_json(const nlohmann::json& j, const std::string& ctx = "scenario") {
    Scenario s;
    s.seed = detail::get_field<std::uint64_t>(j, "seed", ctx);
    const auto& leaks = detail::require(j, "leaks", ctx);
    for (std::size_t i = 0; i < leaks.size(); ++i) {
        const auto c = ctx + ".leaks[" + std::to_string(i) + "]";
        s.leaks.push_back({detail::get_field<int>(leaks[i], "node", c),
                           detail::get_field<double>(leaks[i], "emitter_coeff", c),
                           detail::get_field<int>(leaks[i], "start_step", c)});
    }
    return s;
}

// ---------------------------------------------------------------------------
// steady-state solver

struct HydraulicState {
    std::vector<double> heads;         // m, per node
    std::vector<double> flows;         // L/s, per pipe, positive from -> to
    std::vector<double> leak_outflow;  // L/s, per node
    int iterations = 0;
    double mass_residual = 0.0;  // max |nodal imbalance|, L/s
    double head_residual = 0.0;  // max |head difference - friction loss|, m
};

struct ActiveLeak {
    NodeId node = 0;
    double emitter_coeff = 0.0;
};

struct SolverOptions {
    double flow_tolerance = 1e-6;  // L/s
    double head_tolerance = 1e-6;  // m
    int max_iterations = 200;
    double damping = 0.5;
    double min_gradient = 1e-6;  // floor on d(headloss)/dQ, m per L/s
};

/// Hazen-Williams resistance in h = r |Q|^1.852 with h in m and Q in L/s.
inline double hazen_williams_resistance(const PipeRecord& p) {
    const double si = 10.67 * p.length / (std::pow(p.roughness, kHazenWilliamsExponent) * std::pow(p.diameter, 4.87));
    return si * std::pow(1e-3, kHazenWilliamsExponent);
}

/// Signed friction head loss from `from` to `to` for flow q (L/s).
inline double hazen_williams_headloss(const PipeRecord& p, double q) {
    return hazen_williams_resistance(p) * q * std::pow(std::abs(q), kHazenWilliamsExponent - 1.0);
}

/// Per-node nodal imbalance: inflow - outflow - demand - leak (sources report 0).
inline std::vector<double> nodal_imbalance(const WaterNetwork& net, const std::vector<double>& demands,
                                           const HydraulicState& st) {
    std::vector<double> r(net.node_count(), 0.0);
    for (std::size_t v = 0; v < r.size(); ++v) r[v] = -demands[v] - st.leak_outflow[v];
    for (const auto& p : net.pipes) {
        r[p.to] += st.flows[p.id];
        r[p.from] -= st.flows[p.id];
    }
    for (const auto& s : net.sources) r[s.node] = 0.0;
    return r;
}

/// Per-pipe |H_from - H_to - headloss(Q)| (closed pipes must carry zero flow instead).
inline std::vector<double> headloss_mismatch(const WaterNetwork& net, const HydraulicState& st) {
    std::vector<double> r(net.pipe_count(), 0.0);
    for (const auto& p : net.pipes)
        r[p.id] = p.is_open() ? std::abs(st.heads[p.from] - st.heads[p.to] - hazen_williams_headloss(p, st.flows[p.id]))
                              : std::abs(st.flows[p.id]);
    return r;
}

namespace detail {

inline double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace detail

/// Steady-state heads/flows by the global gradient (Newton) method on the joint
/// head/flow system. Leaks are emitter pseudo-links to atmospheric pressure at
/// the node elevation: q = k sqrt(max(H - z, 0)).
inline HydraulicState solve_steady_state(const WaterNetwork& net, const std::vector<double>& demands,
                                         const std::vector<ActiveLeak>& active_leaks, const SolverOptions& opt = {}) {
    const auto n = net.node_count();
    if (demands.size() != n) throw DimensionError("demand vector length does not match node count");
    for (double d : demands)
        if (!(d >= 0.0) || !std::isfinite(d)) throw ValidationError("nodal demands must be finite and >= 0");
    if (auto bad = unreachable_nodes(net); !bad.empty())
        throw ValidationError("node " + std::to_string(bad.front()) + " is not reachable from any source via open pipes");

    std::vector<int> index(n, -1);  // unknown index of each junction, -1 for sources
    std::vector<double> fixed_head(n, 0.0);
    for (const auto& s : net.sources) fixed_head[s.node] = s.head;
    int unknowns = 0;
    for (std::size_t v = 0; v < n; ++v)
        if (!net.is_source(static_cast<NodeId>(v))) index[v] = unknowns++;

    std::vector<double> emitter(n, 0.0);
    for (const auto& l : active_leaks) {
        if (l.node < 0 || static_cast<std::size_t>(l.node) >= n)
            throw ValidationError("leak at invalid node id " + std::to_string(l.node));
        if (index[l.node] < 0) throw ValidationError("leak at source node " + std::to_string(l.node));
        if (!(l.emitter_coeff > 0.0)) throw ValidationError("leak emitter_coeff must be > 0");
        emitter[l.node] += l.emitter_coeff;
    }

    std::vector<double> resistance(net.pipe_count(), 0.0);
    for (const auto& p : net.pipes) resistance[p.id] = hazen_williams_resistance(p);

    HydraulicState st;
    st.heads.assign(n, 0.0);
    st.flows.assign(net.pipe_count(), 0.0);
    st.leak_outflow.assign(n, 0.0);
    double start_head = -std::numeric_limits<double>::infinity();
    for (const auto& s : net.sources) start_head = std::max(start_head, s.head);
    for (std::size_t v = 0; v < n; ++v) st.heads[v] = index[v] < 0 ? fixed_head[v] : start_head;

    // Initial flows: push each junction's demand (plus a nominal leak) to the root
    // along a breadth-first spanning tree grown from the sources.
    std::vector<double> emitter_q(n, 0.0);
    {
        for (std::size_t v = 0; v < n; ++v)
            if (emitter[v] > 0) emitter_q[v] = emitter[v] * std::sqrt(std::max(start_head - net.nodes[v].elevation, 0.0));
        std::vector<std::vector<std::pair<NodeId, PipeId>>> inc(n);
        for (const auto& p : net.pipes) {
            if (!p.is_open()) continue;
            inc[p.from].emplace_back(p.to, p.id);
            inc[p.to].emplace_back(p.from, p.id);
        }
        std::vector<PipeId> parent_pipe(n, -1);
        std::vector<char> seen(n, 0);
        std::vector<NodeId> order;
        std::queue<NodeId> q;
        for (const auto& s : net.sources) {
            seen[s.node] = 1;
            q.push(s.node);
        }
        while (!q.empty()) {
            auto u = q.front();
            q.pop();
            order.push_back(u);
            for (auto [w, pid] : inc[u])
                if (!seen[w]) {
                    seen[w] = 1;
                    parent_pipe[w] = pid;
                    q.push(w);
                }
        }
        std::vector<double> subtree(n, 0.0);
        for (std::size_t v = 0; v < n; ++v)
            if (index[v] >= 0) subtree[v] = demands[v] + emitter_q[v];
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const auto v = *it;
            const auto pid = parent_pipe[v];
            if (pid < 0) continue;
            const auto& p = net.pipes[pid];
            const NodeId up = p.from == v ? p.to : p.from;
            st.flows[pid] = p.to == v ? subtree[v] : -subtree[v];
            subtree[up] += subtree[v];
        }
    }

    std::vector<char> emitter_on(n, 0);
    for (std::size_t v = 0; v < n; ++v) emitter_on[v] = emitter[v] > 0;

    auto finalize = [&](HydraulicState& s) {
        for (std::size_t v = 0; v < n; ++v)
            s.leak_outflow[v] =
                emitter[v] > 0 ? emitter[v] * std::sqrt(std::max(s.heads[v] - net.nodes[v].elevation, 0.0)) : 0.0;
        s.mass_residual = detail::max_abs(nodal_imbalance(net, demands, s));
        s.head_residual = detail::max_abs(headloss_mismatch(net, s));
    };
    finalize(st);

    if (unknowns == 0) {
        st.iterations = 0;
        return st;
    }

    Eigen::SparseMatrix<double> A(unknowns, unknowns);
    Eigen::VectorXd rhs(unknowns);
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    bool analysed = false;

    std::vector<double> pcoef(net.pipe_count()), acoef(net.pipe_count());
    std::vector<double> pe(n, 0.0), ae(n, 0.0);
    double prev_metric = std::numeric_limits<double>::infinity();

    for (int iter = 1; iter <= opt.max_iterations; ++iter) {
        trip.clear();
        rhs.setZero();
        for (std::size_t v = 0; v < n; ++v)
            if (index[v] >= 0) {
                trip.emplace_back(index[v], index[v], 0.0);  // keep the diagonal in the pattern
                rhs[index[v]] -= demands[v];
            }
        for (const auto& p : net.pipes) {
            if (!p.is_open()) continue;
            const double q = st.flows[p.id];
            const double aq = std::abs(q);
            const double hl = resistance[p.id] * q * std::pow(aq, kHazenWilliamsExponent - 1.0);
            const double g = std::max(kHazenWilliamsExponent * resistance[p.id] * std::pow(aq, kHazenWilliamsExponent - 1.0),
                                      opt.min_gradient);
            pcoef[p.id] = 1.0 / g;
            acoef[p.id] = q - hl / g;
            const int i = index[p.from], j = index[p.to];
            const double pk = pcoef[p.id], ak = acoef[p.id];
            if (i >= 0) {
                trip.emplace_back(i, i, pk);
                rhs[i] -= ak;
                if (j >= 0)
                    trip.emplace_back(i, j, -pk);
                else
                    rhs[i] += pk * fixed_head[p.to];
            }
            if (j >= 0) {
                trip.emplace_back(j, j, pk);
                rhs[j] += ak;
                if (i >= 0)
                    trip.emplace_back(j, i, -pk);
                else
                    rhs[j] += pk * fixed_head[p.from];
            }
        }
        for (std::size_t v = 0; v < n; ++v) {
            if (!emitter_on[v]) continue;
            const double k2 = emitter[v] * emitter[v];
            const double q = emitter_q[v];
            const double g = std::max(2.0 * std::abs(q) / k2, opt.min_gradient);
            pe[v] = 1.0 / g;
            ae[v] = q - (q * std::abs(q) / k2) / g;
            trip.emplace_back(index[v], index[v], pe[v]);
            rhs[index[v]] += -ae[v] + pe[v] * net.nodes[v].elevation;
        }
        A.setFromTriplets(trip.begin(), trip.end());
        if (!analysed) {
            ldlt.analyzePattern(A);
            analysed = true;
        }
        ldlt.factorize(A);
        if (ldlt.info() != Eigen::Success)
            throw ConvergenceError("hydraulic system is singular at iteration " + std::to_string(iter), prev_metric);
        const Eigen::VectorXd h = ldlt.solve(rhs);

        HydraulicState next = st;
        for (std::size_t v = 0; v < n; ++v)
            if (index[v] >= 0) next.heads[v] = h[index[v]];
        for (const auto& p : net.pipes)
            next.flows[p.id] =
                p.is_open() ? acoef[p.id] + pcoef[p.id] * (next.heads[p.from] - next.heads[p.to]) : 0.0;
        std::vector<double> next_q(n, 0.0);
        for (std::size_t v = 0; v < n; ++v)
            if (emitter_on[v]) next_q[v] = ae[v] + pe[v] * (next.heads[v] - net.nodes[v].elevation);
        finalize(next);
        double metric = std::max(next.mass_residual / opt.flow_tolerance, next.head_residual / opt.head_tolerance);

        if (iter > 1 && metric > prev_metric && opt.damping < 1.0) {
            // diverging: take a partial step from the current iterate instead
            HydraulicState damped = st;
            for (std::size_t v = 0; v < n; ++v) damped.heads[v] += opt.damping * (next.heads[v] - st.heads[v]);
            for (std::size_t k = 0; k < st.flows.size(); ++k)
                damped.flows[k] += opt.damping * (next.flows[k] - st.flows[k]);
            for (std::size_t v = 0; v < n; ++v) next_q[v] = emitter_q[v] + opt.damping * (next_q[v] - emitter_q[v]);
            finalize(damped);
            next = std::move(damped);
            metric = std::max(next.mass_residual / opt.flow_tolerance, next.head_residual / opt.head_tolerance);
        }

        // emitters cannot draw water in: close those whose node pressure went negative
        bool status_changed = false;
        for (std::size_t v = 0; v < n; ++v) {
            if (emitter[v] <= 0) continue;
            const bool want_on = next.heads[v] > net.nodes[v].elevation;
            if (want_on != static_cast<bool>(emitter_on[v])) {
                emitter_on[v] = want_on;
                status_changed = true;
            }
            emitter_q[v] = emitter_on[v] ? std::max(next_q[v], 0.0) : 0.0;
        }

        st = std::move(next);
        st.iterations = iter;
        prev_metric = metric;
        if (!status_changed && st.mass_residual < opt.flow_tolerance && st.head_residual < opt.head_tolerance)
            return st;
    }
    throw ConvergenceError("hydraulic solver did not converge in " + std::to_string(opt.max_iterations) +
                               " iterations (mass residual " + format_number(st.mass_residual) + " L/s, head residual " +
                               format_number(st.head_residual) + " m)",
                           std::max(st.mass_residual, st.head_residual));
}

// ---------------------------------------------------------------------------
// 24 h simulation

struct SimulationOptions {
    double sensor_noise_sigma = 0.0;  // std-dev added to recorded observations only
    std::uint64_t noise_seed = 0;
    SolverOptions solver;
};

struct SimulationResult {
    std::vector<HydraulicState> states;           // one per step
    Scenario scenario;
    std::vector<std::vector<std::uint8_t>> labels;  // [step][node], 1 while a leak is active
    SensorLayout layout;
    std::vector<std::vector<double>> observations;  // [step][sensor], noise applied
};

inline const DemandPattern& find_pattern(const std::vector<DemandPattern>& patterns, int id) {
    for (const auto& p : patterns)
        if (p.id == id) return p;
    throw ValidationError("demand pattern " + std::to_string(id) + " is not defined");
}

/// Nodal demands at `step`: base_demand x pattern multiplier; sources draw nothing.
inline std::vector<double> demands_at(const WaterNetwork& net, const std::vector<DemandPattern>& patterns, int step) {
    std::vector<double> d(net.node_count(), 0.0);
    for (const auto& nd : net.nodes)
        if (!net.is_source(nd.id)) d[nd.id] = nd.base_demand * find_pattern(patterns, nd.demand_pattern_id).multipliers.at(step);
    return d;
}

inline std::vector<ActiveLeak> leaks_active_at(const Scenario& s, int step) {
    std::vector<ActiveLeak> out;
    for (const auto& l : s.leaks)
        if (step >= l.start_step) out.push_back({l.node, l.emitter_coeff});
    return out;
}

/// Sensor readings of one state in layout order: pressures (head - elevation, m), then flows (L/s).
inline std::vector<double> read_sensors(const WaterNetwork& net, const SensorLayout& layout, const HydraulicState& st) {
    std::vector<double> x;
    x.reserve(layout.dimension());
    for (auto v : layout.pressure_sensors) x.push_back(st.heads.at(v) - net.nodes.at(v).elevation);
    for (auto p : layout.flow_sensors) x.push_back(st.flows.at(p));
    return x;
}

inline SimulationResult simulate(const WaterNetwork& net, const Scenario& scenario,
                                 const std::vector<DemandPattern>& patterns, const SensorLayout& layout,
                                 const SimulationOptions& opt = {}) {
    validate_scenario(net, scenario);
    validate_layout(net, layout);
    for (const auto& nd : net.nodes) find_pattern(patterns, nd.demand_pattern_id);
    if (opt.sensor_noise_sigma < 0) throw ValidationError("sensor_noise_sigma must be >= 0");

    SimulationResult r;
    r.scenario = scenario;
    r.layout = layout;
    auto rng = make_rng(opt.noise_seed, {scenario.seed, 0x6e6f6973});
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int t = 0; t < kStepsPerDay; ++t) {
        HydraulicState st;
        try {
            st = solve_steady_state(net, demands_at(net, patterns, t), leaks_active_at(scenario, t), opt.solver);
        } catch (const ConvergenceError& e) {
            throw ConvergenceError("step " + std::to_string(t) + ": " + e.what(), e.residual());
        }
        std::vector<std::uint8_t> y(net.node_count(), 0);
        for (const auto& l : scenario.leaks)
            if (t >= l.start_step) y[l.node] = 1;
        auto x = read_sensors(net, layout, st);
        if (opt.sensor_noise_sigma > 0)
            for (auto& v : x) v += opt.sensor_noise_sigma * noise(rng);
        r.states.push_back(std::move(st));
        r.labels.push_back(std::move(y));
        r.observations.push_back(std::move(x));
    }
    return r;
}

// ---------------------------------------------------------------------------
// persistence: observations matrix, labels matrix, scenario manifest

inline std::vector<std::string> sensor_names(const SensorLayout& layout) {
    std::vector<std::string> names;
    for (auto v : layout.pressure_sensors) names.push_back("p" + std::to_string(v));
    for (auto p : layout.flow_sensors) names.push_back("f" + std::to_string(p));
    return names;
}

/// Parses a header produced by sensor_names back into a layout.
inline SensorLayout layout_from_sensor_names(const std::vector<std::string>& names) {
    SensorLayout l;
    for (const auto& s : names) {
        if (s.size() < 2 || (s[0] != 'p' && s[0] != 'f')) throw ParseError("bad sensor column name '" + s + "'");
        int id = 0;
        auto res = std::from_chars(s.data() + 1, s.data() + s.size(), id);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw ParseError("bad sensor column name '" + s + "'");
        (s[0] == 'p' ? l.pressure_sensors : l.flow_sensors).push_back(id);
    }
    return l;
}

inline Table observations_table(const SimulationResult& r) {
    Table t;
    t.comments = {" leakcrf observations v1"};
    t.header = {"step"};
    for (auto& s : sensor_names(r.layout)) t.header.push_back(s);
    for (std::size_t step = 0; step < r.observations.size(); ++step) {
        std::vector<double> row{static_cast<double>(step)};
        row.insert(row.end(), r.observations[step].begin(), r.observations[step].end());
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline Table labels_table(const std::vector<std::vector<std::uint8_t>>& labels, const std::string& index_name = "step") {
    Table t;
    t.comments = {" leakcrf labels v1"};
    t.header = {index_name};
    const std::size_t n = labels.empty() ? 0 : labels.front().size();
    for (std::size_t v = 0; v < n; ++v) t.header.push_back("n" + std::to_string(v));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::vector<double> row{static_cast<double>(i)};
        for (auto y : labels[i]) row.push_back(y);
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline std::vector<std::vector<std::uint8_t>> labels_from_table(const Table& t) {
    std::vector<std::vector<std::uint8_t>> out;
    for (const auto& row : t.rows) {
        std::vector<std::uint8_t> y;
        for (std::size_t i = 1; i < row.size(); ++i) {
            if (row[i] != 0.0 && row[i] != 1.0) throw ParseError("label values must be 0 or 1");
            y.push_back(static_cast<std::uint8_t>(row[i]));
        }
        out.push_back(std::move(y));
    }
    return out;
}

inline nlohmann::json scenario_manifest(const SimulationResult& r) {
    return {{"format_version", 1},
            {"steps", r.states.size()},
            {"step_minutes", 15},
            {"layout_hash", r.layout.hash()},
            {"scenario", scenario_to_json(r.scenario)}};
}

/// Writes <prefix>_observations.csv, <prefix>_labels.csv and <prefix>_scenario.json.
inline void save_simulation_result(const SimulationResult& r, const std::string& prefix) {
    write_table(observations_table(r), prefix + "_observations.csv");
    write_table(labels_table(r.labels), prefix + "_labels.csv");
    detail::write_text_file(prefix + "_scenario.json", scenario_manifest(r).dump(2) + "\n");
}

}  // namespace leakcrf
