#pragma once

// Human-report fusion: simulated geotagged reports become radius cliques whose
// high-order potential is 0 when the clique meets the predicted leak set and +inf
// otherwise. The greedy pass repairs violated cliques by inserting their
// highest-entropy member when that entropy clears the gate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "error.hpp"
#include "hydrosim.hpp"
#include "network.hpp"
#include "random.hpp"
#include "table.hpp"

namespace leakcrf {

struct HumanReport {
    Point2 location;
    int step = 0;

    friend bool operator==(const HumanReport&, const HumanReport&) = default;
};

struct ReportClique {
    Point2 location;
    int step = 0;
    std::vector<NodeId> members;  // ascending
};

struct CliqueSet {
    std::vector<ReportClique> cliques;
    int dropped = 0;  // reports that resolved to no node
};

struct ReportSimConfig {
    double p_report = 0.7;
    double location_noise_sigma = 0.5;  // m
    double gamma = 2.0;                 // m
    double false_report_rate = 0.0;     // expected spurious reports per day

    void validate() const {
        if (!(p_report >= 0.0 && p_report <= 1.0)) throw ValidationError("p_report must lie in [0, 1]");
        if (!(gamma > 0.0)) throw ValidationError("gamma must be > 0");
        if (!(location_noise_sigma >= 0.0)) throw ValidationError("location_noise_sigma must be >= 0");
        if (!(false_report_rate >= 0.0)) throw ValidationError("false_report_rate must be >= 0");
    }
};

struct FusionConfig {
    double entropy_gate = 0.0;  // nats

    void validate() const {
        if (!(entropy_gate >= 0.0)) throw ValidationError("entropy_gate must be >= 0");
    }
};

using LeakSet = std::set<NodeId>;

/// Each true leak reports independently with probability p_report, at the leak node plus
/// isotropic Gaussian noise, timestamped uniformly in [start_step, last step]. Spurious
/// reports: Poisson(false_report_rate), uniform over the network bounding box and day.
/// A fixed number of draws is made per leak, so with a shared seed raising p_report
/// only adds reports.
inline std::vector<HumanReport> simulate_reports(const Scenario& scenario, const WaterNetwork& net,
                                                 const ReportSimConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    auto rng = make_rng(seed, {0x7265706f7274});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<HumanReport> out;
    for (const auto& leak : scenario.leaks) {
        const double u = unit(rng);
        const double dx = gauss(rng), dy = gauss(rng);
        const int span = kStepsPerDay - leak.start_step;
        const int step = leak.start_step + static_cast<int>(std::min<double>(span - 1, std::floor(unit(rng) * span)));
        if (u < cfg.p_report) {
            const auto& c = net.nodes.at(leak.node).coord;
            out.push_back({{c.x + cfg.location_noise_sigma * dx, c.y + cfg.location_noise_sigma * dy}, step});
        }
    }
    if (cfg.false_report_rate > 0 && !net.nodes.empty()) {
        double x0 = net.nodes[0].coord.x, x1 = x0, y0 = net.nodes[0].coord.y, y1 = y0;
        for (const auto& nd : net.nodes) {
            x0 = std::min(x0, nd.coord.x);
            x1 = std::max(x1, nd.coord.x);
            y0 = std::min(y0, nd.coord.y);
            y1 = std::max(y1, nd.coord.y);
        }
        auto frng = make_rng(seed, {0x66616c7365});
        const int count = std::poisson_distribution<int>(cfg.false_report_rate)(frng);
        for (int i = 0; i < count; ++i) {
            const double x = x0 + (x1 - x0) * unit(frng), y = y0 + (y1 - y0) * unit(frng);
            out.push_back({{x, y}, std::uniform_int_distribution<int>(0, kStepsPerDay - 1)(frng)});
        }
    }
    return out;
}

/// One clique per report: nodes strictly closer than gamma. Empty cliques are dropped and counted.
inline CliqueSet build_cliques(const std::vector<HumanReport>& reports, const WaterNetwork& net, double gamma) {
    if (!(gamma > 0.0)) throw ValidationError("gamma must be > 0");
    CliqueSet cs;
    for (const auto& r : reports) {
        if (!std::isfinite(r.location.x) || !std::isfinite(r.location.y))
            throw ValidationError("report coordinates must be finite");
        ReportClique c{r.location, r.step, {}};
        for (const auto& nd : net.nodes)
            if (distance(r.location, nd.coord) < gamma) c.members.push_back(nd.id);
        if (c.members.empty())
            ++cs.dropped;
        else
            cs.cliques.push_back(std::move(c));
    }
    return cs;
}

inline constexpr double kInfinitePotential = std::numeric_limits<double>::infinity();

/// 0 when some member of the clique is in S, +inf otherwise.
inline double high_order_potential(const std::vector<NodeId>& clique, const LeakSet& s) {
    if (clique.empty()) throw ValidationError("high-order potential of an empty clique");
    for (auto v : clique)
        if (s.count(v)) return 0.0;
    return kInfinitePotential;
}

inline double high_order_potential(const ReportClique& c, const LeakSet& s) { return high_order_potential(c.members, s); }

/// Binary label entropy in nats with 0 log 0 = 0.
inline double entropy(double p1) {
    if (!(p1 >= 0.0 && p1 <= 1.0)) throw ValidationError("entropy: probability outside [0, 1]");
    auto term = [](double p) { return p > 0.0 ? -p * std::log(p) : 0.0; };
    return term(p1) + term(1.0 - p1);
}

struct FusionStep {
    std::size_t clique = 0;  // index into the clique set
    NodeId chosen = -1;      // argmax-entropy member, -1 when the clique was already satisfied
    double entropy = 0.0;
    bool inserted = false;
};

struct FusionResult {
    LeakSet leaks;
    std::vector<FusionStep> audit;
    int unresolved = 0;  // cliques still at +inf after the pass
};

/// Order in which cliques are visited: report step, then smallest member id, then input order.
inline std::vector<std::size_t> clique_order(const CliqueSet& cs) {
    std::vector<std::size_t> idx(cs.cliques.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const auto& ca = cs.cliques[a];
        const auto& cb = cs.cliques[b];
        if (ca.step != cb.step) return ca.step < cb.step;
        return ca.members.front() < cb.members.front();
    });
    return idx;
}

/// Greedy high-order repair. p1[v] is the calibrated leak probability of node v.
inline FusionResult greedy_fuse(const LeakSet& s, const CliqueSet& cs, const std::vector<double>& p1,
                                const FusionConfig& cfg) {
    cfg.validate();
    FusionResult r;
    r.leaks = s;
    for (auto i : clique_order(cs)) {
        const auto& c = cs.cliques[i];
        if (high_order_potential(c, r.leaks) == 0.0) {
            r.audit.push_back({i, -1, 0.0, false});
            continue;
        }
        NodeId best = -1;
        double best_h = -1.0;
        for (auto v : c.members) {  // members ascend, so strict > keeps the smallest id on ties
            if (v < 0 || static_cast<std::size_t>(v) >= p1.size())
                throw ValidationError("no marginal for clique member " + std::to_string(v));
            const double h = entropy(p1[v]);
            if (h > best_h) {
                best_h = h;
                best = v;
            }
        }
        const bool insert = best_h > cfg.entropy_gate;
        if (insert) r.leaks.insert(best);
        r.audit.push_back({i, best, best_h, insert});
    }
    for (const auto& c : cs.cliques)
        if (high_order_potential(c, r.leaks) != 0.0) ++r.unresolved;
    return r;
}

/// Sum of high-order potentials over all cliques (0 or +inf).
inline double high_order_energy(const CliqueSet& cs, const LeakSet& s) {
    double e = 0.0;
    for (const auto& c : cs.cliques) e += high_order_potential(c, s);
    return e;
}

inline std::size_t unsatisfied_count(const CliqueSet& cs, const LeakSet& s) {
    std::size_t k = 0;
    for (const auto& c : cs.cliques) k += high_order_potential(c, s) != 0.0;
    return k;
}

// ---------------------------------------------------------------------------
// persistence

/// Reports of many scenarios as one table: scenario, step, x, y.
inline Table reports_table(const std::vector<std::vector<HumanReport>>& per_scenario) {
    Table t;
    t.comments = {" leakcrf reports v1"};
    t.header = {"scenario", "step", "x", "y"};
    for (std::size_t s = 0; s < per_scenario.size(); ++s)
        for (const auto& r : per_scenario[s])
            t.rows.push_back({static_cast<double>(s), static_cast<double>(r.step), r.location.x, r.location.y});
    return t;
}

inline std::vector<std::vector<HumanReport>> reports_from_table(const Table& t, std::size_t scenarios) {
    std::vector<std::vector<HumanReport>> out(scenarios);
    const auto cs = t.column("scenario"), cst = t.column("step"), cx = t.column("x"), cy = t.column("y");
    for (const auto& row : t.rows) {
        const auto s = static_cast<std::size_t>(row[cs]);
        if (row[cs] < 0 || s >= scenarios) throw ParseError("report references scenario " + format_number(row[cs]));
        out[s].push_back({{row[cx], row[cy]}, static_cast<int>(row[cst])});
    }
    return out;
}

inline Table audit_table(const std::vector<std::vector<FusionStep>>& per_scenario) {
    Table t;
    t.comments = {" leakcrf fusion audit v1"};
    t.header = {"scenario", "clique", "chosen_node", "entropy", "inserted"};
    for (std::size_t s = 0; s < per_scenario.size(); ++s)
        for (const auto& a : per_scenario[s])
            t.rows.push_back({static_cast<double>(s), static_cast<double>(a.clique), static_cast<double>(a.chosen),
                              a.entropy, a.inserted ? 1.0 : 0.0});
    return t;
}

}  // namespace leakcrf
