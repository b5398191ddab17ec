#pragma once

// Binary pairwise CRF: energy, MAP / loss-augmented inference and Platt-calibrated
// per-node probabilities.
//
// Sign convention: energy(y) = -w . theta(x, y). The MAP labelling is the argmin of
// the energy, which is the argmax of the linear score.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/boykov_kolmogorov_max_flow.hpp>
#include <nlohmann/json.hpp>

#include "error.hpp"
#include "features.hpp"
#include "random.hpp"

namespace leakcrf {

struct FeatureConfig {
    int hop_radius = kDefaultHopRadius;
    std::size_t node_dim = kNodeFeatureDim;
    std::uint64_t layout_hash = 0;

    friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

/// Logistic calibration p1 = sigmoid(a * margin + b).
struct Calibration {
    double a = 1.0;
    double b = 0.0;

    friend bool operator==(const Calibration&, const Calibration&) = default;
};

struct CrfModel {
    std::vector<double> w;
    FeatureConfig feature_config;
    std::optional<Calibration> calibration;
    std::string training_fingerprint;
    double final_objective = 0.0;

    static CrfModel zeros(std::size_t node_dim) {
        CrfModel m;
        m.feature_config.node_dim = node_dim;
        m.w.assign(joint_feature_dim(node_dim), 0.0);
        return m;
    }

    void check() const {
        if (w.size() != joint_feature_dim(feature_config.node_dim))
            throw DimensionError("model weight dimension " + std::to_string(w.size()) + " does not match 2*" +
                                 std::to_string(feature_config.node_dim) + "+4");
        for (double x : w)
            if (!std::isfinite(x)) throw ValidationError("model weights must be finite");
    }

    friend bool operator==(const CrfModel&, const CrfModel&) = default;
};

/// Energy tables derived from a model and one sample's features.
struct Potentials {
    std::vector<std::array<double, 2>> unary;  // [node][label]
    std::array<std::array<double, 2>, 2> pair{};  // shared by every edge
};

inline Potentials make_potentials(const CrfModel& m, const CrfGraph& g, const NodeFeatures& f) {
    m.check();
    if (f.num_nodes != g.num_nodes) throw DimensionError("feature rows do not match graph nodes");
    if (f.dim != m.feature_config.node_dim) throw DimensionError("feature dimension does not match the model");
    const auto d = f.dim;
    Potentials p;
    p.unary.resize(g.num_nodes);
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
        const auto row = f.row(v);
        for (int l = 0; l < 2; ++l) {
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) s += m.w[l * d + i] * row[i];
            p.unary[v][l] = -s;
        }
    }
    const double discordant = 0.5 * (m.w[2 * d + pair_slot(0, 1)] + m.w[2 * d + pair_slot(1, 0)]);
    p.pair[0][0] = -m.w[2 * d + pair_slot(0, 0)];
    p.pair[1][1] = -m.w[2 * d + pair_slot(1, 1)];
    p.pair[0][1] = p.pair[1][0] = -discordant;
    return p;
}

inline double energy(const Potentials& p, const CrfGraph& g, const LabelAssignment& y) {
    check_labels(y, g.num_nodes);
    double e = 0.0;
    for (std::size_t v = 0; v < g.num_nodes; ++v) e += p.unary[v][y[v]];
    for (auto [a, b] : g.edges) e += p.pair[y[a]][y[b]];
    return e;
}

inline double energy(const CrfModel& m, const CrfGraph& g, const NodeFeatures& f, const LabelAssignment& y) {
    return energy(make_potentials(m, g, f), g, y);
}

/// Kolmogorov-Zabih condition for the shared edge table.
inline bool is_submodular(const Potentials& p) noexcept {
    return p.pair[0][1] + p.pair[1][0] >= p.pair[0][0] + p.pair[1][1];
}

enum class Solver { automatic, icm, graph_cut, brute_force };

struct InferenceOptions {
    Solver solver = Solver::automatic;
    int restarts = 20;  // random ICM starts besides all-zeros / all-ones
    std::uint64_t seed = 0;
};

inline constexpr std::size_t kBruteForceMaxNodes = 20;

namespace detail {

/// a < b beyond accumulation noise.
inline bool energy_less(double a, double b) noexcept {
    if (!std::isfinite(b)) return a < b;
    return a < b - 1e-12 * (1.0 + std::abs(b));
}

}  // namespace detail

/// Exhaustive minimum; ties go to the lexicographically smallest label vector.
inline LabelAssignment brute_force_infer(const Potentials& p, const CrfGraph& g) {
    const auto n = g.num_nodes;
    if (n > kBruteForceMaxNodes)
        throw ValidationError("brute-force inference supports at most " + std::to_string(kBruteForceMaxNodes) +
                              " nodes, graph has " + std::to_string(n));
    LabelAssignment y(n, 0), best(n, 0);
    double best_e = std::numeric_limits<double>::infinity();
    const std::uint64_t total = std::uint64_t{1} << n;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
        // node 0 is the most significant position, so masks ascend lexicographically
        for (std::size_t v = 0; v < n; ++v) y[v] = static_cast<std::uint8_t>((mask >> (n - 1 - v)) & 1u);
        const double e = energy(p, g, y);
        if (detail::energy_less(e, best_e)) {
            best_e = e;
            best = y;
        }
    }
    return best;
}

/// Iterated conditional modes from `start`: sweep nodes in id order, move only on strict improvement.
inline LabelAssignment icm(const Potentials& p, const CrfGraph& g, LabelAssignment y) {
    check_labels(y, g.num_nodes);
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t v = 0; v < g.num_nodes; ++v) {
            double local[2];
            for (int l = 0; l < 2; ++l) {
                local[l] = p.unary[v][l];
                for (auto u : g.adj[v]) local[l] += p.pair[l][y[u]];
            }
            const int cur = y[v], alt = 1 - cur;
            if (detail::energy_less(local[alt], local[cur])) {
                y[v] = static_cast<std::uint8_t>(alt);
                changed = true;
            }
        }
    }
    return y;
}

/// Exact minimum by s-t min cut. Requires a submodular edge table.
inline LabelAssignment graph_cut_infer(const Potentials& p, const CrfGraph& g) {
    if (!is_submodular(p)) throw ValidationError("graph-cut inference needs a submodular pairwise table");
    using Traits = boost::adjacency_list_traits<boost::vecS, boost::vecS, boost::directedS>;
    using Graph = boost::adjacency_list<
        boost::vecS, boost::vecS, boost::directedS,
        boost::property<boost::vertex_index_t, long,
                        boost::property<boost::vertex_color_t, boost::default_color_type,
                                        boost::property<boost::vertex_distance_t, long,
                                                        boost::property<boost::vertex_predecessor_t, Traits::edge_descriptor>>>>,
        boost::property<boost::edge_capacity_t, double,
                        boost::property<boost::edge_residual_capacity_t, double,
                                        boost::property<boost::edge_reverse_t, Traits::edge_descriptor>>>>;

    const auto n = g.num_nodes;
    Graph G(n + 2);
    const auto src = static_cast<Traits::vertex_descriptor>(n), snk = static_cast<Traits::vertex_descriptor>(n + 1);
    auto cap = boost::get(boost::edge_capacity, G);
    auto rev = boost::get(boost::edge_reverse, G);
    auto add = [&](std::size_t a, std::size_t b, double c_ab, double c_ba) {
        auto e1 = boost::add_edge(a, b, G).first;
        auto e2 = boost::add_edge(b, a, G).first;
        cap[e1] = c_ab;
        cap[e2] = c_ba;
        rev[e1] = e2;
        rev[e2] = e1;
    };

    // source side = label 0, sink side = label 1; unary[v] holds the cost of label 1 relative to 0
    std::vector<double> cost1(n);
    for (std::size_t v = 0; v < n; ++v) cost1[v] = p.unary[v][1] - p.unary[v][0];
    const double A = p.pair[0][0], B = p.pair[0][1], C = p.pair[1][0], D = p.pair[1][1];
    const double lambda = B + C - A - D;
    for (auto [a, b] : g.edges) {
        // E(ya, yb) = A + (C - A) ya + (D - C) yb + lambda (1 - ya) yb
        cost1[a] += C - A;
        cost1[b] += D - C;
        if (lambda > 0) add(a, b, lambda, 0.0);
    }
    for (std::size_t v = 0; v < n; ++v) {
        if (cost1[v] > 0)
            add(src, v, cost1[v], 0.0);
        else if (cost1[v] < 0)
            add(v, snk, -cost1[v], 0.0);
    }
    boost::boykov_kolmogorov_max_flow(G, src, snk);
    auto color = boost::get(boost::vertex_color, G);
    const auto source_color = boost::get(color, src);
    LabelAssignment y(n);
    for (std::size_t v = 0; v < n; ++v) y[v] = boost::get(color, v) == source_color ? 0 : 1;
    return y;
}

/// Lowest-energy labelling found. Exact via min cut for submodular tables (automatic /
/// graph_cut), otherwise ICM from all-zeros, all-ones and `restarts` random starts.
/// Equal energies resolve to the lexicographically smallest labelling.
inline LabelAssignment map_infer(const Potentials& p, const CrfGraph& g, const InferenceOptions& opt = {}) {
    switch (opt.solver) {
    case Solver::brute_force:
        return brute_force_infer(p, g);
    case Solver::graph_cut:
        return graph_cut_infer(p, g);
    case Solver::automatic:
        if (is_submodular(p)) return graph_cut_infer(p, g);
        break;
    case Solver::icm:
        break;
    }
    const auto n = g.num_nodes;
    LabelAssignment best;
    double best_e = std::numeric_limits<double>::infinity();
    auto consider = [&](LabelAssignment y) {
        const double e = energy(p, g, y);
        if (detail::energy_less(e, best_e) || (!detail::energy_less(best_e, e) && y < best)) {
            best_e = std::min(best_e, e);
            best = std::move(y);
        }
    };
    consider(icm(p, g, LabelAssignment(n, 0)));
    consider(icm(p, g, LabelAssignment(n, 1)));
    auto rng = make_rng(opt.seed, {0x69636d});
    std::bernoulli_distribution coin(0.5);
    for (int r = 0; r < opt.restarts; ++r) {
        LabelAssignment start(n);
        for (auto& l : start) l = coin(rng) ? 1 : 0;
        consider(icm(p, g, std::move(start)));
    }
    return best;
}

inline LabelAssignment map_infer(const CrfModel& m, const CrfGraph& g, const NodeFeatures& f,
                                 const InferenceOptions& opt = {}) {
    return map_infer(make_potentials(m, g, f), g, opt);
}

/// Folds the Hamming loss against y_true into the unaries: minimising the result
/// maximises Delta(y, y_true) + w . theta(x, y).
inline Potentials loss_augment(Potentials p, const LabelAssignment& y_true) {
    check_labels(y_true, p.unary.size());
    for (std::size_t v = 0; v < p.unary.size(); ++v) p.unary[v][1 - y_true[v]] -= 1.0;
    return p;
}

inline LabelAssignment loss_augmented_infer(const CrfModel& m, const CrfGraph& g, const NodeFeatures& f,
                                            const LabelAssignment& y_true, const InferenceOptions& opt = {}) {
    return map_infer(loss_augment(make_potentials(m, g, f), y_true), g, opt);
}

// ---------------------------------------------------------------------------
// per-node probabilities

inline double sigmoid(double z) noexcept {
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

/// Score margin of label 1 over label 0 at each node with neighbours fixed at `context`.
inline std::vector<double> node_margins(const Potentials& p, const CrfGraph& g, const LabelAssignment& context) {
    check_labels(context, g.num_nodes);
    std::vector<double> m(g.num_nodes);
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
        double e0 = p.unary[v][0], e1 = p.unary[v][1];
        for (auto u : g.adj[v]) {
            e0 += p.pair[0][context[u]];
            e1 += p.pair[1][context[u]];
        }
        m[v] = e0 - e1;
    }
    return m;
}

struct MarginalEstimate {
    std::vector<double> p1;
};

inline MarginalEstimate calibrated_probabilities(const std::vector<double>& margins, const Calibration& c) {
    MarginalEstimate out;
    out.p1.reserve(margins.size());
    for (double m : margins) out.p1.push_back(sigmoid(c.a * m + c.b));
    return out;
}

/// p1(v) = sigmoid(a m_v + b), m_v taken with neighbours at their MAP labels.
inline MarginalEstimate node_marginals(const CrfModel& m, const CrfGraph& g, const NodeFeatures& f,
                                       const InferenceOptions& opt = {}) {
    if (!m.calibration) throw Error("model has no calibration; train it with a calibration pass first");
    const auto p = make_potentials(m, g, f);
    const auto y = map_infer(p, g, opt);
    return calibrated_probabilities(node_margins(p, g, y), *m.calibration);
}

/// Platt's sigmoid fit (regularised targets, Newton with backtracking line search)
/// of P(label = 1 | margin).
inline Calibration fit_platt(std::span<const double> margins, std::span<const std::uint8_t> labels) {
    if (margins.size() != labels.size()) throw DimensionError("margins and labels differ in length");
    if (margins.empty()) throw ValidationError("Platt fit needs at least one example");
    double n_pos = 0, n_neg = 0;
    for (auto l : labels) (l ? n_pos : n_neg) += 1;
    const double hi = (n_pos + 1.0) / (n_pos + 2.0), lo = 1.0 / (n_neg + 2.0);
    const auto len = margins.size();
    std::vector<double> t(len);
    for (std::size_t i = 0; i < len; ++i) t[i] = labels[i] ? hi : lo;

    // Platt parameterisation: P = 1 / (1 + exp(A f + B))
    double A = 0.0, B = std::log((n_neg + 1.0) / (n_pos + 1.0));
    auto loss = [&](double a, double b) {
        double fv = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            const double z = margins[i] * a + b;
            fv += z >= 0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
        }
        return fv;
    };
    double fval = loss(A, B);
    const double sigma = 1e-12;
    for (int it = 0; it < 100; ++it) {
        double h11 = sigma, h22 = sigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            const double z = margins[i] * A + B;
            const double pr = z >= 0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
            const double q = 1.0 - pr;
            const double d2 = pr * q;
            h11 += margins[i] * margins[i] * d2;
            h22 += d2;
            h21 += margins[i] * d2;
            const double d1 = t[i] - pr;
            g1 += margins[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < 1e-9 && std::abs(g2) < 1e-9) break;
        const double det = h11 * h22 - h21 * h21;
        const double dA = -(h22 * g1 - h21 * g2) / det;
        const double dB = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * dA + g2 * dB;
        double step = 1.0;
        bool moved = false;
        while (step >= 1e-10) {
            const double nA = A + step * dA, nB = B + step * dB;
            const double nf = loss(nA, nB);
            if (nf < fval + 1e-4 * step * gd) {
                A = nA;
                B = nB;
                fval = nf;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    return {-A, -B};
}

// ---------------------------------------------------------------------------
// model file (JSON, format_version 1)

inline nlohmann::json model_to_json(const CrfModel& m) {
    nlohmann::json doc{{"format_version", 1},
                       {"w", m.w},
                       {"feature_config",
                        {{"hop_radius", m.feature_config.hop_radius},
                         {"node_dim", m.feature_config.node_dim},
                         {"layout_hash", m.feature_config.layout_hash}}},
                       {"training_fingerprint", m.training_fingerprint},
                       {"final_objective", m.final_objective}};
    if (m.calibration)
        doc["calibration"] = {{"a", m.calibration->a}, {"b", m.calibration->b}};
    else
        doc["calibration"] = nullptr;
    return doc;
}

inline CrfModel model_from_json(const nlohmann::json& doc, const std::string& origin = "model") {
    using detail::get_field;
    detail::check_format_version(doc, 1, origin);
    CrfModel m;
    m.w = get_field<std::vector<double>>(doc, "w", origin);
    const auto& fc = detail::require(doc, "feature_config", origin);
    m.feature_config.hop_radius = get_field<int>(fc, "hop_radius", origin + ".feature_config");
    m.feature_config.node_dim = get_field<std::size_t>(fc, "node_dim", origin + ".feature_config");
    m.feature_config.layout_hash = get_field<std::uint64_t>(fc, "layout_hash", origin + ".feature_config");
    m.training_fingerprint = get_field<std::string>(doc, "training_fingerprint", origin);
    m.final_objective = get_field<double>(doc, "final_objective", origin);
    const auto& cal = detail::require(doc, "calibration", origin);
    if (!cal.is_null())
        m.calibration = Calibration{get_field<double>(cal, "a", origin + ".calibration"),
                                    get_field<double>(cal, "b", origin + ".calibration")};
    m.check();
    return m;
}

inline void save_model(const CrfModel& m, const std::string& path) {
    detail::write_text_file(path, model_to_json(m).dump(2) + "\n");
}

inline CrfModel load_model(const std::string& path) {
    return model_from_json(detail::parse_json_text(detail::read_text_file(path), path), path);
}

}  // namespace leakcrf
