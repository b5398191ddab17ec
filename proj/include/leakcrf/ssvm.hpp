#pragma once

// Structured SVM training of the CRF weights:
//
//   min_w  sum_n max_y [ Delta(y, y_n) + w.theta(x_n, y) - w.theta(x_n, y_n) ] + (C/2) ||w||^2
//
// C multiplies the regulariser here (larger C = stronger shrinkage), the reverse of
// the usual soft-margin SVM convention.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "crf.hpp"
#include "error.hpp"
#include "features.hpp"
#include "random.hpp"
#include "table.hpp"

namespace leakcrf {

inline int hamming_loss(const LabelAssignment& a, const LabelAssignment& b) {
    if (a.size() != b.size())
        throw DimensionError("hamming_loss: lengths differ (" + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()) + ")");
    int d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
    return d;
}

/// Raw training sample: observation, its no-leak baseline and the ground-truth labels.
struct TrainingSample {
    ObservationVector x;
    ObservationVector baseline;
    LabelAssignment y;
};

/// Sample after feature extraction; what learning and inference actually consume.
struct FeaturizedSample {
    NodeFeatures features;
    LabelAssignment y;
};

struct TrainingConfig {
    double c_penalty = 0.25;
    int max_epochs = 50;
    double eta0 = 0.1;
    double decay = 0.01;
    std::uint64_t seed = 0;
    double tolerance = 1e-4;  // stop when the relative epoch objective change falls below
    double calibration_fraction = 0.2;
    InferenceOptions inference;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

/// Loss-augmented maximiser for one sample; `opt.seed` is forwarded unchanged.
inline LabelAssignment most_violating(const CrfModel& m, const CrfGraph& g, const FeaturizedSample& s,
                                      const InferenceOptions& opt) {
    return loss_augmented_infer(m, g, s.features, s.y, opt);
}

/// max_y [Delta(y, y_true) + w.theta(y)] - w.theta(y_true). The true labelling is always a
/// candidate, so the value is >= 0 even when the inner solver is heuristic.
inline double structured_hinge_loss(const CrfModel& m, const CrfGraph& g, const FeaturizedSample& s,
                                    const InferenceOptions& opt = {}) {
    const auto yhat = most_violating(m, g, s, opt);
    const auto tv = joint_feature(g, s.features, s.y);
    const auto th = joint_feature(g, s.features, yhat);
    const double v = hamming_loss(yhat, s.y) + dot(m.w, th) - dot(m.w, tv);
    return std::max(v, 0.0);
}

inline double ssvm_objective(const CrfModel& m, const CrfGraph& g, std::span<const FeaturizedSample> data, double c,
                             const InferenceOptions& opt = {}) {
    double total = 0.0;
    for (const auto& s : data) total += structured_hinge_loss(m, g, s, opt);
    return total + 0.5 * c * squared_norm(m.w);
}

/// A subgradient of ssvm_objective at m.w.
inline std::vector<double> ssvm_subgradient(const CrfModel& m, const CrfGraph& g,
                                            std::span<const FeaturizedSample> data, double c,
                                            const InferenceOptions& opt = {}) {
    std::vector<double> grad(m.w.size(), 0.0);
    for (const auto& s : data) {
        const auto yhat = most_violating(m, g, s, opt);
        const auto tv = joint_feature(g, s.features, s.y);
        const auto th = joint_feature(g, s.features, yhat);
        if (hamming_loss(yhat, s.y) + dot(m.w, th) - dot(m.w, tv) <= 0.0) continue;
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += th[i] - tv[i];
    }
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += c * m.w[i];
    return grad;
}

struct EpochMetrics {
    int epoch = 0;
    double objective = 0.0;
    double hinge = 0.0;
    double w_norm = 0.0;
};

struct TrainingRun {
    CrfModel model;
    std::vector<EpochMetrics> epochs;
    std::size_t train_count = 0;
    std::size_t calibration_count = 0;
};

inline std::string training_fingerprint(const TrainingConfig& c, std::size_t n) {
    std::ostringstream s;
    s << "ssvm-sgd;C=" << format_number(c.c_penalty) << ";epochs=" << c.max_epochs << ";eta0=" << format_number(c.eta0)
      << ";decay=" << format_number(c.decay) << ";tol=" << format_number(c.tolerance)
      << ";calib=" << format_number(c.calibration_fraction) << ";restarts=" << c.inference.restarts
      << ";seed=" << c.seed << ";N=" << n;
    return s.str();
}

/// Platt pass: every node of every sample is one (margin, label) example; margins are
/// taken with neighbours fixed at the MAP labelling.
inline Calibration calibrate(const CrfModel& m, const CrfGraph& g, std::span<const FeaturizedSample> data,
                             const InferenceOptions& opt = {}) {
    std::vector<double> margins;
    std::vector<std::uint8_t> labels;
    for (const auto& s : data) {
        const auto p = make_potentials(m, g, s.features);
        const auto ctx = map_infer(p, g, opt);
        const auto mv = node_margins(p, g, ctx);
        margins.insert(margins.end(), mv.begin(), mv.end());
        labels.insert(labels.end(), s.y.begin(), s.y.end());
    }
    return fit_platt(margins, labels);
}

/// Stochastic subgradient descent with step eta_t = eta0 / (1 + t * decay), t counting
/// single-sample updates, followed by Platt calibration on a held-out split.
inline TrainingRun train(std::span<const FeaturizedSample> dataset, const CrfGraph& g, const TrainingConfig& cfg,
                         const FeatureConfig& features = {}) {
    if (dataset.empty()) throw ValidationError("training needs a nonempty dataset");
    if (!(cfg.c_penalty > 0)) throw ValidationError("c_penalty must be > 0");
    if (cfg.max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
    if (cfg.calibration_fraction < 0 || cfg.calibration_fraction >= 1)
        throw ValidationError("calibration_fraction must lie in [0, 1)");
    const auto d = dataset.front().features.dim;
    for (const auto& s : dataset) {
        if (s.features.dim != d || s.features.num_nodes != g.num_nodes)
            throw DimensionError("training sample features do not match the graph / each other");
        check_labels(s.y, g.num_nodes);
    }

    auto rng = make_rng(cfg.seed, {0x7472616e});
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t n_cal = 0;
    if (cfg.calibration_fraction > 0 && dataset.size() >= 2)
        n_cal = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(cfg.calibration_fraction * static_cast<double>(dataset.size()))), 1,
            dataset.size() - 1);
    std::vector<FeaturizedSample> train_set, cal_set;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i + n_cal < order.size() ? train_set : cal_set).push_back(dataset[order[i]]);

    TrainingRun run;
    run.train_count = train_set.size();
    run.calibration_count = cal_set.size();
    CrfModel& m = run.model;
    m = CrfModel::zeros(d);
    m.feature_config = features;
    m.feature_config.node_dim = d;

    const double n = static_cast<double>(train_set.size());
    std::vector<std::size_t> perm(train_set.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::uint64_t t = 0;
    double prev = std::numeric_limits<double>::infinity();
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), rng);
        for (auto idx : perm) {
            const auto& s = train_set[idx];
            InferenceOptions io = cfg.inference;
            io.seed = derive_seed(cfg.seed, {t});
            const auto yhat = most_violating(m, g, s, io);
            const double eta = cfg.eta0 / (1.0 + static_cast<double>(t) * cfg.decay);
            ++t;
            const auto tv = joint_feature(g, s.features, s.y);
            const auto th = joint_feature(g, s.features, yhat);
            const bool violated = hamming_loss(yhat, s.y) + dot(m.w, th) - dot(m.w, tv) > 0.0;
            for (std::size_t i = 0; i < m.w.size(); ++i) {
                const double gi = (violated ? th[i] - tv[i] : 0.0) + cfg.c_penalty / n * m.w[i];
                m.w[i] -= eta * gi;
            }
        }
        InferenceOptions io = cfg.inference;
        io.seed = derive_seed(cfg.seed, {0x65706f6368, static_cast<std::uint64_t>(epoch)});
        double hinge = 0.0;
        for (const auto& s : train_set) hinge += structured_hinge_loss(m, g, s, io);
        const double wn = squared_norm(m.w);
        const double obj = hinge + 0.5 * cfg.c_penalty * wn;
        if (!std::isfinite(obj)) {
            std::ostringstream msg;
            msg << "training objective became non-finite at epoch " << epoch << " (step size "
                << format_number(cfg.eta0 / (1.0 + static_cast<double>(t) * cfg.decay)) << ", eta0 "
                << format_number(cfg.eta0) << "); reduce eta0";
            throw Error(msg.str());
        }
        run.epochs.push_back({epoch, obj, hinge, std::sqrt(wn)});
        m.final_objective = obj;
        if (std::abs(prev - obj) <= cfg.tolerance * std::max(std::abs(obj), 1e-12)) break;
        prev = obj;
    }

    const auto& cal_data = cal_set.empty() ? train_set : cal_set;
    m.calibration = calibrate(m, g, cal_data, cfg.inference);
    m.training_fingerprint = training_fingerprint(cfg, dataset.size());
    return run;
}

inline Table metrics_table(const TrainingRun& run) {
    Table t;
    t.comments = {" leakcrf training metrics v1"};
    t.header = {"epoch", "objective", "hinge", "w_norm"};
    for (const auto& e : run.epochs) t.rows.push_back({static_cast<double>(e.epoch), e.objective, e.hinge, e.w_norm});
    return t;
}

}  // namespace leakcrf
