#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace leakcrf;
using namespace leakcrf::testing;

namespace {

/// Linearly separable chain: node features [f, 1], label 1 exactly when f > 0.
std::vector<FeaturizedSample> separable_set(Rng& rng, std::size_t nodes, std::size_t count) {
    std::uniform_real_distribution<double> mag(0.5, 1.5);
    std::bernoulli_distribution sign(0.5);
    std::vector<FeaturizedSample> out;
    for (std::size_t k = 0; k < count; ++k) {
        FeaturizedSample s{NodeFeatures(nodes, 2), LabelAssignment(nodes)};
        for (std::size_t v = 0; v < nodes; ++v) {
            const bool pos = sign(rng);
            s.features.values[2 * v] = pos ? mag(rng) : -mag(rng);
            s.features.values[2 * v + 1] = 1.0;
            s.y[v] = pos ? 1 : 0;
        }
        out.push_back(std::move(s));
    }
    return out;
}

CrfGraph chain(std::size_t n) {
    std::vector<std::pair<NodeId, NodeId>> e;
    for (std::size_t i = 0; i + 1 < n; ++i) e.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(i + 1));
    return CrfGraph::from_edges(n, e);
}

}  // namespace

TEST(HammingLoss, Examples) {
    EXPECT_EQ(hamming_loss({0, 1, 1, 0}, {0, 0, 1, 1}), 2);
    EXPECT_EQ(hamming_loss({1, 1, 1}, {1, 1, 1}), 0);
    EXPECT_EQ(hamming_loss({}, {}), 0);
    EXPECT_EQ(hamming_loss({0, 0, 0, 0, 0}, {1, 1, 1, 1, 1}), 5);
    EXPECT_THROW(hamming_loss({0, 1}, {0}), DimensionError);
}

TEST(StructuredHinge, ZeroWeightsGiveNodeCount) {
    Rng rng(1);
    const auto g = random_graph(rng, 7, 0.4);
    FeaturizedSample s{random_features(rng, 7, 3), labels_from_mask(0b1010011, 7)};
    // every labelling scores 0, so the complement maximises the loss
    EXPECT_DOUBLE_EQ(structured_hinge_loss(CrfModel::zeros(3), g, s), 7.0);
}

TEST(StructuredHinge, MatchesExhaustiveOracle) {
    Rng rng(2);
    for (int t = 0; t < 60; ++t) {
        const std::size_t n = 1 + t % 8;
        const auto g = random_graph(rng, n, 0.5);
        FeaturizedSample s{random_features(rng, n, 3), labels_from_mask(rng(), n)};
        const auto m = random_model(rng, 3);
        const double h = structured_hinge_loss(m, g, s, {Solver::brute_force, 0, 0});
        EXPECT_NEAR(h, oracle_hinge(m, g, s.features, s.y), 1e-9);
        EXPECT_GE(h, 0.0);
    }
}

TEST(StructuredHinge, ZeroWhenTruthWinsByMargin) {
    const auto g = CrfGraph::from_edges(1, {});
    NodeFeatures f(1, 1);
    f.values[0] = 1.0;
    auto m = CrfModel::zeros(1);
    m.w[1] = 1.0;  // score(y=1) - score(y=0) = 1, exactly the unit margin
    EXPECT_DOUBLE_EQ(structured_hinge_loss(m, g, {f, {1}}), 0.0);
    EXPECT_DOUBLE_EQ(structured_hinge_loss(m, g, {f, {0}}), 2.0);
}

TEST(Training, OneDimensionalClosedForm) {
    // Single node, one feature s, label 1. With w0 = -w1 = -u/2 the objective is
    // 1 - s u + C u^2 / 4, minimised at u = 2s/C while s u < 1.
    const double s = 0.2, c = 0.25;
    NodeFeatures f(1, 1);
    f.values[0] = s;
    const std::vector<FeaturizedSample> data{{f, {1}}};
    const auto g = CrfGraph::from_edges(1, {});
    TrainingConfig cfg;
    cfg.c_penalty = c;
    cfg.max_epochs = 20000;
    cfg.tolerance = 0.0;
    cfg.calibration_fraction = 0.0;
    const auto run = train(data, g, cfg);
    const double u = 2 * s / c;
    EXPECT_NEAR(run.model.w[0], -u / 2, 1e-3);
    EXPECT_NEAR(run.model.w[1], u / 2, 1e-3);
    for (std::size_t i = 2; i < 6; ++i) EXPECT_EQ(run.model.w[i], 0.0);
    EXPECT_NEAR(run.epochs.back().objective, 0.84, 1e-5);
    EXPECT_EQ(run.train_count, 1u);
    ASSERT_TRUE(run.model.calibration.has_value());
}

TEST(Training, SeparableDataReachesNearZeroHinge) {
    Rng rng(3);
    const std::size_t nodes = 8, count = 50;
    const auto data = separable_set(rng, nodes, count);
    const auto g = chain(nodes);
    TrainingConfig cfg;
    cfg.c_penalty = 0.01;
    cfg.max_epochs = 200;
    cfg.calibration_fraction = 0.0;
    const auto run = train(data, g, cfg);
    double hinge = 0.0;
    for (const auto& s : data) hinge += structured_hinge_loss(run.model, g, s);
    EXPECT_LE(hinge, 1e-3 * nodes * count);
    for (const auto& s : data) EXPECT_EQ(map_infer(run.model, g, s.features), s.y);
}

TEST(Training, ObjectiveDecreasesOverall) {
    Rng rng(4);
    const auto data = separable_set(rng, 6, 40);
    const auto g = chain(6);
    TrainingConfig cfg;
    cfg.max_epochs = 30;
    cfg.tolerance = 0.0;
    const auto run = train(data, g, cfg);
    ASSERT_EQ(run.epochs.size(), 30u);
    EXPECT_LT(run.epochs.back().objective, run.epochs.front().objective);
    EXPECT_EQ(run.train_count + run.calibration_count, 40u);
    EXPECT_EQ(run.calibration_count, 8u);
}

TEST(Training, SubgradientMatchesFiniteDifferences) {
    Rng rng(5);
    const std::size_t n = 6, d = 3;
    const auto g = random_graph(rng, n, 0.5);
    std::vector<FeaturizedSample> data;
    for (int k = 0; k < 5; ++k) data.push_back({random_features(rng, n, d), labels_from_mask(rng(), n)});
    const InferenceOptions exact{Solver::brute_force, 0, 0};
    const double c = 0.3, eps = 1e-6;
    std::normal_distribution<double> gauss(0.0, 1.0);
    int checked = 0;
    for (int trial = 0; trial < 40 && checked < 20; ++trial) {
        const auto m = random_model(rng, d, 0.5, 0.5);
        std::vector<double> dir(m.w.size());
        for (auto& x : dir) x = gauss(rng);
        auto shifted = [&](double h) {
            auto mm = m;
            for (std::size_t i = 0; i < dir.size(); ++i) mm.w[i] += h * dir[i];
            return mm;
        };
        // skip points where the maximiser changes inside the stencil (kinks)
        bool smooth = true;
        for (const auto& s : data) {
            const auto a = loss_augmented_infer(shifted(-eps), g, s.features, s.y, exact);
            const auto b = loss_augmented_infer(shifted(eps), g, s.features, s.y, exact);
            smooth &= a == b && a == loss_augmented_infer(m, g, s.features, s.y, exact);
        }
        if (!smooth) continue;
        const double fd =
            (ssvm_objective(shifted(eps), g, data, c, exact) - ssvm_objective(shifted(-eps), g, data, c, exact)) / (2 * eps);
        EXPECT_NEAR(fd, dot(ssvm_subgradient(m, g, data, c, exact), dir), 1e-5 * (1 + std::abs(fd)));
        ++checked;
    }
    EXPECT_EQ(checked, 20);
}

TEST(Training, DeterministicForSeed) {
    Rng rng(6);
    const auto data = separable_set(rng, 5, 30);
    const auto g = chain(5);
    TrainingConfig cfg;
    cfg.max_epochs = 5;
    cfg.seed = 42;
    const auto a = train(data, g, cfg), b = train(data, g, cfg);
    EXPECT_EQ(a.model, b.model);
    EXPECT_EQ(table_to_string(metrics_table(a)), table_to_string(metrics_table(b)));
    cfg.seed = 43;
    EXPECT_NE(train(data, g, cfg).model.w, a.model.w);
}

TEST(Training, AbortsOnNonFiniteObjective) {
    NodeFeatures f(1, 1);
    f.values[0] = 1.0;
    const std::vector<FeaturizedSample> data{{f, {1}}};
    TrainingConfig cfg;
    cfg.eta0 = 1e300;
    try {
        train(data, CrfGraph::from_edges(1, {}), cfg);
        FAIL() << "expected divergence to be reported";
    } catch (const Error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
        EXPECT_NE(msg.find("eta0"), std::string::npos) << msg;
    }
}

TEST(Training, RejectsBadConfigAndData) {
    const auto g = chain(3);
    std::vector<FeaturizedSample> data{{NodeFeatures(3, 2), {0, 1, 0}}};
    TrainingConfig cfg;
    EXPECT_THROW(train(std::vector<FeaturizedSample>{}, g, cfg), ValidationError);
    cfg.c_penalty = 0;
    EXPECT_THROW(train(data, g, cfg), ValidationError);
    cfg = {};
    data.push_back({NodeFeatures(3, 3), {0, 0, 0}});
    EXPECT_THROW(train(data, g, cfg), DimensionError);
}

TEST(Training, MetricsTableHasOneRowPerEpoch) {
    Rng rng(7);
    const auto data = separable_set(rng, 4, 10);
    TrainingConfig cfg;
    cfg.max_epochs = 4;
    cfg.tolerance = 0.0;
    const auto t = metrics_table(train(data, chain(4), cfg));
    EXPECT_EQ(t.header, (std::vector<std::string>{"epoch", "objective", "hinge", "w_norm"}));
    ASSERT_EQ(t.rows.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(t.rows[i][0], static_cast<double>(i + 1));
}
