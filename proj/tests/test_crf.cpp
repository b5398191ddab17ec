#include <gtest/gtest.h>

#include <filesystem>

#include "test_support.hpp"

using namespace leakcrf;
using namespace leakcrf::testing;

namespace {

/// Model whose pairwise table is attractive (submodular energy) or repulsive.
CrfModel model_with_pairs(Rng& rng, std::size_t d, bool attractive) {
    auto m = random_model(rng, d);
    std::uniform_real_distribution<double> u(0.1, 1.5);
    const double same = u(rng), diff = u(rng);
    m.w[2 * d + pair_slot(0, 0)] = attractive ? same : -same;
    m.w[2 * d + pair_slot(1, 1)] = attractive ? same : -same;
    m.w[2 * d + pair_slot(0, 1)] = attractive ? -diff : diff;
    m.w[2 * d + pair_slot(1, 0)] = attractive ? -diff : diff;
    return m;
}

}  // namespace

TEST(Energy, ZeroWeightsGiveZeroEnergy) {
    Rng rng(1);
    const auto g = random_graph(rng, 7, 0.5);
    const auto f = random_features(rng, 7, 4);
    const auto m = CrfModel::zeros(4);
    for (std::uint64_t mask = 0; mask < 128; mask += 9) EXPECT_EQ(energy(m, g, f, labels_from_mask(mask, 7)), 0.0);
}

TEST(Energy, SingleNodePrefersHigherScore) {
    const auto g = CrfGraph::from_edges(1, {});
    NodeFeatures f(1, 1);
    f.values[0] = 1.0;
    auto m = CrfModel::zeros(1);
    m.w[0] = 0.2;  // score of label 0
    m.w[1] = 0.9;  // score of label 1
    EXPECT_LT(energy(m, g, f, {1}), energy(m, g, f, {0}));
    EXPECT_EQ(brute_force_infer(make_potentials(m, g, f), g), (LabelAssignment{1}));
}

TEST(Energy, EqualsNegatedJointScore) {
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
        const auto g = random_graph(rng, 6, 0.5);
        const auto f = random_features(rng, 6, 3);
        const auto m = random_model(rng, 3);
        const auto y = labels_from_mask(rng() & 63, 6);
        const double e = energy(m, g, f, y);
        EXPECT_NEAR(e, -dot(m.w, joint_feature(g, f, y)), 1e-12 * (1 + std::abs(e)));
        EXPECT_NEAR(e, -oracle_score(m.w, g, f, y), 1e-12 * (1 + std::abs(e)));
    }
}

TEST(Energy, RejectsDimensionMismatch) {
    Rng rng(3);
    const auto g = random_graph(rng, 4, 0.5);
    const auto f = random_features(rng, 4, 3);
    EXPECT_THROW(energy(CrfModel::zeros(2), g, f, LabelAssignment(4, 0)), DimensionError);
    auto bad = CrfModel::zeros(3);
    bad.w.pop_back();
    EXPECT_THROW(bad.check(), DimensionError);
    auto nan = CrfModel::zeros(3);
    nan.w[0] = std::nan("");
    EXPECT_THROW(nan.check(), ValidationError);
}

TEST(BruteForce, SingleNodeAndDominantAttraction) {
    const auto g1 = CrfGraph::from_edges(1, {});
    Potentials p;
    p.unary = {{0.3, -0.2}};
    EXPECT_EQ(brute_force_infer(p, g1), (LabelAssignment{1}));

    const auto g2 = CrfGraph::from_edges(2, {{0, 1}});
    Potentials q;
    q.unary = {{0.0, -0.4}, {0.0, 0.3}};
    q.pair = {{{-5.0, 5.0}, {5.0, -5.0}}};
    const auto y = brute_force_infer(q, g2);
    EXPECT_EQ(y[0], y[1]);
}

TEST(BruteForce, TiesPickLexicographicallySmallest) {
    const auto g = CrfGraph::from_edges(3, {});
    Potentials p;
    p.unary = {{0, 0}, {0, 0}, {0, 0}};
    EXPECT_EQ(brute_force_infer(p, g), (LabelAssignment{0, 0, 0}));
    p.unary = {{1, 0}, {0, 0}, {0, 0}};
    EXPECT_EQ(brute_force_infer(p, g), (LabelAssignment{1, 0, 0}));
}

TEST(BruteForce, MatchesExhaustiveSweepOnTenNodes) {
    Rng rng(4);
    for (int t = 0; t < 20; ++t) {
        const auto g = random_graph(rng, 10, 0.35);
        const auto f = random_features(rng, 10, 3);
        const auto m = random_model(rng, 3);
        const auto y = brute_force_infer(make_potentials(m, g, f), g);
        EXPECT_NEAR(energy(m, g, f, y), oracle_min_energy(m, g, f), 1e-9);
    }
    const auto big = CrfGraph::from_edges(21, {});
    Potentials p;
    p.unary.assign(21, {0.0, 0.0});
    EXPECT_THROW(brute_force_infer(p, big), ValidationError);
}

TEST(MapInference, ZeroPairwiseIsIndependentArgmax) {
    Rng rng(5);
    const auto g = random_graph(rng, 15, 0.3);
    const auto f = random_features(rng, 15, 4);
    auto m = random_model(rng, 4, 1.0, 0.0);
    for (auto solver : {Solver::automatic, Solver::icm, Solver::graph_cut}) {
        const auto y = map_infer(m, g, f, {solver, 20, 0});
        for (std::size_t v = 0; v < 15; ++v) {
            double s0 = 0, s1 = 0;
            for (std::size_t i = 0; i < 4; ++i) {
                s0 += m.w[i] * f.row(v)[i];
                s1 += m.w[4 + i] * f.row(v)[i];
            }
            EXPECT_EQ(y[v], s1 > s0 ? 1 : 0) << v;
        }
    }
}

TEST(MapInference, GraphCutMatchesBruteForceOnSubmodular) {
    Rng rng(6);
    for (int t = 0; t < 60; ++t) {
        const std::size_t n = 2 + t % 11;
        const auto g = random_graph(rng, n, 0.4);
        const auto f = random_features(rng, n, 3);
        const auto m = model_with_pairs(rng, 3, true);
        const auto p = make_potentials(m, g, f);
        ASSERT_TRUE(is_submodular(p));
        const auto y = graph_cut_infer(p, g);
        EXPECT_NEAR(energy(p, g, y), oracle_min_energy(m, g, f), 1e-9) << t;
        EXPECT_NEAR(energy(p, g, map_infer(p, g)), energy(p, g, y), 1e-9);
    }
}

TEST(MapInference, GraphCutRefusesNonSubmodular) {
    Rng rng(7);
    const auto g = random_graph(rng, 5, 0.6);
    const auto f = random_features(rng, 5, 2);
    const auto p = make_potentials(model_with_pairs(rng, 2, false), g, f);
    ASSERT_FALSE(is_submodular(p));
    EXPECT_THROW(graph_cut_infer(p, g), ValidationError);
    EXPECT_NO_THROW(map_infer(p, g));  // automatic falls back to ICM
}

TEST(MapInference, NeverWorseThanConstantLabelings) {
    Rng rng(8);
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 3 + t % 30;
        const auto g = random_graph(rng, n, 0.2);
        const auto f = random_features(rng, n, 3);
        const auto m = model_with_pairs(rng, 3, t % 2 == 0);
        const auto p = make_potentials(m, g, f);
        for (auto solver : {Solver::automatic, Solver::icm}) {
            const double e = energy(p, g, map_infer(p, g, {solver, 5, static_cast<std::uint64_t>(t)}));
            EXPECT_LE(e, energy(p, g, LabelAssignment(n, 0)) + 1e-12);
            EXPECT_LE(e, energy(p, g, LabelAssignment(n, 1)) + 1e-12);
        }
    }
}

TEST(MapInference, DeterministicForSeed) {
    Rng rng(9);
    const auto g = random_graph(rng, 25, 0.2);
    const auto f = random_features(rng, 25, 3);
    const auto p = make_potentials(model_with_pairs(rng, 3, false), g, f);
    EXPECT_EQ(map_infer(p, g, {Solver::icm, 20, 77}), map_infer(p, g, {Solver::icm, 20, 77}));
}

TEST(MapInference, IcmAgreesWithBruteForceOnMostInstances) {
    Rng rng(10);
    int hits = 0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 2 + t % 11;
        const auto g = random_graph(rng, n, 0.4);
        const auto f = random_features(rng, n, 3);
        const auto m = model_with_pairs(rng, 3, t % 2 == 0);
        const auto p = make_potentials(m, g, f);
        hits += std::abs(energy(p, g, map_infer(p, g, {Solver::icm, 20, static_cast<std::uint64_t>(t)})) -
                         oracle_min_energy(m, g, f)) <= 1e-9;
    }
    EXPECT_GE(hits, 95);
}

TEST(LossAugmented, ZeroWeightsReturnComplement) {
    Rng rng(11);
    const auto g = random_graph(rng, 8, 0.4);
    const auto f = random_features(rng, 8, 3);
    const auto y = labels_from_mask(0b10110010, 8);
    auto yc = y;
    for (auto& l : yc) l = 1 - l;
    EXPECT_EQ(loss_augmented_infer(CrfModel::zeros(3), g, f, y), yc);
}

TEST(LossAugmented, MatchesBruteForceOverAugmentedObjective) {
    Rng rng(12);
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 2 + t % 7;
        const auto g = random_graph(rng, n, 0.5);
        const auto f = random_features(rng, n, 3);
        const auto m = model_with_pairs(rng, 3, t % 3 != 0);
        const auto y_true = labels_from_mask(rng(), n);
        auto objective = [&](const LabelAssignment& y) { return oracle_hamming(y, y_true) + oracle_score(m.w, g, f, y); };
        const auto yhat = loss_augmented_infer(m, g, f, y_true, {Solver::automatic, 20, static_cast<std::uint64_t>(t)});
        EXPECT_NEAR(objective(yhat), oracle_max(n, objective), 1e-9) << t;
        EXPECT_GE(objective(yhat), objective(y_true) - 1e-12);
    }
}

TEST(Marginals, SigmoidAndCalibrationBasics) {
    EXPECT_EQ(sigmoid(0.0), 0.5);
    EXPECT_NEAR(sigmoid(40.0), 1.0, 1e-15);
    EXPECT_NEAR(sigmoid(-40.0), 0.0, 1e-15);
    EXPECT_GT(sigmoid(-800.0), -1e-300);
    const auto p = calibrated_probabilities({-2.0, 0.0, 0.5, 3.0}, {1.0, 0.0});
    EXPECT_EQ(p.p1[1], 0.5);
    for (std::size_t i = 1; i < p.p1.size(); ++i) EXPECT_GT(p.p1[i], p.p1[i - 1]);
}

TEST(Marginals, MarginIsEnergyDifferenceWithNeighboursFixed) {
    Rng rng(13);
    const auto g = random_graph(rng, 9, 0.4);
    const auto f = random_features(rng, 9, 3);
    const auto m = model_with_pairs(rng, 3, true);
    const auto p = make_potentials(m, g, f);
    const auto ctx = labels_from_mask(0b101100110, 9);
    const auto margins = node_margins(p, g, ctx);
    for (std::size_t v = 0; v < 9; ++v) {
        auto y0 = ctx, y1 = ctx;
        y0[v] = 0;
        y1[v] = 1;
        EXPECT_NEAR(margins[v], energy(p, g, y0) - energy(p, g, y1), 1e-9);
    }
}

TEST(Marginals, RequireCalibrationAndLieInUnitInterval) {
    Rng rng(14);
    const auto g = random_graph(rng, 10, 0.3);
    const auto f = random_features(rng, 10, 3);
    auto m = model_with_pairs(rng, 3, true);
    EXPECT_THROW(node_marginals(m, g, f), Error);
    m.calibration = Calibration{0.8, -0.3};
    const auto est = node_marginals(m, g, f);
    ASSERT_EQ(est.p1.size(), 10u);
    for (double q : est.p1) {
        EXPECT_GT(q, 0.0);
        EXPECT_LT(q, 1.0);
    }
}

TEST(Marginals, PlattRecoversLogisticParameters) {
    Rng rng(15);
    std::normal_distribution<double> g(0.0, 2.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> margins;
    std::vector<std::uint8_t> labels;
    const double a = 1.7, b = -0.6;
    for (int i = 0; i < 40000; ++i) {
        const double m = g(rng);
        margins.push_back(m);
        labels.push_back(u(rng) < sigmoid(a * m + b) ? 1 : 0);
    }
    const auto c = fit_platt(margins, labels);
    EXPECT_NEAR(c.a, a, 0.08);
    EXPECT_NEAR(c.b, b, 0.06);
    EXPECT_THROW(fit_platt(std::vector<double>{}, std::vector<std::uint8_t>{}), ValidationError);
}

TEST(ModelFile, RoundTripsExactly) {
    Rng rng(16);
    auto m = random_model(rng, kNodeFeatureDim);
    m.calibration = Calibration{1.25, -0.375};
    m.feature_config = {2, kNodeFeatureDim, 0x1234abcdULL};
    m.training_fingerprint = "ssvm-sgd;C=0.25";
    m.final_objective = 12.5;
    const auto path = (std::filesystem::temp_directory_path() / "leakcrf_model_test.json").string();
    save_model(m, path);
    EXPECT_EQ(load_model(path), m);
    m.calibration.reset();
    EXPECT_EQ(model_from_json(model_to_json(m)), m);
    auto doc = model_to_json(m);
    doc["w"].erase(0);
    EXPECT_THROW(model_from_json(doc), DimensionError);
}
