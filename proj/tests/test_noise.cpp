#include "sdbc/noise.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace sdbc {
namespace {

// Non-recombining leaf k at depth n: bit (n-1-i) of k is the move at step i (0 up, 1 down).
double leaf_W(int k, int n, double sdt) {
    double w = 0.0;
    for (int i = 0; i < n; ++i) w += ((k >> (n - 1 - i)) & 1) ? -sdt : sdt;
    return w;
}

Vec level_W(const NoiseSource& s, int level) {
    Vec w(s.level_size(level));
    for (int j = 0; j < w.size(); ++j) w(j) = s.W(level, j);
    return w;
}

TEST(Tree, TwoStepLeaves) {
    const NoiseTree t(2, 1.0, false);
    ASSERT_EQ(t.level_size(2), 4);
    const double r = std::sqrt(2.0);
    const double expected[] = {r, 0.0, 0.0, -r};
    for (int j = 0; j < 4; ++j) {
        EXPECT_NEAR(t.W(2, j), expected[j], 1e-15);
        EXPECT_EQ(t.probability(2, j), 0.25);
    }
    EXPECT_NEAR(expectation(t, 2, level_W(t, 2)), 0.0, 1e-15);
    EXPECT_NEAR(expectation(t, 2, level_W(t, 2).cwiseAbs2()), 1.0, 1e-15);
}

TEST(Tree, OneStepAndRecombiningProbabilities) {
    const NoiseTree one(1, 2.0, false);
    EXPECT_NEAR(one.W(1, 0), std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(one.W(1, 1), -std::sqrt(2.0), 1e-15);
    const NoiseTree rec(3, 1.0, true);
    ASSERT_EQ(rec.level_size(3), 4);
    const double p[] = {1.0 / 8, 3.0 / 8, 3.0 / 8, 1.0 / 8};
    for (int j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(rec.probability(3, j), p[j]);
}

TEST(Tree, DepthLimits) {
    EXPECT_THROW(NoiseTree(NoiseTree::kMaxDepth + 1, 1.0, false), std::invalid_argument);
    EXPECT_THROW(NoiseTree(NoiseTree::kMaxRecombiningDepth + 1, 1.0, true), std::invalid_argument);
    EXPECT_NO_THROW(NoiseTree(200, 1.0, true));
}

TEST(Tree, MomentsAndProbabilitiesExact) {
    for (bool rec : {false, true}) {
        for (int n_t : {1, 5, 12}) {
            const NoiseTree t(n_t, 0.7, rec);
            for (int n = 0; n <= n_t; ++n) {
                double total = 0.0;
                for (int j = 0; j < t.level_size(n); ++j) total += t.probability(n, j);
                EXPECT_NEAR(total, 1.0, 1e-15);
                const Vec w = level_W(t, n);
                EXPECT_NEAR(expectation(t, n, w), 0.0, 1e-12);
                EXPECT_NEAR(expectation(t, n, w.cwiseAbs2()), 0.7 * n / n_t, 1e-12);
            }
        }
    }
}

TEST(Tree, LeafValuesMatchBitPaths) {
    const NoiseTree t(6, 1.0, false);
    for (int k = 0; k < t.level_size(6); ++k) EXPECT_NEAR(t.W(6, k), leaf_W(k, 6, t.sqrt_dt()), 1e-14);
}

TEST(ConditionalExpectation, Examples) {
    const NoiseTree t(1, 1.0, false);
    Vec c(2);
    c << 3.0, 3.0;
    EXPECT_EQ(conditional_expectation(t, 0, c)(0), 3.0);
    EXPECT_EQ(martingale_increment(t, 0, c)(0), 0.0);
    c << 2.0, 0.0;
    EXPECT_EQ(conditional_expectation(t, 0, c)(0), 1.0);
}

TEST(ConditionalExpectation, TowerPropertyByBruteForce) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    for (bool rec : {false, true}) {
        const NoiseTree t(4, 1.0, rec);
        Vec leaves(t.level_size(4));
        for (auto& v : leaves) v = g(rng);
        const Vec two_step = conditional_expectation(t, 2, conditional_expectation(t, 3, leaves));
        for (int k = 0; k < t.level_size(2); ++k) {
            // direct: average over the four grandchild paths
            double direct = 0.0;
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) {
                    const int c1 = a ? t.down(2, k) : t.up(2, k);
                    direct += 0.25 * leaves(b ? t.down(3, c1) : t.up(3, c1));
                }
            EXPECT_NEAR(two_step(k), direct, 1e-15);
        }
    }
}

TEST(MartingaleIncrement, OfWIsOne) {
    for (bool rec : {false, true}) {
        const NoiseTree t(5, 1.3, rec);
        for (int n = 0; n < 5; ++n) {
            const Vec Y = martingale_increment(t, n, level_W(t, n + 1));
            for (int k = 0; k < Y.size(); ++k) EXPECT_NEAR(Y(k), 1.0, 1e-14);
        }
    }
}

TEST(MartingaleIncrement, OfWSquaredByBruteForce) {
    const NoiseTree t(3, 1.0, false);
    const double s = t.sqrt_dt();
    for (int n = 0; n < 3; ++n) {
        const Vec Y = martingale_increment(t, n, Vec(level_W(t, n + 1).cwiseAbs2()));
        for (int k = 0; k < t.level_size(n); ++k) {
            const double up = leaf_W(2 * k, n + 1, s), dn = leaf_W(2 * k + 1, n + 1, s);
            EXPECT_NEAR(Y(k), (up * up - dn * dn) / (2 * s), 1e-14);
            EXPECT_NEAR(Y(k), 2.0 * t.W(n, k), 1e-14);
        }
    }
}

TEST(MartingaleIncrement, RepresentationReconstructsChildren) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    for (bool rec : {false, true}) {
        const NoiseTree t(6, 1.0, rec);
        for (int n = 0; n < 6; ++n) {
            Mat child(3, t.level_size(n + 1));
            for (Eigen::Index i = 0; i < child.size(); ++i) child.data()[i] = g(rng);
            const Mat m = conditional_expectation(t, n, child);
            const Mat Y = martingale_increment(t, n, child);
            for (int k = 0; k < t.level_size(n); ++k) {
                EXPECT_LE((m.col(k) + Y.col(k) * t.sqrt_dt() - child.col(t.up(n, k))).cwiseAbs().maxCoeff(), 1e-14);
                EXPECT_LE((m.col(k) - Y.col(k) * t.sqrt_dt() - child.col(t.down(n, k))).cwiseAbs().maxCoeff(), 1e-14);
            }
        }
    }
}

TEST(Tree, PathToWalksParents) {
    const NoiseTree t(5, 1.0, false);
    const std::vector<int> p = t.path_to(5, 19);
    ASSERT_EQ(p.size(), 6u);
    EXPECT_EQ(p[0], 0);
    EXPECT_EQ(p[5], 19);
    for (int n = 1; n <= 5; ++n) EXPECT_EQ(p[n] / 2, p[n - 1]);
}

TEST(Ensemble, MomentsWithinThreeStandardErrors) {
    const PathEnsemble e(10000, 8, 1.0, 42);
    for (int n = 1; n <= 8; ++n) {
        const Vec w = level_W(e, n);
        const double t = e.horizon() * n / 8;
        const double se1 = std::sqrt(t / w.size());
        const double se2 = std::sqrt(2.0 * t * t / w.size());
        EXPECT_LE(std::abs(expectation(e, n, w)), 3 * se1);
        EXPECT_LE(std::abs(expectation(e, n, w.cwiseAbs2()) - t), 3 * se2);
    }
}

TEST(Ensemble, SeededAndCoarsened) {
    const PathEnsemble a(50, 8, 1.0, 7), b(50, 8, 1.0, 7), c(50, 8, 1.0, 8);
    EXPECT_EQ(a.increments(), b.increments());
    EXPECT_NE(a.increments(), c.increments());
    const PathEnsemble coarse = a.coarsen(4);
    ASSERT_EQ(coarse.depth(), 2);
    for (int j = 0; j < 50; ++j) {
        EXPECT_NEAR(coarse.W(1, j), a.W(4, j), 1e-14);
        EXPECT_NEAR(coarse.W(2, j), a.W(8, j), 1e-14);
    }
}

}  // namespace
}  // namespace sdbc
