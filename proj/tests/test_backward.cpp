#include "sdbc/backward.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace sdbc {
namespace {

const Geometry kUnit = Geometry::interval(0, 1, {0.2, 0.8});

Mat random_mat(int r, int c, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
}

AdaptedField random_control(const NoiseSource& noise, int rows, std::mt19937_64& rng) {
    AdaptedField u = zero_field(noise, rows, noise.depth());
    for (auto& m : u) m = random_mat(rows, int(m.cols()), rng);
    return u;
}

TEST(Backward, ZeroDataGivesZero) {
    const Mesh m = build_mesh(kUnit, 9);
    const Discretization d(m, CoefficientSet::constant(0.5, 0.5, 0.5, 0.5), TimeGrid(1.0, 4));
    const NoiseTree t(4, 1.0, false);
    const BackwardState s = solve_backward(d, Mat::Zero(9, 16), t);
    for (int n = 0; n <= 4; ++n) EXPECT_EQ(s.y[n].cwiseAbs().maxCoeff(), 0.0);
    for (int n = 0; n < 4; ++n) EXPECT_EQ(s.Y[n].cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, DeterministicTerminalDataHasNoIntegrand) {
    const Mesh m = build_mesh(kUnit, 9);
    const Discretization d(m, CoefficientSet::constant(0.5, 0.0, 0.3, 0.0), TimeGrid(1.0, 4));
    const NoiseTree t(4, 1.0, false);
    Vec prof(9);
    for (int i = 0; i < 9; ++i) prof(i) = std::sin(M_PI * m.bulk_nodes[i](0));
    const BackwardState s = solve_backward(d, prof.replicate(1, 16), t);
    for (int n = 0; n < 4; ++n) {
        EXPECT_EQ(s.Y[n].cwiseAbs().maxCoeff(), 0.0);
        for (Eigen::Index j = 1; j < s.y[n].cols(); ++j) EXPECT_TRUE(s.y[n].col(j) == s.y[n].col(0));
    }
}

// y_n = m - Δt a₂ Y node by node, with no diffusion and a₁ = 0.
TEST(Backward, ExponentialTerminalDataByStraightLineInduction) {
    const Mesh m = build_mesh(kUnit, 5);
    const double a2 = 0.7;
    const int n_t = 3;
    const Discretization d(m, CoefficientSet::constant(0.0, a2, 0.0, a2, Point::Zero(), 0.0, 0.0, 0.0),
                           TimeGrid(1.0, n_t));
    const NoiseTree t(n_t, 1.0, false);
    const double s = t.sqrt_dt(), dt = d.grid().dt();
    std::vector<std::vector<double>> y(n_t + 1);
    for (int k = 0; k < t.level_size(n_t); ++k) y[n_t].push_back(std::exp(a2 * t.W(n_t, k)));
    for (int n = n_t - 1; n >= 0; --n)
        for (int k = 0; k < t.level_size(n); ++k) {
            const double up = y[n + 1][2 * k], dn = y[n + 1][2 * k + 1];
            y[n].push_back(0.5 * (up + dn) - dt * a2 * (up - dn) / (2 * s));
        }
    Mat yT(5, t.level_size(n_t));
    for (int k = 0; k < yT.cols(); ++k) yT.col(k).setConstant(y[n_t][k]);
    const BackwardState st = solve_backward(d, yT, t);
    const double factor = std::cosh(a2 * s) - a2 * s * std::sinh(a2 * s);
    for (int n = 0; n <= n_t; ++n)
        for (int k = 0; k < t.level_size(n); ++k) {
            EXPECT_NEAR(st.y[n](2, k), y[n][k], 1e-14);
            EXPECT_NEAR(y[n][k], std::exp(a2 * t.W(n, k)) * std::pow(factor, n_t - n), 1e-14);
        }
}

TEST(Backward, MartingaleConsistencyAtEveryNode) {
    std::mt19937_64 rng(2);
    const Mesh m = build_mesh(kUnit, 9);
    const Discretization d(m, CoefficientSet::constant(0.4, 0.6, -0.2, 0.3, Point(0.2, 0)), TimeGrid(1.0, 5));
    for (bool rec : {false, true}) {
        const NoiseTree t(5, 1.0, rec);
        const BackwardState st = solve_backward(d, random_mat(9, t.level_size(5), rng), t, random_control(t, 9, rng));
        for (int n = 0; n < 5; ++n)
            for (int k = 0; k < t.level_size(n); ++k) {
                const Vec up = st.y[n + 1].col(t.up(n, k)), dn = st.y[n + 1].col(t.down(n, k));
                const Vec mid = 0.5 * (up + dn);
                EXPECT_LE((mid + st.Y[n].col(k) * t.sqrt_dt() - up).cwiseAbs().maxCoeff(), 1e-14);
                EXPECT_LE((mid - st.Y[n].col(k) * t.sqrt_dt() - dn).cwiseAbs().maxCoeff(), 1e-14);
            }
    }
}

TEST(Backward, LinearInTerminalDataAndControl) {
    std::mt19937_64 rng(6);
    const Mesh m = build_mesh(kUnit, 9);
    const Discretization d(m, CoefficientSet::constant(0.4, 0.6, -0.2, 0.3), TimeGrid(1.0, 4));
    const NoiseTree t(4, 1.0, false);
    const Mat a = random_mat(9, 16, rng), b = random_mat(9, 16, rng);
    const AdaptedField ua = random_control(t, 9, rng), ub = random_control(t, 9, rng);
    AdaptedField uc = ua;
    for (std::size_t n = 0; n < uc.size(); ++n) uc[n] = 2.0 * ua[n] - ub[n];
    const BackwardState sa = solve_backward(d, a, t, ua), sb = solve_backward(d, b, t, ub);
    const BackwardState sc = solve_backward(d, Mat(2.0 * a - b), t, uc);
    for (int n = 0; n <= 4; ++n) EXPECT_LE((sc.y[n] - (2.0 * sa.y[n] - sb.y[n])).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Backward, NodeIgnoresLeavesOutsideItsSubtree) {
    std::mt19937_64 rng(12);
    const Mesh m = build_mesh(kUnit, 9);
    const Discretization d(m, CoefficientSet::constant(0.4, 0.6, -0.2, 0.3), TimeGrid(1.0, 4));
    const NoiseTree t(4, 1.0, false);
    Mat yT = random_mat(9, 16, rng);
    const BackwardState a = solve_backward(d, yT, t);
    yT.rightCols(8) += random_mat(9, 8, rng);  // leaves under the down child of the root
    const BackwardState b = solve_backward(d, yT, t);
    EXPECT_TRUE(a.y[1].col(0) == b.y[1].col(0));
    EXPECT_TRUE(a.y[3].col(2) == b.y[3].col(2));
    EXPECT_FALSE(a.y[0].col(0) == b.y[0].col(0));
}

TEST(Backward, RejectsMonteCarloBackend) {
    const Mesh m = build_mesh(kUnit, 9);
    const Discretization d(m, CoefficientSet::zero(), TimeGrid(1.0, 4));
    const PathEnsemble p(10, 4, 1.0, 1);
    EXPECT_THROW(solve_backward(d, Mat::Zero(9, 10), static_cast<const NoiseSource&>(p)), std::invalid_argument);
}

TEST(Duality, TransposeIdentityEntrywise) {
    const Mesh m = build_mesh(kUnit, 9);
    for (bool rec : {false, true}) {
        const Discretization d(m, CoefficientSet::constant(0.4, 0.6, -0.2, 0.3, Point(0.2, 0)), TimeGrid(1.0, 4));
        const NoiseTree t(4, 1.0, rec);
        const Mat F = forward_terminal_map(d, t);
        const Mat B = backward_initial_map(d, t);
        EXPECT_LE(transpose_defect(F, B, d.mass(), t), 1e-10);
        // independent check: p_j ⟨e_i, M F e_k⟩ on leaf j equals ⟨B (leaf j, e_i), M e_k⟩
        const int leaves = t.level_size(4);
        for (int j = 0; j < leaves; ++j)
            for (int i = 0; i < 9; ++i)
                for (int k = 0; k < 9; ++k)
                    EXPECT_NEAR(t.probability(4, j) * d.mass()(i) * F(j * 9 + i, k), d.mass()(k) * B(k, j * 9 + i),
                                1e-12);
    }
}

TEST(Duality, BruteForceSumsOnRandomData) {
    std::mt19937_64 rng(13);
    const Mesh m = build_mesh(kUnit, 9);
    const Discretization d(m, CoefficientSet::constant(0.4, 0.6, -0.2, 0.3, Point(0.2, 0)), TimeGrid(1.0, 4));
    const NoiseTree t(4, 1.0, false);
    const Vec z0 = random_mat(9, 1, rng);
    const Mat yT = random_mat(9, 16, rng);
    const AdaptedField u = random_control(t, 9, rng);
    const ForwardTrajectory z = solve_forward(d, z0, t);
    const BackwardState y = solve_backward(d, yT, t, u);
    const Vec& M = d.mass();
    const Vec Bu = control_weights(m);
    double terminal = 0.0, control = 0.0;
    for (int j = 0; j < 16; ++j) terminal += t.probability(4, j) * yT.col(j).dot(M.cwiseProduct(z.z[4].col(j)));
    for (int n = 0; n < 4; ++n)
        for (int j = 0; j < t.level_size(n); ++j)
            control += t.probability(n, j) * d.grid().dt() * u[n].col(j).dot(Bu.cwiseProduct(z.z[n].col(j)));
    const double initial = y.y[0].col(0).dot(M.cwiseProduct(z0));
    const DualityTerms r = duality_residual(z, y, u, d);
    EXPECT_NEAR(r.terminal, terminal, 1e-12 * std::abs(terminal));
    EXPECT_NEAR(r.initial, initial, 1e-12 * std::abs(initial));
    EXPECT_NEAR(r.control, control, 1e-12 * std::abs(control));
    EXPECT_LE(std::abs(terminal - initial - control), 1e-10 * std::max({std::abs(terminal), std::abs(initial), std::abs(control)}));
    EXPECT_LE(r.residual, 1e-10);
    for (int i = 0; i < 9; ++i) EXPECT_EQ(Bu(i), m.control_mask(i) * m.bulk_weights(i));
}

TEST(Duality, ZeroDataResidualIsZero) {
    const Mesh m = build_mesh(kUnit, 9);
    const Discretization d(m, CoefficientSet::zero(), TimeGrid(1.0, 4));
    const NoiseTree t(4, 1.0, false);
    const ForwardTrajectory z = solve_forward(d, Vec::Ones(9), t);
    const BackwardState y = solve_backward(d, Mat::Zero(9, 16), t);
    EXPECT_EQ(duality_residual(z, y, {}, d).residual, 0.0);
}

}  // namespace
}  // namespace sdbc
