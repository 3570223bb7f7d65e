#include "sdbc/coefficients.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace sdbc {
namespace {

// Hand-written cost formula, term by term.
double K_by_hand(const CoefficientNorms& n, double T) {
    return 1.0 + 1.0 / T + std::cbrt(n.a1 * n.a1) + T * n.a1 + std::cbrt(n.b1 * n.b1) + T * n.b1 +
           (1.0 + T) * (n.a2 * n.a2 + n.B * n.B + n.b2 * n.b2 + n.B_gamma * n.B_gamma);
}

CoefficientSet with_A(const Eigen::Matrix2d& A) {
    CoefficientSet c = CoefficientSet::zero();
    c.A = [A](double, const Point&) { return A; };
    return c;
}

TEST(CostConstant, HandValues) {
    EXPECT_EQ(cost_constant_K({}, 1.0), 2.0);
    CoefficientNorms n;
    n.a1 = 1.0;
    EXPECT_EQ(cost_constant_K(n, 1.0), 4.0);
    EXPECT_NEAR(cost_constant_K({}, 1e12), 1.0, 1e-11);
    for (double T : {0.1, 0.5, 3.0}) EXPECT_EQ(cost_constant_K({}, T), 1.0 + 1.0 / T);
}

TEST(CostConstant, MatchesFormulaAndIsMonotone) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int k = 0; k < 200; ++k) {
        CoefficientNorms n{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
        const double T = 0.1 + u(rng);
        const double K = cost_constant_K(n, T);
        EXPECT_NEAR(K, K_by_hand(n, T), 1e-12 * K);
        for (double* f : {&n.a1, &n.a2, &n.B, &n.b1, &n.b2, &n.B_gamma}) {
            const double keep = *f;
            *f += 0.1;
            EXPECT_GE(cost_constant_K(n, T), K);
            *f = keep;
        }
    }
}

TEST(LambdaMin, HandValuesAndLinearity) {
    EXPECT_EQ(lambda_min({}, 1.0, 1.0), 2.0);
    EXPECT_EQ(lambda_min({}, 2.0, 1.0), 6.0);
    CoefficientNorms n{0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    EXPECT_NEAR(lambda_min(n, 1.5, 2.0), 2.0 * lambda_min(n, 1.5, 1.0), 1e-12);
}

TEST(DissipationRate, ZeroAndSum) {
    EXPECT_EQ(dissipation_rate({}), 0.0);
    CoefficientNorms n{1.0, 2.0, 0.5, 0.25, 1.0, 0.0};
    EXPECT_DOUBLE_EQ(dissipation_rate(n), 1.0 + 4.0 + 0.25 + 0.25 + 1.0);
}

TEST(Ellipticity, IdentityAndSymmetricMatrices) {
    const Mesh disk = build_mesh(Geometry::disk(1.0, {0.0, 0.5}), 6, 12);
    const TimeGrid grid(1.0, 4);
    EXPECT_DOUBLE_EQ(check_ellipticity(CoefficientSet::zero(), disk, grid), 1.0);
    Eigen::Matrix2d A;
    A << 2, 1, 1, 2;
    EXPECT_NEAR(check_ellipticity(with_A(A), disk, grid), 1.0, 1e-12);
    A << 1, 2, 2, 1;
    EXPECT_THROW(check_ellipticity(with_A(A), disk, grid), std::invalid_argument);
    A << 1, 0.5, 0, 1;
    EXPECT_THROW(check_ellipticity(with_A(A), disk, grid), std::invalid_argument);
}

TEST(SupNorms, PresetsAreSampledExactly) {
    const Mesh m = build_mesh(Geometry::interval(0, 1, {0.2, 0.8}), 17);
    const TimeGrid grid(1.0, 8);
    const CoefficientNorms z = sup_norms(CoefficientSet::zero(), m, grid);
    EXPECT_EQ(dissipation_rate(z), 0.0);
    const CoefficientNorms c = sup_norms(CoefficientSet::constant(-1.0, 0.5, 0.25, -0.5, Point(0.3, 0.0)), m, grid);
    EXPECT_EQ(c.a1, 1.0);
    EXPECT_EQ(c.a2, 0.5);
    EXPECT_EQ(c.b1, 0.25);
    EXPECT_EQ(c.b2, 0.5);
    EXPECT_NEAR(c.B, 0.3, 1e-15);
}

TEST(PrincipalPart, DropsLowerOrderTerms) {
    const Mesh m = build_mesh(Geometry::interval(0, 1, {0.2, 0.8}), 9);
    const CoefficientSet p = CoefficientSet::constant(1.0, 1.0, 1.0, 1.0, Point(1.0, 0.0), 0.0, 2.0).principal_part();
    EXPECT_EQ(dissipation_rate(sup_norms(p, m, TimeGrid(1.0, 4))), 0.0);
    EXPECT_DOUBLE_EQ(p.A(0.0, Point(0.5, 0.0))(0, 0), 2.0);
}

}  // namespace
}  // namespace sdbc
