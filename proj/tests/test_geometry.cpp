#include "sdbc/coefficients.hpp"
#include "sdbc/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

namespace sdbc {
namespace {

constexpr double kPi = std::numbers::pi;

Mat dense(const SpMat& m) { return Mat(m); }

// Periodic second-difference stiffness on a circle of radius R with n points,
// built from the arc spacing alone.
Mat periodic_stiffness(int n, double R) {
    Mat K = Mat::Zero(n, n);
    const double c = 1.0 / (R * 2.0 * kPi / n);
    for (int i = 0; i < n; ++i) {
        const int j = (i + 1) % n;
        K(i, i) += c;
        K(j, j) += c;
        K(i, j) -= c;
        K(j, i) -= c;
    }
    return K;
}

TEST(Mesh, IntervalCountsAndQuadrature) {
    const Mesh m = build_mesh(Geometry::interval(0, 1, {0.3, 0.7}), 9);
    EXPECT_EQ(m.n_bulk(), 9);
    ASSERT_EQ(m.n_surf(), 2);
    EXPECT_DOUBLE_EQ(m.boundary_nodes[0](0), 0.0);
    EXPECT_DOUBLE_EQ(m.boundary_nodes[1](0), 1.0);
    EXPECT_NEAR(m.bulk_weights.sum(), 1.0, 1e-14);
    EXPECT_NEAR(m.surface_weights.sum(), 2.0, 1e-14);
}

TEST(Mesh, IntervalControlMaskIsOpenRegion) {
    const Mesh m = build_mesh(Geometry::interval(0, 1, {0.3, 0.7}), 21);
    for (int i = 0; i < m.n_bulk(); ++i) {
        const double x = m.bulk_nodes[i](0);
        EXPECT_EQ(m.control_mask(i) == 1.0, x > 0.3 && x < 0.7) << "x = " << x;
    }
}

TEST(Mesh, DiskSurfaceQuadratureIsCircumference) {
    const Mesh m = build_mesh(Geometry::disk(1.0, {0.0, 0.5}), 8, 16);
    EXPECT_NEAR(m.surface_weights.sum(), 2.0 * kPi, 1e-12);
    EXPECT_EQ(m.n_surf(), 16);
}

TEST(Mesh, RejectsDegenerateGeometry) {
    EXPECT_THROW(build_mesh(Geometry::interval(1, 1, {0.2, 0.8}), 9), std::invalid_argument);
    EXPECT_THROW(build_mesh(Geometry::interval(0, 1, {0.0, 0.5}), 9), std::invalid_argument);
    EXPECT_THROW(build_mesh(Geometry::disk(1.0, {0.2, 1.0}), 8), std::invalid_argument);
    EXPECT_THROW(build_mesh(Geometry::disk(0.0, {0.0, 0.5}), 8), std::invalid_argument);
}

TEST(InnerL2, ConstantsOnInterval) {
    const Mesh m = build_mesh(Geometry::interval(0, 1, {0.3, 0.7}), 9);
    const auto one = BulkSurfaceField::constant(m, 1, 1);
    EXPECT_NEAR(inner_L2(one, one, m), 3.0, 1e-12);
    EXPECT_EQ(inner_L2(one, BulkSurfaceField::zeros(m), m), 0.0);
}

TEST(InnerL2, ConstantsOnDiskConverge) {
    double prev = 0.0;
    for (int n_r : {8, 16, 32}) {
        const Mesh m = build_mesh(Geometry::disk(1.0, {0.0, 0.5}), n_r, 2 * n_r);
        const auto one = BulkSurfaceField::constant(m, 1, 1);
        const double err = std::abs(inner_L2(one, one, m) - 3.0 * kPi);
        if (n_r == 32) EXPECT_LE(err, 1e-3);
        // exact cell areas make the error roundoff; the order is only checked above that
        if (prev > 1e-12 && err > 1e-12) EXPECT_GE(std::log2(prev / err), 2.0 - 1e-9);
        prev = err;
    }
}

TEST(InnerL2, RejectsShapeMismatch) {
    const Mesh m = build_mesh(Geometry::interval(0, 1, {0.3, 0.7}), 9);
    BulkSurfaceField bad{Vec::Ones(4), Vec::Ones(2)};
    EXPECT_THROW(inner_L2(bad, BulkSurfaceField::zeros(m), m), std::invalid_argument);
}

TEST(Operators, IntervalStiffnessIsSecondDifference) {
    const Mesh m = build_mesh(Geometry::interval(0, 1, {0.3, 0.7}), 3);
    const DiscreteOperators ops = assemble_operators(m, CoefficientSet::zero(), 0.0);
    Mat expected(3, 3);
    expected << 1, -1, 0, -1, 2, -1, 0, -1, 1;
    expected /= 0.5;
    EXPECT_LE((dense(ops.K_A) - expected).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(dense(ops.K_A).rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(ops.K_AGamma.nonZeros(), 0);
    EXPECT_EQ(ops.C_BGamma.nonZeros(), 0);
}

TEST(Operators, DiskSurfaceStiffnessIsPeriodicDifference) {
    for (double R : {1.0, 2.0}) {
        const Mesh m = build_mesh(Geometry::disk(R, {0.0, 0.5 * R}), 6, 12);
        const DiscreteOperators ops = assemble_operators(m, CoefficientSet::zero(), 0.0);
        EXPECT_LE((dense(ops.K_AGamma) - periodic_stiffness(12, R)).cwiseAbs().maxCoeff(), 1e-12) << "R = " << R;
    }
}

TEST(Operators, ZeroConvectionAndSymmetry) {
    for (const Mesh& m : {build_mesh(Geometry::interval(0, 1, {0.3, 0.7}), 17),
                          build_mesh(Geometry::disk(1.0, {0.0, 0.5}), 8, 16)}) {
        const DiscreteOperators ops = assemble_operators(m, CoefficientSet::zero(), 0.0);
        EXPECT_EQ(dense(ops.C_B).cwiseAbs().maxCoeff(), 0.0);
        for (const SpMat* s : {&ops.K_A, &ops.K_AGamma, &ops.M_G, &ops.M_Gamma}) {
            const Mat d = dense(*s);
            if (d.size() == 0) continue;
            EXPECT_LE((d - d.transpose()).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
}

TEST(Operators, DiscreteEllipticityOnRandomFields) {
    const Mesh m = build_mesh(Geometry::disk(1.0, {0.0, 0.5}), 8, 16);
    CoefficientSet c = CoefficientSet::zero();
    Eigen::Matrix2d A;
    A << 2, 1, 1, 2;
    c.A = [A](double, const Point&) { return A; };
    c.beta = 1.0;
    const DiscreteOperators ops = assemble_operators(m, c, 0.0);
    const SpMat D = unit_stiffness(m);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    for (int k = 0; k < 100; ++k) {
        Vec v(m.n_bulk());
        for (auto& x : v) x = g(rng);
        EXPECT_GE(v.dot(ops.K_A * v), c.beta * v.dot(D * v) - 1e-12 * v.squaredNorm());
    }
}

TEST(Operators, RejectsLostEllipticity) {
    const Mesh m = build_mesh(Geometry::disk(1.0, {0.0, 0.5}), 6, 12);
    CoefficientSet c = CoefficientSet::zero();
    Eigen::Matrix2d A;
    A << 1, 2, 2, 1;
    c.A = [A](double, const Point&) { return A; };
    EXPECT_THROW(assemble_operators(m, c, 0.0), std::invalid_argument);
}

TEST(Trace, ConformingFieldsReadBoundaryValues) {
    for (const Mesh& m : {build_mesh(Geometry::interval(0, 1, {0.3, 0.7}), 17),
                          build_mesh(Geometry::disk(1.0, {0.0, 0.5}), 8, 16)}) {
        Vec bulk(m.n_bulk());
        for (int i = 0; i < m.n_bulk(); ++i) bulk(i) = std::sin(3 * m.bulk_nodes[i](0)) + m.bulk_nodes[i](1);
        const auto f = BulkSurfaceField::from_bulk(m, bulk);
        EXPECT_TRUE(f.is_trace_compatible(m));
        for (int k = 0; k < m.n_surf(); ++k) EXPECT_NEAR(f.surf(k), bulk(m.trace[k]), 1e-12);
        EXPECT_LE((m.boundary_nodes[0] - m.bulk_nodes[m.trace[0]]).norm(), 1e-12);
    }
}

TEST(WeakDivergence, ConstantFieldAgainstConstantTest) {
    const Mesh m = build_mesh(Geometry::disk(1.0, {0.0, 0.5}), 8, 16);
    std::vector<Point> F(m.n_bulk(), Point(0.7, -1.3));
    std::vector<Point> Fg(m.n_surf(), Point::Zero());
    const auto load = weak_divergence_load(F, Fg, m);
    EXPECT_NEAR(load_pairing(load, BulkSurfaceField::constant(m, 1, 1)), 0.0, 1e-12);
}

TEST(WeakDivergence, IntervalLinearTest) {
    const Mesh m = build_mesh(Geometry::interval(0, 1, {0.3, 0.7}), 9);
    const double c = 2.5;
    std::vector<Point> F(m.n_bulk(), Point(c, 0));
    std::vector<Point> Fg(m.n_surf(), Point::Zero());
    Vec x(m.n_bulk());
    for (int i = 0; i < m.n_bulk(); ++i) x(i) = m.bulk_nodes[i](0);
    const auto load = weak_divergence_load(F, Fg, m);
    EXPECT_NEAR(load_pairing(load, BulkSurfaceField::from_bulk(m, x)), -c, 1e-12);
}

TEST(WeakDivergence, TangentialSurfaceFieldAgainstConstant) {
    const Mesh m = build_mesh(Geometry::disk(1.0, {0.0, 0.5}), 8, 16);
    std::vector<Point> F(m.n_bulk(), Point::Zero());
    std::vector<Point> Fg(m.n_surf());
    for (int k = 0; k < m.n_surf(); ++k) Fg[k] = 1.7 * m.tangents[k];
    const auto load = weak_divergence_load(F, Fg, m);
    EXPECT_NEAR(load.surf.sum(), 0.0, 1e-12);
    EXPECT_NEAR(load_pairing(load, BulkSurfaceField::constant(m, 1, 1)), 0.0, 1e-12);
}

TEST(WeakDivergence, RejectsNormalSurfaceField) {
    const Mesh m = build_mesh(Geometry::disk(1.0, {0.0, 0.5}), 8, 16);
    std::vector<Point> F(m.n_bulk(), Point::Zero());
    std::vector<Point> Fg(m.normals.begin(), m.normals.end());
    EXPECT_THROW(weak_divergence_load(F, Fg, m), std::invalid_argument);
}

}  // namespace
}  // namespace sdbc
