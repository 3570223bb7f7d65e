#include "sdbc/coefficients.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <stdexcept>

namespace sdbc {

namespace {

ScalarField constant_scalar(double v) {
    return [v](double, const Point&) { return v; };
}

Point unit_tangent(const Point& x) {
    const double r = x.norm();
    if (r == 0.0) return Point::Zero();
    return Point(-x(1), x(0)) / r;
}

}  // namespace

CoefficientSet CoefficientSet::zero() { return constant(0.0, 0.0, 0.0, 0.0); }

CoefficientSet CoefficientSet::constant(double a1, double a2, double b1, double b2, const Point& B,
                                        double b_gamma_tangential, double diffusion, double surface_diffusion) {
    CoefficientSet c;
    c.name = "constant";
    c.A = [diffusion](double, const Point&) -> Eigen::Matrix2d {
        return diffusion * Eigen::Matrix2d::Identity();
    };
    c.A_gamma = [surface_diffusion](double, const Point&) -> Eigen::Matrix2d {
        return surface_diffusion * Eigen::Matrix2d::Identity();
    };
    c.a1 = constant_scalar(a1);
    c.a2 = constant_scalar(a2);
    c.b1 = constant_scalar(b1);
    c.b2 = constant_scalar(b2);
    c.B = [B](double, const Point&) { return B; };
    c.B_gamma = [b_gamma_tangential](double, const Point& x) -> Point {
        return b_gamma_tangential * unit_tangent(x);
    };
    c.beta = std::min(diffusion, surface_diffusion);
    if (a1 == 0 && a2 == 0 && b1 == 0 && b2 == 0 && B.isZero() && b_gamma_tangential == 0 && diffusion == 1.0 &&
        surface_diffusion == 1.0)
        c.name = "zero";
    return c;
}

CoefficientSet CoefficientSet::shear_convection(const Geometry& geometry, double shear) {
    CoefficientSet c = zero();
    c.name = "shear-convection";
    if (geometry.kind == GeometryKind::Disk) {
        c.B = [shear](double, const Point& x) { return Point(shear * x(1), 0.0); };
    } else {
        const double mid = 0.5 * (geometry.a + geometry.b);
        c.B = [shear, mid](double, const Point& x) { return Point(shear * (x(0) - mid), 0.0); };
    }
    return c;
}

CoefficientSet CoefficientSet::principal_part() const {
    CoefficientSet c = *this;
    c.name = name + "/principal";
    c.a1 = c.a2 = c.b1 = c.b2 = constant_scalar(0.0);
    c.B = c.B_gamma = [](double, const Point&) { return Point(Point::Zero()); };
    c.path_factor = nullptr;
    return c;
}

double min_eigenvalue(const Eigen::Matrix2d& A, GeometryKind kind) {
    if (kind == GeometryKind::Interval) return A(0, 0);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(A, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

CoefficientNorms sup_norms(const CoefficientSet& coeffs, const Mesh& mesh, const TimeGrid& grid) {
    CoefficientNorms n;
    const int steps = coeffs.time_dependent ? grid.n_t : 0;
    for (int k = 0; k <= steps; ++k) {
        const double t = grid.t(k);
        for (const auto& x : mesh.bulk_nodes) {
            n.a1 = std::max(n.a1, std::abs(coeffs.a1(t, x)));
            n.a2 = std::max(n.a2, std::abs(coeffs.a2(t, x)));
            Point b = coeffs.B(t, x);
            if (mesh.geometry.kind == GeometryKind::Interval) b(1) = 0.0;
            n.B = std::max(n.B, b.norm());
        }
        for (int j = 0; j < mesh.n_surf(); ++j) {
            const Point& x = mesh.boundary_nodes[j];
            n.b1 = std::max(n.b1, std::abs(coeffs.b1(t, x)));
            n.b2 = std::max(n.b2, std::abs(coeffs.b2(t, x)));
            n.B_gamma = std::max(n.B_gamma, std::abs(coeffs.B_gamma(t, x).dot(mesh.tangents[j])));
        }
    }
    return n;
}

double check_ellipticity(const CoefficientSet& coeffs, const Mesh& mesh, const TimeGrid& grid) {
    const auto kind = mesh.geometry.kind;
    double beta = std::numeric_limits<double>::infinity();
    const int steps = coeffs.time_dependent ? grid.n_t : 0;
    for (int k = 0; k <= steps; ++k) {
        const double t = grid.t(k);
        for (const auto& x : mesh.bulk_nodes) {
            const Eigen::Matrix2d A = coeffs.A(t, x);
            if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw std::invalid_argument("A is not symmetric");
            beta = std::min(beta, min_eigenvalue(A, kind));
        }
        if (kind == GeometryKind::Disk) {
            for (int j = 0; j < mesh.n_surf(); ++j) {
                const Eigen::Matrix2d Ag = coeffs.A_gamma(t, mesh.boundary_nodes[j]);
                if ((Ag - Ag.transpose()).cwiseAbs().maxCoeff() > 1e-12)
                    throw std::invalid_argument("A_gamma is not symmetric");
                beta = std::min(beta, mesh.tangents[j].dot(Ag * mesh.tangents[j]));
            }
        }
    }
    if (!(beta > 0.0)) throw std::invalid_argument("ellipticity fails: smallest eigenvalue " + std::to_string(beta));
    return beta;
}

double cost_constant_K(const CoefficientNorms& n, double T) {
    return 1.0 + 1.0 / T + std::cbrt(n.a1 * n.a1) + T * n.a1 + std::cbrt(n.b1 * n.b1) + T * n.b1 +
           (1.0 + T) * (n.a2 * n.a2 + n.B * n.B + n.b2 * n.b2 + n.B_gamma * n.B_gamma);
}

double lambda_min(const CoefficientNorms& n, double T, double C) {
    return C * (T + T * T *
                        (1.0 + std::cbrt(n.a1 * n.a1) + n.a2 * n.a2 + n.B * n.B + std::cbrt(n.b1 * n.b1) +
                         n.b2 * n.b2 + n.B_gamma * n.B_gamma));
}

double dissipation_rate(const CoefficientNorms& n) {
    return n.a1 + n.a2 * n.a2 + n.B * n.B + n.b1 + n.b2 * n.b2 + n.B_gamma * n.B_gamma;
}

}  // namespace sdbc
