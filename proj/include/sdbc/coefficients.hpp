#pragma once

#include "sdbc/geometry.hpp"

#include <functional>
#include <string>

namespace sdbc {

using ScalarField = std::function<double(double t, const Point& x)>;
using VectorField = std::function<Point(double t, const Point& x)>;
using MatrixField = std::function<Eigen::Matrix2d(double t, const Point& x)>;

/// Equation coefficients (A, A_Γ, a₁, a₂, B, B_Γ, b₁, b₂) and the ellipticity
/// constant β. Coefficients are deterministic functions of (t, x); the
/// optional path factor g(t, W(t)) multiplies a₁, a₂, b₁, b₂ on tree and
/// ensemble nodes.
struct CoefficientSet {
    std::string name = "zero";
    MatrixField A;
    MatrixField A_gamma;
    ScalarField a1, a2, b1, b2;
    VectorField B;
    VectorField B_gamma;
    double beta = 1.0;
    bool time_dependent = false;
    std::function<double(double t, double w)> path_factor;

    /// A = A_Γ = I, every lower-order term zero.
    static CoefficientSet zero();
    /// Constant scalars; B_Γ = b_gamma_tangential * (unit tangent) on a Disk.
    static CoefficientSet constant(double a1, double a2, double b1, double b2, const Point& B = Point::Zero(),
                                   double b_gamma_tangential = 0.0, double diffusion = 1.0,
                                   double surface_diffusion = 1.0);
    /// Linear shear B(x) = shear * (x₂, 0) on a Disk, shear * (x₁ - mid) on an Interval.
    static CoefficientSet shear_convection(const Geometry& geometry, double shear);

    /// Copy with only the principal parts (A, A_Γ) kept.
    CoefficientSet principal_part() const;
};

/// Sampled sup-norms |·|_∞ over the space-time grid (lower bounds of the true essential sup).
struct CoefficientNorms {
    double a1 = 0, a2 = 0, B = 0, b1 = 0, b2 = 0, B_gamma = 0;
};

CoefficientNorms sup_norms(const CoefficientSet& coeffs, const Mesh& mesh, const TimeGrid& grid);

/// Minimum over sampled (t, node) of the smallest eigenvalue of A and of the
/// tangential part of A_Γ. Throws std::invalid_argument for non-symmetric A
/// or a non-positive minimum.
double check_ellipticity(const CoefficientSet& coeffs, const Mesh& mesh, const TimeGrid& grid);

/// Smallest eigenvalue of A at x as seen by the discretization (the 1x1
/// block on an Interval, the full 2x2 matrix on a Disk).
double min_eigenvalue(const Eigen::Matrix2d& A, GeometryKind kind);

/// K = 1 + 1/T + |a₁|^{2/3} + T|a₁| + |b₁|^{2/3} + T|b₁| + (1+T)(|a₂|² + |B|² + |b₂|² + |B_Γ|²).
double cost_constant_K(const CoefficientNorms& norms, double T);

/// λ₁ = C [T + T²(1 + |a₁|^{2/3} + |a₂|² + |B|² + |b₁|^{2/3} + |b₂|² + |B_Γ|²)].
double lambda_min(const CoefficientNorms& norms, double T, double C);

/// r₂ = |a₁| + |a₂|² + |B|² + |b₁| + |b₂|² + |B_Γ|², the dissipation rate bound.
double dissipation_rate(const CoefficientNorms& norms);

}  // namespace sdbc
