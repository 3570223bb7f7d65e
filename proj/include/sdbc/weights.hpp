#pragma once

#include "sdbc/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace sdbc {

/// ψ with ψ > 0 in G, ψ = 0 on Γ, ∇ψ ≠ 0 off G₁ and ∂_ν ψ ≤ -c on Γ.
/// Interval(a, b): ψ = (x - a)(b - x). Disk(R): ψ = R² - |x|².
struct AuxFunction {
    Geometry geometry;
    ControlRegion g1;
    double psi_max = 0.0;
    double c = 0.0;

    double psi(const Point& x) const;
    Point grad(const Point& x) const;
    Point critical_point() const;
};

AuxFunction make_psi(const Geometry& geometry, const ControlRegion& g1);

struct PsiCheck {
    bool positive_inside = true;
    bool zero_on_boundary = true;
    bool gradient_nonzero_off_g1 = true;
    bool normal_derivative_bound = true;
    double min_psi_inside = 0.0;
    double min_grad_off_g1 = 0.0;
    double max_normal_derivative = 0.0;

    bool ok() const { return positive_inside && zero_on_boundary && gradient_nonzero_off_g1 && normal_derivative_bound; }
};

/// Evaluates the ψ property suite at every node of the mesh.
PsiCheck check_psi(const AuxFunction& aux, const Mesh& mesh);

template <typename Scalar>
Scalar time_factor(Scalar t, Scalar T, Scalar eps = Scalar(0)) {
    return Scalar(1) / ((t + eps) * (T - t + eps));
}

template <typename Scalar>
Scalar weight_phi(Scalar t, Scalar T, Scalar mu, Scalar psi) {
    return time_factor(t, T) * std::exp(mu * psi);
}

template <typename Scalar>
Scalar weight_alpha(Scalar t, Scalar T, Scalar mu, Scalar psi, Scalar psi_max, Scalar eps = Scalar(0)) {
    return time_factor(t, T, eps) * (std::exp(mu * psi) - std::exp(Scalar(2) * mu * psi_max));
}

struct WeightValues {
    double alpha = 0.0;
    double phi = 0.0;
    double theta = 0.0;
    bool time_boundary = false;  // t ∉ (0, T): θ returned as its limit 0
};

/// α, φ, θ = e^{λα} and the ε-shifted α_ε, θ_ε.
struct CarlemanWeights {
    AuxFunction aux;
    double mu = 2.0;
    double lambda = 2.0;
    double T = 1.0;

    double phi(double t, const Point& x) const { return weight_phi(t, T, mu, aux.psi(x)); }
    double alpha(double t, const Point& x, double eps = 0.0) const {
        return weight_alpha(t, T, mu, aux.psi(x), aux.psi_max, eps);
    }
    /// log θ_ε² = 2λα_ε, finite for t ∈ (0, T) even when θ² underflows.
    double log_theta2(double t, const Point& x, double eps = 0.0) const { return 2.0 * lambda * alpha(t, x, eps); }
    double theta(double t, const Point& x, double eps = 0.0) const { return std::exp(lambda * alpha(t, x, eps)); }
};

CarlemanWeights make_weights(const AuxFunction& aux, double mu, double lambda, double T);

/// Throws std::domain_error for t outside [0, T]; at t ∈ {0, T} θ is its
/// limit 0 and the result is flagged.
WeightValues eval_weights(const CarlemanWeights& w, double t, const Point& x);

/// Empirical constants of the weight bounds over the mesh and the interior
/// time nodes t_1..t_{n-1}.
struct WeightBoundReport {
    double phi_lower = 0.0;        // min φT²        (φ ≥ C T⁻²)
    double phi_t = 0.0;            // max |φ_t|/(Tφ²)
    double alpha_t = 0.0;          // max |α_t|/(T e^{2μ|ψ|∞} φ²)
    double theta2phi_t = 0.0;      // max |(θ²φ)_t|/(Tλθ²φ³)
    double theta2phi_grad = 0.0;   // max |∇(θ²φ)|/(λθ²φ²)
    double boundary_alpha_spread = 0.0;  // max over t of (max - min) α over Γ
    double boundary_phi_spread = 0.0;

    bool finite() const;
};

WeightBoundReport check_weight_bounds(const CarlemanWeights& w, const Mesh& mesh, const TimeGrid& grid);

/// Largest relative change of any constant between two reports.
double max_relative_change(const WeightBoundReport& a, const WeightBoundReport& b);

}  // namespace sdbc
