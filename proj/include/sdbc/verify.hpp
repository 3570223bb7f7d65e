#pragma once

#include "sdbc/backward.hpp"
#include "sdbc/weights.hpp"

#include <cstdint>

namespace sdbc {

/// One λ of a Carleman sweep. Every integral is multiplied by e^{-log_scale},
/// the largest 2λα on the quadrature grid, so the row stays representable;
/// the ratio is unaffected.
struct CarlemanRow {
    double lambda = 0.0;
    double lhs_bulk_z = 0.0;     // λ³𝔼∫_Q θ²φ³z²
    double lhs_surf_z = 0.0;     // λ³𝔼∫_Σ θ²φ³z_Γ²
    double lhs_bulk_grad = 0.0;  // λ𝔼∫_Q θ²φ|∇z|²
    double lhs_surf_grad = 0.0;  // λ𝔼∫_Σ θ²φ|∇_Γz_Γ|²
    double rhs_control = 0.0;    // λ³𝔼∫_{Q₀} θ²φ³z²
    double rhs_source = 0.0;     // source terms (general mode only)
    double ratio = 0.0;          // LHS/RHS, 0 when both vanish
    double log_scale = 0.0;
    bool below_threshold = false;

    double lhs() const { return lhs_bulk_z + lhs_surf_z + lhs_bulk_grad + lhs_surf_grad; }
    double rhs() const { return rhs_control + rhs_source; }
};

struct CarlemanReport {
    std::vector<CarlemanRow> rows;
    double lambda1 = 0.0;
    bool adjoint_mode = true;

    bool finite_nonnegative() const;
    /// max ratio over the sweep divided by the ratio at the smallest λ.
    double spread() const;
};

struct CarlemanOptions {
    std::vector<double> lambdas;  // absolute values
    double mu = 2.0;
    double C = 1.0;               // constant in λ₁
    bool adjoint_mode = true;
    SourceSet sources;            // general mode: principal part plus these sources
};

/// Solves the forward system once per z₀ and assembles the weighted terms
/// over the interior time nodes t_1..t_{n_t-1} for each λ. Terms are summed
/// over the ensemble.
CarlemanReport verify_carleman(const Discretization& disc, const AuxFunction& aux, const std::vector<Vec>& ensemble,
                               const NoiseSource& noise, const CarlemanOptions& options);

struct ObservabilityRow {
    double T = 0.0;
    int n_t = 0;
    double C_obs = 0.0;
    double ensemble_max = 0.0;
    double refined = 0.0;  // Rayleigh quotient after power iteration, 0 if skipped
    double K = 0.0;
    int excluded = 0;      // members with a vanishing observation
};

struct ObservabilityReport {
    std::vector<ObservabilityRow> rows;
    double p = 0.0;  // log C_obs ≈ p + q/T
    double q = 0.0;
    double r2 = 0.0;
    std::vector<std::string> events;
};

struct ObservabilityOptions {
    std::vector<double> T_list{0.2, 0.4, 0.8};
    double dt = 0.0125;           // n_t = round(T/dt)
    bool recombining = true;
    bool slice = false;           // numerator 𝔼∫_{T/4}^{3T/4}|z|² instead of 𝔼|z(T)|²
    int power_iterations = 50;    // 0 disables the refinement
    int refine_modes = 8;         // refinement subspace: the first coupled eigenfunctions
    double min_denominator = 1e-14;
    SolverOptions solver;
};

/// C_obs(T) = max over z₀ of 𝔼|z(T)|²_𝕃² / 𝔼∫_{Q₀}z² on a tree per T,
/// then the fit log C_obs = p + q/T. The refinement runs power iteration on
/// the Gram pair restricted to span(E_1..E_k), starting from the projection
/// of the best member, and keeps the result only after a direct re-solve.
ObservabilityReport verify_observability(const Mesh& mesh, const CoefficientSet& coeffs,
                                         const std::vector<Vec>& ensemble, const ObservabilityOptions& options);

struct DissipationReport {
    double r2 = 0.0;
    std::vector<double> energy;    // 𝔼|(z, z_Γ)(t_n)|²
    std::vector<double> c_step;    // smallest c ≥ 0 with E_{n+1} ≤ e^{cΔt r₂}E_n
    std::vector<double> c_to_T;    // smallest c ≥ 0 with E_N ≤ e^{c(T-t_n)r₂}E_n
    double c_max = 0.0;
    bool finite = true;
    bool monotone = true;          // every step non-increasing
    bool ok() const { return finite && (r2 > 0.0 || monotone); }
};

/// Relative slack of the non-increase check (a few roundings of a sum).
inline constexpr double kMonotoneSlack = 1e-13;

DissipationReport verify_dissipation(const ForwardTrajectory& traj, const Discretization& disc);

struct DualityReport {
    DualityTerms terms;
    double transpose_defect = -1.0;  // -1 when skipped
    double fault_residual = 0.0;
    double fault_size = 0.0;
};

/// Random z₀, y_T and adapted u on a tree; optionally the dense transpose
/// check; then the same duality with the backward stiffness scaled by
/// 1 + fault (0 skips the fault run).
DualityReport verify_duality(const Mesh& mesh, const CoefficientSet& coeffs, const TimeGrid& grid, bool recombining,
                             std::uint64_t seed, bool transpose_check, double fault, SolverOptions solver = {});

/// Least-squares fit of y ≈ p + q x with the coefficient of determination.
struct LinearFit {
    double p = 0.0, q = 0.0, r2 = 0.0;
};
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// Smooth random fields (sums of low-order coupled eigenfunctions with
/// normal coefficients) followed by the first `n_eigen` eigenfunctions.
std::vector<Vec> observability_ensemble(const Mesh& mesh, int n_random, int n_eigen, std::uint64_t seed);

}  // namespace sdbc
