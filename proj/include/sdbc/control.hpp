#pragma once

#include "sdbc/backward.hpp"
#include "sdbc/weights.hpp"

#include <optional>

namespace sdbc {

/// Reduced linear-quadratic problem in the control v (levels 0..n_t-1):
///   J(v) = ½ 𝔼Σ_n Δt rₙᵀ Dₙ rₙ + ½ ⟨κ v, v⟩_U + (1/2ε) r₀ᵀ M r₀,
/// where r solves the backward system with terminal data y_T, source f and
/// control v, ⟨a, b⟩_U = 𝔼Σ_n Δt aᵀ B_u b, Dₙ = diag(penalty[n]) and
/// κₙ = diag(kappa[n]). Empty penalty means D = 0; empty kappa means κ = 1.
struct LQProblem {
    const Discretization* backward_disc = nullptr;
    const Discretization* adjoint_disc = nullptr;  // forward counterpart (same operators)
    const NoiseTree* tree = nullptr;
    Mat y_T;                   // n_bulk × leaves; empty means zero
    AdaptedField source;       // assembled loads, may be empty
    std::vector<Vec> penalty;  // per level n < n_t
    std::vector<Vec> kappa;    // per level n < n_t, on bulk nodes
    double eps = 1.0;
};

struct CGOptions {
    double tolerance = 1e-10;
    int max_iterations = 500;
    int restart_interval = 50;  // PCG restarts from the true residual
};

struct LQSolution {
    AdaptedField v;
    BackwardState state;
    AdaptedField gradient;  // κv + p at the returned v
    int iterations = 0;
    bool converged = false;
    double residual_norm = 0.0;
    double objective = 0.0;
};

/// The sweep p of the gradient: p₀ = -r₀/ε - ΔtM⁻¹D₀r₀,
/// p_{n+1} = Q_n p_n - ΔtM⁻¹D_{n+1}r_{n+1}, with Q_n the forward step.
AdaptedField adjoint_sweep(const LQProblem& prob, const BackwardState& r);

/// Preconditioned CG (preconditioner κ⁻¹) on the reduced normal equations,
/// starting from `initial` when given.
LQSolution solve_lq(const LQProblem& prob, const CGOptions& options, const AdaptedField* initial = nullptr);

double lq_objective(const LQProblem& prob, const AdaptedField& v, const BackwardState& r);

struct ControlResult {
    double eps = 0.0;
    AdaptedField u;
    double yT_norm = 0.0;       // (𝔼|y_T|²)^{1/2}
    double y0_norm = 0.0;       // |(y(0), y_Γ(0))|
    double u_norm2 = 0.0;       // 𝔼∫_{Q₀} u²
    double optimality_residual = 0.0;  // |u + 1_{G₀} z_ε| / |u|
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    double K = 0.0;
    double C = 1.0;
    double bound_ratio = 0.0;   // u_norm² / (e^{CK} |y_T|²)
};

struct HumOptions {
    CGOptions cg;
    double C = 1.0;
    std::string method = "cg";  // "cg" or "picard"
    double relaxation = 0.5;
    int picard_iterations = 2000;
};

/// Penalized HUM: minimizes ½𝔼∫_{Q₀}u² + (1/2ε)|y(0)|² for the backward
/// system with terminal data y_T, then recomputes z_ε from -y(0)/ε and
/// reports ρ = |u + 1_{G₀}z_ε|/|u|.
ControlResult hum_control(const Discretization& disc, const NoiseTree& tree, const Mat& y_T, double eps,
                          const HumOptions& options = {}, const AdaptedField* warm_start = nullptr);

/// Runs hum_control over a decreasing ε schedule, warm-starting each solve.
std::vector<ControlResult> hum_continuation(const Discretization& disc, const NoiseTree& tree, const Mat& y_T,
                                            std::vector<double> eps_schedule, const HumOptions& options = {});

struct NullControlReport {
    double relative_y0 = 0.0;   // y0_norm / |y_T|
    double u_norm2 = 0.0;
    double K = 0.0;
    double bound = 0.0;         // e^{CK}|y_T|²
    double bound_ratio = 0.0;
    double smallest_C = 0.0;    // smallest C with bound_ratio ≤ 1
    bool success = false;
};

NullControlReport null_control_report(const ControlResult& result, double K, double C, double threshold = 1e-2);

/// Smallest C ≥ 0 with u_norm² ≤ e^{CK}|y_T|².
double smallest_bound_constant(double u_norm2, double yT_norm2, double K);

/// Weighted quantities of the auxiliary control estimate.
struct AuxEstimate {
    double v_term = 0.0;          // λ⁻³𝔼∫ θ⁻²φ⁻³ v²
    double r_bulk = 0.0;          // 𝔼∫_Q θ_ε⁻² r²
    double r_surf = 0.0;          // 𝔼∫_Σ θ_ε⁻² r_Γ²
    double grad_bulk = 0.0;       // λ⁻²𝔼∫_Q θ_ε⁻²φ⁻²|∇r|²
    double grad_surf = 0.0;       // λ⁻²𝔼∫_Σ θ_ε⁻²φ⁻²|∇_Γ r_Γ|²
    double R1_term = 0.0;         // λ⁻²𝔼∫_Q θ_ε⁻²φ⁻² R₁²
    double R2_term = 0.0;         // λ⁻²𝔼∫_Σ θ_ε⁻²φ⁻² R₂²
    double rhs = 0.0;             // λ³𝔼∫ θ²φ³ (z² + z_Γ²)
    double r0_over_eps = 0.0;     // |r(0)|²/ε
    double lhs() const { return v_term + r_bulk + r_surf + grad_bulk + grad_surf + R1_term + R2_term; }
    double ratio() const { return rhs > 0.0 ? lhs() / rhs : 0.0; }
};

struct AuxResult {
    AdaptedField v;
    BackwardState r;
    AuxEstimate estimate;
    int iterations = 0;
    bool converged = false;
    double characterization_residual = 0.0;  // |v - 1_{G₀}λ³θ²φ³q| / |v|
    double log10_weight_range = 0.0;         // decades spanned by θ_ε⁻² and κ on t_1..t_{n-1}
};

struct AuxOptions {
    CGOptions cg;
    double clamp = 0.0;  // weight times clamped to [clamp, T - clamp]; 0 means Δt
    double max_weight_decades = 12.0;  // NumericalError above this weight dynamic range
};

/// Auxiliary weighted control problem driven by λ³θ²φ³z, solved with the
/// principal part of the coefficients on the same tree as z.
AuxResult aux_control(const ForwardTrajectory& z, const Discretization& disc, const CarlemanWeights& weights,
                      double eps, const NoiseTree& tree, const AuxOptions& options = {});

}  // namespace sdbc
