#pragma once

#include "sdbc/coefficients.hpp"
#include "sdbc/noise.hpp"

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>

namespace sdbc {

/// Sources of the general forward system: drift F₀ + div F in G,
/// F₀Γ - F·ν + div_Γ F_Γ on Γ, noise F₁ and F₁Γ. Empty members are zero.
struct SourceSet {
    ScalarField F0, F1, F0_gamma, F1_gamma;
    VectorField F, F_gamma;

    bool empty() const { return !F0 && !F1 && !F0_gamma && !F1_gamma && !F && !F_gamma; }
};

struct SolverOptions {
    bool allow_unstable = false;
    std::string linear_solver = "ldlt";  // "ldlt" or "cg"
    double cg_tolerance = 1e-12;
    int cg_max_iterations = 10000;
    double stiffness_scale = 1.0;  // fault injection only
};

class StabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Time-stepping data for one (mesh, coefficients, grid): the coupled lumped
/// mass, the explicit operators at every t_n and the factorized implicit
/// matrix M + Δt K(t_{n+1}). Immutable after construction.
class Discretization {
public:
    Discretization(const Mesh& mesh, const CoefficientSet& coeffs, const TimeGrid& grid, SolverOptions options = {});
    ~Discretization();
    Discretization(const Discretization&) = delete;
    Discretization& operator=(const Discretization&) = delete;

    const Mesh& mesh() const { return mesh_; }
    const CoefficientSet& coeffs() const { return coeffs_; }
    const TimeGrid& grid() const { return grid_; }
    const SolverOptions& options() const { return options_; }
    int size() const { return mesh_.n_bulk(); }

    const Vec& mass() const { return mass_; }
    const SpMat& stiffness(int n) const;
    const SpMat& reaction(int n) const;
    const SpMat& convection(int n) const;
    const SpMat& noise(int n) const;
    const DiscreteOperators& operators(int n) const;

    /// (M + Δt K(t_{n+1}))⁻¹ rhs, column by column.
    Mat solve_implicit(int n, const Mat& rhs) const;
    /// g(t_n, w), or 1 without a path factor.
    double path_factor(int n, double w) const;
    /// ∫ F₀η + ∫_Γ F₀Γη_Γ + weak div(F, F_Γ) load at t_n on the shared unknowns.
    Vec drift_load(const SourceSet& s, int n) const;
    /// ∫ F₁η + ∫_Γ F₁Γη_Γ at t_n.
    Vec noise_load(const SourceSet& s, int n) const;
    /// Mass-weighted load of a scalar bulk field: M_G f (bulk only).
    Vec mass_load(const Vec& f) const;

    double max_convection() const { return max_B_; }

private:
    struct Impl;
    int slot(int n) const;

    Mesh mesh_;
    CoefficientSet coeffs_;
    TimeGrid grid_;
    SolverOptions options_;
    Vec mass_;
    double max_B_ = 0.0;
    std::vector<DiscreteOperators> ops_;
    std::vector<SpMat> K_, R_, C_, N_;
    std::unique_ptr<Impl> impl_;
};

/// States on every node of every level: z[n] is n_bulk × level_size(n),
/// with the surface values given by the trace rows.
struct ForwardTrajectory {
    TimeGrid grid;
    const NoiseSource* noise = nullptr;  // non-owning
    std::vector<int> trace;
    std::vector<Mat> z;

    BulkSurfaceField field(int level, int j) const;
    /// 𝔼|(z, z_Γ)(t_n)|² in the coupled mass.
    double mean_square(int level, const Vec& mass) const;
};

/// Called after each step with the new level index and its states.
using StepHook = std::function<void(int level, Mat& states)>;

/// One semi-implicit step on a single state:
/// (M + Δt K(t_{n+1})) z⁺ = M z - Δt g (R + C/g) z - dW g N z + Δt ℓ₀ + dW ℓ₁.
Vec step_forward(const Discretization& disc, int n, const Vec& z, double dw, double g = 1.0,
                 const Vec& drift_load = Vec(), const Vec& noise_load = Vec());

/// Forward system with the lower-order terms of the coefficient set in
/// adjoint form (-a₁z + div(zB), -a₂z dW, and their surface analogues) plus
/// optional sources. z0 is the deterministic initial state on bulk nodes.
ForwardTrajectory solve_forward(const Discretization& disc, const Vec& z0, const NoiseSource& noise,
                                const SourceSet& sources = {}, const StepHook& hook = {});
/// Same with an (z₀, z_Γ,₀) pair; the pair must be trace-compatible.
ForwardTrajectory solve_forward(const Discretization& disc, const BulkSurfaceField& z0, const NoiseSource& noise,
                                const SourceSet& sources = {}, const StepHook& hook = {});

/// Exact propagator e^{tG} z0 of the deterministic semi-discrete system
/// dv/dt = G v with G = -M⁻¹(K + R + C) (coefficients time-independent).
class SemigroupOracle {
public:
    explicit SemigroupOracle(const Discretization& disc);
    Vec propagate(const Vec& z0, double t) const;
    const Mat& generator() const { return G_; }

private:
    Mat G_;
};

/// For constant a₂ = b₂: z = e^{-a₂W - ½a₂²t} e^{tG} z₀ on every node, where
/// G is the drift generator without noise. Throws for non-constant a₂/b₂ or
/// a path factor.
ForwardTrajectory factorization_oracle(const Discretization& disc, const Vec& z0, const NoiseSource& noise);

struct EnergyReport {
    double h1_ratio = 0.0;  // (𝔼∫|z|²_ℍ¹ dt)^{1/2} / |z₀|_𝕃²
    double sup_l2 = 0.0;    // sup_n 𝔼|z(t_n)|²
    double initial_l2 = 0.0;
    std::vector<double> l2_by_level;
    bool non_increasing = true;
    bool finite = true;
};

EnergyReport energy_estimate_check(const ForwardTrajectory& traj, const Discretization& disc);

/// M-orthonormal eigenpairs of the coupled unit-coefficient stiffness,
/// ascending eigenvalues.
struct GalerkinBasis {
    Mat E;
    Vec eigenvalues;
};

GalerkinBasis coupled_eigenbasis(const Mesh& mesh);

/// First n columns of E times the M-orthogonal projection coefficients.
Vec project(const GalerkinBasis& basis, const Vec& mass, const Vec& z0, int n_modes);

/// The semi-implicit scheme restricted to span(E_1..E_n). The returned
/// trajectory is expressed on mesh nodes.
ForwardTrajectory galerkin_solve(const Discretization& disc, const GalerkinBasis& basis, const Vec& z0,
                                 const NoiseSource& noise, int n_modes);

/// Little-endian dump: "SPDTRAJ1", int32 n_bulk, int32 n_levels, then per
/// level int32 count followed by n_bulk*count doubles (column-major).
void write_trajectory_binary(const ForwardTrajectory& traj, const std::string& path);

}  // namespace sdbc
