#pragma once

#include "sdbc/forward.hpp"

namespace sdbc {

/// Per-level node data: entry n is n_bulk × level_size(n).
using AdaptedField = std::vector<Mat>;

AdaptedField zero_field(const NoiseSource& noise, int rows, int levels);

/// (y, y_Γ) on every node and the martingale integrands (Y, Ỹ) over
/// (t_n, t_{n+1}] for n < n_t. Surface values are the trace rows.
struct BackwardState {
    TimeGrid grid;
    const NoiseTree* tree = nullptr;  // non-owning
    std::vector<int> trace;
    std::vector<Mat> y;
    std::vector<Mat> Y;

    BulkSurfaceField field(int level, int j) const;
    BulkSurfaceField integrand(int level, int j) const;
};

/// Backward induction for the controlled system
///   dy + div(A∇y)dt = (a₁y + a₂Y + B·∇y + 1_{G₀}u + f)dt + Y dW
/// with the surface analogue, as the exact algebraic transpose of the
/// forward step. For each node: m, Y from the children, [Wm, WY] =
/// (M + ΔtK)⁻¹M[m, Y], then
///   M y = (M - Δt g R - Δt Cᵀ) Wm - Δt g N WY - Δt (B_u u + f).
/// u holds control values on bulk nodes for levels 0..n_t-1 (only G₀ nodes
/// act); f holds assembled load vectors for levels 0..n_t-1. Either may be empty.
BackwardState solve_backward(const Discretization& disc, const Mat& y_T, const NoiseTree& tree,
                             const AdaptedField& u = {}, const AdaptedField& f = {});
/// Rejects non-tree backends.
BackwardState solve_backward(const Discretization& disc, const Mat& y_T, const NoiseSource& noise,
                             const AdaptedField& u = {}, const AdaptedField& f = {});

/// Diagonal of the control operator B_u = dx-weights on G₀.
Vec control_weights(const Mesh& mesh);

/// 𝔼 Σ_n Δt aᵀ B_u b over levels 0..n_t-1.
double control_inner(const AdaptedField& a, const AdaptedField& b, const Vec& Bu, const NoiseSource& noise,
                     double dt);

/// |𝔼⟨y_T, z(T)⟩ - ⟨y(0), z₀⟩ - 𝔼∫ 1_{G₀} u z| relative to the largest of the three.
struct DualityTerms {
    double terminal = 0.0;
    double initial = 0.0;
    double control = 0.0;
    double residual = 0.0;
};

DualityTerms duality_residual(const ForwardTrajectory& fwd, const BackwardState& bwd, const AdaptedField& u,
                              const Discretization& disc);

/// Columns: z(T) on all leaves (stacked leaf by leaf) for each unit z₀.
Mat forward_terminal_map(const Discretization& disc, const NoiseSource& noise);
/// Columns: y(0) for each unit terminal entry (leaf by leaf).
Mat backward_initial_map(const Discretization& disc, const NoiseTree& tree);
/// max |M Ψ - Φᵀ diag(p ⊗ M)| for the two maps above.
double transpose_defect(const Mat& forward_map, const Mat& backward_map, const Vec& mass, const NoiseSource& noise);

}  // namespace sdbc
