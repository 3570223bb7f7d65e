#include "sdbc/backward.hpp"
#include "sdbc/parallel.hpp"

#include <cmath>

namespace sdbc {

AdaptedField zero_field(const NoiseSource& noise, int rows, int levels) {
    AdaptedField f;
    for (int n = 0; n < levels; ++n) f.push_back(Mat::Zero(rows, noise.level_size(n)));
    return f;
}

namespace {

BulkSurfaceField pair_from(const Mat& m, int j, const std::vector<int>& trace) {
    BulkSurfaceField f;
    f.bulk = m.col(j);
    f.surf.resize(static_cast<Eigen::Index>(trace.size()));
    for (std::size_t k = 0; k < trace.size(); ++k) f.surf(static_cast<Eigen::Index>(k)) = f.bulk(trace[k]);
    return f;
}

void check_field(const AdaptedField& f, const NoiseSource& noise, int rows, const char* what) {
    if (f.empty()) return;
    if (static_cast<int>(f.size()) != noise.depth())
        throw std::invalid_argument(std::string(what) + " must be given on levels 0..n_t-1 (adapted)");
    for (int n = 0; n < noise.depth(); ++n)
        if (f[n].rows() != rows || f[n].cols() != noise.level_size(n))
            throw std::invalid_argument(std::string(what) + " is not adapted to the tree at level " +
                                        std::to_string(n));
}

}  // namespace

BulkSurfaceField BackwardState::field(int level, int j) const { return pair_from(y.at(level), j, trace); }
BulkSurfaceField BackwardState::integrand(int level, int j) const { return pair_from(Y.at(level), j, trace); }

Vec control_weights(const Mesh& mesh) { return mesh.bulk_weights.cwiseProduct(mesh.control_mask); }

BackwardState solve_backward(const Discretization& disc, const Mat& y_T, const NoiseTree& tree, const AdaptedField& u,
                             const AdaptedField& f) {
    const TimeGrid& grid = disc.grid();
    const int N = grid.n_t;
    const int rows = disc.size();
    if (tree.depth() != N || std::abs(tree.horizon() - grid.T) > 1e-12 * grid.T)
        throw std::invalid_argument("tree does not match the time grid");
    if (y_T.rows() != rows || y_T.cols() != tree.level_size(N))
        throw std::invalid_argument("terminal data must have one column per leaf");
    check_field(u, tree, rows, "control");
    check_field(f, tree, rows, "source");

    const double dt = grid.dt();
    const Vec& M = disc.mass();
    const Vec Minv = M.cwiseInverse();
    const Vec Bu = control_weights(disc.mesh());

    BackwardState st;
    st.grid = grid;
    st.tree = &tree;
    st.trace = disc.mesh().trace;
    st.y.resize(N + 1);
    st.Y.resize(N);
    st.y[N] = y_T;

    for (int n = N - 1; n >= 0; --n) {
        const Mat m = conditional_expectation(tree, n, st.y[n + 1]);
        Mat Y = martingale_increment(tree, n, st.y[n + 1]);
        const int cols = static_cast<int>(m.cols());
        const SpMat Ct = SpMat(disc.convection(n).transpose());
        Mat y(rows, cols);
        parallel_blocks(cols, [&](int b, int e) {
            const int w = e - b;
            Mat stacked(rows, 2 * w);
            stacked.leftCols(w) = M.asDiagonal() * m.middleCols(b, w);
            stacked.rightCols(w) = M.asDiagonal() * Y.middleCols(b, w);
            const Mat S = disc.solve_implicit(n, stacked);
            const auto Wm = S.leftCols(w);
            const auto WY = S.rightCols(w);
            Mat react = disc.reaction(n) * Wm;
            Mat nz = disc.noise(n) * WY;
            Mat out = M.asDiagonal() * Wm - dt * (Ct * Wm);
            for (int c = 0; c < w; ++c) {
                const double g = disc.path_factor(n, tree.W(n, b + c));
                out.col(c) -= g * dt * react.col(c) + g * dt * nz.col(c);
                if (!u.empty()) out.col(c) -= dt * Bu.cwiseProduct(u[n].col(b + c));
                if (!f.empty()) out.col(c) -= dt * f[n].col(b + c);
            }
            y.middleCols(b, w) = Minv.asDiagonal() * out;
        });
        st.y[n] = std::move(y);
        st.Y[n] = std::move(Y);
    }
    return st;
}

BackwardState solve_backward(const Discretization& disc, const Mat& y_T, const NoiseSource& noise,
                             const AdaptedField& u, const AdaptedField& f) {
    const auto* tree = dynamic_cast<const NoiseTree*>(&noise);
    if (!tree) throw std::invalid_argument("backward solves require the tree backend");
    return solve_backward(disc, y_T, *tree, u, f);
}

double control_inner(const AdaptedField& a, const AdaptedField& b, const Vec& Bu, const NoiseSource& noise,
                     double dt) {
    double acc = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n)
        for (Eigen::Index j = 0; j < a[n].cols(); ++j)
            acc += dt * noise.probability(static_cast<int>(n), static_cast<int>(j)) *
                   a[n].col(j).dot(Bu.cwiseProduct(b[n].col(j)));
    return acc;
}

DualityTerms duality_residual(const ForwardTrajectory& fwd, const BackwardState& bwd, const AdaptedField& u,
                              const Discretization& disc) {
    if (fwd.noise != bwd.tree || fwd.z.size() != bwd.y.size()) throw std::invalid_argument("tree mismatch");
    const int N = fwd.grid.n_t;
    const Vec& M = disc.mass();
    DualityTerms d;
    for (int j = 0; j < bwd.tree->level_size(N); ++j)
        d.terminal += bwd.tree->probability(N, j) * bwd.y[N].col(j).dot(M.cwiseProduct(fwd.z[N].col(j)));
    d.initial = bwd.y[0].col(0).dot(M.cwiseProduct(fwd.z[0].col(0)));
    if (!u.empty()) {
        AdaptedField z(fwd.z.begin(), fwd.z.begin() + N);
        d.control = control_inner(u, z, control_weights(disc.mesh()), *bwd.tree, fwd.grid.dt());
    }
    const double scale = std::max({std::abs(d.terminal), std::abs(d.initial), std::abs(d.control)});
    const double raw = std::abs(d.terminal - d.initial - d.control);
    d.residual = scale > 0.0 ? raw / scale : 0.0;
    return d;
}

Mat forward_terminal_map(const Discretization& disc, const NoiseSource& noise) {
    const int n = disc.size();
    const int N = disc.grid().n_t;
    const int leaves = noise.level_size(N);
    Mat Phi(n * leaves, n);
    for (int i = 0; i < n; ++i) {
        const ForwardTrajectory t = solve_forward(disc, Vec::Unit(n, i), noise);
        for (int j = 0; j < leaves; ++j) Phi.block(j * n, i, n, 1) = t.z[N].col(j);
    }
    return Phi;
}

Mat backward_initial_map(const Discretization& disc, const NoiseTree& tree) {
    const int n = disc.size();
    const int N = disc.grid().n_t;
    const int leaves = tree.level_size(N);
    Mat Psi(n, n * leaves);
    for (int j = 0; j < leaves; ++j) {
        for (int i = 0; i < n; ++i) {
            Mat yT = Mat::Zero(n, leaves);
            yT(i, j) = 1.0;
            Psi.col(j * n + i) = solve_backward(disc, yT, tree).y[0].col(0);
        }
    }
    return Psi;
}

double transpose_defect(const Mat& Phi, const Mat& Psi, const Vec& mass, const NoiseSource& noise) {
    const int n = static_cast<int>(mass.size());
    const int N = noise.depth();
    const int leaves = noise.level_size(N);
    Vec w(n * leaves);
    for (int j = 0; j < leaves; ++j) w.segment(j * n, n) = noise.probability(N, j) * mass;
    const Mat lhs = mass.asDiagonal() * Psi;
    const Mat rhs = Phi.transpose() * w.asDiagonal();
    return (lhs - rhs).cwiseAbs().maxCoeff();
}

}  // namespace sdbc
