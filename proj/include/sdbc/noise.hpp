#pragma once

#include "sdbc/geometry.hpp"

#include <cstdint>
#include <memory>

namespace sdbc {

/// A node at level n reached from `parent` at level n-1 by the increment dw.
/// For a forward step the child value is Σ weight * step(parent, dw).
struct Transition {
    int parent = 0;
    double dw = 0.0;
    double weight = 1.0;
};

/// Common interface of the tree and Monte Carlo backends. Level 0 is the
/// single deterministic root; level n holds the states at t_n.
class NoiseSource {
public:
    virtual ~NoiseSource() = default;

    virtual int depth() const = 0;
    virtual double horizon() const = 0;
    double dt() const { return horizon() / depth(); }

    virtual int level_size(int level) const = 0;
    virtual double W(int level, int j) const = 0;
    virtual double probability(int level, int j) const = 0;
    /// Writes up to two transitions into `out`; returns their count. level ≥ 1.
    virtual int parents(int level, int j, Transition* out) const = 0;
    virtual bool is_tree() const = 0;
    virtual bool recombining() const { return false; }
    virtual std::uint64_t seed() const { return 0; }
};

/// Binary Brownian tree with ±√Δt increments of probability ½.
/// Non-recombining: level n has 2ⁿ nodes, children of k are 2k (up) and 2k+1 (down).
/// Recombining: level n has n+1 nodes indexed by the number of down moves,
/// children of k are k (up) and k+1 (down).
class NoiseTree final : public NoiseSource {
public:
    static constexpr int kMaxDepth = 16;
    static constexpr int kMaxRecombiningDepth = 4096;

    NoiseTree(int n_t, double T, bool recombining);

    int depth() const override { return n_t_; }
    double horizon() const override { return T_; }
    int level_size(int level) const override;
    double W(int level, int j) const override;
    double probability(int level, int j) const override;
    int parents(int level, int j, Transition* out) const override;
    bool is_tree() const override { return true; }
    bool recombining() const override { return recombining_; }

    int up(int /*level*/, int k) const { return recombining_ ? k : 2 * k; }
    int down(int /*level*/, int k) const { return recombining_ ? k + 1 : 2 * k + 1; }
    double sqrt_dt() const { return sqrt_dt_; }

    /// Indices of the ancestors of (level, k) at levels 0..level.
    std::vector<int> path_to(int level, int k) const;

private:
    int n_t_;
    double T_;
    bool recombining_;
    double sqrt_dt_;
    std::vector<Vec> W_;
    std::vector<Vec> prob_;
};

/// Node value ½(up + down) for every node of `level`; child_values has one
/// column per node of level+1 (a row vector for scalar data).
Mat conditional_expectation(const NoiseTree& tree, int level, const Mat& child_values);
/// Node value (up - down)/(2√Δt).
Mat martingale_increment(const NoiseTree& tree, int level, const Mat& child_values);

Vec conditional_expectation(const NoiseTree& tree, int level, const Vec& child_values);
Vec martingale_increment(const NoiseTree& tree, int level, const Vec& child_values);

/// Σ_j p_j v_j over a level in index order.
double expectation(const NoiseSource& noise, int level, const Vec& values);

/// Monte Carlo paths: n_paths rows of n_t Gaussian increments N(0, Δt).
/// Level 0 is the shared root; for level ≥ 1 node j is path j.
class PathEnsemble final : public NoiseSource {
public:
    PathEnsemble(int n_paths, int n_t, double T, std::uint64_t seed);
    /// Deterministic paths with prescribed increments (rows = paths).
    static PathEnsemble from_increments(const Mat& increments, double T);

    int depth() const override { return static_cast<int>(increments_.cols()); }
    double horizon() const override { return T_; }
    int level_size(int level) const override { return level == 0 ? 1 : n_paths(); }
    double W(int level, int j) const override;
    double probability(int level, int j) const override;
    int parents(int level, int j, Transition* out) const override;
    bool is_tree() const override { return false; }
    std::uint64_t seed() const override { return seed_; }

    int n_paths() const { return static_cast<int>(increments_.rows()); }
    const Mat& increments() const { return increments_; }
    /// Paths on the grid with n_t / factor steps, increments summed in blocks.
    PathEnsemble coarsen(int factor) const;

private:
    PathEnsemble() = default;
    void accumulate();

    Mat increments_;
    Mat W_;  // n_paths x (n_t + 1)
    double T_ = 1.0;
    std::uint64_t seed_ = 0;
};

}  // namespace sdbc
