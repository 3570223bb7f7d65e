#include "sdbc/noise.hpp"
#include "sdbc/parallel.hpp"

#include <atomic>
#include <cmath>
#include <random>
#include <stdexcept>

namespace sdbc {

namespace {
std::atomic<int> g_threads{1};
}

int thread_count() { return g_threads.load(); }
void set_thread_count(int n) { g_threads.store(std::max(1, n)); }

NoiseTree::NoiseTree(int n_t, double T, bool recombining)
    : n_t_(n_t), T_(T), recombining_(recombining), sqrt_dt_(std::sqrt(T / n_t)) {
    if (n_t < 1) throw std::invalid_argument("tree depth must be at least 1");
    if (!(T > 0.0)) throw std::invalid_argument("tree horizon must be positive");
    if (!recombining && n_t > kMaxDepth) throw std::invalid_argument("tree depth overflow (non-recombining max 16)");
    if (recombining && n_t > kMaxRecombiningDepth)
        throw std::invalid_argument("tree depth overflow (recombining max 4096)");

    W_.resize(n_t + 1);
    prob_.resize(n_t + 1);
    W_[0] = Vec::Zero(1);
    prob_[0] = Vec::Ones(1);
    for (int n = 0; n < n_t; ++n) {
        const int m = level_size(n + 1);
        W_[n + 1] = Vec::Zero(m);
        prob_[n + 1] = Vec::Zero(m);
        for (int k = 0; k < level_size(n); ++k) {
            const int u = up(n, k), d = down(n, k);
            W_[n + 1](u) = W_[n](k) + sqrt_dt_;
            W_[n + 1](d) = W_[n](k) - sqrt_dt_;
            prob_[n + 1](u) += 0.5 * prob_[n](k);
            prob_[n + 1](d) += 0.5 * prob_[n](k);
        }
        if (recombining_) {
            for (int k = 0; k < m; ++k) W_[n + 1](k) = (n + 1 - 2 * k) * sqrt_dt_;
        }
    }
}

int NoiseTree::level_size(int level) const {
    if (level < 0 || level > n_t_) throw std::out_of_range("tree level out of range");
    return recombining_ ? level + 1 : (1 << level);
}

double NoiseTree::W(int level, int j) const { return W_.at(level)(j); }

double NoiseTree::probability(int level, int j) const { return prob_.at(level)(j); }

int NoiseTree::parents(int level, int j, Transition* out) const {
    if (level < 1 || level > n_t_) throw std::out_of_range("tree level out of range");
    if (!recombining_) {
        out[0] = Transition{j / 2, (j % 2 == 0) ? sqrt_dt_ : -sqrt_dt_, 1.0};
        return 1;
    }
    int count = 0;
    const double pc = prob_[level](j);
    if (j <= level - 1) out[count++] = Transition{j, sqrt_dt_, 0.5 * prob_[level - 1](j) / pc};
    if (j >= 1) out[count++] = Transition{j - 1, -sqrt_dt_, 0.5 * prob_[level - 1](j - 1) / pc};
    return count;
}

std::vector<int> NoiseTree::path_to(int level, int k) const {
    if (recombining_) throw std::logic_error("path_to requires a non-recombining tree");
    std::vector<int> path(level + 1);
    for (int n = level; n >= 0; --n) {
        path[n] = k;
        k /= 2;
    }
    return path;
}

Mat conditional_expectation(const NoiseTree& tree, int level, const Mat& child) {
    if (level < 0 || level >= tree.depth()) throw std::out_of_range("conditional_expectation: level out of range");
    if (child.cols() != tree.level_size(level + 1))
        throw std::invalid_argument("conditional_expectation: child count mismatch");
    const int m = tree.level_size(level);
    Mat out(child.rows(), m);
    for (int k = 0; k < m; ++k) out.col(k) = 0.5 * (child.col(tree.up(level, k)) + child.col(tree.down(level, k)));
    return out;
}

Mat martingale_increment(const NoiseTree& tree, int level, const Mat& child) {
    if (level < 0 || level >= tree.depth()) throw std::out_of_range("martingale_increment: level out of range");
    if (child.cols() != tree.level_size(level + 1))
        throw std::invalid_argument("martingale_increment: child count mismatch");
    const int m = tree.level_size(level);
    const double s = 2.0 * tree.sqrt_dt();
    Mat out(child.rows(), m);
    for (int k = 0; k < m; ++k) out.col(k) = (child.col(tree.up(level, k)) - child.col(tree.down(level, k))) / s;
    return out;
}

Vec conditional_expectation(const NoiseTree& tree, int level, const Vec& child) {
    return conditional_expectation(tree, level, Mat(child.transpose())).transpose();
}

Vec martingale_increment(const NoiseTree& tree, int level, const Vec& child) {
    return martingale_increment(tree, level, Mat(child.transpose())).transpose();
}

double expectation(const NoiseSource& noise, int level, const Vec& values) {
    double acc = 0.0;
    for (int j = 0; j < noise.level_size(level); ++j) acc += noise.probability(level, j) * values(j);
    return acc;
}

PathEnsemble::PathEnsemble(int n_paths, int n_t, double T, std::uint64_t seed) : T_(T), seed_(seed) {
    if (n_paths < 1 || n_t < 1) throw std::invalid_argument("ensemble needs at least one path and one step");
    if (!(T > 0.0)) throw std::invalid_argument("ensemble horizon must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(T / n_t));
    increments_.resize(n_paths, n_t);
    for (int p = 0; p < n_paths; ++p)
        for (int n = 0; n < n_t; ++n) increments_(p, n) = normal(rng);
    accumulate();
}

PathEnsemble PathEnsemble::from_increments(const Mat& increments, double T) {
    if (increments.rows() < 1 || increments.cols() < 1) throw std::invalid_argument("empty increment matrix");
    PathEnsemble e;
    e.increments_ = increments;
    e.T_ = T;
    e.accumulate();
    return e;
}

void PathEnsemble::accumulate() {
    W_ = Mat::Zero(increments_.rows(), increments_.cols() + 1);
    for (Eigen::Index n = 0; n < increments_.cols(); ++n) W_.col(n + 1) = W_.col(n) + increments_.col(n);
}

double PathEnsemble::W(int level, int j) const { return level == 0 ? 0.0 : W_(j, level); }

double PathEnsemble::probability(int level, int) const { return level == 0 ? 1.0 : 1.0 / n_paths(); }

int PathEnsemble::parents(int level, int j, Transition* out) const {
    if (level < 1 || level > depth()) throw std::out_of_range("ensemble level out of range");
    out[0] = Transition{level == 1 ? 0 : j, increments_(j, level - 1), 1.0};
    return 1;
}

PathEnsemble PathEnsemble::coarsen(int factor) const {
    if (factor < 1 || depth() % factor != 0) throw std::invalid_argument("coarsening factor must divide n_t");
    Mat inc = Mat::Zero(n_paths(), depth() / factor);
    for (int n = 0; n < depth(); ++n) inc.col(n / factor) += increments_.col(n);
    PathEnsemble e = from_increments(inc, T_);
    e.seed_ = seed_;
    return e;
}

}  // namespace sdbc
