#include "sdbc/weights.hpp"

#include <algorithm>
#include <limits>

namespace sdbc {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double rel_change(double a, double b) {
    const double s = std::max(std::abs(a), std::abs(b));
    return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

}  // namespace

double AuxFunction::psi(const Point& x) const {
    if (geometry.kind == GeometryKind::Interval) return (x(0) - geometry.a) * (geometry.b - x(0));
    const double R = geometry.radius;
    const double r = x.norm();
    // nodes placed on Γ by cos/sin carry |x| = R up to rounding
    if (std::abs(R - r) <= 8.0 * kEps * R) return 0.0;
    return (R - r) * (R + r);
}

Point AuxFunction::grad(const Point& x) const {
    if (geometry.kind == GeometryKind::Interval) return Point(geometry.a + geometry.b - 2.0 * x(0), 0.0);
    return -2.0 * x;
}

Point AuxFunction::critical_point() const {
    if (geometry.kind == GeometryKind::Interval) return Point(0.5 * (geometry.a + geometry.b), 0.0);
    return Point::Zero();
}

AuxFunction make_psi(const Geometry& geometry, const ControlRegion& g1) {
    geometry.validate();
    AuxFunction aux;
    aux.geometry = geometry;
    aux.g1 = g1;
    if (!geometry.in_region(g1, aux.critical_point()))
        throw std::invalid_argument("critical point of psi lies outside G1");
    if (geometry.kind == GeometryKind::Interval) {
        const double half = 0.5 * (geometry.b - geometry.a);
        aux.psi_max = half * half;
        aux.c = geometry.b - geometry.a;
    } else {
        aux.psi_max = geometry.radius * geometry.radius;
        aux.c = 2.0 * geometry.radius;
    }
    return aux;
}

PsiCheck check_psi(const AuxFunction& aux, const Mesh& mesh) {
    PsiCheck out;
    out.min_psi_inside = std::numeric_limits<double>::infinity();
    out.min_grad_off_g1 = std::numeric_limits<double>::infinity();
    out.max_normal_derivative = -std::numeric_limits<double>::infinity();
    std::vector<char> on_boundary(mesh.n_bulk(), 0);
    for (int k : mesh.trace) on_boundary[k] = 1;
    for (int i = 0; i < mesh.n_bulk(); ++i) {
        const Point& x = mesh.bulk_nodes[i];
        const double p = aux.psi(x);
        if (on_boundary[i]) {
            if (p != 0.0) out.zero_on_boundary = false;
        } else {
            out.min_psi_inside = std::min(out.min_psi_inside, p);
            if (!(p > 0.0)) out.positive_inside = false;
        }
        if (!mesh.geometry.in_region(aux.g1, x)) {
            const double g = aux.grad(x).norm();
            out.min_grad_off_g1 = std::min(out.min_grad_off_g1, g);
            if (!(g > 0.0)) out.gradient_nonzero_off_g1 = false;
        }
    }
    for (int k = 0; k < mesh.n_surf(); ++k) {
        const double dn = aux.grad(mesh.boundary_nodes[k]).dot(mesh.normals[k]);
        out.max_normal_derivative = std::max(out.max_normal_derivative, dn);
        if (!(dn <= -aux.c * (1.0 - 1e-12))) out.normal_derivative_bound = false;
    }
    return out;
}

CarlemanWeights make_weights(const AuxFunction& aux, double mu, double lambda, double T) {
    if (!(mu > 1.0)) throw std::invalid_argument("mu must exceed 1");
    if (!(lambda > 1.0)) throw std::invalid_argument("lambda must exceed 1");
    if (!(T > 0.0)) throw std::invalid_argument("T must be positive");
    return CarlemanWeights{aux, mu, lambda, T};
}

WeightValues eval_weights(const CarlemanWeights& w, double t, const Point& x) {
    if (t < 0.0 || t > w.T) throw std::domain_error("eval_weights: t outside [0, T]");
    WeightValues v;
    if (t == 0.0 || t == w.T) {
        v.alpha = -std::numeric_limits<double>::infinity();
        v.phi = std::numeric_limits<double>::infinity();
        v.theta = 0.0;
        v.time_boundary = true;
        return v;
    }
    v.alpha = w.alpha(t, x);
    v.phi = w.phi(t, x);
    v.theta = std::exp(w.lambda * v.alpha);
    return v;
}

bool WeightBoundReport::finite() const {
    for (double c : {phi_lower, phi_t, alpha_t, theta2phi_t, theta2phi_grad})
        if (!std::isfinite(c)) return false;
    return true;
}

WeightBoundReport check_weight_bounds(const CarlemanWeights& w, const Mesh& mesh, const TimeGrid& grid) {
    WeightBoundReport rep;
    rep.phi_lower = std::numeric_limits<double>::infinity();
    const double T = w.T;
    const double lam = w.lambda;
    const double emax = std::exp(2.0 * w.mu * w.aux.psi_max);
    const bool is_disk = mesh.geometry.kind == GeometryKind::Disk;

    for (int n = 1; n < grid.n_t; ++n) {
        const double t = grid.t(n);
        const double dt = 1e-5 * std::min(t, T - t);
        for (const auto& x : mesh.bulk_nodes) {
            const double phi = w.phi(t, x);
            rep.phi_lower = std::min(rep.phi_lower, phi * T * T);

            const double phi_t = (w.phi(t + dt, x) - w.phi(t - dt, x)) / (2.0 * dt);
            rep.phi_t = std::max(rep.phi_t, std::abs(phi_t) / (T * phi * phi));

            const double alpha_t = (w.alpha(t + dt, x) - w.alpha(t - dt, x)) / (2.0 * dt);
            rep.alpha_t = std::max(rep.alpha_t, std::abs(alpha_t) / (T * emax * phi * phi));

            // (θ²φ)_t / (θ²φ) = d/dt log(θ²φ)
            auto log_g = [&](double s, const Point& y) { return w.log_theta2(s, y) + std::log(w.phi(s, y)); };
            const double dlog_t = (log_g(t + dt, x) - log_g(t - dt, x)) / (2.0 * dt);
            rep.theta2phi_t = std::max(rep.theta2phi_t, std::abs(dlog_t) / (T * lam * phi * phi));

            const double dx = 1e-6;
            Point g;
            g(0) = (log_g(t, x + Point(dx, 0)) - log_g(t, x - Point(dx, 0))) / (2.0 * dx);
            g(1) = is_disk ? (log_g(t, x + Point(0, dx)) - log_g(t, x - Point(0, dx))) / (2.0 * dx) : 0.0;
            rep.theta2phi_grad = std::max(rep.theta2phi_grad, g.norm() / (lam * phi));
        }
        double amin = std::numeric_limits<double>::infinity(), amax = -amin;
        double pmin = amin, pmax = -amin;
        for (const auto& x : mesh.boundary_nodes) {
            const double a = w.alpha(t, x), p = w.phi(t, x);
            amin = std::min(amin, a);
            amax = std::max(amax, a);
            pmin = std::min(pmin, p);
            pmax = std::max(pmax, p);
        }
        rep.boundary_alpha_spread = std::max(rep.boundary_alpha_spread, amax - amin);
        rep.boundary_phi_spread = std::max(rep.boundary_phi_spread, pmax - pmin);
    }
    return rep;
}

double max_relative_change(const WeightBoundReport& a, const WeightBoundReport& b) {
    return std::max({rel_change(a.phi_lower, b.phi_lower), rel_change(a.phi_t, b.phi_t),
                     rel_change(a.alpha_t, b.alpha_t), rel_change(a.theta2phi_t, b.theta2phi_t),
                     rel_change(a.theta2phi_grad, b.theta2phi_grad)});
}

}  // namespace sdbc
