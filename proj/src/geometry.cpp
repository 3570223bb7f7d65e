#include "sdbc/geometry.hpp"

#include "sdbc/coefficients.hpp"

#include "json.hpp"
#include <unsupported/Eigen/SparseExtra>

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace sdbc {

namespace {

constexpr double kPi = std::numbers::pi;

SpMat diagonal(const Vec& d) {
    SpMat m(d.size(), d.size());
    m.reserve(Eigen::VectorXi::Constant(d.size(), 1));
    for (Eigen::Index i = 0; i < d.size(); ++i) m.insert(i, i) = d(i);
    m.makeCompressed();
    return m;
}

void add_edge(std::vector<Edge>& edges, const std::vector<Point>& nodes, int i, int j, double face, double length,
              const Point& mid, const Point& tangent) {
    (void)nodes;
    edges.push_back(Edge{i, j, face, length, mid, tangent});
}

// Σ_e face/length * coeff_e * (e_i - e_j)(e_i - e_j)ᵀ
template <typename CoeffFn>
SpMat edge_laplacian(int n, const std::vector<Edge>& edges, CoeffFn&& coeff) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(4 * edges.size());
    for (const auto& e : edges) {
        const double w = e.face / e.length * coeff(e);
        trip.emplace_back(e.i, e.i, w);
        trip.emplace_back(e.j, e.j, w);
        trip.emplace_back(e.i, e.j, -w);
        trip.emplace_back(e.j, e.i, -w);
    }
    SpMat m(n, n);
    m.setFromTriplets(trip.begin(), trip.end());
    return m;
}

// Matrix C with ηᵀ C z = Σ_e face * ½(z_i b_i + z_j b_j)(η_j - η_i), where
// b_k = field(node k)·tangent_e. This is ∫ z B·∇η discretized edgewise, the
// same edge rule used by weak_divergence_load.
SpMat edge_convection(int n, const std::vector<Edge>& edges, const Vec& node_proj_i, const Vec& node_proj_j) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(4 * edges.size());
    for (std::size_t k = 0; k < edges.size(); ++k) {
        const auto& e = edges[k];
        const double bi = 0.5 * e.face * node_proj_i(k);
        const double bj = 0.5 * e.face * node_proj_j(k);
        trip.emplace_back(e.j, e.i, bi);
        trip.emplace_back(e.j, e.j, bj);
        trip.emplace_back(e.i, e.i, -bi);
        trip.emplace_back(e.i, e.j, -bj);
    }
    SpMat m(n, n);
    m.setFromTriplets(trip.begin(), trip.end());
    return m;
}

}  // namespace

Geometry Geometry::interval(double a, double b, ControlRegion g0) {
    Geometry g;
    g.kind = GeometryKind::Interval;
    g.a = a;
    g.b = b;
    g.control = g0;
    g.validate();
    return g;
}

Geometry Geometry::disk(double radius, ControlRegion g0) {
    Geometry g;
    g.kind = GeometryKind::Disk;
    g.radius = radius;
    g.control = g0;
    g.validate();
    return g;
}

void Geometry::validate() const {
    if (kind == GeometryKind::Interval) {
        if (!(b > a)) throw std::invalid_argument("interval has zero measure");
        if (!(control.lo > a && control.hi < b && control.lo < control.hi))
            throw std::invalid_argument("control region must satisfy a < lo < hi < b");
    } else {
        if (!(radius > 0.0)) throw std::invalid_argument("disk radius must be positive");
        if (!(control.lo >= 0.0 && control.lo < control.hi && control.hi < radius))
            throw std::invalid_argument("control annulus must satisfy 0 <= r0 < r1 < R");
    }
}

bool Geometry::in_region(const ControlRegion& region, const Point& x) const {
    if (kind == GeometryKind::Interval) return x(0) > region.lo && x(0) < region.hi;
    const double r = x.norm();
    if (region.lo == 0.0) return r < region.hi;
    return r > region.lo && r < region.hi;
}

double Geometry::measure() const {
    return kind == GeometryKind::Interval ? b - a : kPi * radius * radius;
}

double Geometry::boundary_measure() const {
    return kind == GeometryKind::Interval ? 2.0 : 2.0 * kPi * radius;
}

std::string Geometry::name() const { return kind == GeometryKind::Interval ? "interval" : "disk"; }

TimeGrid::TimeGrid(double horizon, int steps) : T(horizon), n_t(steps) {
    if (!(T > 0.0)) throw std::invalid_argument("time horizon must be positive");
    if (n_t < 2) throw std::invalid_argument("time grid needs n_t >= 2");
}

Mesh build_mesh(const Geometry& geometry, int n_x, int n_theta) {
    geometry.validate();
    Mesh mesh;
    mesh.geometry = geometry;

    if (geometry.kind == GeometryKind::Interval) {
        if (n_x < 3) throw std::invalid_argument("interval mesh needs n_x >= 3");
        const double h = (geometry.b - geometry.a) / (n_x - 1);
        mesh.h = h;
        mesh.bulk_weights = Vec::Constant(n_x, h);
        mesh.bulk_weights(0) = mesh.bulk_weights(n_x - 1) = 0.5 * h;
        for (int i = 0; i < n_x; ++i) mesh.bulk_nodes.emplace_back(geometry.a + i * h, 0.0);
        for (int i = 0; i + 1 < n_x; ++i) {
            const Point mid((mesh.bulk_nodes[i](0) + mesh.bulk_nodes[i + 1](0)) / 2, 0.0);
            add_edge(mesh.bulk_edges, mesh.bulk_nodes, i, i + 1, 1.0, h, mid, Point(1.0, 0.0));
        }
        mesh.boundary_nodes = {mesh.bulk_nodes.front(), mesh.bulk_nodes.back()};
        mesh.trace = {0, n_x - 1};
        mesh.normals = {Point(-1.0, 0.0), Point(1.0, 0.0)};
        mesh.tangents = {Point::Zero(), Point::Zero()};
        mesh.surface_weights = Vec::Ones(2);
    } else {
        const int n_r = n_x;
        if (n_r < 2) throw std::invalid_argument("disk mesh needs at least 2 radial intervals");
        if (n_theta == 0) n_theta = 2 * n_r;
        if (n_theta < 4) throw std::invalid_argument("disk mesh needs at least 4 angles");
        const double R = geometry.radius;
        const double dr = R / n_r;
        const double dth = 2.0 * kPi / n_theta;
        mesh.n_r = n_r;
        mesh.n_theta = n_theta;
        mesh.h = std::max(dr, R * dth);

        auto id = [&](int ring, int k) { return 1 + (ring - 1) * n_theta + ((k % n_theta) + n_theta) % n_theta; };
        const int n = 1 + n_r * n_theta;
        mesh.bulk_nodes.resize(n);
        mesh.bulk_weights.resize(n);
        mesh.bulk_nodes[0] = Point::Zero();
        mesh.bulk_weights(0) = kPi * 0.25 * dr * dr;
        for (int j = 1; j <= n_r; ++j) {
            const double r = j * dr;
            const double area = j < n_r ? r * dr * dth : 0.5 * dth * (R * R - (R - 0.5 * dr) * (R - 0.5 * dr));
            for (int k = 0; k < n_theta; ++k) {
                const double th = k * dth;
                mesh.bulk_nodes[id(j, k)] = Point(r * std::cos(th), r * std::sin(th));
                mesh.bulk_weights(id(j, k)) = area;
            }
        }
        // pole to first ring
        for (int k = 0; k < n_theta; ++k) {
            const double th = k * dth;
            const Point dir(std::cos(th), std::sin(th));
            add_edge(mesh.bulk_edges, mesh.bulk_nodes, 0, id(1, k), 0.5 * dr * dth, dr, 0.5 * dr * dir, dir);
        }
        // radial edges
        for (int j = 1; j < n_r; ++j) {
            const double rm = (j + 0.5) * dr;
            for (int k = 0; k < n_theta; ++k) {
                const double th = k * dth;
                const Point dir(std::cos(th), std::sin(th));
                add_edge(mesh.bulk_edges, mesh.bulk_nodes, id(j, k), id(j + 1, k), rm * dth, dr, rm * dir, dir);
            }
        }
        // angular edges
        for (int j = 1; j <= n_r; ++j) {
            const double r = j * dr;
            const double face = j < n_r ? dr : 0.5 * dr;
            for (int k = 0; k < n_theta; ++k) {
                const double thm = (k + 0.5) * dth;
                const Point tan(-std::sin(thm), std::cos(thm));
                const Point mid(r * std::cos(thm), r * std::sin(thm));
                add_edge(mesh.bulk_edges, mesh.bulk_nodes, id(j, k), id(j, k + 1), face, r * dth, mid, tan);
            }
        }
        for (int k = 0; k < n_theta; ++k) {
            const double th = k * dth;
            mesh.boundary_nodes.push_back(mesh.bulk_nodes[id(n_r, k)]);
            mesh.trace.push_back(id(n_r, k));
            mesh.normals.emplace_back(std::cos(th), std::sin(th));
            mesh.tangents.emplace_back(-std::sin(th), std::cos(th));
        }
        mesh.surface_weights = Vec::Constant(n_theta, R * dth);
        for (int k = 0; k < n_theta; ++k) {
            const double thm = (k + 0.5) * dth;
            const Point tan(-std::sin(thm), std::cos(thm));
            add_edge(mesh.surface_edges, mesh.boundary_nodes, k, (k + 1) % n_theta, 1.0, R * dth,
                     Point(R * std::cos(thm), R * std::sin(thm)), tan);
        }
    }

    mesh.control_mask = Vec::Zero(mesh.n_bulk());
    for (int i = 0; i < mesh.n_bulk(); ++i)
        if (geometry.in_control(mesh.bulk_nodes[i])) mesh.control_mask(i) = 1.0;
    for (int k : mesh.trace)
        if (mesh.control_mask(k) != 0.0) throw std::invalid_argument("control region touches the boundary");
    if (mesh.control_mask.sum() == 0.0) throw std::invalid_argument("control region contains no mesh node");
    return mesh;
}

BulkSurfaceField BulkSurfaceField::zeros(const Mesh& mesh) {
    return {Vec::Zero(mesh.n_bulk()), Vec::Zero(mesh.n_surf())};
}

BulkSurfaceField BulkSurfaceField::constant(const Mesh& mesh, double bulk_value, double surf_value) {
    return {Vec::Constant(mesh.n_bulk(), bulk_value), Vec::Constant(mesh.n_surf(), surf_value)};
}

BulkSurfaceField BulkSurfaceField::from_bulk(const Mesh& mesh, const Vec& bulk) {
    if (bulk.size() != mesh.n_bulk()) throw std::invalid_argument("bulk vector does not match mesh");
    return {bulk, trace_of(mesh, bulk)};
}

bool BulkSurfaceField::conforms(const Mesh& mesh) const {
    return bulk.size() == mesh.n_bulk() && surf.size() == mesh.n_surf();
}

bool BulkSurfaceField::is_trace_compatible(const Mesh& mesh, double tol) const {
    if (!conforms(mesh)) return false;
    return (surf - trace_of(mesh, bulk)).cwiseAbs().maxCoeff() <= tol;
}

Vec trace_of(const Mesh& mesh, const Vec& bulk) {
    Vec s(mesh.n_surf());
    for (int k = 0; k < mesh.n_surf(); ++k) s(k) = bulk(mesh.trace[k]);
    return s;
}

double inner_L2(const BulkSurfaceField& u, const BulkSurfaceField& v, const Mesh& mesh) {
    if (!u.conforms(mesh) || !v.conforms(mesh)) throw std::invalid_argument("inner_L2: shape mismatch");
    return (u.bulk.array() * v.bulk.array() * mesh.bulk_weights.array()).sum() +
           (u.surf.array() * v.surf.array() * mesh.surface_weights.array()).sum();
}

Vec DiscreteOperators::coupled_mass() const {
    return Vec(SpMat(M_G + SpMat(P.transpose()) * M_Gamma * P).diagonal());
}

SpMat DiscreteOperators::coupled_stiffness() const { return K_A + SpMat(P.transpose()) * K_AGamma * P; }
SpMat DiscreteOperators::coupled_convection() const { return C_B + SpMat(P.transpose()) * C_BGamma * P; }
SpMat DiscreteOperators::coupled_reaction() const { return R_a1 + SpMat(P.transpose()) * R_b1 * P; }
SpMat DiscreteOperators::coupled_noise() const { return N_a2 + SpMat(P.transpose()) * N_b2 * P; }

DiscreteOperators assemble_operators(const Mesh& mesh, const CoefficientSet& coeffs, double t) {
    const int n = mesh.n_bulk();
    const int m = mesh.n_surf();
    const auto kind = mesh.geometry.kind;
    constexpr double kTol = 1e-12;

    for (int i = 0; i < n; ++i) {
        const Eigen::Matrix2d A = coeffs.A(t, mesh.bulk_nodes[i]);
        if ((A - A.transpose()).cwiseAbs().maxCoeff() > kTol) throw std::invalid_argument("A is not symmetric");
        if (min_eigenvalue(A, kind) < coeffs.beta - kTol)
            throw std::invalid_argument("ellipticity violated: min eigenvalue of A below beta");
    }
    if (kind == GeometryKind::Disk) {
        for (int k = 0; k < m; ++k) {
            const Eigen::Matrix2d Ag = coeffs.A_gamma(t, mesh.boundary_nodes[k]);
            if ((Ag - Ag.transpose()).cwiseAbs().maxCoeff() > kTol)
                throw std::invalid_argument("A_gamma is not symmetric");
            const Point& tau = mesh.tangents[k];
            if (tau.dot(Ag * tau) < coeffs.beta - kTol)
                throw std::invalid_argument("ellipticity violated: tangential A_gamma below beta");
        }
    }

    DiscreteOperators ops;
    ops.M_G = diagonal(mesh.bulk_weights);
    ops.M_Gamma = diagonal(mesh.surface_weights);

    ops.K_A = edge_laplacian(n, mesh.bulk_edges, [&](const Edge& e) {
        return e.tangent.dot(coeffs.A(t, e.mid) * e.tangent);
    });
    ops.K_AGamma = edge_laplacian(m, mesh.surface_edges, [&](const Edge& e) {
        return e.tangent.dot(coeffs.A_gamma(t, e.mid) * e.tangent);
    });

    {
        Vec pi(mesh.bulk_edges.size()), pj(mesh.bulk_edges.size());
        for (std::size_t k = 0; k < mesh.bulk_edges.size(); ++k) {
            const auto& e = mesh.bulk_edges[k];
            pi(k) = coeffs.B(t, mesh.bulk_nodes[e.i]).dot(e.tangent);
            pj(k) = coeffs.B(t, mesh.bulk_nodes[e.j]).dot(e.tangent);
        }
        ops.C_B = edge_convection(n, mesh.bulk_edges, pi, pj);
    }
    {
        Vec pi(mesh.surface_edges.size()), pj(mesh.surface_edges.size());
        for (std::size_t k = 0; k < mesh.surface_edges.size(); ++k) {
            const auto& e = mesh.surface_edges[k];
            pi(k) = coeffs.B_gamma(t, mesh.boundary_nodes[e.i]).dot(e.tangent);
            pj(k) = coeffs.B_gamma(t, mesh.boundary_nodes[e.j]).dot(e.tangent);
        }
        ops.C_BGamma = edge_convection(m, mesh.surface_edges, pi, pj);
    }

    Vec ra(n), na(n), rb(m), nb(m);
    for (int i = 0; i < n; ++i) {
        ra(i) = mesh.bulk_weights(i) * coeffs.a1(t, mesh.bulk_nodes[i]);
        na(i) = mesh.bulk_weights(i) * coeffs.a2(t, mesh.bulk_nodes[i]);
    }
    for (int k = 0; k < m; ++k) {
        rb(k) = mesh.surface_weights(k) * coeffs.b1(t, mesh.boundary_nodes[k]);
        nb(k) = mesh.surface_weights(k) * coeffs.b2(t, mesh.boundary_nodes[k]);
    }
    ops.R_a1 = diagonal(ra);
    ops.N_a2 = diagonal(na);
    ops.R_b1 = diagonal(rb);
    ops.N_b2 = diagonal(nb);

    std::vector<Eigen::Triplet<double>> trip;
    for (int k = 0; k < m; ++k) trip.emplace_back(k, mesh.trace[k], 1.0);
    ops.P.resize(m, n);
    ops.P.setFromTriplets(trip.begin(), trip.end());
    return ops;
}

SpMat unit_stiffness(const Mesh& mesh) {
    return edge_laplacian(mesh.n_bulk(), mesh.bulk_edges, [](const Edge&) { return 1.0; });
}

SpMat unit_surface_stiffness(const Mesh& mesh) {
    return edge_laplacian(mesh.n_surf(), mesh.surface_edges, [](const Edge&) { return 1.0; });
}

double weighted_gradient_energy(const std::vector<Edge>& edges, const Vec& values, const Vec& edge_weights) {
    double acc = 0.0;
    for (std::size_t k = 0; k < edges.size(); ++k) {
        const auto& e = edges[k];
        const double d = values(e.j) - values(e.i);
        const double w = edge_weights.size() ? edge_weights(static_cast<Eigen::Index>(k)) : 1.0;
        acc += e.face / e.length * w * d * d;
    }
    return acc;
}

BulkSurfaceField weak_divergence_load(const std::vector<Point>& F, const std::vector<Point>& F_gamma,
                                      const Mesh& mesh) {
    if (static_cast<int>(F.size()) != mesh.n_bulk() || static_cast<int>(F_gamma.size()) != mesh.n_surf())
        throw std::invalid_argument("weak_divergence_load: shape mismatch");
    for (int k = 0; k < mesh.n_surf(); ++k) {
        if (std::abs(F_gamma[k].dot(mesh.normals[k])) > 1e-12 * (1.0 + F_gamma[k].norm()))
            throw std::invalid_argument("F_gamma is not tangential");
    }
    BulkSurfaceField load = BulkSurfaceField::zeros(mesh);
    for (const auto& e : mesh.bulk_edges) {
        const double flux = e.face * 0.5 * (F[e.i] + F[e.j]).dot(e.tangent);
        load.bulk(e.j) -= flux;
        load.bulk(e.i) += flux;
    }
    for (const auto& e : mesh.surface_edges) {
        const double flux = e.face * 0.5 * (F_gamma[e.i] + F_gamma[e.j]).dot(e.tangent);
        load.surf(e.j) -= flux;
        load.surf(e.i) += flux;
    }
    return load;
}

double load_pairing(const BulkSurfaceField& load, const BulkSurfaceField& eta) {
    return load.bulk.dot(eta.bulk) + load.surf.dot(eta.surf);
}

Vec coupled_load(const Mesh& mesh, const BulkSurfaceField& load) {
    Vec out = load.bulk;
    for (int k = 0; k < mesh.n_surf(); ++k) out(mesh.trace[k]) += load.surf(k);
    return out;
}

void write_mesh_json(const Mesh& mesh, const std::string& path) {
    nlohmann::json j;
    j["geometry"] = mesh.geometry.name();
    j["h"] = mesh.h;
    auto pts = [](const std::vector<Point>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& p : v) a.push_back({p(0), p(1)});
        return a;
    };
    j["bulk_nodes"] = pts(mesh.bulk_nodes);
    j["boundary_nodes"] = pts(mesh.boundary_nodes);
    j["trace"] = mesh.trace;
    j["bulk_weights"] = std::vector<double>(mesh.bulk_weights.data(), mesh.bulk_weights.data() + mesh.bulk_weights.size());
    j["surface_weights"] =
        std::vector<double>(mesh.surface_weights.data(), mesh.surface_weights.data() + mesh.surface_weights.size());
    std::vector<int> mask;
    for (int i = 0; i < mesh.n_bulk(); ++i) mask.push_back(mesh.control_mask(i) != 0.0 ? 1 : 0);
    j["control_mask"] = mask;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << j.dump(2) << '\n';
}

void write_matrix_market(const SpMat& matrix, const std::string& path) {
    if (!Eigen::saveMarket(matrix, path)) throw std::runtime_error("cannot write " + path);
}

}  // namespace sdbc
