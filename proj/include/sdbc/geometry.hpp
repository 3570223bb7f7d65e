#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <string>
#include <vector>

namespace sdbc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Point = Eigen::Vector2d;

struct CoefficientSet;

enum class GeometryKind { Interval, Disk };

/// Control region G0. For an Interval it is the open sub-interval (lo, hi);
/// for a Disk it is the open annulus lo < |x| < hi (lo = 0 gives a central disk).
struct ControlRegion {
    double lo = 0.0;
    double hi = 0.0;
};

struct Geometry {
    GeometryKind kind = GeometryKind::Interval;
    double a = 0.0;       // Interval left end
    double b = 1.0;       // Interval right end
    double radius = 1.0;  // Disk radius
    ControlRegion control;

    static Geometry interval(double a, double b, ControlRegion g0);
    static Geometry disk(double radius, ControlRegion g0);

    /// Throws std::invalid_argument for zero-measure domains or a G0 that touches Γ.
    void validate() const;

    bool in_region(const ControlRegion& region, const Point& x) const;
    bool in_control(const Point& x) const { return in_region(control, x); }
    double measure() const;
    double boundary_measure() const;
    std::string name() const;
};

/// An edge of the bulk (or surface) graph. `face` is the measure of the dual
/// face crossed by the edge (1 in 1D), `length` the edge length, and `tangent`
/// the unit vector pointing from node i to node j.
struct Edge {
    int i = 0;
    int j = 0;
    double face = 0.0;
    double length = 0.0;
    Point mid = Point::Zero();
    Point tangent = Point::Zero();
};

struct Mesh {
    Geometry geometry;
    std::vector<Point> bulk_nodes;
    std::vector<Point> boundary_nodes;
    std::vector<int> trace;        // boundary node k is bulk node trace[k]
    std::vector<Point> normals;    // outward unit normal at boundary nodes
    std::vector<Point> tangents;   // unit tangent at boundary nodes (zero on an Interval)
    Vec bulk_weights;              // dx quadrature, sums to |G|
    Vec surface_weights;           // dσ quadrature, sums to |Γ|
    Vec control_mask;              // 1 on bulk nodes inside G0, else 0
    std::vector<Edge> bulk_edges;
    std::vector<Edge> surface_edges;
    double h = 0.0;
    int n_r = 0;
    int n_theta = 0;

    int n_bulk() const { return static_cast<int>(bulk_nodes.size()); }
    int n_surf() const { return static_cast<int>(boundary_nodes.size()); }
};

/// n_x is the node count for an Interval and the number of radial intervals
/// n_r for a Disk; n_theta defaults to 2 n_r.
Mesh build_mesh(const Geometry& geometry, int n_x, int n_theta = 0);

struct TimeGrid {
    double T = 1.0;
    int n_t = 2;

    TimeGrid() = default;
    TimeGrid(double horizon, int steps);
    double dt() const { return T / n_t; }
    double t(int n) const { return T * n / n_t; }
};

/// A pair (z, z_Γ) of bulk and surface nodal values.
struct BulkSurfaceField {
    Vec bulk;
    Vec surf;

    static BulkSurfaceField zeros(const Mesh& mesh);
    static BulkSurfaceField constant(const Mesh& mesh, double bulk_value, double surf_value);
    /// ℍ¹-conforming field: surf is the trace of bulk.
    static BulkSurfaceField from_bulk(const Mesh& mesh, const Vec& bulk);

    bool conforms(const Mesh& mesh) const;
    bool is_trace_compatible(const Mesh& mesh, double tol = 1e-12) const;
};

Vec trace_of(const Mesh& mesh, const Vec& bulk);

double inner_L2(const BulkSurfaceField& u, const BulkSurfaceField& v, const Mesh& mesh);

/// Discrete forms of the coupled weak formulation. Bulk matrices act on bulk
/// nodal values, surface matrices on boundary values; `P` is the trace map.
/// The coupled operators live on the shared bulk unknowns with the surface
/// contribution pulled back through P (z_Γ = P z).
struct DiscreteOperators {
    SpMat M_G, M_Gamma;
    SpMat K_A, K_AGamma;
    SpMat C_B, C_BGamma;
    SpMat R_a1, R_b1;
    SpMat N_a2, N_b2;
    SpMat P;

    Vec coupled_mass() const;
    SpMat coupled_stiffness() const;
    SpMat coupled_convection() const;
    SpMat coupled_reaction() const;
    SpMat coupled_noise() const;
};

/// Throws std::invalid_argument when the smallest eigenvalue of A (or the
/// tangential part of A_Γ) at a node falls below coeffs.beta.
DiscreteOperators assemble_operators(const Mesh& mesh, const CoefficientSet& coeffs, double t);

/// Unit-coefficient Dirichlet forms: bulk (n_bulk x n_bulk) and surface (n_surf x n_surf).
SpMat unit_stiffness(const Mesh& mesh);
SpMat unit_surface_stiffness(const Mesh& mesh);

/// Sum over edges of face/length * weight(edge) * (v_j - v_i)^2, the discrete
/// ∫ weight |∇v|². An empty weight vector means weight 1.
double weighted_gradient_energy(const std::vector<Edge>& edges, const Vec& values, const Vec& edge_weights = Vec());

/// Coupled load of div(F) in the bulk and -F·ν + div_Γ(F_Γ) on Γ:
/// η ↦ -∫_G F·∇η dx - ∫_Γ F_Γ·∇_Γ η_Γ dσ. The F·ν pairing is never
/// assembled. Throws if F_Γ has a normal component.
BulkSurfaceField weak_divergence_load(const std::vector<Point>& F, const std::vector<Point>& F_gamma,
                                      const Mesh& mesh);

/// Pairing of a load with a test field: bulk·η + surf·η_Γ.
double load_pairing(const BulkSurfaceField& load, const BulkSurfaceField& eta);

/// Coupled load vector on the shared unknowns: bulk + Pᵀ surf.
Vec coupled_load(const Mesh& mesh, const BulkSurfaceField& load);

void write_mesh_json(const Mesh& mesh, const std::string& path);
void write_matrix_market(const SpMat& matrix, const std::string& path);

}  // namespace sdbc
