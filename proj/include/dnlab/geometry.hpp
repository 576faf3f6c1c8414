#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "dnlab/mesh.hpp"

namespace dnlab {

/// Canonical disk mesh: polar rings centered at the inclusion center, graded
/// toward the center, with the inclusion circle and the Sigma_1 circle
/// snapped exactly onto rings so both region boundaries are edge-aligned.
/// `resolution` is the number of boundary segments of the outer loop.
struct DiskSpec {
  double outer_radius = 1.0;
  Eigen::Vector2d inclusion_center = Eigen::Vector2d::Zero();
  double inclusion_radius = 0.0;  // 0 disables the inclusion
  double sigma1_radius = 0.0;     // 0 picks the midpoint between inclusion and boundary
  int resolution = 64;
};

TriMesh build_disk_with_inclusion(const DiskSpec& spec);
TriMesh build_disk_with_inclusion(double outer_radius, const Eigen::Vector2d& inclusion_center,
                                  double inclusion_radius, int resolution);

/// Annulus with uniform angular resolution; loop 0 is the outer circle,
/// loop 1 the inner one.
TriMesh build_annulus(double outer_radius, double inner_radius, int resolution);

struct CylinderExtension {
  TriMesh mesh;
  MetricField metric;
  int outer_loop = 0;  // far end of the strip (replaces the glued loop's tag)
};

/// Glue a product strip of the given length along the outer loop (which must
/// be a mesh circle).  The strip metric is the pullback of dt^2 + ds^2 where
/// t is the distance from the glued circle and s its arclength coordinate,
/// so the extension is isometric to [0, length] x (glued loop).
CylinderExtension attach_cylinder(const TriMesh& mesh, const MetricField& metric, double length,
                                  int layers);

/// Standalone product cylinder [0, length] x S^1_radius; loop 0 is the t=0
/// end, loop 1 the t=length end.
CylinderExtension build_cylinder(double radius, double length, int resolution, int layers);

struct CompositeMetric {
  MetricField field;
  double contrast;  // sup over triangles adjacent to the inclusion interface of max|lambda_i(g^-1 h) - 1|
};

/// g + chi_Sigma (h - g): h on inclusion-tagged triangles, g elsewhere.
CompositeMetric composite_metric(const MetricField& g, const MetricField& h, const TriMesh& mesh);

/// max_i |lambda_i(g^-1 h) - 1| for a single tensor pair.
double metric_deviation(const Eigen::Matrix2d& g, const Eigen::Matrix2d& h);

/// Radial collar profile R(theta, t) acting on the outer boundary of a disk
/// or annulus.  All derivatives are closed-form; eta, X, div X and gamma come
/// from them, never from finite differences.
struct CollarProfile {
  enum class Kind { Identity, RadialShrink, Tentacle };
  Kind kind = Kind::RadialShrink;

  // RadialShrink: R(t) = R0 (1 - rate t - accel t^2)
  double rate = 0.5;
  double accel = 0.0;

  // Tentacle: baseline shrink plus a flat-bottomed dip of angular halfwidth
  // `flat_halfwidth` around `theta0`, tapering over `taper_width`, reaching
  // radius `reach_radius` at t = 1.
  double theta0 = 0.0;
  double reach_radius = 0.4;
  double flat_halfwidth = 0.5;
  double taper_width = 0.6;
  double base_rate = 0.05;

  // Interior node treatment: 0 scales every node radially (exactly
  // self-similar meshes); > 0 keeps nodes inside this radius fixed and
  // rescales the collar linearly.
  double core_radius = 0.0;

  double radius(double theta, double t, double r0) const;
  double d_dt(double theta, double t, double r0) const;
  double d_dtheta(double theta, double t, double r0) const;
  double d2_dtheta2(double theta, double t, double r0) const;
  double d2_dtheta_dt(double theta, double t, double r0) const;

  static CollarProfile identity();
  static CollarProfile radial_shrink(double rate, double accel = 0.0, double core_radius = 0.0);
  static CollarProfile tentacle(double theta0, double reach_radius, double flat_halfwidth,
                                double taper_width, double base_rate, double core_radius);
};

/// Boundary fields of the morph at one time, all on the morphed loop's nodes
/// in cyclic order.
struct CollarFields {
  Eigen::VectorXd eta;      // -g(phi_* d_t, nu), > 0 for shrinking families
  Eigen::VectorXd x_coeff;  // tangential speed (arclength coefficient of X)
  Eigen::VectorXd div_x;
  Eigen::VectorXd gamma;    // d_t log of the boundary volume element
};

/// Nested shrinking family Sigma_t produced by morphing a fixed combinatorial
/// mesh.  Level 0 is the input mesh itself.
struct NestedFamily {
  std::vector<TriMesh> meshes;
  std::vector<double> times;
  std::vector<CollarFields> fields;
  int loop = 0;
  CollarProfile profile;
  double min_eta = 0.0;

  // base-mesh data used to evaluate the morph at arbitrary t
  TriMesh base;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();

  int num_levels() const { return static_cast<int>(meshes.size()); }
  TriMesh mesh_at(double t) const;
  CollarFields fields_at(double t) const;
};

/// Build the family with level times k/levels, k = 0..levels.  Throws
/// TransversalityError when eta dips below min_eta anywhere, GeometryError on
/// self-intersecting morphs.
NestedFamily nested_family(const TriMesh& mesh, int levels, const CollarProfile& profile,
                           double min_eta = 1e-8);

/// sup over a of dist(a, polyline) -- used to check that tentacle families
/// actually reach their target arc.
double directed_hausdorff(const std::vector<Eigen::Vector2d>& points,
                          const std::vector<Eigen::Vector2d>& polyline);

}  // namespace dnlab
