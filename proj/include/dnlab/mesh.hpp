#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <string>
#include <vector>

#include "dnlab/errors.hpp"

namespace dnlab {

/// Region tag of a triangle.  The nesting is exterior ⊃ annulus ⊃ inclusion:
/// "annulus" together with "inclusion" forms the inner subdomain used by the
/// partial DN maps, "inclusion" alone is where a second metric may live.
enum class Region : int { Exterior = 0, Annulus = 1, Inclusion = 2 };

/// Triangulated 2-manifold with boundary.  Triangles are positively oriented,
/// boundary edges carry a loop tag and each loop is stored once more as a
/// closed cyclic node sequence.
struct TriMesh {
  Eigen::MatrixX2d nodes;                 // nv x 2 coordinates
  Eigen::MatrixX3i triangles;             // nt x 3 node indices, CCW
  std::vector<Region> region;             // nt region tags
  Eigen::MatrixX2i boundary_edges;        // nb x 2 node indices
  std::vector<int> edge_loop;             // nb loop tag per boundary edge
  std::vector<std::vector<int>> loops;    // cyclic node order per loop

  int num_nodes() const { return static_cast<int>(nodes.rows()); }
  int num_triangles() const { return static_cast<int>(triangles.rows()); }
  int num_boundary_edges() const { return static_cast<int>(boundary_edges.rows()); }
  int num_loops() const { return static_cast<int>(loops.size()); }

  double signed_area(int t) const;
  double total_area() const;
  double max_edge_length() const;

  /// V - E + F
  int euler_characteristic() const;

  /// Nodes lying on the given boundary loop, in cyclic order.
  const std::vector<int>& loop_nodes(int loop) const;
};

/// Rebuild loops from boundary_edges/edge_loop (closed traversal per tag).
void rebuild_loops(TriMesh& mesh);

/// Check all TriMesh invariants; throws StructuralError / GeometryError.
void validate(const TriMesh& mesh);

/// Uniform 1->4 subdivision.  Exactly halves every edge; region tags, loop
/// tags and orientation are inherited.
TriMesh refine(const TriMesh& mesh);

/// Per-triangle symmetric positive definite 2x2 tensor, stored row-wise as
/// (a11, a12, a22).
struct MetricField {
  Eigen::MatrixX3d coeffs;  // nt x 3

  int size() const { return static_cast<int>(coeffs.rows()); }
  Eigen::Matrix2d tensor(int t) const {
    Eigen::Matrix2d m;
    m << coeffs(t, 0), coeffs(t, 1), coeffs(t, 1), coeffs(t, 2);
    return m;
  }
  void set_tensor(int t, const Eigen::Matrix2d& m) {
    coeffs(t, 0) = m(0, 0);
    coeffs(t, 1) = 0.5 * (m(0, 1) + m(1, 0));
    coeffs(t, 2) = m(1, 1);
  }

  static MetricField euclidean(int nt);
  static MetricField constant(int nt, const Eigen::Matrix2d& m);
};

/// Throws MetricError unless every tensor is SPD with eigenvalues in
/// [1/bound, bound].
void validate_spd(const MetricField& metric, double bound = 1e8);

/// Plain-text mesh format:
///   tmesh 1
///   nv nt nb
///   nv lines "x y", nt lines "i j k region", nb lines "i j loop"
void write_mesh(std::ostream& os, const TriMesh& mesh);
TriMesh read_mesh(std::istream& is);
void write_mesh_file(const std::string& path, const TriMesh& mesh);
TriMesh read_mesh_file(const std::string& path);

/// Metric format: "metric 1" then nt lines "a11 a12 a22".
void write_metric(std::ostream& os, const MetricField& metric);
MetricField read_metric(std::istream& is);
void write_metric_file(const std::string& path, const MetricField& metric);
MetricField read_metric_file(const std::string& path);

}  // namespace dnlab
