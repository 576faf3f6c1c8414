#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dnlab/boundary_calculus.hpp"
#include "dnlab/mesh.hpp"

namespace dnlab {

/// Curves a DN operator can live on: real boundary loops or the edge-aligned
/// region interfaces.
enum class Curve {
  OuterBoundary,    // boundary loop 0
  InnerBoundary,    // boundary loop 1 (annulus / cylinder far end)
  Sigma1Interface,  // between exterior and annulus+inclusion
  SigmaInterface    // between inclusion and the rest
};

/// Triangle subsets the partial operators are assembled over.
enum class Subdomain {
  Whole,
  Exterior,  // M minus Sigma_1
  Sigma1,    // annulus + inclusion
  Inclusion
};

/// Cyclic node order of a curve (CCW around the enclosed subdomain).
std::vector<int> curve_nodes(const TriMesh& mesh, Curve curve);

/// Lumped mass of a curve under the metric (edge lengths from the adjacent
/// triangle on the enclosed side).
Eigen::VectorXd curve_mass(const TriMesh& mesh, const MetricField& metric, Curve curve);

/// Boundary calculus of a curve (loop or region interface).
BoundaryCalculus curve_calculus(const TriMesh& mesh, const MetricField& metric, Curve curve);

/// P1 stiffness of the metric Laplace-Beltrami operator over the subdomain's
/// triangles: per triangle, coordinate area times grad^T (sqrt(det g) g^-1) grad.
Eigen::SparseMatrix<double> assemble_stiffness(const TriMesh& mesh, const MetricField& metric,
                                               Subdomain domain = Subdomain::Whole);

/// Dense boundary operator as a quadratic form: u^T form v is the Dirichlet
/// energy pairing.  as_operator() is the function-valued version M^-1 form.
struct DNOperator {
  Eigen::MatrixXd form;
  Eigen::VectorXd mass;
  std::vector<int> nodes;
  std::string tag;

  int size() const { return static_cast<int>(nodes.size()); }
  Eigen::MatrixXd as_operator() const { return mass.cwiseInverse().asDiagonal() * form; }
  double pairing(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const { return u.dot(form * v); }
};

struct HarmonicField {
  Eigen::VectorXd values;  // over all mesh nodes; zero outside the subdomain solved on
};

/// Whole-mesh stiffness with the interior factorization cached; reused by
/// every extension and full DN map on the same (mesh, metric).
class StiffnessSystem {
 public:
  StiffnessSystem(const TriMesh& mesh, const MetricField& metric);

  const Eigen::SparseMatrix<double>& matrix() const { return K_; }
  int num_nodes() const { return static_cast<int>(K_.rows()); }
  int num_loops() const { return static_cast<int>(loop_nodes_.size()); }
  const std::vector<int>& loop(int i) const { return loop_nodes_[static_cast<size_t>(i)]; }
  const Eigen::VectorXd& loop_mass(int i) const { return loop_mass_[static_cast<size_t>(i)]; }

  /// Dirichlet data on the listed loops (zero data on the others).
  HarmonicField harmonic_extension(const std::vector<Eigen::VectorXd>& data,
                                   const std::set<int>& dirichlet_loops) const;
  HarmonicField harmonic_extension(const Eigen::VectorXd& loop0_data) const;

  /// Boundary Schur complement onto the given loops; loops outside the set
  /// are eliminated together with the interior (natural condition).
  DNOperator dn_map(const std::set<int>& boundary_set) const;
  DNOperator dn_map() const;  // all loops

  /// Residual rows of K on a loop: the outward conormal functional of the
  /// whole mesh.
  Eigen::VectorXd conormal_trace(const HarmonicField& field, int loop) const;

 private:
  Eigen::SparseMatrix<double> K_;
  std::vector<int> node_loop_;  // -1 interior
  std::vector<int> interior_;
  std::vector<std::vector<int>> loop_nodes_;
  std::vector<Eigen::VectorXd> loop_mass_;
  std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> interior_factor_;

  DNOperator schur_onto(const std::vector<int>& keep, const Eigen::VectorXd& mass,
                        const std::string& tag) const;
};

/// Subdomain system with Dirichlet data on one curve, optional homogeneous
/// Dirichlet on another, natural conditions elsewhere.  Produces the partial
/// DN maps and the subdomain extensions of the transmission identities.
class ConstrainedSystem {
 public:
  ConstrainedSystem(const TriMesh& mesh, const MetricField& metric, Subdomain domain,
                    Curve data_curve, std::optional<Curve> zero_curve);

  const std::vector<int>& data_nodes() const { return data_nodes_; }
  const Eigen::VectorXd& data_mass() const { return data_mass_; }
  const Eigen::SparseMatrix<double>& matrix() const { return K_; }

  /// Harmonic in the subdomain, equal to `data` on the data curve and zero on
  /// the zero curve; zero outside the subdomain.
  HarmonicField extend(const Eigen::VectorXd& data) const;

  /// Schur complement onto the data curve.
  DNOperator dn(const std::string& tag) const;

  /// Residual rows of the subdomain stiffness on an arbitrary curve: the
  /// conormal functional, outward for this subdomain.
  Eigen::VectorXd conormal_trace(const HarmonicField& field, Curve curve) const;

 private:
  const TriMesh& mesh_;
  Eigen::SparseMatrix<double> K_;
  std::vector<int> data_nodes_;
  std::vector<int> free_nodes_;
  std::vector<char> in_subdomain_;
  Eigen::VectorXd data_mass_;
  std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> factor_;
};

/// Partial DN map in one call.
DNOperator partial_dn(const TriMesh& mesh, const MetricField& metric, Subdomain domain,
                      Curve data_curve, std::optional<Curve> zero_curve, const std::string& tag);

}  // namespace dnlab
