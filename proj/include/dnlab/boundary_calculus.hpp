#pragma once

#include <Eigen/Core>
#include <vector>

#include "dnlab/mesh.hpp"

namespace dnlab {

/// Spectral calculus of one boundary loop: lumped mass, 1D Laplace-Beltrami
/// stiffness of the induced metric, and its full mass-orthonormal
/// eigendecomposition.  H^s norms, fractional powers and operator norms
/// between Sobolev scales all come from this decomposition.
struct BoundaryCalculus {
  std::vector<int> nodes;        // loop nodes in cyclic order
  Eigen::VectorXd edge_length;   // edge i joins node i and i+1 (metric length)
  Eigen::VectorXd mass;          // lumped boundary mass per node
  Eigen::MatrixXd stiffness;     // 1D P1 stiffness of the loop
  Eigen::VectorXd eigenvalues;   // ascending, lambda_0 = 0
  Eigen::MatrixXd eigenvectors;  // columns, mass-orthonormal

  int size() const { return static_cast<int>(nodes.size()); }
  double volume() const { return mass.sum(); }

  /// Mass-inner-product coefficients of a nodal function.
  Eigen::VectorXd coefficients(const Eigen::VectorXd& f) const;
  Eigen::VectorXd synthesize(const Eigen::VectorXd& a) const;
};

BoundaryCalculus boundary_calculus(const TriMesh& mesh, const MetricField& metric, int loop);

/// Calculus of an arbitrary closed node cycle (boundary loop or region
/// interface); `nodes` in cyclic order, `edge_metric_tri` gives the triangle
/// whose tensor measures edge i.
BoundaryCalculus cycle_calculus(const TriMesh& mesh, const MetricField& metric,
                                const std::vector<int>& nodes,
                                const std::vector<int>& edge_metric_tri);

/// 1D P1 stiffness of -d/ds (w d/ds .) on the loop, edge weights averaged
/// from the nodal field.
Eigen::MatrixXd weighted_loop_stiffness(const BoundaryCalculus& bc, const Eigen::VectorXd& w);

enum class DerivationScheme { Upwind, Centered };

/// First-order derivation along the loop: (X u)_i = c_i du/ds at node i.
Eigen::MatrixXd loop_derivation_matrix(const BoundaryCalculus& bc, const Eigen::VectorXd& coeff,
                                       DerivationScheme scheme = DerivationScheme::Upwind);

/// || f ||_s = (sum (1 + lambda_i)^s a_i^2)^(1/2), s in [-2, 2].
double hs_norm(const BoundaryCalculus& bc, const Eigen::VectorXd& f, double s);

/// L^2(mass) inner product.
double l2_inner(const BoundaryCalculus& bc, const Eigen::VectorXd& f, const Eigen::VectorXd& g);

enum class SpectralShift {
  OnePlusLaplacian,        // (1 + lambda)^s
  LaplacianZeroAnnihilated  // lambda^s with the zero mode sent to zero
};

Eigen::VectorXd frac_power_apply(const BoundaryCalculus& bc, const Eigen::VectorXd& f, double s,
                                 SpectralShift shift = SpectralShift::OnePlusLaplacian);

/// Nodal matrix of the fractional power (function -> function).
Eigen::MatrixXd frac_power_matrix(const BoundaryCalculus& bc, double s,
                                  SpectralShift shift = SpectralShift::OnePlusLaplacian);

/// Largest singular value of (I+Delta)^(s_to/2) op (I+Delta)^(-s_from/2) in
/// the mass inner product; `op` maps nodal functions to nodal functions.
double operator_norm(const BoundaryCalculus& bc, const Eigen::MatrixXd& op, double s_from,
                     double s_to);

/// Same norm restricted to the span of the lowest `band` eigenvectors
/// (both sides); the discretization-limited checks use a fixed band below
/// the mesh frequency.
double operator_norm_banded(const BoundaryCalculus& bc, const Eigen::MatrixXd& op, double s_from,
                            double s_to, int band);

/// Remove the mass-mean: f - <f,1>/<1,1>.
Eigen::VectorXd project_out_constants(const BoundaryCalculus& bc, const Eigen::VectorXd& f);
Eigen::MatrixXd constant_complement_projector(const BoundaryCalculus& bc);

/// Discrete W^(1,inf) norm: max(|f|_inf, max_e |df|/len(e)).
double w1inf_norm(const BoundaryCalculus& bc, const Eigen::VectorXd& f);

struct LipschitzApproximation {
  Eigen::VectorXd f;  // spectral truncation of the input
  int cutoff = 0;     // number of retained modes
  double w1inf = 0;   // reported W^(1,inf) norm of the result
};

/// Smallest spectral cutoff with ||f - f_eps||_(1/2) <= eps.
LipschitzApproximation lipschitz_approximation(const BoundaryCalculus& bc, const Eigen::VectorXd& f,
                                               double eps);

}  // namespace dnlab
