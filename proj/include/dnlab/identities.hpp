#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

#include "dnlab/dn_operators.hpp"

namespace dnlab {

struct IdentityReport {
  std::string identity;
  double abs_residual = 0;
  double rel_residual = 0;  // abs / max(scale of both sides, 1e-30)
  int resolution = 0;       // boundary node count of the outer loop
  double tolerance = 0;
  bool pass = false;
  std::vector<double> ladder;  // refinement ladder for stabilization checks
  std::string note;
};

/// Shared operator bundle for the exact-algebra identities on a
/// disk-with-inclusion mesh: full DN maps for g and the composite h, the
/// partial maps across the Sigma_1 interface and their extension solvers.
/// The metrics must agree outside the inclusion.
class IdentityLab {
 public:
  IdentityLab(const TriMesh& mesh, const MetricField& g, const MetricField& h);

  int outer_size() const { return static_cast<int>(outer_nodes_.size()); }
  int sigma_size() const { return static_cast<int>(sigma_nodes_.size()); }
  const BoundaryCalculus& outer_calculus() const { return calc_outer_; }
  const BoundaryCalculus& sigma_calculus() const { return calc_sigma_; }
  const DNOperator& dn_g() const { return dn_g_; }
  const DNOperator& dn_h() const { return dn_h_; }

  /// Difference formula: (Lambda^1 - Lambda^2)(u)(v) against the
  /// mixed-energy split across the Sigma_1 interface.
  IdentityReport difference_formula(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                                    double tol = 1e-9) const;

  /// Transmission identity: (Lambda^{0,1} + Lambda_{Sigma1,g}) u' plus the
  /// conormal of E^{1,0}(u) on the interface vanishes (conormal oriented
  /// outward for M \ Sigma_1, making the inner-normal flip explicit).
  IdentityReport transmission(const Eigen::VectorXd& u, double tol = 1e-9) const;

  /// Comparison map: direct trace of the composite extension against the
  /// operator-composition formula.
  IdentityReport comparison_map(const Eigen::VectorXd& v, double tol = 1e-9) const;

  /// Adjoint formula: restriction adjoint against the conormal formula, as
  /// an L^2 operator-norm residual.  The same inner-normal flip carries the
  /// explicit minus sign.
  IdentityReport adjoint_formula(double tol = 1e-9) const;

  /// <T f, w> on the interface minus <f, T* w> on the outer loop, relative.
  double adjoint_pairing_residual(const Eigen::VectorXd& f, const Eigen::VectorXd& w) const;

  /// Swapping (g,u) <-> (h,v) transposes the difference pairing.
  double difference_swap_residual(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const;

 private:
  TriMesh mesh_;
  MetricField g_, h_;
  std::vector<int> outer_nodes_, sigma_nodes_;
  BoundaryCalculus calc_outer_, calc_sigma_;
  StiffnessSystem sys_g_, sys_h_;
  DNOperator dn_g_, dn_h_;
  Eigen::SparseMatrix<double> K_ext_g_, K_ext_h_, K_sig_g_, K_sig_h_;
  ConstrainedSystem ext_from_sigma_;  // E^{0,1}: data on Sigma_1 interface, zero on dM
  ConstrainedSystem ext_from_outer_;  // E^{1,0}: data on dM, zero on the interface
  ConstrainedSystem sigma_g_, sigma_h_;
  DNOperator dn01_, dn_sigma_g_, dn_sigma_h_;

  Eigen::MatrixXd restriction_;       // T: outer data -> trace on the interface
  Eigen::MatrixXd restriction_adj_;   // T* = M_out^-1 T^T M_sigma
  Eigen::MatrixXd adjoint_formula_op_;

  Eigen::VectorXd sigma_trace(const HarmonicField& field) const;
};

IdentityReport difference_formula_residual(const TriMesh& mesh, const MetricField& g,
                                           const MetricField& h, const Eigen::VectorXd& u,
                                           const Eigen::VectorXd& v, double tol = 1e-9);
IdentityReport transmission_residual(const TriMesh& mesh, const MetricField& g,
                                     const Eigen::VectorXd& u, double tol = 1e-9);
IdentityReport comparison_map_residual(const TriMesh& mesh, const MetricField& g,
                                       const MetricField& h, const Eigen::VectorXd& v,
                                       double tol = 1e-9);
IdentityReport adjoint_formula_residual(const TriMesh& mesh, const MetricField& g,
                                        double tol = 1e-9);

/// One rung of a refinement ladder for the discretization-limited checks.
struct LadderRung {
  TriMesh mesh;
  MetricField metric;
};

/// Principal-symbol remainder: operator norm of R = Lambda - Delta0^(1/2)
/// on H^s, measured on the frequency band resolved by the coarsest rung;
/// verdict "bounded" when successive rungs change by no more than
/// `stabilization_ratio`.
IdentityReport symbol_remainder_check(const std::vector<LadderRung>& ladder, double s,
                                      int band = 0, double stabilization_ratio = 1.2);

struct CommutatorReport {
  IdentityReport scalar;  // [Lambda, eta]: H^s -> H^s
  IdentityReport vector;  // [X, Lambda]: H^s -> H^(s-1)
};

/// Scalar and vector commutator norms over a refinement ladder; eta and
/// the tangential coefficient of X are sampled from angle-dependent
/// profiles.
CommutatorReport commutator_norms(const std::vector<LadderRung>& ladder,
                                  const std::function<double(double)>& eta_of_theta,
                                  const std::function<double(double)>& x_of_theta, double s,
                                  int band = 0, double stabilization_ratio = 1.2);

struct SpectralGapReport {
  IdentityReport report;
  std::vector<double> gaps;      // second-smallest generalized DN eigenvalue per rung
  std::vector<double> fitted_c;  // ||f||_(1/2) <= C (||f||_(-1/2) + ||Lambda f||_(-1/2))
  std::vector<int> kernel_dims;
};

/// DN kernel and gap: kernel = constants, spectral gap, and the fitted
/// inverse bound.
SpectralGapReport spectral_gap_check(const std::vector<LadderRung>& ladder, int band = 0,
                                     double gap_threshold = 0.1, int trials = 64,
                                     unsigned long long seed = 1234);

}  // namespace dnlab
