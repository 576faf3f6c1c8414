#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dnlab/boundary_calculus.hpp"
#include "dnlab/dn_operators.hpp"
#include "dnlab/geometry.hpp"

namespace dnlab {

/// li(t) = int_2^t dtau / log(tau) by adaptive quadrature, with a bracketed
/// Newton inverse driven by (li^-1)'(y) = log(li^-1(y)).  Large arguments
/// switch to the asymptotic series.
class LiEvaluator {
 public:
  explicit LiEvaluator(double rel_tol = 1e-10);

  double li(double t) const;
  double li_inv(double y) const;

  /// Incremental walker for long recurrences: advances the cached point
  /// (t, li(t)) to li = y and returns t.
  double li_inv_step(double y) const;
  void reset_walker() const;

 private:
  double rel_tol_;
  mutable double walker_t_ = -1, walker_li_ = -1;
  mutable long walker_steps_ = 0;
};

struct RecurrenceResult {
  std::vector<double> sigma;
  bool truncated = false;  // hit a non-finite value before completing
};

/// sigma_(k+1) = sigma_k (1 + C e^(-sigma_k)), in extended precision.
RecurrenceResult recurrence_simulate(double sigma0, double c, long steps);

struct SandwichReport {
  bool ok = false;
  long first_violation = -1;  // index of the first failing k, -1 when clean
  long steps = 0;
  double min_lower_margin = 0;  // min over k of sigma_k - lower bound
  double min_upper_margin = 0;  // min over k of upper bound - sigma_k
};

/// Checks log(li^-1(C k + li(e^sigma0))) <= sigma_k <= same + 1 for all
/// k <= steps.  Requires the proof's smallness condition
/// sigma0 e^(-sigma0) <= 1/(12 C) with sigma0 > 1, else ConfigError.
SandwichReport recurrence_sandwich_check(double sigma0, double c, long steps,
                                         const LiEvaluator& li);

/// Named constants with fit provenance.
struct FitConstants {
  double K = 0, C = 0, C1 = 0, C2 = 0, C3 = 0, alpha = 0, sigma0 = 0;
  std::string provenance;
};

/// Restriction / extension operator bundle on a disk-with-inclusion mesh:
/// everything runge_step needs, in the norm induced by A = I + Lambda_Sigma1
/// (an equivalent H^(1/2) inner product on the interface).
class RungeOperators {
 public:
  RungeOperators(const TriMesh& mesh, const MetricField& metric);

  int outer_size() const { return static_cast<int>(restriction_.cols()); }
  int inner_size() const { return static_cast<int>(restriction_.rows()); }
  const Eigen::MatrixXd& restriction() const { return restriction_; }
  const Eigen::MatrixXd& restriction_adjoint() const { return restriction_adj_; }
  const BoundaryCalculus& outer_calculus() const { return calc_outer_; }
  const BoundaryCalculus& inner_calculus() const { return calc_inner_; }

  /// <A w1, w2> with A = I + Lambda_Sigma1; the working H^(1/2) product.
  double a_inner(const Eigen::VectorXd& w1, const Eigen::VectorXd& w2) const;
  double norm_half(const Eigen::VectorXd& w) const;
  /// ||A w||_(L2 mass): the working H^1 norm.
  double norm_one(const Eigen::VectorXd& w) const;
  Eigen::VectorXd apply_a(const Eigen::VectorXd& w) const;

  /// (I + Lambda_0)^-1 T* (A v): the adjoint step direction.
  Eigen::VectorXd step_direction(const Eigen::VectorXd& v) const;

  /// A-orthogonal least squares: argmin_u || v - T u ||_A.
  Eigen::VectorXd exact_solve(const Eigen::VectorXd& v) const;

 private:
  BoundaryCalculus calc_outer_, calc_inner_;
  Eigen::MatrixXd restriction_, restriction_adj_;
  Eigen::MatrixXd a_form_;  // M_inner + Lambda_Sigma1 form
  Eigen::LLT<Eigen::MatrixXd> outer_solver_;  // M_outer + Lambda_0 form
  Eigen::LLT<Eigen::MatrixXd> a_chol_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> lsq_;
};

struct AdjointLowerBoundFit {
  FitConstants constants;  // K fitted so that ratio >= e^(-K lambda) over the set
  std::vector<double> lambdas;  // ||f||_0^2 / ||f||_(-1/2)^2 per input
  std::vector<double> ratios;   // ||T* f||^2_(-1/2) / ||f||^2_(-1/2)
  int violations = 0;           // envelope violations with the fitted K
};

/// Restriction-adjoint lower-bound experiment on a cylinder-attached mesh;
/// the f-set defaults to the interface eigenmodes when empty.
AdjointLowerBoundFit adjoint_lower_bound_experiment(const TriMesh& mesh, const MetricField& metric,
                                                    const std::vector<Eigen::VectorXd>& f_set = {});

struct RungeStepConfig {
  double smoothness_c = 1.0;   // C in the growth cap lambda (1 + C e^(-K lambda))
  int sigma_grid = 24;         // line-search points between e^(-K lambda) and 1
  bool fixed_sigma_only = false;  // skip the line search, use sigma = e^(-K lambda)
  bool exact_solve = false;
};

struct RungeStep {
  Eigen::VectorXd u;       // boundary datum emitted this step
  Eigen::VectorXd v_next;  // renormalized residual direction
  double mu = 0;           // achieved residual drop
  double sigma = 0;
  double lambda_next = 0;  // smoothness quotient of the residual
  bool smoothness_ok = true;
};

RungeStep runge_step(const Eigen::VectorXd& v, double k_const, double lambda,
                     const RungeOperators& ops, const RungeStepConfig& cfg = {});

struct RungeTrace {
  std::vector<double> lambda;        // measured smoothness quotient per step
  std::vector<double> lambda_rec;    // the recurrence lambda_(i+1) = lambda_i (1 + C e^(-K lambda_i))
  std::vector<double> mu;
  std::vector<double> residual;      // direct A-norm residual ||f - T u_tilde||
  std::vector<double> residual_prod; // sqrt of prod (1 - mu_k)
  std::vector<double> cost;          // cumulative ||u_tilde||_(1/2) on the outer loop
  Eigen::VectorXd u_tilde;           // accumulated boundary datum (original scale)
  bool converged = false;
  bool monotone = true;              // direct residual never increased
  double renorm_error = 0;           // max |residual - residual_prod|
  double envelope_sigma0 = 0;        // fitted on the first half of the trace
  bool envelope_holds = false;       // prod residual^2 below the li-envelope everywhere
  FitConstants constants;
};

struct RungeConfig {
  double eps = 0.1;
  long max_iterations = 2000;
  RungeStepConfig step;
  double envelope_c = 0.5;  // C in the li-envelope comparison
};

RungeTrace runge_iterate(const Eigen::VectorXd& f, const FitConstants& constants,
                         const RungeOperators& ops, const RungeConfig& cfg, const LiEvaluator& li);

}  // namespace dnlab
