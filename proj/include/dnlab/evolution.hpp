#pragma once

#include <Eigen/Core>
#include <vector>

#include "dnlab/boundary_calculus.hpp"
#include "dnlab/dn_operators.hpp"
#include "dnlab/geometry.hpp"

namespace dnlab {

/// Level operators of the layer-stripping evolution, all acting on nodal
/// functions of the fixed dM index set.  S is pinned by exactness of the
/// splitting: -B + S + X = -eta A + X, i.e. S = B - eta A (the commutator
/// correction eta^(1/2)[A, eta^(1/2)]).
struct EvolutionOperators {
  double time = 0;
  Eigen::MatrixXd A;  // pulled-back DN map, M_t^-1 Lambda_t
  Eigen::MatrixXd B;  // eta^(1/2) A eta^(1/2)
  Eigen::MatrixXd S;  // B - eta A
  Eigen::MatrixXd X;  // upwinded derivation with the profile's tangential speed
  Eigen::VectorXd eta, x_coeff, div_x, gamma;
  BoundaryCalculus calc;  // level boundary calculus (pulled-back inner product)
};

EvolutionOperators pullback_dn(const NestedFamily& family, int level, const MetricField& metric);
EvolutionOperators pullback_dn_at(const NestedFamily& family, double t, const MetricField& metric);

enum class TimeScheme { Forward, Central };

struct TautologicalResidual {
  std::vector<double> times;
  std::vector<double> residual;  // L^2(mass_t) norm per evaluated level
  double max_residual = 0;
};

struct RayleighTrace {
  std::vector<double> times;
  std::vector<double> lambda;     // <B f, B f>_t / <f, f>_t
  std::vector<double> f_norm2;    // <f, f>_t
  std::vector<double> bf_norm2;   // <B f, B f>_t
  std::vector<double> norm_half;  // ||f_t||_(1/2)
  std::vector<double> norm_one;   // ||f_t||_1
  std::vector<double> bound;      // fitted Gronwall bound values
  double c1 = 0, c2 = 0;          // smallest constants with the bound valid
  bool bound_holds = false;
};

struct LowerBoundFit {
  // ||f_t||^2_(1/2) >= exp(-(C2 lambda + C3) t) * anchor, fitted over the
  // set for both anchor readings (unsquared ||f_0||_1 and its square).
  double c2_literal = 0, c3_literal = 0;
  double c2_squared = 0, c3_squared = 0;
  std::vector<double> lambdas;        // per input function
  std::vector<double> rates_literal;  // required decay rate per function
  std::vector<double> rates_squared;
  bool holds_literal = false, holds_squared = false;
};

struct DnDerivativeReport {
  double delta = 0;
  double op_residual = 0;  // banded H^1 -> H^0 norm of the defect
  double op_scale = 0;     // same norm of the finite difference itself
  double rel = 0;
  std::vector<double> mode_lhs;  // Rayleigh value of (A(t+d)-A(t-d))/2d on cos(k theta)
  std::vector<double> mode_rhs;  // same for the assembled right side
};

struct SpdRayleighResult {
  int trials = 0;
  int violations = 0;
  double worst_margin = 0;  // most negative normalized slack seen
};

/// Caches the per-level operators of a family; the traces and fits reuse
/// them across many initial data.
class EvolutionLab {
 public:
  EvolutionLab(const NestedFamily& family, const MetricField& metric);

  int num_levels() const { return static_cast<int>(ops_.size()); }
  const EvolutionOperators& level(int k) const { return ops_[static_cast<size_t>(k)]; }
  double level_spacing() const { return dt_; }

  /// Implicit update (I + dt B) f_(k+1) = f_k + dt (X + S) f_k by default;
  /// the explicit variant is diagnostic only and throws StepSizeError on
  /// blow-up.
  std::vector<Eigen::VectorXd> evolve(const Eigen::VectorXd& f0, bool implicit = true) const;

  /// Finite difference of the interpolated global extension against
  /// -eta A u + X u, per level.
  TautologicalResidual tautological_residual(const Eigen::VectorXd& f,
                                             TimeScheme scheme = TimeScheme::Forward) const;

  RayleighTrace rayleigh_trace(const Eigen::VectorXd& f0) const;

  LowerBoundFit lower_bound_fit(const std::vector<Eigen::VectorXd>& f_set) const;

 private:
  NestedFamily family_;
  MetricField metric_;
  std::vector<EvolutionOperators> ops_;
  double dt_ = 0;
};

/// Time-derivative identity of the pulled-back DN map at time t, central
/// difference of half-width delta against the assembled right side
/// A eta A - eta-weighted Delta + [X, A] + div X A - gamma A.
DnDerivativeReport dn_time_derivative_residual(const NestedFamily& family, double t,
                                               const MetricField& metric, double delta,
                                               int modes = 8, int band = 0);

/// Chebyshev-sum inequality for PSD matrices:
/// <B^2 f, B f><f, f> >= <B f, B f><B f, f>.
SpdRayleighResult spd_rayleigh_inequality(int max_dim, int trials, unsigned long long seed,
                                          double slack = 1e-12);

}  // namespace dnlab
