#include "dnlab/runge.hpp"

#include <algorithm>
#include <cmath>

namespace dnlab {

namespace {

double integrand(double t) { return 1.0 / std::log(t); }

// 7-point Gauss-Legendre panel on [a, b]
double gauss7(double a, double b) {
  static const double xs[7] = {-0.9491079123427585, -0.7415311855993945, -0.4058451513773972,
                               0.0,                 0.4058451513773972,  0.7415311855993945,
                               0.9491079123427585};
  static const double ws[7] = {0.1294849661688697, 0.2797053914892766, 0.3818300505051189,
                               0.4179591836734694, 0.3818300505051189, 0.2797053914892766,
                               0.1294849661688697};
  double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double sum = 0;
  for (int i = 0; i < 7; ++i) sum += ws[i] * integrand(mid + half * xs[i]);
  return half * sum;
}

double adaptive_simpson(double a, double b, double fa, double fm, double fb, double whole,
                        double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = integrand(lm), frm = integrand(rm);
  double left = (m - a) / 6 * (fa + 4 * flm + fm);
  double right = (b - m) / 6 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15 * tol)
    return left + right + (left + right - whole) / 15;
  return adaptive_simpson(a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         adaptive_simpson(m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

double integrate(double a, double b, double rel_tol) {
  if (b == a) return 0;
  double fa = integrand(a), fb = integrand(b), fm = integrand(0.5 * (a + b));
  double whole = (b - a) / 6 * (fa + 4 * fm + fb);
  double tol = std::max(std::abs(whole), 1.0) * rel_tol;
  return adaptive_simpson(a, b, fa, fm, fb, whole, tol, 48);
}

constexpr double kAsymptoticSwitch = 1e8;

// truncated asymptotic series x / ln x * sum k! / ln^k x (as far as it shrinks)
double li_asymptotic(double x) {
  double lx = std::log(x);
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 60; ++k) {
    double next = term * k / lx;
    if (next >= term) break;
    sum += next;
    term = next;
  }
  return x / lx * sum;
}

}  // namespace

LiEvaluator::LiEvaluator(double rel_tol) : rel_tol_(rel_tol) {}

double LiEvaluator::li(double t) const {
  if (!(t >= 2.0)) throw DomainError("li is defined for t >= 2");
  if (t == 2.0) return 0.0;
  if (t <= kAsymptoticSwitch) return integrate(2.0, t, rel_tol_);
  static const double base = integrate(2.0, kAsymptoticSwitch, 1e-12);
  return base + li_asymptotic(t) - li_asymptotic(kAsymptoticSwitch);
}

double LiEvaluator::li_inv(double y) const {
  if (!(y >= 0.0)) throw DomainError("li_inv is defined for y >= 0");
  if (y == 0.0) return 2.0;
  double hi = 4.0;
  while (li(hi) < y) hi *= 2;
  double lo = 2.0;
  double t = std::max(0.5 * hi, 2.5);
  for (int it = 0; it < 200; ++it) {
    double val = li(t);
    if (val < y)
      lo = t;
    else
      hi = t;
    double step = (y - val) * std::log(t);
    double next = t + step;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= 1e-14 * t) return next;
    t = next;
    if (std::abs(val - y) <= 1e-13 * std::max(1.0, y) && it > 3) return t;
  }
  return t;
}

void LiEvaluator::reset_walker() const {
  walker_t_ = -1;
  walker_li_ = -1;
  walker_steps_ = 0;
}

double LiEvaluator::li_inv_step(double y) const {
  if (!(y >= 0.0)) throw DomainError("li_inv is defined for y >= 0");
  if (walker_t_ < 0 || ++walker_steps_ % 20000 == 0) {
    walker_t_ = li_inv(y);
    walker_li_ = y;
    return walker_t_;
  }
  for (int it = 0; it < 8; ++it) {
    double step = (y - walker_li_) * std::log(walker_t_);
    if (std::abs(step) <= 1e-14 * walker_t_) break;
    double next = std::max(2.0, walker_t_ + step);
    walker_li_ += gauss7(walker_t_, next);
    walker_t_ = next;
  }
  return walker_t_;
}

RecurrenceResult recurrence_simulate(double sigma0, double c, long steps) {
  if (!(sigma0 > 0) || c < 0) throw DomainError("sigma0 must be positive and C nonnegative");
  RecurrenceResult out;
  out.sigma.reserve(static_cast<size_t>(steps + 1));
  long double s = sigma0;
  for (long k = 0; k <= steps; ++k) {
    if (!std::isfinite(static_cast<double>(s))) {
      out.truncated = true;
      break;
    }
    out.sigma.push_back(static_cast<double>(s));
    s = s * (1.0L + static_cast<long double>(c) * std::exp(-s));
  }
  return out;
}

SandwichReport recurrence_sandwich_check(double sigma0, double c, long steps,
                                         const LiEvaluator& li) {
  if (!(sigma0 > 0) || c < 0) throw ConfigError("sigma0 must be positive and C nonnegative");
  if (sigma0 > 700) throw ConfigError("sigma0 too large: exp(sigma0) is not representable");
  if (c > 0) {
    if (!(sigma0 > 1))
      throw ConfigError("precondition failed: sigma0 must exceed 1 for the smallness condition");
    if (sigma0 * std::exp(-sigma0) > 1.0 / (12 * c))
      throw ConfigError("precondition failed: sigma0 e^(-sigma0) <= 1/(12 C) does not hold");
  }

  const double d0 = li.li(std::exp(sigma0));
  li.reset_walker();
  SandwichReport rep;
  rep.steps = steps;
  rep.min_lower_margin = 1e300;
  rep.min_upper_margin = 1e300;
  long double s = sigma0;
  for (long k = 0; k <= steps; ++k) {
    double bound = std::log(li.li_inv_step(c * static_cast<double>(k) + d0));
    double sk = static_cast<double>(s);
    rep.min_lower_margin = std::min(rep.min_lower_margin, sk - bound);
    rep.min_upper_margin = std::min(rep.min_upper_margin, bound + 1.0 - sk);
    // slack at the li round-trip accuracy; k = 0 is equality by construction
    if (sk < bound - 1e-8 || sk > bound + 1.0 + 1e-8) {
      rep.ok = false;
      rep.first_violation = k;
      return rep;
    }
    s = s * (1.0L + static_cast<long double>(c) * std::exp(-s));
  }
  rep.ok = true;
  return rep;
}

RungeOperators::RungeOperators(const TriMesh& mesh, const MetricField& metric)
    : calc_outer_(curve_calculus(mesh, metric, Curve::OuterBoundary)),
      calc_inner_(curve_calculus(mesh, metric, Curve::Sigma1Interface)) {
  StiffnessSystem sys(mesh, metric);
  const int nm = calc_outer_.size(), ns = calc_inner_.size();
  const std::vector<int> sigma_nodes = curve_nodes(mesh, Curve::Sigma1Interface);

  restriction_.resize(ns, nm);
  for (int j = 0; j < nm; ++j) {
    HarmonicField ext = sys.harmonic_extension(Eigen::VectorXd::Unit(nm, j));
    for (int i = 0; i < ns; ++i)
      restriction_(i, j) = ext.values(sigma_nodes[static_cast<size_t>(i)]);
  }
  restriction_adj_ = calc_outer_.mass.cwiseInverse().asDiagonal() * restriction_.transpose() *
                     calc_inner_.mass.asDiagonal();

  DNOperator dn_sigma =
      partial_dn(mesh, metric, Subdomain::Sigma1, Curve::Sigma1Interface, std::nullopt, "dn_sigma1");
  a_form_ = Eigen::MatrixXd(calc_inner_.mass.asDiagonal()) + dn_sigma.form;
  a_form_ = 0.5 * (a_form_ + a_form_.transpose()).eval();
  a_chol_.compute(a_form_);
  if (a_chol_.info() != Eigen::Success) throw SolverError("I + Lambda_Sigma1 is not positive definite");

  DNOperator dn0 = sys.dn_map({0});
  Eigen::MatrixXd outer_form = Eigen::MatrixXd(calc_outer_.mass.asDiagonal()) + dn0.form;
  outer_solver_.compute(0.5 * (outer_form + outer_form.transpose()));
  if (outer_solver_.info() != Eigen::Success) throw SolverError("I + Lambda_0 is not positive definite");

  Eigen::MatrixXd lt = a_chol_.matrixU();  // L^T with A = L L^T
  lsq_.compute(lt * restriction_);
}

double RungeOperators::a_inner(const Eigen::VectorXd& w1, const Eigen::VectorXd& w2) const {
  return w1.dot(a_form_ * w2);
}

double RungeOperators::norm_half(const Eigen::VectorXd& w) const {
  return std::sqrt(std::max(0.0, a_inner(w, w)));
}

Eigen::VectorXd RungeOperators::apply_a(const Eigen::VectorXd& w) const {
  return calc_inner_.mass.cwiseInverse().cwiseProduct(a_form_ * w);
}

double RungeOperators::norm_one(const Eigen::VectorXd& w) const {
  Eigen::VectorXd aw = a_form_ * w;  // functional; L2 dual-mass norm of it
  return std::sqrt(aw.dot(calc_inner_.mass.cwiseInverse().cwiseProduct(aw)));
}

Eigen::VectorXd RungeOperators::step_direction(const Eigen::VectorXd& v) const {
  // (M_0 + Lambda_0) z = T^T (A v) with A v taken as a functional
  Eigen::VectorXd av_functional = a_form_ * v;
  return outer_solver_.solve(restriction_.transpose() * av_functional);
}

Eigen::VectorXd RungeOperators::exact_solve(const Eigen::VectorXd& v) const {
  Eigen::MatrixXd lt = a_chol_.matrixU();
  return lsq_.solve(lt * v);
}

RungeStep runge_step(const Eigen::VectorXd& v, double k_const, double lambda,
                     const RungeOperators& ops, const RungeStepConfig& cfg) {
  double vnorm = ops.norm_half(v);
  if (!(vnorm > 0)) throw DomainError("runge_step needs nonzero data");
  Eigen::VectorXd vn = v / vnorm;

  auto finish = [&](const Eigen::VectorXd& u, double sigma) {
    RungeStep st;
    st.u = u;
    st.sigma = sigma;
    Eigen::VectorXd r = vn - ops.restriction() * u;
    double rr = ops.a_inner(r, r);
    st.mu = 1.0 - rr;
    double n1 = ops.norm_one(r);
    st.lambda_next = rr > 0 ? n1 * n1 / rr : 0.0;
    st.smoothness_ok = st.lambda_next <= lambda * (1 + cfg.smoothness_c * std::exp(-k_const * lambda)) + 1e-9;
    st.v_next = rr > 0 ? Eigen::VectorXd(r / std::sqrt(rr)) : Eigen::VectorXd::Zero(v.size());
    return st;
  };

  if (cfg.exact_solve) return finish(ops.exact_solve(vn), 1.0);

  Eigen::VectorXd z = ops.step_direction(vn);
  Eigen::VectorXd tz = ops.restriction() * z;
  double a_vz = ops.a_inner(vn, tz);
  double a_zz = ops.a_inner(tz, tz);
  if (!(a_zz > 0))
    throw StagnationError("step direction collapses: <A Tz, Tz> = " + std::to_string(a_zz));

  double sigma_fixed = std::exp(-k_const * lambda);
  std::vector<double> candidates{sigma_fixed};
  if (!cfg.fixed_sigma_only) {
    candidates.push_back(std::clamp(a_vz / a_zz, 0.0, 1e6));
    double lo = std::max(sigma_fixed, 1e-12), hi = 1.0;
    for (int i = 0; i <= cfg.sigma_grid; ++i)
      candidates.push_back(lo * std::pow(hi / std::max(lo, 1e-300), double(i) / cfg.sigma_grid));
  }

  bool have_best = false, have_smooth_best = false;
  RungeStep best, smooth_best;
  for (double sigma : candidates) {
    if (!(sigma > 0)) continue;
    RungeStep st = finish(sigma * z, sigma);
    if (st.mu <= 0) continue;
    if (!have_best || st.mu > best.mu) {
      best = st;
      have_best = true;
    }
    if (st.smoothness_ok && (!have_smooth_best || st.mu > smooth_best.mu)) {
      smooth_best = st;
      have_smooth_best = true;
    }
  }
  if (have_smooth_best) return smooth_best;
  if (have_best) return best;
  throw StagnationError("no sigma gives a residual drop: <A v, Tz> = " + std::to_string(a_vz) +
                        ", <A Tz, Tz> = " + std::to_string(a_zz));
}

AdjointLowerBoundFit adjoint_lower_bound_experiment(const TriMesh& mesh, const MetricField& metric,
                                                    const std::vector<Eigen::VectorXd>& f_set) {
  BoundaryCalculus calc_outer = curve_calculus(mesh, metric, Curve::OuterBoundary);
  BoundaryCalculus calc_inner = curve_calculus(mesh, metric, Curve::Sigma1Interface);
  StiffnessSystem sys(mesh, metric);
  const std::vector<int> sigma_nodes = curve_nodes(mesh, Curve::Sigma1Interface);
  const int nm = calc_outer.size(), ns = calc_inner.size();

  Eigen::MatrixXd restriction(ns, nm);
  for (int j = 0; j < nm; ++j) {
    HarmonicField ext = sys.harmonic_extension(Eigen::VectorXd::Unit(nm, j));
    for (int i = 0; i < ns; ++i) restriction(i, j) = ext.values(sigma_nodes[static_cast<size_t>(i)]);
  }
  Eigen::MatrixXd tstar = calc_outer.mass.cwiseInverse().asDiagonal() * restriction.transpose() *
                          calc_inner.mass.asDiagonal();

  std::vector<Eigen::VectorXd> fs = f_set;
  if (fs.empty())
    for (int i = 1; i <= std::min(3 * ns / 4, ns - 1); ++i) fs.push_back(calc_inner.eigenvectors.col(i));

  AdjointLowerBoundFit out;
  double k_fit = 0;
  for (const Eigen::VectorXd& f : fs) {
    double nminus = hs_norm(calc_inner, f, -0.5);
    double lam = std::pow(hs_norm(calc_inner, f, 0.0) / nminus, 2);
    double tn = hs_norm(calc_outer, tstar * f, -0.5);
    double ratio = (tn * tn) / (nminus * nminus);
    out.lambdas.push_back(lam);
    out.ratios.push_back(ratio);
    if (ratio < 1.0 && lam > 0) k_fit = std::max(k_fit, -std::log(ratio) / lam);
  }
  out.constants.K = k_fit;
  out.constants.provenance = "adjoint_lower_bound_experiment";
  for (size_t i = 0; i < out.lambdas.size(); ++i)
    if (out.ratios[i] < std::exp(-k_fit * out.lambdas[i]) * (1 - 1e-9)) ++out.violations;
  return out;
}

RungeTrace runge_iterate(const Eigen::VectorXd& f, const FitConstants& constants,
                         const RungeOperators& ops, const RungeConfig& cfg, const LiEvaluator& li) {
  if (!(cfg.eps > 0)) throw DomainError("target tolerance must be positive");
  double fscale = ops.norm_half(f);
  if (!(fscale > 0)) throw DomainError("runge_iterate needs nonzero data");
  Eigen::VectorXd target = f / fscale;

  RungeTrace trace;
  trace.constants = constants;
  Eigen::VectorXd v = target;
  Eigen::VectorXd u_tilde = Eigen::VectorXd::Zero(ops.outer_size());
  double n1 = ops.norm_one(v);
  double lambda_meas = n1 * n1;
  double lambda_rec = lambda_meas;
  double log_prod = 0;
  double prev_res = 1.0;

  for (long i = 0; i < cfg.max_iterations; ++i) {
    RungeStep st = runge_step(v, constants.K, lambda_meas, ops, cfg.step);
    double weight = std::exp(0.5 * log_prod);
    u_tilde += weight * st.u;
    log_prod += std::log(std::max(1.0 - st.mu, 1e-300));

    double res = ops.norm_half(target - ops.restriction() * u_tilde);
    trace.lambda.push_back(lambda_meas);
    trace.lambda_rec.push_back(lambda_rec);
    trace.mu.push_back(st.mu);
    trace.residual.push_back(res);
    trace.residual_prod.push_back(std::exp(0.5 * log_prod));
    trace.cost.push_back(hs_norm(ops.outer_calculus(), (fscale * u_tilde).eval(), 0.5));
    trace.renorm_error = std::max(trace.renorm_error, std::abs(res - trace.residual_prod.back()));
    if (res > prev_res * (1 + 1e-9)) trace.monotone = false;
    prev_res = res;

    v = st.v_next;
    lambda_meas = st.lambda_next;
    lambda_rec = lambda_rec * (1 + constants.C * std::exp(-constants.K * lambda_rec));
    if (res <= cfg.eps) {
      trace.converged = true;
      break;
    }
    if (v.cwiseAbs().maxCoeff() == 0.0) break;  // residual exhausted to the solver floor
  }
  trace.u_tilde = fscale * u_tilde;

  // li-envelope on the squared residual product, amplitude fitted on the
  // first half of the trace, checked everywhere
  if (!trace.residual_prod.empty()) {
    double sigma0_guess = std::min(std::max(constants.K * trace.lambda_rec.front(), 1.5), 30.0);
    double d0 = li.li(std::exp(sigma0_guess));
    size_t n = trace.residual_prod.size();
    double amp = 0;
    std::vector<double> denom(n);
    for (size_t i = 0; i < n; ++i) {
      denom[i] = std::log(li.li_inv(cfg.envelope_c * static_cast<double>(i + 1) + d0));
      if (i < std::max<size_t>(1, n / 2))
        amp = std::max(amp, trace.residual_prod[i] * trace.residual_prod[i] * denom[i]);
    }
    trace.envelope_sigma0 = amp;
    trace.envelope_holds = true;
    for (size_t i = 0; i < n; ++i)
      if (trace.residual_prod[i] * trace.residual_prod[i] > amp / denom[i] * (1 + 1e-9))
        trace.envelope_holds = false;
  }
  return trace;
}

}  // namespace dnlab
