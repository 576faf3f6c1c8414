#include "dnlab/probe.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "dnlab/boundary_calculus.hpp"
#include "dnlab/geometry.hpp"

namespace dnlab {

namespace {

double sstep(double x) { return x * x * x * (10.0 + x * (-15.0 + 6.0 * x)); }

// 1 on [0, 1/4], quintic descent, 0 on [3/4, 1]
double cutoff(double q) {
  if (q <= 0.25) return 1.0;
  if (q >= 0.75) return 0.0;
  return 1.0 - sstep((q - 0.25) * 2.0);
}

double covector_norm(const Eigen::Vector2d& xi, const Eigen::Matrix2d& metric) {
  return std::sqrt(xi.dot(metric.inverse() * xi));
}

}  // namespace

OscillatingProbe oscillating_probe(const ProbeSpec& spec, const TriMesh& mesh,
                                   const MetricField& metric) {
  if (spec.xi.norm() == 0)
    throw DomainError("zero frequency: the probe normalization |xi|^(-1/2) is undefined");
  if (!(spec.r0 > 0)) throw DomainError("probe support radius must be positive");
  double sharpness = std::sqrt(spec.xi.norm()) * std::sqrt(spec.r0);
  if (sharpness < spec.min_sharpness)
    throw DomainError("|xi|^(1/2) r0^(1/2) = " + std::to_string(sharpness) +
                      " below the configured sharpness threshold");

  BoundaryCalculus calc = curve_calculus(mesh, metric, Curve::Sigma1Interface);
  const int n = calc.size();

  // interface circle center and radius; the support must stay inside one patch
  Eigen::Vector2d circ_center = Eigen::Vector2d::Zero();
  for (int v : calc.nodes) circ_center += Eigen::Vector2d(mesh.nodes.row(v));
  circ_center /= n;
  double rho = 0;
  for (int v : calc.nodes) rho += (Eigen::Vector2d(mesh.nodes.row(v)) - circ_center).norm();
  rho /= n;
  if (spec.r0 >= rho)
    throw GeometryError("probe support radius " + std::to_string(spec.r0) +
                        " overflows the interface patch (interface radius " + std::to_string(rho) + ")");

  OscillatingProbe probe;
  probe.nodes = calc.nodes;
  probe.center = circ_center + rho * Eigen::Vector2d(std::cos(spec.theta), std::sin(spec.theta));

  // boundary-chart coordinate: signed arclength from the center along the
  // interface; the phase pairs xi with the chart tangent at the center
  const int anchor = [&] {
    int best = 0;
    double best_d = 1e300;
    for (int i = 0; i < n; ++i) {
      double d = (Eigen::Vector2d(mesh.nodes.row(calc.nodes[static_cast<size_t>(i)])) - probe.center).norm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }();
  Eigen::VectorXd s(n);
  s(anchor) = (Eigen::Vector2d(mesh.nodes.row(calc.nodes[static_cast<size_t>(anchor)])) - probe.center)
                  .dot(Eigen::Vector2d(-std::sin(spec.theta), std::cos(spec.theta)));
  for (int i = 1; i < n; ++i) {
    int cur = (anchor + i) % n, prev = (anchor + i - 1) % n;
    s(cur) = s(prev) + calc.edge_length(prev);
  }
  double circumference = calc.edge_length.sum();
  for (int i = 0; i < n; ++i)
    if (s(i) > circumference / 2) s(i) -= circumference;

  Eigen::Vector2d tangent(-std::sin(spec.theta), std::cos(spec.theta));
  double xi_t = spec.xi.dot(tangent);
  probe.u1.resize(n);
  for (int i = 0; i < n; ++i) {
    double psi = cutoff(std::abs(s(i)) / spec.r0);
    probe.u1(i) = psi == 0.0 ? 0.0 : psi * std::cos(xi_t * s(i));
  }
  double norm = hs_norm(calc, probe.u1, 0.5);
  if (!(norm > 0)) throw GeometryError("probe support misses every interface node");
  probe.u1 /= norm;
  probe.v1 = probe.u1;
  return probe;
}

ContrastEstimate contrast_lower_bound_estimate(const TriMesh& mesh, const MetricField& g,
                                               const MetricField& h, const ProbeSpec& spec) {
  OscillatingProbe probe = oscillating_probe(spec, mesh, g);

  // locally constant-coefficient regime: both tensors constant on Sigma_1
  int first = -1;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    if (mesh.region[static_cast<size_t>(t)] == Region::Exterior) continue;
    if (first < 0) first = t;
    if ((g.coeffs.row(t) - g.coeffs.row(first)).cwiseAbs().maxCoeff() > 1e-14 ||
        (h.coeffs.row(t) - h.coeffs.row(first)).cwiseAbs().maxCoeff() > 1e-14)
      throw DomainError("contrast estimate expects g and h constant across the probe patch");
  }
  if (first < 0) throw DomainError("mesh has no Sigma_1 subdomain");

  ConstrainedSystem sys_g(mesh, g, Subdomain::Sigma1, Curve::Sigma1Interface, std::nullopt);
  ConstrainedSystem sys_h(mesh, h, Subdomain::Sigma1, Curve::Sigma1Interface, std::nullopt);
  HarmonicField eg = sys_g.extend(probe.u1);
  HarmonicField eh = sys_h.extend(probe.u1);

  ContrastEstimate est;
  est.form_g = eg.values.dot(sys_g.matrix() * eg.values);
  est.form_h = eh.values.dot(sys_h.matrix() * eh.values);
  // Rayleigh quotients in each metric's own boundary mass: the raw energy
  // ratio is conformally invariant in 2D (identically one), the L2-normalized
  // quotient ratio carries the |xi|_h / |xi|_g limit
  double l2_g = probe.u1.dot(sys_g.data_mass().cwiseProduct(probe.u1));
  double l2_h = probe.u1.dot(sys_h.data_mass().cwiseProduct(probe.u1));
  est.ratio = (est.form_h / l2_h) / (est.form_g / l2_g);
  // covector norms in the boundary chart frame (tangent, inward normal)
  Eigen::Matrix2d frame;
  frame.col(0) = Eigen::Vector2d(-std::sin(spec.theta), std::cos(spec.theta));
  frame.col(1) = Eigen::Vector2d(-std::cos(spec.theta), -std::sin(spec.theta));
  Eigen::Matrix2d g_chart = frame.transpose() * g.tensor(first) * frame;
  Eigen::Matrix2d h_chart = frame.transpose() * h.tensor(first) * frame;
  est.expected = covector_norm(spec.xi, h_chart) / covector_norm(spec.xi, g_chart);
  est.pairing = est.form_g - est.form_h;
  return est;
}

double dn_difference_norm(const TriMesh& mesh, const MetricField& g, const MetricField& h) {
  StiffnessSystem sys_g(mesh, g), sys_h(mesh, h);
  DNOperator dn_g = sys_g.dn_map(), dn_h = sys_h.dn_map();
  BoundaryCalculus calc = curve_calculus(mesh, g, Curve::OuterBoundary);
  Eigen::MatrixXd proj = constant_complement_projector(calc);
  Eigen::MatrixXd op = proj * (dn_g.as_operator() - dn_h.as_operator()) * proj;
  return operator_norm(calc, op, 0.5, -0.5);
}

namespace {

bool is_conformal_direction(const TriMesh& mesh, const MetricField& g, const Eigen::Matrix2d& delta) {
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    if (mesh.region[static_cast<size_t>(t)] != Region::Inclusion) continue;
    Eigen::Matrix2d gt = g.tensor(t);
    Eigen::Matrix2d rel = gt.inverse() * delta;
    double scale = 0.5 * rel.trace();
    if ((delta - scale * gt).norm() > 1e-12 * std::max(delta.norm(), 1e-30)) return false;
  }
  return true;
}

}  // namespace

StabilityCurve stability_sweep(const TriMesh& mesh, const MetricField& g,
                               const Eigen::Matrix2d& delta, const std::vector<double>& contrasts,
                               const SweepOptions& opts) {
  if (contrasts.empty()) throw DomainError("contrast list is empty");
  std::vector<double> sorted = contrasts;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() < 0) throw DomainError("contrasts must be nonnegative");

  auto composite_for = [&](double c) {
    MetricField h = g;
    for (int t = 0; t < mesh.num_triangles(); ++t)
      h.set_tensor(t, Eigen::Matrix2d(g.tensor(t) + c * delta));
    return composite_metric(g, h, mesh);
  };

  if (is_conformal_direction(mesh, g, delta)) {
    // verify the provable vanishing before rejecting
    double norm = dn_difference_norm(mesh, g, composite_for(sorted.back()).field);
    throw ConformalRejection(norm);
  }

  const int resolution = static_cast<int>(mesh.loop_nodes(0).size());
  LiEvaluator li;
  StabilityCurve curve;
  for (double c : sorted) {
    CompositeMetric comp = composite_for(c);
    StabilityPoint pt;
    pt.contrast = comp.contrast;
    pt.resolution = resolution;
    pt.opnorm = c == 0 ? 0.0 : dn_difference_norm(mesh, g, comp.field);

    if (opts.run_pipeline && c > 0) {
      pt.pipeline_ran = true;
      pt.eps = comp.contrast / opts.c_doubleprime;

      OscillatingProbe probe = oscillating_probe(opts.probe, mesh, g);
      DNOperator dn01 = partial_dn(mesh, g, Subdomain::Exterior, Curve::Sigma1Interface,
                                   Curve::OuterBoundary, "dn_01");
      DNOperator dn_sig_g =
          partial_dn(mesh, g, Subdomain::Sigma1, Curve::Sigma1Interface, std::nullopt, "dn_sigma1_g");
      DNOperator dn_sig_h = partial_dn(mesh, comp.field, Subdomain::Sigma1, Curve::Sigma1Interface,
                                       std::nullopt, "dn_sigma1_h");
      Eigen::MatrixXd lhs = dn01.form + dn_sig_g.form;
      Eigen::VectorXd v_target =
          Eigen::LDLT<Eigen::MatrixXd>(0.5 * (lhs + lhs.transpose()))
              .solve((dn01.form + dn_sig_h.form) * probe.v1);

      BoundaryCalculus calc_sigma = curve_calculus(mesh, g, Curve::Sigma1Interface);
      Eigen::VectorXd u_eps = lipschitz_approximation(calc_sigma, probe.u1, pt.eps).f;
      Eigen::VectorXd v_eps = lipschitz_approximation(calc_sigma, v_target, pt.eps).f;

      RungeOperators rops(mesh, g);
      RungeConfig rcfg = opts.runge;
      rcfg.eps = pt.eps;
      Eigen::VectorXd u0 = Eigen::VectorXd::Zero(rops.outer_size());
      Eigen::VectorXd v0 = u0;
      if (u_eps.cwiseAbs().maxCoeff() > 0)
        u0 = runge_iterate(u_eps, opts.constants, rops, rcfg, li).u_tilde;
      if (v_eps.cwiseAbs().maxCoeff() > 0)
        v0 = runge_iterate(v_eps, opts.constants, rops, rcfg, li).u_tilde;

      StiffnessSystem sys_g(mesh, g), sys_h(mesh, comp.field);
      pt.pairing = sys_g.dn_map().pairing(u0, v0) - sys_h.dn_map().pairing(u0, v0);
    }
    curve.points.push_back(pt);
  }
  return curve;
}

LogStabilityFit log_stability_fit(const StabilityCurve& curve) {
  std::vector<double> xs, ys;
  for (const auto& pt : curve.points) {
    if (pt.contrast <= 0) continue;
    if (!(pt.opnorm > 0))
      throw FitError("degenerate curve: zero operator norm at contrast " +
                     std::to_string(pt.contrast));
    xs.push_back(std::log(std::abs(std::log(pt.opnorm))));
    ys.push_back(std::log(pt.contrast));
  }
  if (xs.size() < 4) throw FitError("log-stability fit needs at least four positive-contrast points");

  double xm = 0, ym = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    xm += xs[i];
    ym += ys[i];
  }
  xm /= static_cast<double>(xs.size());
  ym /= static_cast<double>(xs.size());
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - xm) * (xs[i] - xm);
    sxy += (xs[i] - xm) * (ys[i] - ym);
  }
  if (sxx == 0) throw FitError("log-stability fit is degenerate: identical norms");
  double slope = sxy / sxx;
  double intercept = ym - slope * xm;

  LogStabilityFit fit;
  fit.c2 = -1.0 / slope;
  double rss = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    double pred = intercept + slope * xs[i];
    rss += (ys[i] - pred) * (ys[i] - pred);
  }
  fit.rms_log_residual = std::sqrt(rss / static_cast<double>(xs.size()));
  // C2 carries the shape from the least squares; C1 is calibrated one-sided
  // so the envelope touches the tightest point from above
  double c1 = 0;
  for (size_t i = 0; i < xs.size(); ++i) c1 = std::max(c1, std::exp(ys[i] + xs[i] / fit.c2));
  fit.c1 = c1;
  fit.inequality_holds = true;
  for (const auto& pt : curve.points) {
    if (pt.contrast <= 0) continue;
    double bound = fit.c1 * std::pow(std::abs(std::log(pt.opnorm)), -1.0 / fit.c2);
    if (pt.contrast > bound * (1 + 1e-9)) fit.inequality_holds = false;
  }
  return fit;
}

}  // namespace dnlab
