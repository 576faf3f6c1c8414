#include "dnlab/identities.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>

namespace dnlab {

namespace {

double dual_mass_norm(const Eigen::VectorXd& functional, const Eigen::VectorXd& mass) {
  return std::sqrt(functional.dot(mass.cwiseInverse().cwiseProduct(functional)));
}

IdentityReport make_report(const std::string& name, double abs, double scale, int resolution,
                           double tol) {
  IdentityReport rep;
  rep.identity = name;
  rep.abs_residual = abs;
  rep.rel_residual = abs / std::max(scale, 1e-30);
  rep.resolution = resolution;
  rep.tolerance = tol;
  rep.pass = rep.rel_residual <= tol;
  return rep;
}

double theta_of(const TriMesh& mesh, int node) {
  return std::atan2(mesh.nodes(node, 1), mesh.nodes(node, 0));
}

}  // namespace

IdentityLab::IdentityLab(const TriMesh& mesh, const MetricField& g, const MetricField& h)
    : mesh_(mesh),
      g_(g),
      h_(h),
      outer_nodes_(mesh_.loop_nodes(0)),
      sigma_nodes_(curve_nodes(mesh_, Curve::Sigma1Interface)),
      calc_outer_(curve_calculus(mesh_, g_, Curve::OuterBoundary)),
      calc_sigma_(curve_calculus(mesh_, g_, Curve::Sigma1Interface)),
      sys_g_(mesh_, g_),
      sys_h_(mesh_, h_),
      dn_g_(sys_g_.dn_map()),
      dn_h_(sys_h_.dn_map()),
      K_ext_g_(assemble_stiffness(mesh_, g_, Subdomain::Exterior)),
      K_ext_h_(assemble_stiffness(mesh_, h_, Subdomain::Exterior)),
      K_sig_g_(assemble_stiffness(mesh_, g_, Subdomain::Sigma1)),
      K_sig_h_(assemble_stiffness(mesh_, h_, Subdomain::Sigma1)),
      ext_from_sigma_(mesh_, g_, Subdomain::Exterior, Curve::Sigma1Interface, Curve::OuterBoundary),
      ext_from_outer_(mesh_, g_, Subdomain::Exterior, Curve::OuterBoundary, Curve::Sigma1Interface),
      sigma_g_(mesh_, g_, Subdomain::Sigma1, Curve::Sigma1Interface, std::nullopt),
      sigma_h_(mesh_, h_, Subdomain::Sigma1, Curve::Sigma1Interface, std::nullopt),
      dn01_(ext_from_sigma_.dn("dn_01")),
      dn_sigma_g_(sigma_g_.dn("dn_sigma1_g")),
      dn_sigma_h_(sigma_h_.dn("dn_sigma1_h")) {
  for (int t = 0; t < mesh_.num_triangles(); ++t) {
    if (mesh_.region[static_cast<size_t>(t)] == Region::Inclusion) continue;
    if ((g_.coeffs.row(t) - h_.coeffs.row(t)).cwiseAbs().maxCoeff() > 0)
      throw DomainError("metrics must agree outside the inclusion");
  }

  const int nm = outer_size(), ns = sigma_size();
  restriction_.resize(ns, nm);
  for (int j = 0; j < nm; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Unit(nm, j);
    restriction_.col(j) = sigma_trace(sys_g_.harmonic_extension(e));
  }
  restriction_adj_ = calc_outer_.mass.cwiseInverse().asDiagonal() * restriction_.transpose() *
                     calc_sigma_.mass.asDiagonal();

  // N z = conormal at dM of E^{0,1}(z); the adjoint-formula operator carries
  // the explicit inner-normal sign
  Eigen::MatrixXd N(nm, ns);
  for (int j = 0; j < ns; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Unit(ns, j);
    N.col(j) = ext_from_sigma_.conormal_trace(ext_from_sigma_.extend(e), Curve::OuterBoundary);
  }
  Eigen::MatrixXd coercive = dn01_.form + dn_sigma_g_.form;
  Eigen::LDLT<Eigen::MatrixXd> solver(0.5 * (coercive + coercive.transpose()));
  if (solver.info() != Eigen::Success)
    throw SolverError("transmission operator is not invertible");
  adjoint_formula_op_ = -(calc_outer_.mass.cwiseInverse().asDiagonal() * N *
                          solver.solve(Eigen::MatrixXd(calc_sigma_.mass.asDiagonal())));
}

Eigen::VectorXd IdentityLab::sigma_trace(const HarmonicField& field) const {
  Eigen::VectorXd out(sigma_size());
  for (int i = 0; i < sigma_size(); ++i) out(i) = field.values(sigma_nodes_[static_cast<size_t>(i)]);
  return out;
}

IdentityReport IdentityLab::difference_formula(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                                               double tol) const {
  double lhs = dn_g_.pairing(u, v) - dn_h_.pairing(u, v);

  HarmonicField eg_u = sys_g_.harmonic_extension(u);
  HarmonicField eh_v = sys_h_.harmonic_extension(v);
  double term_ext = eg_u.values.dot((K_ext_g_ - K_ext_h_) * eh_v.values);
  Eigen::VectorXd u_prime = sigma_trace(eg_u);
  Eigen::VectorXd v_second = sigma_trace(eh_v);
  double term_sigma = u_prime.dot((dn_sigma_g_.form - dn_sigma_h_.form) * v_second);
  double rhs = term_ext + term_sigma;

  double scale = std::max({std::abs(dn_g_.pairing(u, v)), std::abs(dn_h_.pairing(u, v)),
                           std::abs(lhs), std::abs(rhs)});
  return make_report("difference_formula", std::abs(lhs - rhs), scale, outer_size(), tol);
}

double IdentityLab::difference_swap_residual(const Eigen::VectorXd& u,
                                             const Eigen::VectorXd& v) const {
  double ab = dn_g_.pairing(u, v) - dn_h_.pairing(u, v);
  double ba = dn_h_.pairing(v, u) - dn_g_.pairing(v, u);
  return std::abs(ab + ba) / std::max(std::abs(ab), 1e-30);
}

IdentityReport IdentityLab::transmission(const Eigen::VectorXd& u, double tol) const {
  Eigen::VectorXd u_prime = sigma_trace(sys_g_.harmonic_extension(u));
  Eigen::VectorXd lhs = (dn01_.form + dn_sigma_g_.form) * u_prime;
  HarmonicField e10 = ext_from_outer_.extend(u);
  Eigen::VectorXd rhs = -ext_from_outer_.conormal_trace(e10, Curve::Sigma1Interface);
  double abs = dual_mass_norm(lhs - rhs, calc_sigma_.mass);
  double scale = std::max(dual_mass_norm(lhs, calc_sigma_.mass), dual_mass_norm(rhs, calc_sigma_.mass));
  return make_report("transmission", abs, scale, outer_size(), tol);
}

IdentityReport IdentityLab::comparison_map(const Eigen::VectorXd& v, double tol) const {
  Eigen::VectorXd direct = sigma_trace(sys_h_.harmonic_extension(v));
  Eigen::VectorXd v_prime = sigma_trace(sys_g_.harmonic_extension(v));
  Eigen::MatrixXd lhs_op = dn01_.form + dn_sigma_h_.form;
  Eigen::LDLT<Eigen::MatrixXd> solver(0.5 * (lhs_op + lhs_op.transpose()));
  if (solver.info() != Eigen::Success)
    throw SolverError("comparison operator is singular; coercivity lost");
  Eigen::VectorXd composed = solver.solve((dn01_.form + dn_sigma_g_.form) * v_prime);
  double abs = std::sqrt(l2_inner(calc_sigma_, direct - composed, direct - composed));
  double scale = std::max(std::sqrt(l2_inner(calc_sigma_, direct, direct)),
                          std::sqrt(l2_inner(calc_sigma_, composed, composed)));
  return make_report("comparison_map", abs, scale, outer_size(), tol);
}

IdentityReport IdentityLab::adjoint_formula(double tol) const {
  // L^2 operator norm via mass-scaled singular values
  Eigen::VectorXd mo_sqrt = calc_outer_.mass.cwiseSqrt();
  Eigen::VectorXd ms_inv_sqrt = calc_sigma_.mass.cwiseSqrt().cwiseInverse();
  auto scaled = [&](const Eigen::MatrixXd& a) {
    return Eigen::MatrixXd(mo_sqrt.asDiagonal() * a * ms_inv_sqrt.asDiagonal());
  };
  double abs = scaled(restriction_adj_ - adjoint_formula_op_).bdcSvd().singularValues()(0);
  double scale = scaled(restriction_adj_).bdcSvd().singularValues()(0);
  IdentityReport rep = make_report("adjoint_formula", abs, scale, outer_size(), tol);
  rep.note = "restriction adjoint vs conormal formula, inner-normal sign explicit";
  return rep;
}

double IdentityLab::adjoint_pairing_residual(const Eigen::VectorXd& f,
                                             const Eigen::VectorXd& w) const {
  double lhs = (restriction_ * f).dot(calc_sigma_.mass.cwiseProduct(w));
  double rhs = f.dot(calc_outer_.mass.cwiseProduct(adjoint_formula_op_ * w));
  return std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-30);
}

IdentityReport difference_formula_residual(const TriMesh& mesh, const MetricField& g,
                                           const MetricField& h, const Eigen::VectorXd& u,
                                           const Eigen::VectorXd& v, double tol) {
  return IdentityLab(mesh, g, h).difference_formula(u, v, tol);
}

IdentityReport transmission_residual(const TriMesh& mesh, const MetricField& g,
                                     const Eigen::VectorXd& u, double tol) {
  return IdentityLab(mesh, g, g).transmission(u, tol);
}

IdentityReport comparison_map_residual(const TriMesh& mesh, const MetricField& g,
                                       const MetricField& h, const Eigen::VectorXd& v, double tol) {
  return IdentityLab(mesh, g, h).comparison_map(v, tol);
}

IdentityReport adjoint_formula_residual(const TriMesh& mesh, const MetricField& g, double tol) {
  return IdentityLab(mesh, g, g).adjoint_formula(tol);
}

namespace {

IdentityReport ladder_report(const std::string& name, const std::vector<double>& norms,
                             double ratio_threshold, int resolution) {
  IdentityReport rep;
  rep.identity = name;
  rep.ladder = norms;
  rep.resolution = resolution;
  rep.tolerance = ratio_threshold;
  rep.pass = true;
  for (size_t i = 1; i < norms.size(); ++i) {
    double denom = std::max(norms[i - 1], 1e-30);
    if (norms[i] / denom > ratio_threshold) rep.pass = false;
  }
  rep.abs_residual = norms.empty() ? 0.0 : norms.back();
  rep.rel_residual = norms.size() < 2 ? 0.0 : norms.back() / std::max(norms[norms.size() - 2], 1e-30);
  return rep;
}

}  // namespace

IdentityReport symbol_remainder_check(const std::vector<LadderRung>& ladder, double s, int band,
                                      double stabilization_ratio) {
  if (ladder.empty()) throw DomainError("refinement ladder is empty");
  int band_eff = band > 0 ? band
                          : std::max(4, static_cast<int>(ladder.front().mesh.loop_nodes(0).size()) / 8);
  std::vector<double> norms;
  for (const auto& rung : ladder) {
    StiffnessSystem sys(rung.mesh, rung.metric);
    DNOperator dn = sys.dn_map({0});
    BoundaryCalculus bc = curve_calculus(rung.mesh, rung.metric, Curve::OuterBoundary);
    Eigen::MatrixXd remainder =
        dn.as_operator() - frac_power_matrix(bc, 0.5, SpectralShift::LaplacianZeroAnnihilated);
    norms.push_back(operator_norm_banded(bc, remainder, s, s, band_eff));
  }
  IdentityReport rep = ladder_report("symbol_remainder", norms, stabilization_ratio,
                                     static_cast<int>(ladder.back().mesh.loop_nodes(0).size()));
  rep.note = "band " + std::to_string(band_eff) + ", s " + std::to_string(s);
  return rep;
}

CommutatorReport commutator_norms(const std::vector<LadderRung>& ladder,
                                  const std::function<double(double)>& eta_of_theta,
                                  const std::function<double(double)>& x_of_theta, double s,
                                  int band, double stabilization_ratio) {
  if (ladder.empty()) throw DomainError("refinement ladder is empty");
  int band_eff = band > 0 ? band
                          : std::max(4, static_cast<int>(ladder.front().mesh.loop_nodes(0).size()) / 8);
  std::vector<double> scalar_norms, vector_norms;
  for (const auto& rung : ladder) {
    StiffnessSystem sys(rung.mesh, rung.metric);
    DNOperator dn = sys.dn_map({0});
    BoundaryCalculus bc = curve_calculus(rung.mesh, rung.metric, Curve::OuterBoundary);
    Eigen::MatrixXd A = dn.as_operator();
    const int n = bc.size();
    Eigen::VectorXd eta(n), xc(n);
    for (int i = 0; i < n; ++i) {
      double th = theta_of(rung.mesh, bc.nodes[static_cast<size_t>(i)]);
      eta(i) = eta_of_theta(th);
      xc(i) = x_of_theta(th);
    }
    Eigen::MatrixXd scalar_comm = A * eta.asDiagonal() - eta.asDiagonal() * A;
    scalar_norms.push_back(operator_norm_banded(bc, scalar_comm, s, s, band_eff));
    Eigen::MatrixXd X = loop_derivation_matrix(bc, xc);
    Eigen::MatrixXd vector_comm = X * A - A * X;
    vector_norms.push_back(operator_norm_banded(bc, vector_comm, s, s - 1, band_eff));
  }
  CommutatorReport out;
  int res = static_cast<int>(ladder.back().mesh.loop_nodes(0).size());
  out.scalar = ladder_report("commutator_scalar", scalar_norms, stabilization_ratio, res);
  out.vector = ladder_report("commutator_vector", vector_norms, stabilization_ratio, res);
  return out;
}

SpectralGapReport spectral_gap_check(const std::vector<LadderRung>& ladder, int band,
                                     double gap_threshold, int trials, unsigned long long seed) {
  if (ladder.empty()) throw DomainError("refinement ladder is empty");
  int band_eff = band > 0 ? band
                          : std::max(4, static_cast<int>(ladder.front().mesh.loop_nodes(0).size()) / 8);
  SpectralGapReport out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  for (const auto& rung : ladder) {
    StiffnessSystem sys(rung.mesh, rung.metric);
    DNOperator dn = sys.dn_map({0});
    BoundaryCalculus bc = curve_calculus(rung.mesh, rung.metric, Curve::OuterBoundary);
    const int n = bc.size();

    // generalized eigenvalues of (form, mass)
    Eigen::VectorXd minv_sqrt = bc.mass.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd sym = minv_sqrt.asDiagonal() * dn.form * minv_sqrt.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (sym + sym.transpose()));
    Eigen::VectorXd evals = eig.eigenvalues();
    double top = std::max(evals.cwiseAbs().maxCoeff(), 1.0);
    int kernel = 0;
    for (int i = 0; i < n; ++i)
      if (std::abs(evals(i)) <= 1e-10 * top) ++kernel;
    out.kernel_dims.push_back(kernel);
    out.gaps.push_back(evals(kernel > 0 ? kernel : 1));

    // fitted C in ||f||_(1/2) <= C (||f||_(-1/2) + ||Lambda f||_(-1/2)),
    // band-limited trial functions
    Eigen::MatrixXd A = dn.as_operator();
    double c_fit = 0;
    for (int trial = 0; trial < trials; ++trial) {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < std::min(band_eff, n); ++i) a(i) = dist(rng);
      Eigen::VectorXd f = bc.synthesize(a);
      double denom = hs_norm(bc, f, -0.5) + hs_norm(bc, A * f, -0.5);
      c_fit = std::max(c_fit, hs_norm(bc, f, 0.5) / std::max(denom, 1e-30));
    }
    out.fitted_c.push_back(c_fit);
  }

  IdentityReport rep;
  rep.identity = "spectral_gap";
  rep.resolution = static_cast<int>(ladder.back().mesh.loop_nodes(0).size());
  rep.tolerance = gap_threshold;
  rep.ladder = out.gaps;
  rep.pass = true;
  for (int k : out.kernel_dims)
    if (k != 1) rep.pass = false;
  for (double g : out.gaps)
    if (!(g > gap_threshold)) rep.pass = false;
  for (size_t i = 1; i < out.fitted_c.size(); ++i) {
    double ratio = out.fitted_c[i] / std::max(out.fitted_c[i - 1], 1e-30);
    if (ratio > 1.2 || ratio < 1.0 / 1.2) rep.pass = false;
  }
  rep.abs_residual = out.gaps.empty() ? 0.0 : out.gaps.back();
  rep.rel_residual = out.fitted_c.empty() ? 0.0 : out.fitted_c.back();
  rep.note = "gap and fitted inverse constant per rung";
  out.report = rep;
  return out;
}

}  // namespace dnlab
