#include "dnlab/evolution.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

namespace dnlab {

namespace {

// uniform-grid point locator for barycentric evaluation on the base mesh
class PointLocator {
 public:
  explicit PointLocator(const TriMesh& mesh) : mesh_(mesh) {
    lo_ = mesh.nodes.colwise().minCoeff();
    Eigen::Vector2d hi = mesh.nodes.colwise().maxCoeff();
    cell_ = std::max(mesh.max_edge_length(), 1e-12);
    nx_ = std::max(1, static_cast<int>((hi.x() - lo_.x()) / cell_) + 1);
    ny_ = std::max(1, static_cast<int>((hi.y() - lo_.y()) / cell_) + 1);
    buckets_.resize(static_cast<size_t>(nx_ * ny_));
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      Eigen::Vector2d a = mesh.nodes.row(mesh.triangles(t, 0));
      Eigen::Vector2d b = mesh.nodes.row(mesh.triangles(t, 1));
      Eigen::Vector2d c = mesh.nodes.row(mesh.triangles(t, 2));
      Eigen::Vector2d tlo = a.cwiseMin(b).cwiseMin(c), thi = a.cwiseMax(b).cwiseMax(c);
      for (int ix = cell_index_x(tlo.x()); ix <= cell_index_x(thi.x()); ++ix)
        for (int iy = cell_index_y(tlo.y()); iy <= cell_index_y(thi.y()); ++iy)
          buckets_[static_cast<size_t>(iy * nx_ + ix)].push_back(t);
    }
  }

  double interpolate(const Eigen::VectorXd& nodal, const Eigen::Vector2d& p) const {
    int ix = cell_index_x(p.x()), iy = cell_index_y(p.y());
    const auto& cand = buckets_[static_cast<size_t>(iy * nx_ + ix)];
    double best_defect = 1e100;
    double best_value = 0;
    for (int t : cand) {
      Eigen::Vector3d bary;
      if (barycentric(t, p, bary)) return value(nodal, t, bary);
      double defect = -bary.minCoeff();
      if (defect < best_defect) {
        best_defect = defect;
        best_value = value(nodal, t, bary);
      }
    }
    if (best_defect < 1e-6) return best_value;  // touching a cell boundary
    // fall back to a global scan before giving up
    for (int t = 0; t < mesh_.num_triangles(); ++t) {
      Eigen::Vector3d bary;
      if (barycentric(t, p, bary)) return value(nodal, t, bary);
    }
    throw GeometryError("interpolation point outside the base mesh");
  }

 private:
  int cell_index_x(double x) const {
    return std::clamp(static_cast<int>((x - lo_.x()) / cell_), 0, nx_ - 1);
  }
  int cell_index_y(double y) const {
    return std::clamp(static_cast<int>((y - lo_.y()) / cell_), 0, ny_ - 1);
  }
  bool barycentric(int t, const Eigen::Vector2d& p, Eigen::Vector3d& bary) const {
    Eigen::Vector2d a = mesh_.nodes.row(mesh_.triangles(t, 0));
    Eigen::Vector2d b = mesh_.nodes.row(mesh_.triangles(t, 1));
    Eigen::Vector2d c = mesh_.nodes.row(mesh_.triangles(t, 2));
    double det = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    double l1 = ((p - a).x() * (c - a).y() - (p - a).y() * (c - a).x()) / det;
    double l2 = ((b - a).x() * (p - a).y() - (b - a).y() * (p - a).x()) / det;
    bary = {1.0 - l1 - l2, l1, l2};
    return bary.minCoeff() >= -1e-10;
  }
  double value(const Eigen::VectorXd& nodal, int t, const Eigen::Vector3d& bary) const {
    return bary(0) * nodal(mesh_.triangles(t, 0)) + bary(1) * nodal(mesh_.triangles(t, 1)) +
           bary(2) * nodal(mesh_.triangles(t, 2));
  }

  const TriMesh& mesh_;
  Eigen::Vector2d lo_;
  double cell_;
  int nx_, ny_;
  std::vector<std::vector<int>> buckets_;
};

EvolutionOperators build_ops(const TriMesh& level_mesh, const CollarFields& fields, double t,
                             const MetricField& metric) {
  if (level_mesh.num_loops() != 1)
    throw DomainError("evolution operators require a single-loop (disk) family");
  if (fields.eta.minCoeff() <= 0)
    throw TransversalityError("eta must be strictly positive for the pullback");

  EvolutionOperators ops{.time = t,
                         .A = {},
                         .B = {},
                         .S = {},
                         .X = {},
                         .eta = fields.eta,
                         .x_coeff = fields.x_coeff,
                         .div_x = fields.div_x,
                         .gamma = fields.gamma,
                         .calc = curve_calculus(level_mesh, metric, Curve::OuterBoundary)};
  StiffnessSystem sys(level_mesh, metric);
  ops.A = sys.dn_map({0}).as_operator();
  Eigen::VectorXd sq = fields.eta.cwiseSqrt();
  ops.B = sq.asDiagonal() * ops.A * sq.asDiagonal();
  ops.S = ops.B - fields.eta.asDiagonal() * ops.A;
  ops.X = loop_derivation_matrix(ops.calc, fields.x_coeff, DerivationScheme::Upwind);
  return ops;
}

double estimate_top_eigenvalue(const Eigen::MatrixXd& B) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(B.rows());
  double lam = 1;
  for (int i = 0; i < 60; ++i) {
    v = B * v;
    lam = v.norm();
    if (lam <= 0) return 0;
    v /= lam;
  }
  return lam;
}

}  // namespace

EvolutionOperators pullback_dn(const NestedFamily& family, int level, const MetricField& metric) {
  if (level < 0 || level >= family.num_levels()) throw DomainError("level out of range");
  return build_ops(family.meshes[static_cast<size_t>(level)],
                   family.fields[static_cast<size_t>(level)],
                   family.times[static_cast<size_t>(level)], metric);
}

EvolutionOperators pullback_dn_at(const NestedFamily& family, double t, const MetricField& metric) {
  return build_ops(family.mesh_at(t), family.fields_at(t), t, metric);
}

EvolutionLab::EvolutionLab(const NestedFamily& family, const MetricField& metric)
    : family_(family), metric_(metric) {
  if (family.num_levels() < 2) throw DomainError("family needs at least two levels");
  for (int k = 0; k < family.num_levels(); ++k) ops_.push_back(pullback_dn(family, k, metric));
  dt_ = family.times[1] - family.times[0];
}

std::vector<Eigen::VectorXd> EvolutionLab::evolve(const Eigen::VectorXd& f0, bool implicit) const {
  const int n = ops_.front().calc.size();
  if (f0.size() != n) throw DimensionError("initial data does not match the loop");
  std::vector<Eigen::VectorXd> out{f0};
  Eigen::VectorXd f = f0;
  for (size_t k = 0; k + 1 < ops_.size(); ++k) {
    const EvolutionOperators& op = ops_[k];
    Eigen::VectorXd drift = f + dt_ * ((op.X + op.S) * f);
    if (implicit) {
      Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n, n) + dt_ * op.B;
      f = lhs.partialPivLu().solve(drift);
    } else {
      double before = f.cwiseAbs().maxCoeff() + 1e-300;
      f = drift - dt_ * (op.B * f);
      if (f.cwiseAbs().maxCoeff() > 10.0 * before) {
        double top = estimate_top_eigenvalue(op.B);
        throw StepSizeError("explicit evolution blew up at level " + std::to_string(k) +
                            "; try dt <= " + std::to_string(top > 0 ? 2.0 / top : dt_ / 2));
      }
    }
    out.push_back(f);
  }
  return out;
}

TautologicalResidual EvolutionLab::tautological_residual(const Eigen::VectorXd& f,
                                                         TimeScheme scheme) const {
  const int levels = num_levels();
  if (levels < 3) throw DomainError("tautological residual needs at least three levels");
  const TriMesh& base = family_.meshes.front();
  StiffnessSystem sys(base, metric_);
  HarmonicField ext = sys.harmonic_extension(f);
  PointLocator locator(base);

  const std::vector<int>& loop = base.loop_nodes(0);
  const int n = static_cast<int>(loop.size());
  std::vector<Eigen::VectorXd> u(static_cast<size_t>(levels));
  for (int k = 0; k < levels; ++k) {
    const TriMesh& lm = family_.meshes[static_cast<size_t>(k)];
    Eigen::VectorXd uk(n);
    for (int i = 0; i < n; ++i)
      uk(i) = locator.interpolate(ext.values, lm.nodes.row(loop[static_cast<size_t>(i)]));
    u[static_cast<size_t>(k)] = uk;
  }

  TautologicalResidual out;
  int k_first = scheme == TimeScheme::Central ? 1 : 0;
  int k_last = levels - 2;
  for (int k = k_first; k <= k_last; ++k) {
    const EvolutionOperators& op = ops_[static_cast<size_t>(k)];
    Eigen::VectorXd dudt;
    if (scheme == TimeScheme::Central)
      dudt = (u[static_cast<size_t>(k + 1)] - u[static_cast<size_t>(k - 1)]) / (2 * dt_);
    else
      dudt = (u[static_cast<size_t>(k + 1)] - u[static_cast<size_t>(k)]) / dt_;
    Eigen::VectorXd rhs =
        -op.eta.cwiseProduct(op.A * u[static_cast<size_t>(k)]) + op.X * u[static_cast<size_t>(k)];
    Eigen::VectorXd defect = dudt - rhs;
    out.times.push_back(family_.times[static_cast<size_t>(k)]);
    out.residual.push_back(std::sqrt(defect.dot(op.calc.mass.cwiseProduct(defect))));
  }
  out.max_residual = *std::max_element(out.residual.begin(), out.residual.end());
  return out;
}

namespace {

// smallest (c1, c2) with lambda(t) <= e^(c1 t)(lambda0 + c2/c1) - c2/c1,
// minimizing c1 + c2 over a log grid
void fit_gronwall(const std::vector<double>& times, const std::vector<double>& lambda, double& c1,
                  double& c2) {
  double lam0 = lambda.front();
  double best_sum = 1e300;
  c1 = 1e-3;
  c2 = 0;
  for (int i = 0; i <= 120; ++i) {
    double cand1 = std::pow(10.0, -3.0 + 6.0 * i / 120.0);
    double need2 = 0;
    for (size_t k = 1; k < times.size(); ++k) {
      double e = std::exp(cand1 * times[k]);
      need2 = std::max(need2, cand1 * (lambda[k] - e * lam0) / (e - 1));
    }
    if (cand1 + need2 < best_sum) {
      best_sum = cand1 + need2;
      c1 = cand1;
      c2 = need2;
    }
  }
}

}  // namespace

RayleighTrace EvolutionLab::rayleigh_trace(const Eigen::VectorXd& f0) const {
  if (f0.cwiseAbs().maxCoeff() == 0) throw DomainError("initial data must be nonzero");
  std::vector<Eigen::VectorXd> fs = evolve(f0, true);
  RayleighTrace out;
  for (int k = 0; k < num_levels(); ++k) {
    const EvolutionOperators& op = ops_[static_cast<size_t>(k)];
    const Eigen::VectorXd& f = fs[static_cast<size_t>(k)];
    Eigen::VectorXd bf = op.B * f;
    double ff = f.dot(op.calc.mass.cwiseProduct(f));
    double bb = bf.dot(op.calc.mass.cwiseProduct(bf));
    out.times.push_back(op.time);
    out.f_norm2.push_back(ff);
    out.bf_norm2.push_back(bb);
    out.lambda.push_back(bb / std::max(ff, 1e-300));
    out.norm_half.push_back(hs_norm(op.calc, f, 0.5));
    out.norm_one.push_back(hs_norm(op.calc, f, 1.0));
  }
  fit_gronwall(out.times, out.lambda, out.c1, out.c2);
  out.bound_holds = true;
  for (size_t k = 0; k < out.times.size(); ++k) {
    double b = std::exp(out.c1 * out.times[k]) * (out.lambda.front() + out.c2 / out.c1) -
               out.c2 / out.c1;
    out.bound.push_back(b);
    if (out.lambda[k] > b * (1 + 1e-9) + 1e-12) out.bound_holds = false;
  }
  return out;
}

LowerBoundFit EvolutionLab::lower_bound_fit(const std::vector<Eigen::VectorXd>& f_set) const {
  LowerBoundFit out;
  for (const Eigen::VectorXd& f0 : f_set) {
    std::vector<Eigen::VectorXd> fs = evolve(f0, true);
    const EvolutionOperators& op0 = ops_.front();
    Eigen::VectorXd bf = op0.B * f0;
    double lam = bf.dot(op0.calc.mass.cwiseProduct(bf)) /
                 std::max(f0.dot(op0.calc.mass.cwiseProduct(f0)), 1e-300);
    out.lambdas.push_back(lam);
    double anchor_lit = hs_norm(op0.calc, f0, 1.0);
    double anchor_sq = anchor_lit * anchor_lit;
    double rate_lit = -1e300, rate_sq = -1e300;
    for (int k = 1; k < num_levels(); ++k) {
      double t = family_.times[static_cast<size_t>(k)];
      double nh = hs_norm(ops_[static_cast<size_t>(k)].calc, fs[static_cast<size_t>(k)], 0.5);
      double nh2 = std::max(nh * nh, 1e-300);
      rate_lit = std::max(rate_lit, std::log(anchor_lit / nh2) / t);
      rate_sq = std::max(rate_sq, std::log(anchor_sq / nh2) / t);
    }
    out.rates_literal.push_back(rate_lit);
    out.rates_squared.push_back(rate_sq);
  }

  auto fit = [&](const std::vector<double>& rates, double& c2, double& c3) {
    // smallest (c2, c3) >= 0 with c2 lam + c3 >= rate for every sample,
    // minimizing c2 + c3 over the candidate vertices
    const size_t m = rates.size();
    double best = 1e300;
    auto consider = [&](double a, double b) {
      if (!(a >= 0) || !(b >= 0)) return;
      for (size_t i = 0; i < m; ++i)
        if (a * out.lambdas[i] + b < rates[i] - 1e-12) return;
      if (a + b < best) {
        best = a + b;
        c2 = a;
        c3 = b;
      }
    };
    double max_rate = *std::max_element(rates.begin(), rates.end());
    consider(0.0, std::max(0.0, max_rate));
    double slope_needed = 0;
    for (size_t i = 0; i < m; ++i)
      if (out.lambdas[i] > 0) slope_needed = std::max(slope_needed, rates[i] / out.lambdas[i]);
    consider(slope_needed, 0.0);
    for (size_t i = 0; i < m; ++i)
      for (size_t j = i + 1; j < m; ++j) {
        double dl = out.lambdas[i] - out.lambdas[j];
        if (std::abs(dl) < 1e-14) continue;
        double a = (rates[i] - rates[j]) / dl;
        double b = rates[i] - a * out.lambdas[i];
        consider(a, b);
      }
    return best < 1e300;
  };
  out.holds_literal = fit(out.rates_literal, out.c2_literal, out.c3_literal);
  out.holds_squared = fit(out.rates_squared, out.c2_squared, out.c3_squared);
  return out;
}

DnDerivativeReport dn_time_derivative_residual(const NestedFamily& family, double t,
                                               const MetricField& metric, double delta, int modes,
                                               int band) {
  if (!(delta > 0)) throw DomainError("delta must be positive");
  EvolutionOperators plus = pullback_dn_at(family, t + delta, metric);
  EvolutionOperators minus = pullback_dn_at(family, t - delta, metric);
  EvolutionOperators mid = pullback_dn_at(family, t, metric);

  Eigen::MatrixXd diff = (plus.A - minus.A) / (2 * delta);
  // A eta A - eta Delta + [X, A] + div X A - gamma A, with the eta-weighted
  // boundary Laplacian kept in divergence form (its first-order part is the
  // g(d eta, du) term of the derivation) and gamma = d_t log dvol_t; the
  // radial, cylinder and angular convergence tests pin every sign
  Eigen::MatrixXd weighted_delta = mid.calc.mass.cwiseInverse().asDiagonal() *
                                   weighted_loop_stiffness(mid.calc, mid.eta);
  Eigen::MatrixXd rhs = mid.A * Eigen::MatrixXd(mid.eta.asDiagonal()) * mid.A - weighted_delta +
                        (mid.X * mid.A - mid.A * mid.X) + mid.div_x.asDiagonal() * mid.A -
                        mid.gamma.asDiagonal() * mid.A;

  DnDerivativeReport rep;
  rep.delta = delta;
  int band_eff = band > 0 ? band : std::max(4, mid.calc.size() / 8);
  rep.op_residual = operator_norm_banded(mid.calc, (diff - rhs).eval(), 1.0, 0.0, band_eff);
  rep.op_scale = operator_norm_banded(mid.calc, diff, 1.0, 0.0, band_eff);
  rep.rel = rep.op_residual / std::max(rep.op_scale, 1e-30);

  const std::vector<int>& loop = family.base.loop_nodes(0);
  const int n = static_cast<int>(loop.size());
  for (int k = 1; k <= modes; ++k) {
    Eigen::VectorXd e(n);
    for (int i = 0; i < n; ++i) {
      double th = std::atan2(family.base.nodes(loop[static_cast<size_t>(i)], 1),
                             family.base.nodes(loop[static_cast<size_t>(i)], 0));
      e(i) = std::cos(k * th);
    }
    double ee = e.dot(mid.calc.mass.cwiseProduct(e));
    rep.mode_lhs.push_back(e.dot(mid.calc.mass.cwiseProduct(diff * e)) / ee);
    rep.mode_rhs.push_back(e.dot(mid.calc.mass.cwiseProduct(rhs * e)) / ee);
  }
  return rep;
}

SpdRayleighResult spd_rayleigh_inequality(int max_dim, int trials, unsigned long long seed,
                                          double slack) {
  if (max_dim < 1) throw DomainError("dimension must be at least one");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<int> dim_dist(1, max_dim);
  std::uniform_real_distribution<double> eig_dist(0.0, 2.0);
  SpdRayleighResult out;
  out.trials = trials;
  for (int trial = 0; trial < trials; ++trial) {
    int n = dim_dist(rng);
    Eigen::MatrixXd raw(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) raw(i, j) = gauss(rng);
    Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(raw).householderQ();
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d(i) = eig_dist(rng);
    Eigen::MatrixXd B = Q * d.asDiagonal() * Q.transpose();
    Eigen::VectorXd f(n);
    for (int i = 0; i < n; ++i) f(i) = gauss(rng);

    Eigen::VectorXd bf = B * f;
    Eigen::VectorXd bbf = B * bf;
    double lhs = bbf.dot(bf) * f.dot(f);
    double rhs = bf.dot(bf) * bf.dot(f);
    double scale = std::max({std::abs(lhs), std::abs(rhs), 1e-300});
    double margin = (lhs - rhs) / scale;
    out.worst_margin = std::min(out.worst_margin, margin);
    if (margin < -slack) ++out.violations;
  }
  return out;
}

}  // namespace dnlab
