// Acceptance suite: one pass/fail line per criterion, exit 1 on any failure.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <vector>

#include "dnlab/boundary_calculus.hpp"
#include "dnlab/dn_operators.hpp"
#include "dnlab/evolution.hpp"
#include "dnlab/geometry.hpp"
#include "dnlab/identities.hpp"
#include "dnlab/probe.hpp"
#include "dnlab/runge.hpp"

using namespace dnlab;

namespace {

constexpr double kPi = std::numbers::pi;
int failures = 0;

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void report(int criterion, const char* name, bool pass, const std::string& detail, double secs) {
  std::printf("%s criterion %2d: %-28s %s  [%.1fs]\n", pass ? "PASS" : "FAIL", criterion, name,
              detail.c_str(), secs);
  std::fflush(stdout);
  if (!pass) ++failures;
}

TriMesh lab_mesh(int resolution, double sigma1 = 0.65) {
  DiskSpec spec;
  spec.inclusion_radius = 0.3;
  spec.sigma1_radius = sigma1;
  spec.resolution = resolution;
  return build_disk_with_inclusion(spec);
}

Eigen::VectorXd loop_mode(const TriMesh& mesh, int k) {
  const auto& nodes = mesh.loop_nodes(0);
  Eigen::VectorXd f(static_cast<Eigen::Index>(nodes.size()));
  for (size_t i = 0; i < nodes.size(); ++i) {
    double th = std::atan2(mesh.nodes(nodes[i], 1), mesh.nodes(nodes[i], 0));
    f(static_cast<Eigen::Index>(i)) = std::cos(k * th);
  }
  return f;
}

Eigen::VectorXd random_vec(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

// 1. Disk DN spectrum at 256 boundary nodes; halving at doubled resolution.
void criterion_1() {
  Timer timer;
  auto mode_errors = [](int n) {
    TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, n);
    MetricField g = MetricField::euclidean(disk.num_triangles());
    StiffnessSystem sys(disk, g);
    DNOperator dn = sys.dn_map();
    BoundaryCalculus bc = curve_calculus(disk, g, Curve::OuterBoundary);
    std::vector<double> errs;
    for (int k = 1; k <= 8; ++k) {
      Eigen::VectorXd f = loop_mode(disk, k);
      errs.push_back(std::abs(dn.pairing(f, f) / l2_inner(bc, f, f) - k) / k);
    }
    return errs;
  };
  std::vector<double> e256 = mode_errors(256), e512 = mode_errors(512);
  double worst = *std::max_element(e256.begin(), e256.end());
  bool halves = e512[3] <= 0.5 * e256[3];
  double secs = timer.seconds();
  bool pass = worst <= 0.02 && halves && secs <= 10.0;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "max mode error %.2e, k=4 ratio %.2f", worst,
                e512[3] / e256[3]);
  report(1, "disk DN spectrum", pass, detail, secs);
}

// 2. Exact-algebra identity suite at 1e-9 over 50 random inputs, two
// resolutions.
void criterion_2() {
  Timer timer;
  std::mt19937_64 rng(2024);
  double worst = 0, worst_pairing = 0;
  for (int n : {32, 64}) {
    TriMesh mesh = lab_mesh(n);
    MetricField g = MetricField::euclidean(mesh.num_triangles());
    MetricField h = g;
    Eigen::Matrix2d anis;
    anis << 2, 0, 0, 1;
    for (int t = 0; t < mesh.num_triangles(); ++t)
      if (mesh.region[static_cast<size_t>(t)] == Region::Inclusion) h.set_tensor(t, anis);
    IdentityLab lab(mesh, g, h);
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::VectorXd u = random_vec(lab.outer_size(), rng);
      Eigen::VectorXd v = random_vec(lab.outer_size(), rng);
      worst = std::max(worst, lab.difference_formula(u, v).rel_residual);
      worst = std::max(worst, lab.transmission(u).rel_residual);
      worst = std::max(worst, lab.comparison_map(v).rel_residual);
      worst_pairing = std::max(
          worst_pairing, lab.adjoint_pairing_residual(u, random_vec(lab.sigma_size(), rng)));
    }
    worst = std::max(worst, lab.adjoint_formula().rel_residual);
  }
  double secs = timer.seconds();
  bool pass = worst <= 1e-9 && worst_pairing <= 1e-9 && secs <= 60.0;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "max rel residual %.2e, pairing %.2e", worst, worst_pairing);
  report(2, "exact-algebra identities", pass, detail, secs);
}

// 3. 2D conformal invariance of the DN map and conformal-direction rejection.
void criterion_3() {
  Timer timer;
  TriMesh mesh = lab_mesh(48);
  MetricField g = MetricField::euclidean(mesh.num_triangles());
  std::mt19937_64 rng(3031);
  std::uniform_real_distribution<double> cdist(0.3, 4.0);
  MetricField cg = g;
  for (int t = 0; t < mesh.num_triangles(); ++t) cg.coeffs.row(t) *= cdist(rng);

  StiffnessSystem sys_g(mesh, g), sys_cg(mesh, cg);
  DNOperator dn_g = sys_g.dn_map(), dn_cg = sys_cg.dn_map();
  double diff = (dn_g.form - dn_cg.form).cwiseAbs().maxCoeff() /
                dn_g.form.cwiseAbs().maxCoeff();

  double rejected_norm = 1;
  bool rejected = false;
  try {
    SweepOptions opts;
    stability_sweep(mesh, g, Eigen::Matrix2d::Identity(), {0.2, 0.5}, opts);
  } catch (const ConformalRejection& e) {
    rejected = true;
    rejected_norm = e.measured_norm;
  }
  double secs = timer.seconds();
  bool pass = diff <= 1e-10 && rejected && rejected_norm <= 1e-10;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "dn diff %.2e, rejected norm %.2e", diff, rejected_norm);
  report(3, "2D conformal invariance", pass, detail, secs);
}

// 4. SPD Rayleigh inequality, 1e4 random trials up to dimension 50.
void criterion_4() {
  Timer timer;
  SpdRayleighResult res = spd_rayleigh_inequality(50, 10000, 4041, 1e-12);
  char detail[160];
  std::snprintf(detail, sizeof(detail), "%d violations in %d trials, worst margin %.1e",
                res.violations, res.trials, res.worst_margin);
  report(4, "SPD Rayleigh inequality", res.violations == 0, detail, timer.seconds());
}

// 5. DN time-derivative formula on the uniform-shrink disk family.
void criterion_5() {
  Timer timer;
  TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, 256);
  MetricField g = MetricField::euclidean(disk.num_triangles());
  NestedFamily fam = nested_family(disk, 4, CollarProfile::radial_shrink(0.5));

  DnDerivativeReport modes = dn_time_derivative_residual(fam, 0.4, g, 0.02, 8);
  double radius = 1 - 0.5 * 0.4;
  double worst_mode = 0;
  for (int k = 1; k <= 8; ++k) {
    double exact = 0.5 * k / (radius * radius);
    worst_mode = std::max(worst_mode, std::abs(modes.mode_lhs[static_cast<size_t>(k - 1)] / exact - 1));
    worst_mode = std::max(worst_mode, std::abs(modes.mode_rhs[static_cast<size_t>(k - 1)] / exact - 1));
  }

  std::vector<double> ladder;
  for (double delta : {0.3, 0.15, 0.075, 0.0375, 0.01875})
    ladder.push_back(dn_time_derivative_residual(fam, 0.4, g, delta, 4, 8).op_residual);
  bool ladder_ok = ladder[1] * 1.5 <= ladder[0];
  for (size_t i = 1; i + 1 < ladder.size(); ++i) {
    bool dropped = ladder[i + 1] * 1.5 <= ladder[i];
    bool floored = ladder[i] <= 2.0 * ladder.back();
    if (!dropped && !floored) ladder_ok = false;
  }
  bool pass = worst_mode <= 0.05 && ladder_ok;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "max mode error %.3f, first ladder drop %.2f", worst_mode,
                ladder[0] / ladder[1]);
  report(5, "DN time-derivative formula", pass, detail, timer.seconds());
}

// 6. Tautological evolution residual halves under time-step halving.
void criterion_6() {
  Timer timer;
  TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, 128);
  MetricField g = MetricField::euclidean(disk.num_triangles());
  CollarProfile prof = CollarProfile::radial_shrink(0.25, 0.125);
  Eigen::VectorXd f = loop_mode(disk, 1);
  double coarse = EvolutionLab(nested_family(disk, 4, prof), g).tautological_residual(f).max_residual;
  double fine = EvolutionLab(nested_family(disk, 8, prof), g).tautological_residual(f).max_residual;
  double ratio = fine / coarse;
  bool pass = ratio > 0.35 && ratio < 0.65;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "residual ratio %.3f (coarse %.2e)", ratio, coarse);
  report(6, "tautological evolution", pass, detail, timer.seconds());
}

// 7. Recurrence sandwich over 1e5 steps with verified li round trips.
void criterion_7() {
  Timer timer;
  LiEvaluator li;
  double worst_roundtrip = 0;
  for (double t = 2.001; t <= 1e6; t *= 3.1)
    worst_roundtrip = std::max(worst_roundtrip, std::abs(li.li_inv(li.li(t)) - t) / t);
  SandwichReport rep = recurrence_sandwich_check(4.0, 0.1, 100000, li);
  double secs = timer.seconds();
  bool pass = rep.ok && worst_roundtrip <= 1e-8 && secs <= 30.0;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "margins %.1e / %.2f, round trip %.1e",
                rep.min_lower_margin, rep.min_upper_margin, worst_roundtrip);
  report(7, "recurrence sandwich", pass, detail, secs);
}

// 8. Runge scheme self-consistency with the fitted K.
void criterion_8() {
  Timer timer;
  TriMesh mesh = lab_mesh(32);
  MetricField g = MetricField::euclidean(mesh.num_triangles());
  CylinderExtension ext = attach_cylinder(mesh, g, 1.5, 24);
  AdjointLowerBoundFit kfit = adjoint_lower_bound_experiment(ext.mesh, ext.metric);

  RungeOperators ops(mesh, g);
  LiEvaluator li;
  FitConstants constants = kfit.constants;
  constants.C = 0.5;
  RungeConfig cfg;
  cfg.eps = 0.2;
  cfg.max_iterations = 1000;
  Eigen::VectorXd f = ops.inner_calculus().eigenvectors.col(1) +
                      0.5 * ops.inner_calculus().eigenvectors.col(3);
  RungeTrace tr = runge_iterate(f, constants, ops, cfg, li);
  bool pass = kfit.violations == 0 && tr.converged && tr.monotone && tr.envelope_holds &&
              tr.residual.back() <= 0.2;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "K %.2f, %zu steps, residual %.3f, envelope %s",
                constants.K, tr.residual.size(), tr.residual.back(),
                tr.envelope_holds ? "holds" : "violated");
  report(8, "Runge self-consistency", pass, detail, timer.seconds());
}

// 9. Probe ratio ladder toward |xi|_h / |xi|_g = 1/2.
void criterion_9() {
  Timer timer;
  auto ratio_at = [](double xi_r0, double r0, int res) {
    TriMesh mesh = lab_mesh(res);
    MetricField g = MetricField::euclidean(mesh.num_triangles());
    MetricField h = MetricField::constant(mesh.num_triangles(),
                                          (Eigen::Matrix2d() << 4, 0, 0, 1).finished());
    ProbeSpec spec;
    spec.theta = -kPi / 2;
    spec.r0 = r0;
    spec.xi = {xi_r0 / r0, 0.0};
    return contrast_lower_bound_estimate(mesh, g, h, spec).ratio;
  };
  double r0 = 0.45, prev_dev = 1e300, final_dev = 1;
  int res = 512;
  bool monotone = true;
  for (double rung : {10.0, 20.0, 40.0}) {
    double extrap = (4 * ratio_at(rung, r0, res) - ratio_at(rung, r0, res / 2)) / 3;
    double dev = std::abs(extrap - 0.5) / 0.5;
    if (dev >= prev_dev) monotone = false;
    prev_dev = dev;
    final_dev = dev;
    r0 /= std::sqrt(2.0);
    res *= 2;
  }
  bool pass = final_dev <= 0.10 && monotone;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "final deviation %.4f, monotone %s", final_dev,
                monotone ? "yes" : "no");
  report(9, "probe quadratic-form ratio", pass, detail, timer.seconds());
}

// 10. Stability curve: monotone sweep, synthetic fit recovery, envelope.
void criterion_10() {
  Timer timer;

  StabilityCurve synthetic;
  for (double c : {0.4, 0.5, 0.65, 0.8, 1.0}) {
    StabilityPoint pt;
    pt.contrast = c;
    pt.opnorm = std::exp(-std::pow(c, -2.0));
    synthetic.points.push_back(pt);
  }
  LogStabilityFit sfit = log_stability_fit(synthetic);
  bool synth_ok = std::abs(sfit.c1 - 1.0) <= 0.01 && std::abs(sfit.c2 - 2.0) <= 0.02;

  TriMesh mesh = lab_mesh(64, 0.36);
  MetricField g = MetricField::euclidean(mesh.num_triangles());
  Eigen::Matrix2d delta;
  delta << 1, 0, 0, 0;
  SweepOptions opts;
  opts.run_pipeline = true;
  opts.probe.theta = -kPi / 2;
  opts.probe.r0 = 0.25;
  opts.probe.xi = {8.0, 0.0};
  opts.probe.min_sharpness = 0.5;
  opts.constants.K = 0.3;
  opts.constants.C = 0.5;
  opts.runge.max_iterations = 400;
  StabilityCurve curve = stability_sweep(mesh, g, delta, {0.05, 0.1, 0.2, 0.4, 0.8}, opts);

  bool increasing = true;
  for (size_t i = 1; i < curve.points.size(); ++i)
    if (curve.points[i].opnorm <= curve.points[i - 1].opnorm - 1e-12) increasing = false;
  LogStabilityFit fit = log_stability_fit(curve);

  int sign = 0;
  bool pairing_ok = true;
  double c_fit = 1e300;
  for (const auto& pt : curve.points) {
    if (!pt.pipeline_ran) continue;
    int s = pt.pairing > 0 ? 1 : (pt.pairing < 0 ? -1 : 0);
    if (sign == 0) sign = s;
    if (s == 0 || s != sign) pairing_ok = false;
    c_fit = std::min(c_fit, std::abs(pt.pairing) / pt.contrast);
  }
  pairing_ok = pairing_ok && c_fit > 0 && c_fit < 1e300;

  double secs = timer.seconds();
  bool pass = synth_ok && increasing && fit.inequality_holds && pairing_ok && secs <= 600.0;
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "synthetic (%.3f, %.3f), monotone %s, envelope %s, pairing C %.2e", sfit.c1,
                sfit.c2, increasing ? "yes" : "no", fit.inequality_holds ? "holds" : "violated",
                c_fit);
  report(10, "stability curve", pass, detail, secs);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
