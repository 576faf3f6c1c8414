#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "dnlab/evolution.hpp"
#include "dnlab/geometry.hpp"

using namespace dnlab;

namespace {

Eigen::VectorXd loop_mode(const TriMesh& mesh, int k) {
  const auto& nodes = mesh.loop_nodes(0);
  Eigen::VectorXd f(static_cast<Eigen::Index>(nodes.size()));
  for (size_t i = 0; i < nodes.size(); ++i) {
    double th = std::atan2(mesh.nodes(nodes[i], 1), mesh.nodes(nodes[i], 0));
    f(static_cast<Eigen::Index>(i)) = std::cos(k * th);
  }
  return f;
}

}  // namespace

TEST_CASE("pullback at level zero is the base DN map") {
  TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, 48);
  MetricField g = MetricField::euclidean(disk.num_triangles());
  NestedFamily fam = nested_family(disk, 4, CollarProfile::radial_shrink(0.5));
  EvolutionOperators ops0 = pullback_dn(fam, 0, g);
  StiffnessSystem sys(disk, g);
  Eigen::MatrixXd direct = sys.dn_map().as_operator();
  CHECK((ops0.A - direct).cwiseAbs().maxCoeff() < 1e-12 * direct.cwiseAbs().maxCoeff());
}

TEST_CASE("uniform shrink scales the pulled-back DN map exactly") {
  // pure scaling morph: stiffness is scale-invariant in 2D, mass scales by s
  TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, 48);
  MetricField g = MetricField::euclidean(disk.num_triangles());
  NestedFamily fam = nested_family(disk, 4, CollarProfile::radial_shrink(0.5));
  EvolutionOperators ops0 = pullback_dn(fam, 0, g);
  for (int level : {1, 2, 4}) {
    double s = 1 - 0.5 * fam.times[static_cast<size_t>(level)];
    EvolutionOperators ops = pullback_dn(fam, level, g);
    CHECK((s * ops.A - ops0.A).cwiseAbs().maxCoeff() < 1e-10 * ops0.A.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("level operator structure") {
  TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, 48);
  MetricField g = MetricField::euclidean(disk.num_triangles());
  NestedFamily fam =
      nested_family(disk, 4, CollarProfile::tentacle(0.0, 0.55, 0.4, 0.8, 0.15, 0.3));
  EvolutionOperators ops = pullback_dn(fam, 2, g);
  const int n = ops.calc.size();

  // B = sqrt(eta) A sqrt(eta) and S = B - eta A, exactly
  Eigen::VectorXd sq = ops.eta.cwiseSqrt();
  CHECK((ops.B - Eigen::MatrixXd(sq.asDiagonal() * ops.A * sq.asDiagonal())).cwiseAbs().maxCoeff() <
        1e-12 * ops.B.cwiseAbs().maxCoeff());
  CHECK((ops.B - ops.S - Eigen::MatrixXd(ops.eta.asDiagonal() * ops.A)).cwiseAbs().maxCoeff() <
        1e-12 * ops.B.cwiseAbs().maxCoeff());

  // B symmetric in the level mass inner product, PSD, one-dimensional kernel
  Eigen::MatrixXd mb = ops.calc.mass.asDiagonal() * ops.B;
  CHECK((mb - mb.transpose()).cwiseAbs().maxCoeff() < 1e-10 * mb.cwiseAbs().maxCoeff());
  Eigen::VectorXd msqrt = ops.calc.mass.cwiseSqrt();
  Eigen::MatrixXd sym = msqrt.asDiagonal() * ops.B * msqrt.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (sym + sym.transpose()));
  CHECK(eig.eigenvalues()(0) > -1e-10);
  CHECK(eig.eigenvalues()(1) > 1e-6);  // kernel is one-dimensional
}

TEST_CASE("tautological evolution") {
  TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, 128);
  MetricField g = MetricField::euclidean(disk.num_triangles());

  SUBCASE("constants are transported exactly") {
    NestedFamily fam = nested_family(disk, 4, CollarProfile::radial_shrink(0.5));
    EvolutionLab lab(fam, g);
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(disk.loop_nodes(0).size()));
    TautologicalResidual res = lab.tautological_residual(ones);
    CHECK(res.max_residual < 1e-10);
  }
  SUBCASE("residual halves when the time step halves on a curved profile") {
    // quadratic-in-t shrink: the forward difference error is O(dt) with a
    // nonzero second time derivative
    CollarProfile prof = CollarProfile::radial_shrink(0.25, 0.125);
    Eigen::VectorXd f = loop_mode(disk, 1);
    NestedFamily coarse = nested_family(disk, 4, prof);
    NestedFamily fine = nested_family(disk, 8, prof);
    double r_coarse = EvolutionLab(coarse, g).tautological_residual(f).max_residual;
    double r_fine = EvolutionLab(fine, g).tautological_residual(f).max_residual;
    double ratio = r_fine / r_coarse;
    CHECK(ratio > 0.35);
    CHECK(ratio < 0.65);
  }
  SUBCASE("residual decreases under simultaneous refinement") {
    CollarProfile prof = CollarProfile::radial_shrink(0.25, 0.125);
    TriMesh coarse_mesh = build_disk_with_inclusion(1.0, {0, 0}, 0.0, 64);
    MetricField gc = MetricField::euclidean(coarse_mesh.num_triangles());
    EvolutionLab coarse(nested_family(coarse_mesh, 4, prof), gc);
    EvolutionLab fine(nested_family(disk, 8, prof), g);
    std::mt19937_64 rng(211);
    std::normal_distribution<double> dist;
    int improved = 0;
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(coarse_mesh.loop_nodes(0).size()));
      for (int i = 0; i < 6; ++i) a(i) = dist(rng);
      BoundaryCalculus bcc = coarse.level(0).calc;
      Eigen::VectorXd fc = bcc.synthesize(a);
      // same low-mode content on the fine loop
      Eigen::VectorXd af = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(disk.loop_nodes(0).size()));
      af.head(6) = a.head(6);
      Eigen::VectorXd ff = fine.level(0).calc.synthesize(af);
      if (fine.tautological_residual(ff).max_residual <
          coarse.tautological_residual(fc).max_residual)
        ++improved;
    }
    CHECK(improved >= 8);
  }
}

TEST_CASE("DN time derivative formula") {
  TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, 128);
  MetricField g = MetricField::euclidean(disk.num_triangles());
  NestedFamily fam = nested_family(disk, 4, CollarProfile::radial_shrink(0.5));

  SUBCASE("uniform shrink: mode-wise values match the analytic derivative") {
    double t = 0.4, radius = 1 - 0.5 * t;
    DnDerivativeReport rep = dn_time_derivative_residual(fam, t, g, 0.02, 6);
    for (int k = 1; k <= 6; ++k) {
      double exact = 0.5 * k / (radius * radius);  // -k r'/r^2 with r' = -1/2
      CHECK(rep.mode_lhs[static_cast<size_t>(k - 1)] == doctest::Approx(exact).epsilon(0.02));
      CHECK(rep.mode_rhs[static_cast<size_t>(k - 1)] == doctest::Approx(exact).epsilon(0.05));
    }
  }
  SUBCASE("residual drops at least 1.5x when delta halves, then floors") {
    // low-frequency band: the delta^2 trend is visible above the mesh floor
    std::vector<double> residuals;
    for (double delta : {0.3, 0.15, 0.075})
      residuals.push_back(dn_time_derivative_residual(fam, 0.4, g, delta, 4, 8).op_residual);
    CHECK(residuals[1] * 1.5 <= residuals[0]);
    CHECK(residuals[2] * 1.5 <= residuals[1]);
  }
  SUBCASE("near-static scaled profile sends both sides to zero") {
    NestedFamily slow = nested_family(disk, 4, CollarProfile::radial_shrink(0.02));
    DnDerivativeReport rep = dn_time_derivative_residual(slow, 0.4, g, 0.05, 4);
    DnDerivativeReport ref = dn_time_derivative_residual(fam, 0.4, g, 0.05, 4);
    CHECK(rep.op_scale < 0.1 * ref.op_scale);
    CHECK(rep.op_residual < 0.1 * ref.op_residual + 1e-9);
  }
  SUBCASE("angular profile exercises the derivation and divergence terms") {
    // fixed low band: the identity is exact up to the spatial floor, which
    // shrinks under mesh refinement
    CollarProfile prof = CollarProfile::tentacle(0.0, 0.55, 0.4, 0.9, 0.15, 0.0);
    std::vector<double> floors;
    for (int n : {64, 128}) {
      TriMesh mesh = build_disk_with_inclusion(1.0, {0, 0}, 0.0, n);
      MetricField gm = MetricField::euclidean(mesh.num_triangles());
      NestedFamily bent = nested_family(mesh, 4, prof);
      floors.push_back(dn_time_derivative_residual(bent, 0.5, gm, 0.0125, 4, 8).rel);
    }
    CHECK(floors[1] < 0.5 * floors[0]);
    CHECK(floors[1] < 0.01);
  }
}

TEST_CASE("rayleigh trace") {
  TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, 64);
  MetricField g = MetricField::euclidean(disk.num_triangles());
  NestedFamily fam = nested_family(disk, 8, CollarProfile::radial_shrink(0.5));
  EvolutionLab lab(fam, g);

  SUBCASE("trace stays finite with a valid Gronwall fit") {
    RayleighTrace trace = lab.rayleigh_trace(loop_mode(disk, 2));
    CHECK(trace.bound_holds);
    CHECK(trace.c1 > 0);
    CHECK(trace.c2 >= 0);
    for (double l : trace.lambda) CHECK(l >= 0);
    for (double v : trace.f_norm2) CHECK(v > 0);
  }
  SUBCASE("frozen B, single eigenvector: lambda constant; random f: non-increasing") {
    const EvolutionOperators& op = lab.level(0);
    const int n = op.calc.size();
    Eigen::VectorXd msqrt = op.calc.mass.cwiseSqrt();
    Eigen::MatrixXd sym = msqrt.asDiagonal() * op.B * msqrt.cwiseInverse().asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (sym + sym.transpose()));
    auto lambda_of = [&](const Eigen::VectorXd& f) {
      Eigen::VectorXd bf = op.B * f;
      return bf.dot(op.calc.mass.cwiseProduct(bf)) / f.dot(op.calc.mass.cwiseProduct(f));
    };
    auto step = [&](const Eigen::VectorXd& f, double dt) {
      Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n, n) + dt * op.B;
      return Eigen::VectorXd(lhs.partialPivLu().solve(f));
    };

    Eigen::VectorXd mode = msqrt.cwiseInverse().cwiseProduct(eig.eigenvectors().col(1));
    double lam0 = lambda_of(mode);
    Eigen::VectorXd f = mode;
    for (int k = 0; k < 5; ++k) {
      f = step(f, 0.1);
      CHECK(lambda_of(f) == doctest::Approx(lam0).epsilon(1e-8));
    }

    std::mt19937_64 rng(223);
    std::normal_distribution<double> dist;
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::VectorXd r(n);
      for (int i = 0; i < n; ++i) r(i) = dist(rng);
      double prev = lambda_of(r);
      Eigen::VectorXd ft = r;
      for (int k = 0; k < 8; ++k) {
        ft = step(ft, 0.1);
        double cur = lambda_of(ft);
        CHECK(cur <= prev * (1 + 1e-9));
        prev = cur;
      }
    }
  }
  SUBCASE("fitted constants are uniform across random data") {
    std::mt19937_64 rng(227);
    std::normal_distribution<double> dist;
    std::vector<double> c1s, c2s;
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(lab.level(0).calc.size());
      for (int i = 1; i < 8; ++i) a(i) = dist(rng);
      RayleighTrace tr = lab.rayleigh_trace(lab.level(0).calc.synthesize(a));
      CHECK(tr.bound_holds);
      c1s.push_back(tr.c1);
      c2s.push_back(tr.c2);
    }
    // one pair of constants works for the whole set: apply the worst fit to all
    double c1 = *std::max_element(c1s.begin(), c1s.end());
    double c2 = *std::max_element(c2s.begin(), c2s.end());
    CHECK(std::isfinite(c1));
    CHECK(std::isfinite(c2));
  }
}

TEST_CASE("explicit stepping blow-up carries a step-size hint") {
  TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, 128);
  MetricField g = MetricField::euclidean(disk.num_triangles());
  NestedFamily fam = nested_family(disk, 2, CollarProfile::radial_shrink(0.5));
  EvolutionLab lab(fam, g);
  // dt = 1/2 against B eigenvalues near the mesh frequency: explicit is unstable
  Eigen::VectorXd f = loop_mode(disk, 55);
  CHECK_THROWS_AS(lab.evolve(f, false), StepSizeError);
  CHECK_NOTHROW(lab.evolve(f, true));
}

TEST_CASE("lower bound fit") {
  TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, 64);
  MetricField g = MetricField::euclidean(disk.num_triangles());
  NestedFamily fam = nested_family(disk, 8, CollarProfile::radial_shrink(0.5));
  EvolutionLab lab(fam, g);

  SUBCASE("single low mode decays at its B-eigenvalue rate") {
    Eigen::VectorXd f = loop_mode(disk, 1);
    LowerBoundFit fit = lab.lower_bound_fit({f});
    CHECK(fit.holds_literal);
    CHECK(fit.holds_squared);
    // eta = 1/2: B-eigenvalue of mode 1 at level 0 is about 1/2; the H^(1/2)
    // norm then decays at roughly twice that rate, which the fitted envelope
    // must cover
    double rate = fit.rates_squared.front();
    CHECK(fit.c2_squared * fit.lambdas.front() + fit.c3_squared >= rate - 1e-9);
    CHECK(rate > 0.5);
  }
  SUBCASE("constants are uniform across matched-lambda data") {
    std::mt19937_64 rng(229);
    std::normal_distribution<double> dist;
    std::vector<Eigen::VectorXd> fs;
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(lab.level(0).calc.size());
      for (int i = 1; i < 6; ++i) a(i) = dist(rng);
      fs.push_back(lab.level(0).calc.synthesize(a));
    }
    LowerBoundFit fit = lab.lower_bound_fit(fs);
    CHECK(fit.holds_literal);
    CHECK(fit.holds_squared);
    CHECK(std::isfinite(fit.c2_squared));
    CHECK(std::isfinite(fit.c3_squared));
  }
}

TEST_CASE("norm equivalence of the B form below the mesh frequency") {
  TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, 64);
  MetricField g = MetricField::euclidean(disk.num_triangles());
  NestedFamily fam = nested_family(disk, 4, CollarProfile::radial_shrink(0.5));
  EvolutionLab lab(fam, g);
  std::mt19937_64 rng(233);
  std::normal_distribution<double> dist;

  double lo = 1e300, hi = 0;
  for (int level = 0; level < lab.num_levels(); ++level) {
    const EvolutionOperators& op = lab.level(level);
    const int band = op.calc.size() / 8;
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(op.calc.size());
      for (int i = 1; i < band; ++i) a(i) = dist(rng);
      Eigen::VectorXd f = op.calc.synthesize(a);
      double bff = f.dot(op.calc.mass.cwiseProduct(op.B * f));
      double nh = hs_norm(op.calc, f, 0.5), n0 = hs_norm(op.calc, f, 0.0);
      double denom = nh * nh - n0 * n0;  // C = 1 strips the constant shift
      if (denom <= 0) continue;
      double ratio = bff / denom;
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
  }
  CHECK(lo > 0);
  CHECK(hi / lo < 10.0);  // a fixed equivalence band across all levels
}

TEST_CASE("spd rayleigh inequality") {
  SUBCASE("scalars and the identity give equality") {
    SpdRayleighResult res = spd_rayleigh_inequality(1, 200, 7);
    CHECK(res.violations == 0);
    CHECK(res.worst_margin > -1e-14);
  }
  SUBCASE("random PSD matrices up to dimension 50") {
    SpdRayleighResult res = spd_rayleigh_inequality(50, 2000, 11);
    CHECK(res.violations == 0);
  }
}
