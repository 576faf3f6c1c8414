#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "dnlab/boundary_calculus.hpp"
#include "dnlab/geometry.hpp"

using namespace dnlab;

namespace {

constexpr double kPi = std::numbers::pi;

BoundaryCalculus disk_calculus(int resolution) {
  TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, resolution);
  return boundary_calculus(disk, MetricField::euclidean(disk.num_triangles()), 0);
}

Eigen::VectorXd random_vec(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

}  // namespace

TEST_CASE("eigendecomposition basics") {
  BoundaryCalculus bc = disk_calculus(64);
  CHECK(bc.eigenvalues(0) == doctest::Approx(0.0).epsilon(1e-12));
  for (int i = 1; i < bc.size(); ++i) CHECK(bc.eigenvalues(i) >= bc.eigenvalues(i - 1));
  // constant eigenvector spans the kernel
  Eigen::VectorXd e0 = bc.eigenvectors.col(0);
  CHECK((e0.array() - e0(0)).abs().maxCoeff() < 1e-10);
  // mass-orthonormal
  Eigen::MatrixXd gram = bc.eigenvectors.transpose() * bc.mass.asDiagonal() * bc.eigenvectors;
  CHECK((gram - Eigen::MatrixXd::Identity(bc.size(), bc.size())).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("hs_norm") {
  BoundaryCalculus bc = disk_calculus(64);
  std::mt19937_64 rng(7);

  SUBCASE("s = 0 is the L2 norm") {
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::VectorXd f = random_vec(bc.size(), rng);
      double l2 = std::sqrt(f.dot(bc.mass.cwiseProduct(f)));
      CHECK(hs_norm(bc, f, 0.0) == doctest::Approx(l2).epsilon(1e-10));
    }
  }
  SUBCASE("constants have norm sqrt(volume) for every s") {
    Eigen::VectorXd one = Eigen::VectorXd::Ones(bc.size());
    double expected = std::sqrt(bc.volume());
    for (double s : {-2.0, -0.5, 0.0, 0.5, 1.0, 2.0})
      CHECK(hs_norm(bc, one, s) == doctest::Approx(expected).epsilon(1e-10));
    // the discrete circle volume approximates 2*pi
    CHECK(hs_norm(bc, one, 1.0) == doctest::Approx(std::sqrt(2 * kPi)).epsilon(1e-3));
  }
  SUBCASE("log-convexity at s = 1/2, brute-force sums") {
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::VectorXd f = random_vec(bc.size(), rng);
      Eigen::VectorXd a = bc.coefficients(f);
      double n0 = 0, nh = 0, n1 = 0;
      for (int i = 0; i < a.size(); ++i) {
        double w = 1.0 + bc.eigenvalues(i);
        n0 += a(i) * a(i);
        nh += std::sqrt(w) * a(i) * a(i);
        n1 += w * a(i) * a(i);
      }
      CHECK(hs_norm(bc, f, 0.5) == doctest::Approx(std::sqrt(nh)).epsilon(1e-10));
      CHECK(nh <= std::sqrt(n0 * n1) * (1 + 1e-12));
    }
  }
  SUBCASE("exponent range is enforced") {
    Eigen::VectorXd f = Eigen::VectorXd::Ones(bc.size());
    CHECK_THROWS_AS(hs_norm(bc, f, 2.5), DomainError);
    CHECK_THROWS_AS(hs_norm(bc, Eigen::VectorXd::Ones(3), 1.0), DimensionError);
  }
}

TEST_CASE("interpolation inequality over random coefficient vectors") {
  BoundaryCalculus bc = disk_calculus(32);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::VectorXd f = bc.synthesize(random_vec(bc.size(), rng));
    std::uniform_real_distribution<double> sdist(-2.0, 2.0);
    double s = sdist(rng), t = sdist(rng);
    double mid = hs_norm(bc, f, (s + t) / 2);
    CHECK(mid * mid <= hs_norm(bc, f, s) * hs_norm(bc, f, t) * (1 + 1e-10));
  }
}

TEST_CASE("duality of negative norms") {
  BoundaryCalculus bc = disk_calculus(16);  // 16-node loop: brute-force friendly
  REQUIRE(bc.size() <= 64);
  std::mt19937_64 rng(3);
  for (double s : {0.5, 1.0, 2.0}) {
    Eigen::VectorXd f = random_vec(bc.size(), rng);
    Eigen::VectorXd a = bc.coefficients(f);
    // maximizer g* = sum (1+lambda)^(-s) a_i e_i attains the sup exactly
    Eigen::VectorXd wa(a.size());
    for (int i = 0; i < a.size(); ++i) wa(i) = std::pow(1.0 + bc.eigenvalues(i), -s) * a(i);
    Eigen::VectorXd gstar = bc.synthesize(wa);
    double attained = l2_inner(bc, f, gstar) / hs_norm(bc, gstar, s);
    CHECK(attained == doctest::Approx(hs_norm(bc, f, -s)).epsilon(1e-10));
    for (int trial = 0; trial < 200; ++trial) {
      Eigen::VectorXd g = random_vec(bc.size(), rng);
      CHECK(l2_inner(bc, f, g) / hs_norm(bc, g, s) <= hs_norm(bc, f, -s) * (1 + 1e-10));
    }
  }
}

TEST_CASE("frac_power_apply") {
  BoundaryCalculus bc = disk_calculus(64);
  std::mt19937_64 rng(5);

  SUBCASE("s = 0 is the identity") {
    Eigen::VectorXd f = random_vec(bc.size(), rng);
    CHECK((frac_power_apply(bc, f, 0.0) - f).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("eigenvectors scale by (1+lambda)^s") {
    for (int i : {1, 5, 20}) {
      Eigen::VectorXd e = bc.eigenvectors.col(i);
      Eigen::VectorXd out = frac_power_apply(bc, e, 1.0);
      CHECK((out - (1.0 + bc.eigenvalues(i)) * e).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
  SUBCASE("group property") {
    for (double s : {0.5, 1.0, 1.7}) {
      Eigen::VectorXd f = random_vec(bc.size(), rng);
      Eigen::VectorXd back = frac_power_apply(bc, frac_power_apply(bc, f, s), -s);
      CHECK((back - f).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
  SUBCASE("zero-annihilated variant kills constants") {
    Eigen::VectorXd one = Eigen::VectorXd::Ones(bc.size());
    Eigen::VectorXd out = frac_power_apply(bc, one, 0.5, SpectralShift::LaplacianZeroAnnihilated);
    CHECK(out.cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("operator_norm") {
  BoundaryCalculus bc = disk_calculus(32);
  const int n = bc.size();

  SUBCASE("identity and zero") {
    CHECK(operator_norm(bc, Eigen::MatrixXd::Identity(n, n), 0.7, 0.7) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(operator_norm(bc, Eigen::MatrixXd::Zero(n, n), 1.0, -1.0) == doctest::Approx(0.0));
  }
  SUBCASE("boundary Laplacian from H^1 to H^-1") {
    Eigen::MatrixXd delta = bc.mass.cwiseInverse().asDiagonal() * bc.stiffness;
    double expected = 0;
    for (int i = 0; i < n; ++i)
      expected = std::max(expected, bc.eigenvalues(i) / (1.0 + bc.eigenvalues(i)));
    CHECK(operator_norm(bc, delta, 1.0, -1.0) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(operator_norm(bc, delta, 1.0, -1.0) < 1.0);
  }
  SUBCASE("submultiplicative across scales") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::MatrixXd A(n, n), B(n, n);
      std::normal_distribution<double> dist;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          A(i, j) = dist(rng);
          B(i, j) = dist(rng);
        }
      double s = -0.5, t = 0.5, u = 1.0;
      double lhs = operator_norm(bc, (A * B).eval(), s, u);
      double rhs = operator_norm(bc, A, t, u) * operator_norm(bc, B, s, t);
      CHECK(lhs <= rhs * (1 + 1e-9));
    }
  }
}

TEST_CASE("lipschitz_approximation") {
  BoundaryCalculus bc = disk_calculus(64);
  std::mt19937_64 rng(17);

  SUBCASE("large eps gives the zero function") {
    Eigen::VectorXd f = random_vec(bc.size(), rng);
    LipschitzApproximation la = lipschitz_approximation(bc, f, hs_norm(bc, f, 0.5) * 1.001);
    CHECK(la.f.cwiseAbs().maxCoeff() == 0.0);
    CHECK(la.w1inf == 0.0);
  }
  SUBCASE("a single retained eigenvector comes back unchanged") {
    Eigen::VectorXd e = bc.eigenvectors.col(3);
    LipschitzApproximation la = lipschitz_approximation(bc, e, 0.5 * hs_norm(bc, e, 0.5));
    CHECK((la.f - e).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("truncation meets the tolerance with minimal cutoff") {
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd f = random_vec(bc.size(), rng);
      double eps = 0.3 * hs_norm(bc, f, 0.5);
      LipschitzApproximation la = lipschitz_approximation(bc, f, eps);
      CHECK(hs_norm(bc, f - la.f, 0.5) <= eps * (1 + 1e-10));
      if (la.cutoff > 0) {
        Eigen::VectorXd a = bc.coefficients(f);
        a.head(la.cutoff - 1).setZero();  // tail if one fewer mode were kept
        CHECK(hs_norm(bc, bc.synthesize(a), 0.5) > eps * (1 - 1e-10));
      }
    }
  }
  SUBCASE("empirical W^{1,inf} envelope c / eps") {
    std::vector<double> products;
    for (int trial = 0; trial < 100; ++trial) {
      Eigen::VectorXd f = random_vec(bc.size(), rng);
      f /= hs_norm(bc, f, 0.5);
      double eps = std::uniform_real_distribution<double>(0.05, 0.8)(rng);
      LipschitzApproximation la = lipschitz_approximation(bc, f, eps);
      products.push_back(la.w1inf * eps);
    }
    double c_fit = *std::max_element(products.begin(), products.begin() + 50);
    for (size_t i = 50; i < products.size(); ++i) CHECK(products[i] <= 1.5 * c_fit);
  }
}

TEST_CASE("projected constants") {
  BoundaryCalculus bc = disk_calculus(32);
  std::mt19937_64 rng(23);
  Eigen::VectorXd f = random_vec(bc.size(), rng);
  Eigen::VectorXd p = project_out_constants(bc, f);
  CHECK(std::abs(l2_inner(bc, p, Eigen::VectorXd::Ones(bc.size()))) < 1e-10);
  Eigen::MatrixXd P = constant_complement_projector(bc);
  CHECK((P * f - p).cwiseAbs().maxCoeff() < 1e-12);
}
