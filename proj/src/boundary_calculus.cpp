#include "dnlab/boundary_calculus.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>

namespace dnlab {

namespace {

void check_exponent(double s) {
  if (s < -2.0 || s > 2.0) throw DomainError("Sobolev exponent outside [-2, 2]");
}

void check_size(const BoundaryCalculus& bc, const Eigen::VectorXd& f) {
  if (f.size() != bc.size()) throw DimensionError("function does not match the boundary loop");
}

}  // namespace

Eigen::VectorXd BoundaryCalculus::coefficients(const Eigen::VectorXd& f) const {
  return eigenvectors.transpose() * mass.cwiseProduct(f);
}

Eigen::VectorXd BoundaryCalculus::synthesize(const Eigen::VectorXd& a) const {
  return eigenvectors * a;
}

BoundaryCalculus cycle_calculus(const TriMesh& mesh, const MetricField& metric,
                                const std::vector<int>& nodes,
                                const std::vector<int>& edge_metric_tri) {
  if (metric.size() != mesh.num_triangles()) throw DimensionError("metric does not match mesh");
  if (nodes.size() != edge_metric_tri.size())
    throw DimensionError("one metric triangle per cycle edge expected");
  BoundaryCalculus bc;
  bc.nodes = nodes;
  const int n = bc.size();

  bc.edge_length.resize(n);
  for (int i = 0; i < n; ++i) {
    int a = bc.nodes[static_cast<size_t>(i)], b = bc.nodes[static_cast<size_t>((i + 1) % n)];
    Eigen::Vector2d d = Eigen::Vector2d(mesh.nodes.row(b)) - Eigen::Vector2d(mesh.nodes.row(a));
    bc.edge_length(i) = std::sqrt(d.dot(metric.tensor(edge_metric_tri[static_cast<size_t>(i)]) * d));
  }

  bc.mass.resize(n);
  bc.stiffness = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    int j = (i + 1) % n;
    double len = bc.edge_length(i);
    bc.mass(i) = 0.5 * (bc.edge_length(i) + bc.edge_length((i + n - 1) % n));
    bc.stiffness(i, i) += 1.0 / len;
    bc.stiffness(j, j) += 1.0 / len;
    bc.stiffness(i, j) -= 1.0 / len;
    bc.stiffness(j, i) -= 1.0 / len;
  }

  Eigen::VectorXd msqrt_inv = bc.mass.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd sym = msqrt_inv.asDiagonal() * bc.stiffness * msqrt_inv.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (sym + sym.transpose()));
  if (eig.info() != Eigen::Success) throw SolverError("boundary eigendecomposition failed");
  bc.eigenvalues = eig.eigenvalues().cwiseMax(0.0);
  bc.eigenvectors = msqrt_inv.asDiagonal() * eig.eigenvectors();
  return bc;
}

BoundaryCalculus boundary_calculus(const TriMesh& mesh, const MetricField& metric, int loop) {
  const std::vector<int>& nodes = mesh.loop_nodes(loop);
  const int n = static_cast<int>(nodes.size());

  std::map<std::pair<int, int>, int> owner;
  for (int t = 0; t < mesh.num_triangles(); ++t)
    for (int e = 0; e < 3; ++e) {
      int a = mesh.triangles(t, e), b = mesh.triangles(t, (e + 1) % 3);
      owner[{std::min(a, b), std::max(a, b)}] = t;
    }
  std::vector<int> tri(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int a = nodes[static_cast<size_t>(i)], b = nodes[static_cast<size_t>((i + 1) % n)];
    auto it = owner.find({std::min(a, b), std::max(a, b)});
    if (it == owner.end()) throw StructuralError("boundary edge without adjacent triangle");
    tri[static_cast<size_t>(i)] = it->second;
  }
  return cycle_calculus(mesh, metric, nodes, tri);
}

Eigen::MatrixXd weighted_loop_stiffness(const BoundaryCalculus& bc, const Eigen::VectorXd& w) {
  const int n = bc.size();
  if (w.size() != n) throw DimensionError("weight field does not match the loop");
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    int j = (i + 1) % n;
    double c = 0.5 * (w(i) + w(j)) / bc.edge_length(i);
    K(i, i) += c;
    K(j, j) += c;
    K(i, j) -= c;
    K(j, i) -= c;
  }
  return K;
}

Eigen::MatrixXd loop_derivation_matrix(const BoundaryCalculus& bc, const Eigen::VectorXd& coeff,
                                       DerivationScheme scheme) {
  const int n = bc.size();
  if (coeff.size() != n) throw DimensionError("coefficient field does not match the loop");
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    int prev = (i + n - 1) % n, next = (i + 1) % n;
    if (scheme == DerivationScheme::Centered) {
      double len = bc.edge_length(prev) + bc.edge_length(i);
      X(i, next) += coeff(i) / len;
      X(i, prev) -= coeff(i) / len;
    } else if (coeff(i) >= 0) {
      X(i, i) += coeff(i) / bc.edge_length(prev);
      X(i, prev) -= coeff(i) / bc.edge_length(prev);
    } else {
      X(i, next) += coeff(i) / bc.edge_length(i);
      X(i, i) -= coeff(i) / bc.edge_length(i);
    }
  }
  return X;
}

double hs_norm(const BoundaryCalculus& bc, const Eigen::VectorXd& f, double s) {
  check_exponent(s);
  check_size(bc, f);
  Eigen::VectorXd a = bc.coefficients(f);
  double sum = 0;
  for (int i = 0; i < a.size(); ++i) sum += std::pow(1.0 + bc.eigenvalues(i), s) * a(i) * a(i);
  return std::sqrt(sum);
}

double l2_inner(const BoundaryCalculus& bc, const Eigen::VectorXd& f, const Eigen::VectorXd& g) {
  check_size(bc, f);
  check_size(bc, g);
  return f.dot(bc.mass.cwiseProduct(g));
}

namespace {

Eigen::VectorXd spectral_weights(const BoundaryCalculus& bc, double s, SpectralShift shift) {
  const double zero_tol = 1e-12 * std::max(1.0, bc.eigenvalues(bc.eigenvalues.size() - 1));
  Eigen::VectorXd w(bc.eigenvalues.size());
  for (int i = 0; i < w.size(); ++i) {
    double lam = bc.eigenvalues(i);
    if (shift == SpectralShift::OnePlusLaplacian)
      w(i) = std::pow(1.0 + lam, s);
    else
      w(i) = lam <= zero_tol ? 0.0 : std::pow(lam, s);
  }
  return w;
}

}  // namespace

Eigen::VectorXd frac_power_apply(const BoundaryCalculus& bc, const Eigen::VectorXd& f, double s,
                                 SpectralShift shift) {
  check_exponent(s);
  check_size(bc, f);
  Eigen::VectorXd a = bc.coefficients(f);
  return bc.synthesize(spectral_weights(bc, s, shift).cwiseProduct(a));
}

Eigen::MatrixXd frac_power_matrix(const BoundaryCalculus& bc, double s, SpectralShift shift) {
  check_exponent(s);
  Eigen::VectorXd w = spectral_weights(bc, s, shift);
  return bc.eigenvectors * w.asDiagonal() * bc.eigenvectors.transpose() * bc.mass.asDiagonal();
}

namespace {

double banded_norm(const BoundaryCalculus& bc, const Eigen::MatrixXd& op, double s_from, double s_to,
                   int band) {
  if (op.rows() != bc.size() || op.cols() != bc.size())
    throw DimensionError("operator does not match the boundary loop");
  // coefficient-space representation: E^T M op E
  Eigen::MatrixXd coef = bc.eigenvectors.transpose() * bc.mass.asDiagonal() * op * bc.eigenvectors;
  Eigen::VectorXd to = spectral_weights(bc, s_to / 2, SpectralShift::OnePlusLaplacian);
  Eigen::VectorXd from = spectral_weights(bc, -s_from / 2, SpectralShift::OnePlusLaplacian);
  Eigen::MatrixXd scaled = to.asDiagonal() * coef * from.asDiagonal();
  if (band > 0 && band < scaled.rows()) scaled = scaled.topLeftCorner(band, band).eval();
  return scaled.bdcSvd().singularValues()(0);
}

}  // namespace

double operator_norm(const BoundaryCalculus& bc, const Eigen::MatrixXd& op, double s_from,
                     double s_to) {
  check_exponent(s_from);
  check_exponent(s_to);
  return banded_norm(bc, op, s_from, s_to, 0);
}

double operator_norm_banded(const BoundaryCalculus& bc, const Eigen::MatrixXd& op, double s_from,
                            double s_to, int band) {
  check_exponent(s_from);
  check_exponent(s_to);
  if (band < 1) throw DomainError("band must be positive");
  return banded_norm(bc, op, s_from, s_to, band);
}

Eigen::VectorXd project_out_constants(const BoundaryCalculus& bc, const Eigen::VectorXd& f) {
  check_size(bc, f);
  double mean = f.dot(bc.mass) / bc.volume();
  return f.array() - mean;
}

Eigen::MatrixXd constant_complement_projector(const BoundaryCalculus& bc) {
  const int n = bc.size();
  return Eigen::MatrixXd::Identity(n, n) -
         Eigen::VectorXd::Ones(n) * bc.mass.transpose() / bc.volume();
}

double w1inf_norm(const BoundaryCalculus& bc, const Eigen::VectorXd& f) {
  check_size(bc, f);
  double m = f.cwiseAbs().maxCoeff();
  const int n = bc.size();
  for (int i = 0; i < n; ++i)
    m = std::max(m, std::abs(f((i + 1) % n) - f(i)) / bc.edge_length(i));
  return m;
}

LipschitzApproximation lipschitzapproximation_impl(const BoundaryCalculus& bc,
                                                   const Eigen::VectorXd& f, double eps) {
  Eigen::VectorXd a = bc.coefficients(f);
  const int n = bc.size();
  Eigen::VectorXd half_weight = Eigen::VectorXd(n);
  for (int i = 0; i < n; ++i) half_weight(i) = std::sqrt(1.0 + bc.eigenvalues(i));
  // tail(c) = sum_{i >= c} (1+lambda_i)^(1/2) a_i^2
  Eigen::VectorXd tail(n + 1);
  tail(n) = 0;
  for (int i = n - 1; i >= 0; --i) tail(i) = tail(i + 1) + half_weight(i) * a(i) * a(i);
  int cutoff = 0;
  while (cutoff <= n && tail(cutoff) > eps * eps) ++cutoff;
  Eigen::VectorXd trunc = a;
  trunc.tail(n - cutoff).setZero();
  LipschitzApproximation out;
  out.cutoff = cutoff;
  out.f = cutoff == 0 ? Eigen::VectorXd::Zero(n).eval() : bc.synthesize(trunc);
  out.w1inf = cutoff == 0 ? 0.0 : w1inf_norm(bc, out.f);
  return out;
}

LipschitzApproximation lipschitz_approximation(const BoundaryCalculus& bc, const Eigen::VectorXd& f,
                                               double eps) {
  if (!(eps > 0)) throw DomainError("tolerance must be positive");
  check_size(bc, f);
  return lipschitzapproximation_impl(bc, f, eps);
}

}  // namespace dnlab
