#include "dnlab/dn_operators.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <map>

namespace dnlab {

namespace {

bool in_domain(Region r, Subdomain d) {
  switch (d) {
    case Subdomain::Whole:
      return true;
    case Subdomain::Exterior:
      return r == Region::Exterior;
    case Subdomain::Sigma1:
      return r != Region::Exterior;
    case Subdomain::Inclusion:
      return r == Region::Inclusion;
  }
  return false;
}

bool curve_inner_side(Region r, Curve c) {
  switch (c) {
    case Curve::Sigma1Interface:
      return r != Region::Exterior;
    case Curve::SigmaInterface:
      return r == Region::Inclusion;
    default:
      return true;
  }
}

// directed edge (a->b) -> owning triangle, for every triangle orientation edge
std::map<std::pair<int, int>, int> directed_edge_owner(const TriMesh& mesh) {
  std::map<std::pair<int, int>, int> owner;
  for (int t = 0; t < mesh.num_triangles(); ++t)
    for (int e = 0; e < 3; ++e)
      owner[{mesh.triangles(t, e), mesh.triangles(t, (e + 1) % 3)}] = t;
  return owner;
}

Eigen::SparseMatrix<double> submatrix(const Eigen::SparseMatrix<double>& K,
                                      const std::vector<int>& rows, const std::vector<int>& cols) {
  std::vector<int> rmap(static_cast<size_t>(K.rows()), -1), cmap(static_cast<size_t>(K.cols()), -1);
  for (size_t i = 0; i < rows.size(); ++i) rmap[static_cast<size_t>(rows[i])] = static_cast<int>(i);
  for (size_t j = 0; j < cols.size(); ++j) cmap[static_cast<size_t>(cols[j])] = static_cast<int>(j);
  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < K.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(K, k); it; ++it) {
      int r = rmap[static_cast<size_t>(it.row())], c = cmap[static_cast<size_t>(it.col())];
      if (r >= 0 && c >= 0) trips.emplace_back(r, c, it.value());
    }
  Eigen::SparseMatrix<double> out(static_cast<Eigen::Index>(rows.size()),
                                  static_cast<Eigen::Index>(cols.size()));
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

Eigen::MatrixXd dense_block(const Eigen::SparseMatrix<double>& K, const std::vector<int>& rows,
                            const std::vector<int>& cols) {
  return Eigen::MatrixXd(submatrix(K, rows, cols));
}

using Factor = Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>;

std::shared_ptr<Factor> factorize(const Eigen::SparseMatrix<double>& A, const std::string& what) {
  auto f = std::make_shared<Factor>();
  f->compute(A);
  if (f->info() != Eigen::Success)
    throw SolverError("factorization of the " + what + " block failed (disconnected or "
                      "fully Neumann component?)");
  return f;
}

}  // namespace

std::vector<int> curve_nodes(const TriMesh& mesh, Curve curve) {
  if (curve == Curve::OuterBoundary || curve == Curve::InnerBoundary) {
    int loop = curve == Curve::OuterBoundary ? 0 : 1;
    if (loop >= mesh.num_loops()) throw DomainError("mesh has no such boundary loop");
    return mesh.loop_nodes(loop);
  }
  // interface: directed edges of inner-side triangles whose opposite side is outer
  auto owner = directed_edge_owner(mesh);
  std::map<int, int> next;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    if (!curve_inner_side(mesh.region[static_cast<size_t>(t)], curve)) continue;
    for (int e = 0; e < 3; ++e) {
      int a = mesh.triangles(t, e), b = mesh.triangles(t, (e + 1) % 3);
      auto rev = owner.find({b, a});
      if (rev == owner.end()) continue;  // mesh boundary
      if (curve_inner_side(mesh.region[static_cast<size_t>(rev->second)], curve)) continue;
      next[a] = b;
    }
  }
  if (next.empty()) throw DomainError("requested region interface does not exist in this mesh");
  std::vector<int> order;
  int start = next.begin()->first, cur = start;
  do {
    order.push_back(cur);
    auto it = next.find(cur);
    if (it == next.end()) throw StructuralError("region interface is not a closed cycle");
    cur = it->second;
  } while (cur != start && order.size() <= next.size());
  if (cur != start || order.size() != next.size())
    throw StructuralError("region interface is not a single closed cycle");
  return order;
}

namespace {

std::vector<int> curve_edge_triangles(const TriMesh& mesh, const std::vector<int>& nodes) {
  auto owner = directed_edge_owner(mesh);
  const int n = static_cast<int>(nodes.size());
  std::vector<int> tri(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int a = nodes[static_cast<size_t>(i)], b = nodes[static_cast<size_t>((i + 1) % n)];
    auto it = owner.find({a, b});
    if (it == owner.end()) it = owner.find({b, a});
    if (it == owner.end()) throw StructuralError("curve edge without adjacent triangle");
    tri[static_cast<size_t>(i)] = it->second;
  }
  return tri;
}

}  // namespace

BoundaryCalculus curve_calculus(const TriMesh& mesh, const MetricField& metric, Curve curve) {
  std::vector<int> nodes = curve_nodes(mesh, curve);
  return cycle_calculus(mesh, metric, nodes, curve_edge_triangles(mesh, nodes));
}

Eigen::VectorXd curve_mass(const TriMesh& mesh, const MetricField& metric, Curve curve) {
  return curve_calculus(mesh, metric, curve).mass;
}

Eigen::SparseMatrix<double> assemble_stiffness(const TriMesh& mesh, const MetricField& metric,
                                               Subdomain domain) {
  if (metric.size() != mesh.num_triangles()) throw DimensionError("metric does not match mesh");
  const int n = mesh.num_nodes();
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::Matrix<double, 2, 3> gref;
  gref << -1, 1, 0, -1, 0, 1;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    if (!in_domain(mesh.region[static_cast<size_t>(t)], domain)) continue;
    Eigen::Vector2d p0 = mesh.nodes.row(mesh.triangles(t, 0));
    Eigen::Vector2d p1 = mesh.nodes.row(mesh.triangles(t, 1));
    Eigen::Vector2d p2 = mesh.nodes.row(mesh.triangles(t, 2));
    Eigen::Matrix2d B;
    B.col(0) = p1 - p0;
    B.col(1) = p2 - p0;
    double area = 0.5 * B.determinant();
    if (!(area > 0)) throw GeometryError("assembly error: degenerate triangle " + std::to_string(t));
    Eigen::Matrix2d g = metric.tensor(t);
    double det = g.determinant();
    if (!(det > 0)) throw MetricError("metric tensor is not positive definite");
    Eigen::Matrix2d cond = std::sqrt(det) * g.inverse();  // sqrt(det g) g^-1
    Eigen::Matrix<double, 2, 3> grad = B.inverse().transpose() * gref;
    Eigen::Matrix3d kloc = area * grad.transpose() * cond * grad;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        trips.emplace_back(mesh.triangles(t, a), mesh.triangles(t, b), kloc(a, b));
  }
  Eigen::SparseMatrix<double> K(n, n);
  K.setFromTriplets(trips.begin(), trips.end());
  return K;
}

StiffnessSystem::StiffnessSystem(const TriMesh& mesh, const MetricField& metric)
    : K_(assemble_stiffness(mesh, metric, Subdomain::Whole)) {
  node_loop_.assign(static_cast<size_t>(mesh.num_nodes()), -1);
  for (int l = 0; l < mesh.num_loops(); ++l) {
    loop_nodes_.push_back(mesh.loop_nodes(l));
    loop_mass_.push_back(curve_mass(mesh, metric, l == 0 ? Curve::OuterBoundary : Curve::InnerBoundary));
    for (int v : loop_nodes_.back()) node_loop_[static_cast<size_t>(v)] = l;
  }
  if (mesh.num_loops() > 2) throw StructuralError("at most two boundary loops are supported");
  for (int i = 0; i < mesh.num_nodes(); ++i)
    if (node_loop_[static_cast<size_t>(i)] < 0) interior_.push_back(i);
  interior_factor_ = factorize(submatrix(K_, interior_, interior_), "interior");
}

HarmonicField StiffnessSystem::harmonic_extension(const std::vector<Eigen::VectorXd>& data,
                                                  const std::set<int>& dirichlet_loops) const {
  if (data.size() != dirichlet_loops.size())
    throw DimensionError("one data vector per Dirichlet loop expected");
  Eigen::VectorXd full = Eigen::VectorXd::Zero(num_nodes());
  size_t di = 0;
  for (int l : dirichlet_loops) {
    if (l < 0 || l >= num_loops()) throw DomainError("Dirichlet loop out of range");
    const auto& nodes = loop_nodes_[static_cast<size_t>(l)];
    if (data[di].size() != static_cast<Eigen::Index>(nodes.size()))
      throw DimensionError("boundary data does not match loop size");
    for (size_t i = 0; i < nodes.size(); ++i) full(nodes[i]) = data[di](static_cast<Eigen::Index>(i));
    ++di;
  }
  Eigen::VectorXd residual = K_ * full;
  Eigen::VectorXd rhs(interior_.size());
  for (size_t i = 0; i < interior_.size(); ++i) rhs(static_cast<Eigen::Index>(i)) = -residual(interior_[i]);
  Eigen::VectorXd ui = interior_factor_->solve(rhs);
  if (interior_factor_->info() != Eigen::Success) throw SolverError("interior solve failed");
  for (size_t i = 0; i < interior_.size(); ++i) full(interior_[i]) = ui(static_cast<Eigen::Index>(i));
  return {full};
}

HarmonicField StiffnessSystem::harmonic_extension(const Eigen::VectorXd& loop0_data) const {
  std::vector<Eigen::VectorXd> data{loop0_data};
  std::set<int> loops;
  for (int l = 0; l < num_loops(); ++l) loops.insert(l);
  if (num_loops() == 1) return harmonic_extension(data, loops);
  for (int l = 1; l < num_loops(); ++l)
    data.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(loop_nodes_[static_cast<size_t>(l)].size())));
  return harmonic_extension(data, loops);
}

DNOperator StiffnessSystem::schur_onto(const std::vector<int>& keep, const Eigen::VectorXd& mass,
                                       const std::string& tag) const {
  std::vector<char> kept(static_cast<size_t>(num_nodes()), 0);
  for (int v : keep) kept[static_cast<size_t>(v)] = 1;
  std::vector<int> elim;
  for (int i = 0; i < num_nodes(); ++i)
    if (!kept[static_cast<size_t>(i)]) elim.push_back(i);

  Eigen::MatrixXd Keb = dense_block(K_, elim, keep);
  Eigen::MatrixXd X;
  if (elim == interior_) {
    X = interior_factor_->solve(Keb);
  } else {
    auto f = factorize(submatrix(K_, elim, elim), "eliminated");
    X = f->solve(Keb);
  }
  DNOperator dn;
  dn.form = dense_block(K_, keep, keep) - dense_block(K_, keep, elim) * X;
  dn.mass = mass;
  dn.nodes = keep;
  dn.tag = tag;
  return dn;
}

DNOperator StiffnessSystem::dn_map(const std::set<int>& boundary_set) const {
  if (boundary_set.empty()) throw DomainError("boundary set must be nonempty");
  std::vector<int> keep;
  Eigen::VectorXd mass;
  std::vector<double> mvals;
  for (int l : boundary_set) {
    if (l < 0 || l >= num_loops()) throw DomainError("boundary loop out of range");
    for (size_t i = 0; i < loop_nodes_[static_cast<size_t>(l)].size(); ++i) {
      keep.push_back(loop_nodes_[static_cast<size_t>(l)][i]);
      mvals.push_back(loop_mass_[static_cast<size_t>(l)](static_cast<Eigen::Index>(i)));
    }
  }
  mass = Eigen::Map<Eigen::VectorXd>(mvals.data(), static_cast<Eigen::Index>(mvals.size()));
  return schur_onto(keep, mass, "dn_full");
}

DNOperator StiffnessSystem::dn_map() const {
  std::set<int> all;
  for (int l = 0; l < num_loops(); ++l) all.insert(l);
  return dn_map(all);
}

Eigen::VectorXd StiffnessSystem::conormal_trace(const HarmonicField& field, int loop) const {
  if (loop < 0 || loop >= num_loops()) throw DomainError("loop out of range");
  Eigen::VectorXd r = K_ * field.values;
  const auto& nodes = loop_nodes_[static_cast<size_t>(loop)];
  Eigen::VectorXd out(static_cast<Eigen::Index>(nodes.size()));
  for (size_t i = 0; i < nodes.size(); ++i) out(static_cast<Eigen::Index>(i)) = r(nodes[i]);
  return out;
}

ConstrainedSystem::ConstrainedSystem(const TriMesh& mesh, const MetricField& metric, Subdomain domain,
                                     Curve data_curve, std::optional<Curve> zero_curve)
    : mesh_(mesh), K_(assemble_stiffness(mesh, metric, domain)) {
  in_subdomain_.assign(static_cast<size_t>(mesh.num_nodes()), 0);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    if (!in_domain(mesh.region[static_cast<size_t>(t)], domain)) continue;
    for (int e = 0; e < 3; ++e) in_subdomain_[static_cast<size_t>(mesh.triangles(t, e))] = 1;
  }

  data_nodes_ = curve_nodes(mesh, data_curve);
  data_mass_ = curve_mass(mesh, metric, data_curve);
  std::vector<char> constrained(static_cast<size_t>(mesh.num_nodes()), 0);
  for (int v : data_nodes_) {
    if (!in_subdomain_[static_cast<size_t>(v)])
      throw DomainError("data curve is not on the subdomain boundary");
    constrained[static_cast<size_t>(v)] = 1;
  }
  if (zero_curve) {
    for (int v : curve_nodes(mesh, *zero_curve)) {
      if (!in_subdomain_[static_cast<size_t>(v)])
        throw DomainError("zero curve is not on the subdomain boundary");
      constrained[static_cast<size_t>(v)] = 1;
    }
  }
  for (int i = 0; i < mesh.num_nodes(); ++i)
    if (in_subdomain_[static_cast<size_t>(i)] && !constrained[static_cast<size_t>(i)])
      free_nodes_.push_back(i);
  factor_ = factorize(submatrix(K_, free_nodes_, free_nodes_), "free");
}

HarmonicField ConstrainedSystem::extend(const Eigen::VectorXd& data) const {
  if (data.size() != static_cast<Eigen::Index>(data_nodes_.size()))
    throw DimensionError("data does not match the data curve");
  Eigen::VectorXd full = Eigen::VectorXd::Zero(K_.rows());
  for (size_t i = 0; i < data_nodes_.size(); ++i) full(data_nodes_[i]) = data(static_cast<Eigen::Index>(i));
  Eigen::VectorXd residual = K_ * full;
  Eigen::VectorXd rhs(free_nodes_.size());
  for (size_t i = 0; i < free_nodes_.size(); ++i) rhs(static_cast<Eigen::Index>(i)) = -residual(free_nodes_[i]);
  Eigen::VectorXd uf = factor_->solve(rhs);
  if (factor_->info() != Eigen::Success) throw SolverError("subdomain solve failed");
  for (size_t i = 0; i < free_nodes_.size(); ++i) full(free_nodes_[i]) = uf(static_cast<Eigen::Index>(i));
  return {full};
}

DNOperator ConstrainedSystem::dn(const std::string& tag) const {
  Eigen::MatrixXd Kfd = dense_block(K_, free_nodes_, data_nodes_);
  Eigen::MatrixXd X = factor_->solve(Kfd);
  DNOperator out;
  out.form = dense_block(K_, data_nodes_, data_nodes_) - dense_block(K_, data_nodes_, free_nodes_) * X;
  out.mass = data_mass_;
  out.nodes = data_nodes_;
  out.tag = tag;
  return out;
}

Eigen::VectorXd ConstrainedSystem::conormal_trace(const HarmonicField& field, Curve curve) const {
  std::vector<int> nodes = curve_nodes(mesh_, curve);
  Eigen::VectorXd r = K_ * field.values;
  Eigen::VectorXd out(static_cast<Eigen::Index>(nodes.size()));
  for (size_t i = 0; i < nodes.size(); ++i) out(static_cast<Eigen::Index>(i)) = r(nodes[i]);
  return out;
}

DNOperator partial_dn(const TriMesh& mesh, const MetricField& metric, Subdomain domain,
                      Curve data_curve, std::optional<Curve> zero_curve, const std::string& tag) {
  return ConstrainedSystem(mesh, metric, domain, data_curve, zero_curve).dn(tag);
}

}  // namespace dnlab
