#include "dnlab/mesh.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dnlab {

double TriMesh::signed_area(int t) const {
  Eigen::Vector2d a = nodes.row(triangles(t, 0));
  Eigen::Vector2d b = nodes.row(triangles(t, 1));
  Eigen::Vector2d c = nodes.row(triangles(t, 2));
  Eigen::Vector2d u = b - a, v = c - a;
  return 0.5 * (u.x() * v.y() - u.y() * v.x());
}

double TriMesh::total_area() const {
  double s = 0;
  for (int t = 0; t < num_triangles(); ++t) s += signed_area(t);
  return s;
}

double TriMesh::max_edge_length() const {
  double m = 0;
  for (int t = 0; t < num_triangles(); ++t) {
    for (int e = 0; e < 3; ++e) {
      Eigen::Vector2d a = nodes.row(triangles(t, e));
      Eigen::Vector2d b = nodes.row(triangles(t, (e + 1) % 3));
      m = std::max(m, (b - a).norm());
    }
  }
  return m;
}

namespace {

// undirected edge -> incident triangle count
std::map<std::pair<int, int>, int> edge_counts(const TriMesh& mesh) {
  std::map<std::pair<int, int>, int> cnt;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    for (int e = 0; e < 3; ++e) {
      int a = mesh.triangles(t, e), b = mesh.triangles(t, (e + 1) % 3);
      cnt[{std::min(a, b), std::max(a, b)}]++;
    }
  }
  return cnt;
}

}  // namespace

int TriMesh::euler_characteristic() const {
  auto cnt = edge_counts(*this);
  return num_nodes() - static_cast<int>(cnt.size()) + num_triangles();
}

const std::vector<int>& TriMesh::loop_nodes(int loop) const {
  if (loop < 0 || loop >= num_loops())
    throw DomainError("loop index " + std::to_string(loop) + " out of range");
  return loops[static_cast<size_t>(loop)];
}

void rebuild_loops(TriMesh& mesh) {
  int nloops = 0;
  for (int tag : mesh.edge_loop) nloops = std::max(nloops, tag + 1);
  mesh.loops.assign(static_cast<size_t>(nloops), {});
  for (int tag = 0; tag < nloops; ++tag) {
    std::map<int, int> next;
    for (int e = 0; e < mesh.num_boundary_edges(); ++e) {
      if (mesh.edge_loop[static_cast<size_t>(e)] != tag) continue;
      int a = mesh.boundary_edges(e, 0), b = mesh.boundary_edges(e, 1);
      if (next.count(a)) throw StructuralError("boundary loop branches at node " + std::to_string(a));
      next[a] = b;
    }
    if (next.empty()) throw StructuralError("empty boundary loop tag");
    std::vector<int> order;
    int start = next.begin()->first, cur = start;
    do {
      order.push_back(cur);
      auto it = next.find(cur);
      if (it == next.end()) throw StructuralError("boundary loop not closed");
      cur = it->second;
    } while (cur != start && order.size() <= next.size());
    if (cur != start || order.size() != next.size())
      throw StructuralError("boundary loop tag does not form a single closed cycle");
    mesh.loops[static_cast<size_t>(tag)] = order;
  }
}

void validate(const TriMesh& mesh) {
  const int nv = mesh.num_nodes();
  if (static_cast<int>(mesh.region.size()) != mesh.num_triangles())
    throw StructuralError("region tags do not match triangle count");
  if (static_cast<int>(mesh.edge_loop.size()) != mesh.num_boundary_edges())
    throw StructuralError("loop tags do not match boundary edge count");
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    for (int e = 0; e < 3; ++e) {
      int v = mesh.triangles(t, e);
      if (v < 0 || v >= nv) throw StructuralError("triangle node index out of range");
    }
    if (mesh.signed_area(t) <= 0)
      throw GeometryError("triangle " + std::to_string(t) + " is degenerate or negatively oriented");
  }

  auto cnt = edge_counts(mesh);
  std::set<std::pair<int, int>> bset;
  for (int e = 0; e < mesh.num_boundary_edges(); ++e) {
    int a = mesh.boundary_edges(e, 0), b = mesh.boundary_edges(e, 1);
    auto key = std::make_pair(std::min(a, b), std::max(a, b));
    auto it = cnt.find(key);
    if (it == cnt.end() || it->second != 1)
      throw StructuralError("boundary edge not incident to exactly one triangle");
    if (!bset.insert(key).second) throw StructuralError("duplicate boundary edge");
  }
  for (const auto& [key, c] : cnt) {
    if (c == 1 && !bset.count(key))
      throw StructuralError("triangle edge with one incident triangle is not listed as boundary");
    if (c > 2) throw StructuralError("non-manifold edge");
  }

  TriMesh copy = mesh;
  rebuild_loops(copy);
  if (copy.loops.size() != mesh.loops.size())
    throw StructuralError("stored loops disagree with boundary edges");
}

TriMesh refine(const TriMesh& mesh) {
  TriMesh out;
  std::map<std::pair<int, int>, int> mid;
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(static_cast<size_t>(mesh.num_nodes()));
  for (int i = 0; i < mesh.num_nodes(); ++i) pts.push_back(mesh.nodes.row(i));
  auto midpoint = [&](int a, int b) {
    auto key = std::make_pair(std::min(a, b), std::max(a, b));
    auto it = mid.find(key);
    if (it != mid.end()) return it->second;
    int idx = static_cast<int>(pts.size());
    pts.push_back(0.5 * (Eigen::Vector2d(mesh.nodes.row(a)) + Eigen::Vector2d(mesh.nodes.row(b))));
    mid[key] = idx;
    return idx;
  };

  std::vector<Eigen::Vector3i> tris;
  std::vector<Region> regs;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    int a = mesh.triangles(t, 0), b = mesh.triangles(t, 1), c = mesh.triangles(t, 2);
    int ab = midpoint(a, b), bc = midpoint(b, c), ca = midpoint(c, a);
    Region r = mesh.region[static_cast<size_t>(t)];
    tris.push_back({a, ab, ca});
    tris.push_back({ab, b, bc});
    tris.push_back({ca, bc, c});
    tris.push_back({ab, bc, ca});
    for (int k = 0; k < 4; ++k) regs.push_back(r);
  }

  std::vector<Eigen::Vector2i> bedges;
  std::vector<int> bloops;
  for (int e = 0; e < mesh.num_boundary_edges(); ++e) {
    int a = mesh.boundary_edges(e, 0), b = mesh.boundary_edges(e, 1);
    int m = midpoint(a, b);
    bedges.push_back({a, m});
    bedges.push_back({m, b});
    bloops.push_back(mesh.edge_loop[static_cast<size_t>(e)]);
    bloops.push_back(mesh.edge_loop[static_cast<size_t>(e)]);
  }

  out.nodes.resize(static_cast<Eigen::Index>(pts.size()), 2);
  for (size_t i = 0; i < pts.size(); ++i) out.nodes.row(static_cast<Eigen::Index>(i)) = pts[i];
  out.triangles.resize(static_cast<Eigen::Index>(tris.size()), 3);
  for (size_t i = 0; i < tris.size(); ++i) out.triangles.row(static_cast<Eigen::Index>(i)) = tris[i];
  out.region = regs;
  out.boundary_edges.resize(static_cast<Eigen::Index>(bedges.size()), 2);
  for (size_t i = 0; i < bedges.size(); ++i) out.boundary_edges.row(static_cast<Eigen::Index>(i)) = bedges[i];
  out.edge_loop = bloops;
  rebuild_loops(out);
  return out;
}

MetricField MetricField::euclidean(int nt) {
  MetricField f;
  f.coeffs.resize(nt, 3);
  f.coeffs.col(0).setOnes();
  f.coeffs.col(1).setZero();
  f.coeffs.col(2).setOnes();
  return f;
}

MetricField MetricField::constant(int nt, const Eigen::Matrix2d& m) {
  MetricField f;
  f.coeffs.resize(nt, 3);
  for (int t = 0; t < nt; ++t) {
    f.coeffs(t, 0) = m(0, 0);
    f.coeffs(t, 1) = 0.5 * (m(0, 1) + m(1, 0));
    f.coeffs(t, 2) = m(1, 1);
  }
  return f;
}

void validate_spd(const MetricField& metric, double bound) {
  for (int t = 0; t < metric.size(); ++t) {
    Eigen::Matrix2d m = metric.tensor(t);
    double tr = m.trace(), det = m.determinant();
    double disc = std::sqrt(std::max(0.0, tr * tr / 4 - det));
    double lo = tr / 2 - disc, hi = tr / 2 + disc;
    if (!(lo > 0))
      throw MetricError("metric tensor on triangle " + std::to_string(t) + " is not positive definite");
    if (lo < 1.0 / bound || hi > bound)
      throw MetricError("metric eigenvalue on triangle " + std::to_string(t) + " outside [1/R, R]");
  }
}

void write_mesh(std::ostream& os, const TriMesh& mesh) {
  os << "tmesh 1\n";
  os << mesh.num_nodes() << ' ' << mesh.num_triangles() << ' ' << mesh.num_boundary_edges() << '\n';
  os.precision(17);
  for (int i = 0; i < mesh.num_nodes(); ++i) os << mesh.nodes(i, 0) << ' ' << mesh.nodes(i, 1) << '\n';
  for (int t = 0; t < mesh.num_triangles(); ++t)
    os << mesh.triangles(t, 0) << ' ' << mesh.triangles(t, 1) << ' ' << mesh.triangles(t, 2) << ' '
       << static_cast<int>(mesh.region[static_cast<size_t>(t)]) << '\n';
  for (int e = 0; e < mesh.num_boundary_edges(); ++e)
    os << mesh.boundary_edges(e, 0) << ' ' << mesh.boundary_edges(e, 1) << ' '
       << mesh.edge_loop[static_cast<size_t>(e)] << '\n';
}

TriMesh read_mesh(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "tmesh" || version != 1)
    throw ParseError("bad mesh header, expected 'tmesh 1'");
  int nv = 0, nt = 0, nb = 0;
  if (!(is >> nv >> nt >> nb) || nv < 0 || nt < 0 || nb < 0) throw ParseError("bad mesh counts");
  TriMesh mesh;
  mesh.nodes.resize(nv, 2);
  for (int i = 0; i < nv; ++i)
    if (!(is >> mesh.nodes(i, 0) >> mesh.nodes(i, 1))) throw ParseError("bad node line");
  mesh.triangles.resize(nt, 3);
  mesh.region.resize(static_cast<size_t>(nt));
  for (int t = 0; t < nt; ++t) {
    int r = 0;
    if (!(is >> mesh.triangles(t, 0) >> mesh.triangles(t, 1) >> mesh.triangles(t, 2) >> r))
      throw ParseError("bad triangle line");
    if (r < 0 || r > 2) throw ParseError("bad region tag");
    mesh.region[static_cast<size_t>(t)] = static_cast<Region>(r);
  }
  mesh.boundary_edges.resize(nb, 2);
  mesh.edge_loop.resize(static_cast<size_t>(nb));
  for (int e = 0; e < nb; ++e)
    if (!(is >> mesh.boundary_edges(e, 0) >> mesh.boundary_edges(e, 1) >> mesh.edge_loop[static_cast<size_t>(e)]))
      throw ParseError("bad boundary edge line");
  rebuild_loops(mesh);
  return mesh;
}

void write_mesh_file(const std::string& path, const TriMesh& mesh) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open " + path + " for writing");
  write_mesh(os, mesh);
}

TriMesh read_mesh_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open " + path);
  return read_mesh(is);
}

void write_metric(std::ostream& os, const MetricField& metric) {
  os << "metric 1\n";
  os.precision(17);
  for (int t = 0; t < metric.size(); ++t)
    os << metric.coeffs(t, 0) << ' ' << metric.coeffs(t, 1) << ' ' << metric.coeffs(t, 2) << '\n';
}

MetricField read_metric(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "metric" || version != 1)
    throw ParseError("bad metric header, expected 'metric 1'");
  std::vector<Eigen::Vector3d> rows;
  double a = 0, b = 0, c = 0;
  while (is >> a >> b >> c) rows.push_back({a, b, c});
  MetricField f;
  f.coeffs.resize(static_cast<Eigen::Index>(rows.size()), 3);
  for (size_t i = 0; i < rows.size(); ++i) f.coeffs.row(static_cast<Eigen::Index>(i)) = rows[i];
  return f;
}

void write_metric_file(const std::string& path, const MetricField& metric) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open " + path + " for writing");
  write_metric(os, metric);
}

MetricField read_metric_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open " + path);
  return read_metric(is);
}

}  // namespace dnlab
