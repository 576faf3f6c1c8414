#include "dnlab/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace dnlab {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) {
  while (a > kPi) a -= 2 * kPi;
  while (a <= -kPi) a += 2 * kPi;
  return a;
}

// quintic smoothstep and derivatives on [0, 1]
double sstep(double x) { return x * x * x * (10.0 + x * (-15.0 + 6.0 * x)); }
double sstep_d(double x) { return 30.0 * x * x * (x - 1.0) * (x - 1.0); }
double sstep_dd(double x) { return 60.0 * x * (2.0 * x - 1.0) * (x - 1.0); }

struct RingDef {
  int count = 0;
  std::vector<double> radii;  // per node, angle 2*pi*j/count
};

// Graded ladder of theta-independent rings from radius r_top (count cnt_top)
// toward the center: spacing tracks the local arc, counts halve by octaves,
// tail rings are uniform once the count floor is reached.  Appends rings in
// decreasing radius order, excluding r_top itself.
void graded_ladder(double r_top, int cnt_top, double outer_radius, int outer_count, int min_cnt,
                   std::vector<RingDef>& out) {
  double r = r_top;
  int cnt = cnt_top;
  while (true) {
    double dr = 2 * kPi * r / cnt;
    if (cnt <= min_cnt) {
      int m = std::max(1, static_cast<int>(std::lround(r / dr)));
      for (int j = m - 1; j >= 1; --j)
        out.push_back({cnt, std::vector<double>(static_cast<size_t>(cnt), r * j / m)});
      return;
    }
    double r_next = r - dr;
    if (r_next <= 0) return;
    int cnt_next = cnt;
    if (2.0 * outer_count * r_next <= static_cast<double>(cnt) * outer_radius) cnt_next = cnt / 2;
    out.push_back({cnt_next, std::vector<double>(static_cast<size_t>(cnt_next), r_next)});
    r = r_next;
    cnt = cnt_next;
  }
}

// Assemble a disk-topology mesh from rings listed outermost-first around
// center c, with a central fan node.  Region classified by centroid radius.
TriMesh mesh_from_rings(const std::vector<RingDef>& rings_outer_first, const Eigen::Vector2d& c,
                        double r_inclusion, double r_sigma1) {
  std::vector<RingDef> rings(rings_outer_first.rbegin(), rings_outer_first.rend());  // inner first
  TriMesh mesh;
  std::vector<Eigen::Vector2d> pts;
  pts.push_back(c);
  std::vector<int> start;
  for (const auto& ring : rings) {
    start.push_back(static_cast<int>(pts.size()));
    for (int j = 0; j < ring.count; ++j) {
      double th = 2 * kPi * j / ring.count;
      pts.push_back(c + ring.radii[static_cast<size_t>(j)] * Eigen::Vector2d(std::cos(th), std::sin(th)));
    }
  }

  std::vector<Eigen::Vector3i> tris;
  const int c0 = rings.front().count, b0 = start.front();
  for (int j = 0; j < c0; ++j) tris.push_back({0, b0 + j, b0 + (j + 1) % c0});
  for (size_t k = 0; k + 1 < rings.size(); ++k) {
    int bi = start[k], ci = rings[k].count;
    int bo = start[k + 1], co = rings[k + 1].count;
    if (ci == co) {
      for (int j = 0; j < ci; ++j) {
        int a = bi + j, b = bi + (j + 1) % ci;
        int cc = bo + j, d = bo + (j + 1) % co;
        tris.push_back({a, cc, d});
        tris.push_back({a, d, b});
      }
    } else if (co == 2 * ci) {
      for (int j = 0; j < ci; ++j) {
        int a = bi + j, b = bi + (j + 1) % ci;
        int o0 = bo + 2 * j, o1 = bo + (2 * j + 1) % co, o2 = bo + (2 * j + 2) % co;
        tris.push_back({a, o0, o1});
        tris.push_back({a, o1, b});
        tris.push_back({b, o1, o2});
      }
    } else {
      throw GeometryError("ring counts must match or differ by a factor of two");
    }
  }

  mesh.nodes.resize(static_cast<Eigen::Index>(pts.size()), 2);
  for (size_t i = 0; i < pts.size(); ++i) mesh.nodes.row(static_cast<Eigen::Index>(i)) = pts[i];
  mesh.triangles.resize(static_cast<Eigen::Index>(tris.size()), 3);
  mesh.region.resize(tris.size());
  for (size_t t = 0; t < tris.size(); ++t) {
    mesh.triangles.row(static_cast<Eigen::Index>(t)) = tris[t];
    Eigen::Vector2d cent = (pts[static_cast<size_t>(tris[t][0])] + pts[static_cast<size_t>(tris[t][1])] +
                            pts[static_cast<size_t>(tris[t][2])]) / 3.0;
    double r = (cent - c).norm();
    Region reg = Region::Exterior;
    if (r_inclusion > 0 && r < r_inclusion)
      reg = Region::Inclusion;
    else if (r_inclusion > 0 && r < r_sigma1)
      reg = Region::Annulus;
    mesh.region[t] = reg;
  }

  const int bn = start.back(), bc = rings.back().count;
  mesh.boundary_edges.resize(bc, 2);
  mesh.edge_loop.assign(static_cast<size_t>(bc), 0);
  for (int j = 0; j < bc; ++j) {
    mesh.boundary_edges(j, 0) = bn + j;
    mesh.boundary_edges(j, 1) = bn + (j + 1) % bc;
  }
  rebuild_loops(mesh);
  return mesh;
}

}  // namespace

TriMesh build_disk_with_inclusion(const DiskSpec& spec) {
  const int n = spec.resolution;
  const double R = spec.outer_radius;
  const Eigen::Vector2d c = spec.inclusion_center;
  if (n < 16) throw GeometryError("resolution must be at least 16");
  if (R <= 0) throw GeometryError("outer radius must be positive");

  const bool with_inclusion = spec.inclusion_radius > 0;
  if (with_inclusion && c.norm() + spec.inclusion_radius >= 0.95 * R)
    throw GeometryError("inclusion ball touches the outer boundary: |center| + radius = " +
                        std::to_string(c.norm() + spec.inclusion_radius) + " vs outer radius " +
                        std::to_string(R));

  auto rho_outer = [&](double th) {
    Eigen::Vector2d u(std::cos(th), std::sin(th));
    double cu = c.dot(u);
    return -cu + std::sqrt(cu * cu + R * R - c.squaredNorm());
  };

  const double h = 2 * kPi * R / n;
  std::vector<RingDef> rings;  // outermost first

  if (!with_inclusion) {
    RingDef outer{n, {}};
    for (int j = 0; j < n; ++j) outer.radii.push_back(R);
    rings.push_back(outer);
    graded_ladder(R, n, R, n, 16, rings);
    return mesh_from_rings(rings, Eigen::Vector2d::Zero(), 0.0, 0.0);
  }

  double rho_min = rho_outer(0);
  for (int j = 0; j < n; ++j) rho_min = std::min(rho_min, rho_outer(2 * kPi * j / n));
  const double r_inc = spec.inclusion_radius;
  double s1 = spec.sigma1_radius > 0 ? spec.sigma1_radius : 0.5 * (r_inc + rho_min);
  if (!(r_inc < s1 && s1 < 0.98 * rho_min))
    throw GeometryError("sigma1 radius must lie strictly between the inclusion and the boundary");

  // exterior zone: theta-dependent radii interpolating sigma1 -> outer circle
  int mA = std::max(1, static_cast<int>(std::lround((rho_min - s1) / h)));
  for (int j = mA; j >= 1; --j) {
    RingDef ring{n, {}};
    for (int k = 0; k < n; ++k) {
      double th = 2 * kPi * k / n;
      ring.radii.push_back(s1 + (rho_outer(th) - s1) * j / mA);
    }
    rings.push_back(ring);
  }
  rings.push_back({n, std::vector<double>(static_cast<size_t>(n), s1)});

  // annulus zone: uniform rings sigma1 -> inclusion circle
  int mB = std::max(1, static_cast<int>(std::lround((s1 - r_inc) / h)));
  for (int j = mB - 1; j >= 0; --j)
    rings.push_back({n, std::vector<double>(static_cast<size_t>(n), r_inc + (s1 - r_inc) * j / mB)});

  // graded interior of the inclusion
  graded_ladder(r_inc, n, R, n, 16, rings);
  return mesh_from_rings(rings, c, r_inc, s1);
}

TriMesh build_disk_with_inclusion(double outer_radius, const Eigen::Vector2d& inclusion_center,
                                  double inclusion_radius, int resolution) {
  DiskSpec spec;
  spec.outer_radius = outer_radius;
  spec.inclusion_center = inclusion_center;
  spec.inclusion_radius = inclusion_radius;
  spec.resolution = resolution;
  return build_disk_with_inclusion(spec);
}

TriMesh build_annulus(double outer_radius, double inner_radius, int resolution) {
  const int n = resolution;
  if (n < 16) throw GeometryError("resolution must be at least 16");
  if (!(0 < inner_radius && inner_radius < outer_radius))
    throw GeometryError("annulus radii must satisfy 0 < inner < outer");

  const double h = 2 * kPi * outer_radius / n;
  int m = std::max(1, static_cast<int>(std::lround((outer_radius - inner_radius) / h)));

  TriMesh mesh;
  std::vector<Eigen::Vector2d> pts;
  for (int k = 0; k <= m; ++k) {
    double r = inner_radius + (outer_radius - inner_radius) * k / m;
    for (int j = 0; j < n; ++j) {
      double th = 2 * kPi * j / n;
      pts.push_back(r * Eigen::Vector2d(std::cos(th), std::sin(th)));
    }
  }
  std::vector<Eigen::Vector3i> tris;
  for (int k = 0; k < m; ++k) {
    int bi = k * n, bo = (k + 1) * n;
    for (int j = 0; j < n; ++j) {
      int a = bi + j, b = bi + (j + 1) % n;
      int cc = bo + j, d = bo + (j + 1) % n;
      tris.push_back({a, cc, d});
      tris.push_back({a, d, b});
    }
  }
  mesh.nodes.resize(static_cast<Eigen::Index>(pts.size()), 2);
  for (size_t i = 0; i < pts.size(); ++i) mesh.nodes.row(static_cast<Eigen::Index>(i)) = pts[i];
  mesh.triangles.resize(static_cast<Eigen::Index>(tris.size()), 3);
  for (size_t t = 0; t < tris.size(); ++t) mesh.triangles.row(static_cast<Eigen::Index>(t)) = tris[t];
  mesh.region.assign(tris.size(), Region::Exterior);

  mesh.boundary_edges.resize(2 * n, 2);
  mesh.edge_loop.assign(static_cast<size_t>(2 * n), 0);
  int bo = m * n;
  for (int j = 0; j < n; ++j) {
    mesh.boundary_edges(j, 0) = bo + j;
    mesh.boundary_edges(j, 1) = bo + (j + 1) % n;
    mesh.edge_loop[static_cast<size_t>(j)] = 0;
  }
  for (int j = 0; j < n; ++j) {
    mesh.boundary_edges(n + j, 0) = (j + 1) % n;  // inner loop, domain on the left
    mesh.boundary_edges(n + j, 1) = j;
    mesh.edge_loop[static_cast<size_t>(n + j)] = 1;
  }
  rebuild_loops(mesh);
  return mesh;
}

namespace {

Eigen::Matrix2d product_strip_tensor(const Eigen::Vector2d& centroid, const Eigen::Vector2d& center,
                                     double glue_radius) {
  Eigen::Vector2d d = centroid - center;
  double rho = d.norm();
  Eigen::Vector2d u = d / rho;
  Eigen::Vector2d w(-u.y(), u.x());
  return u * u.transpose() + (glue_radius * glue_radius / (rho * rho)) * (w * w.transpose());
}

}  // namespace

CylinderExtension attach_cylinder(const TriMesh& mesh, const MetricField& metric, double length,
                                  int layers) {
  if (length == 0) return {mesh, metric, 0};
  if (length < 0) throw GeometryError("cylinder length must be nonnegative");
  if (layers < 2) throw GeometryError("cylinder needs at least 2 layers");
  if (mesh.num_loops() < 1) throw StructuralError("mesh has no boundary loop to glue along");
  if (metric.size() != mesh.num_triangles()) throw DimensionError("metric does not match mesh");

  const std::vector<int>& loop = mesh.loop_nodes(0);
  const int m = static_cast<int>(loop.size());
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  for (int v : loop) center += Eigen::Vector2d(mesh.nodes.row(v));
  center /= m;
  double r0 = 0;
  for (int v : loop) r0 += (Eigen::Vector2d(mesh.nodes.row(v)) - center).norm();
  r0 /= m;
  for (int v : loop) {
    double r = (Eigen::Vector2d(mesh.nodes.row(v)) - center).norm();
    if (std::abs(r - r0) > 1e-9 * r0)
      throw StructuralError("cylinder attachment requires a circular outer loop");
  }

  TriMesh out = mesh;
  const int base_nodes = mesh.num_nodes();
  const double dt = length / layers;

  out.nodes.conservativeResize(base_nodes + layers * m, 2);
  for (int k = 1; k <= layers; ++k) {
    for (int j = 0; j < m; ++j) {
      Eigen::Vector2d u = (Eigen::Vector2d(mesh.nodes.row(loop[static_cast<size_t>(j)])) - center) / r0;
      out.nodes.row(base_nodes + (k - 1) * m + j) = center + (r0 + k * dt) * u;
    }
  }

  auto ring_node = [&](int k, int j) {
    return k == 0 ? loop[static_cast<size_t>(j % m)] : base_nodes + (k - 1) * m + (j % m);
  };

  const int old_nt = mesh.num_triangles();
  out.triangles.conservativeResize(old_nt + 2 * m * layers, 3);
  out.region.resize(static_cast<size_t>(old_nt + 2 * m * layers), Region::Exterior);
  MetricField new_metric;
  new_metric.coeffs.resize(old_nt + 2 * m * layers, 3);
  new_metric.coeffs.topRows(old_nt) = metric.coeffs;
  int t = old_nt;
  for (int k = 0; k < layers; ++k) {
    for (int j = 0; j < m; ++j) {
      int a = ring_node(k, j), b = ring_node(k, j + 1);
      int cc = ring_node(k + 1, j), d = ring_node(k + 1, j + 1);
      out.triangles.row(t) << a, cc, d;
      out.triangles.row(t + 1) << a, d, b;
      for (int s = 0; s < 2; ++s) {
        Eigen::Vector2d cent = (Eigen::Vector2d(out.nodes.row(out.triangles(t + s, 0))) +
                                Eigen::Vector2d(out.nodes.row(out.triangles(t + s, 1))) +
                                Eigen::Vector2d(out.nodes.row(out.triangles(t + s, 2)))) / 3.0;
        Eigen::Matrix2d g = product_strip_tensor(cent, center, r0);
        new_metric.coeffs(t + s, 0) = g(0, 0);
        new_metric.coeffs(t + s, 1) = g(0, 1);
        new_metric.coeffs(t + s, 2) = g(1, 1);
      }
      t += 2;
    }
  }

  // far ring replaces loop 0; other loops keep their edges
  std::vector<Eigen::Vector2i> bedges;
  std::vector<int> bloops;
  for (int e = 0; e < mesh.num_boundary_edges(); ++e) {
    if (mesh.edge_loop[static_cast<size_t>(e)] == 0) continue;
    bedges.push_back(mesh.boundary_edges.row(e));
    bloops.push_back(mesh.edge_loop[static_cast<size_t>(e)]);
  }
  for (int j = 0; j < m; ++j) {
    bedges.push_back({ring_node(layers, j), ring_node(layers, j + 1)});
    bloops.push_back(0);
  }
  out.boundary_edges.resize(static_cast<Eigen::Index>(bedges.size()), 2);
  for (size_t i = 0; i < bedges.size(); ++i) out.boundary_edges.row(static_cast<Eigen::Index>(i)) = bedges[i];
  out.edge_loop = bloops;
  rebuild_loops(out);
  return {std::move(out), std::move(new_metric), 0};
}

CylinderExtension build_cylinder(double radius, double length, int resolution, int layers) {
  if (resolution < 16) throw GeometryError("resolution must be at least 16");
  if (layers < 2) throw GeometryError("cylinder needs at least 2 layers");
  if (length <= 0 || radius <= 0) throw GeometryError("cylinder radius and length must be positive");

  const int n = resolution;
  TriMesh mesh;
  std::vector<Eigen::Vector2d> pts;
  for (int k = 0; k <= layers; ++k) {
    double r = radius + length * k / layers;
    for (int j = 0; j < n; ++j) {
      double th = 2 * kPi * j / n;
      pts.push_back(r * Eigen::Vector2d(std::cos(th), std::sin(th)));
    }
  }
  mesh.nodes.resize(static_cast<Eigen::Index>(pts.size()), 2);
  for (size_t i = 0; i < pts.size(); ++i) mesh.nodes.row(static_cast<Eigen::Index>(i)) = pts[i];

  mesh.triangles.resize(2 * n * layers, 3);
  mesh.region.assign(static_cast<size_t>(2 * n * layers), Region::Exterior);
  MetricField metric;
  metric.coeffs.resize(2 * n * layers, 3);
  int t = 0;
  for (int k = 0; k < layers; ++k) {
    for (int j = 0; j < n; ++j) {
      int a = k * n + j, b = k * n + (j + 1) % n;
      int cc = (k + 1) * n + j, d = (k + 1) * n + (j + 1) % n;
      mesh.triangles.row(t) << a, cc, d;
      mesh.triangles.row(t + 1) << a, d, b;
      for (int s = 0; s < 2; ++s) {
        Eigen::Vector2d cent = (pts[static_cast<size_t>(mesh.triangles(t + s, 0))] +
                                pts[static_cast<size_t>(mesh.triangles(t + s, 1))] +
                                pts[static_cast<size_t>(mesh.triangles(t + s, 2))]) / 3.0;
        Eigen::Matrix2d g = product_strip_tensor(cent, Eigen::Vector2d::Zero(), radius);
        metric.coeffs(t + s, 0) = g(0, 0);
        metric.coeffs(t + s, 1) = g(0, 1);
        metric.coeffs(t + s, 2) = g(1, 1);
      }
      t += 2;
    }
  }

  mesh.boundary_edges.resize(2 * n, 2);
  mesh.edge_loop.assign(static_cast<size_t>(2 * n), 0);
  for (int j = 0; j < n; ++j) {
    mesh.boundary_edges(j, 0) = (j + 1) % n;  // t = 0 end
    mesh.boundary_edges(j, 1) = j;
    mesh.edge_loop[static_cast<size_t>(j)] = 0;
    mesh.boundary_edges(n + j, 0) = layers * n + j;  // far end
    mesh.boundary_edges(n + j, 1) = layers * n + (j + 1) % n;
    mesh.edge_loop[static_cast<size_t>(n + j)] = 1;
  }
  rebuild_loops(mesh);
  return {std::move(mesh), std::move(metric), 1};
}

double metric_deviation(const Eigen::Matrix2d& g, const Eigen::Matrix2d& h) {
  Eigen::LLT<Eigen::Matrix2d> llt(g);
  if (llt.info() != Eigen::Success) throw MetricError("reference tensor is not positive definite");
  Eigen::Matrix2d L = llt.matrixL();
  Eigen::Matrix2d s = L.inverse() * h * L.inverse().transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(0.5 * (s + s.transpose()));
  return std::max(std::abs(eig.eigenvalues()(0) - 1.0), std::abs(eig.eigenvalues()(1) - 1.0));
}

CompositeMetric composite_metric(const MetricField& g, const MetricField& h, const TriMesh& mesh) {
  if (g.size() != mesh.num_triangles() || h.size() != mesh.num_triangles())
    throw DimensionError("metric fields must cover every triangle");
  validate_spd(g);
  validate_spd(h);

  CompositeMetric out;
  out.field = g;
  for (int t = 0; t < mesh.num_triangles(); ++t)
    if (mesh.region[static_cast<size_t>(t)] == Region::Inclusion) out.field.coeffs.row(t) = h.coeffs.row(t);

  // interface nodes: incident to both inclusion and non-inclusion triangles
  std::vector<char> touch_inc(static_cast<size_t>(mesh.num_nodes()), 0);
  std::vector<char> touch_out(static_cast<size_t>(mesh.num_nodes()), 0);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    bool inc = mesh.region[static_cast<size_t>(t)] == Region::Inclusion;
    for (int e = 0; e < 3; ++e) (inc ? touch_inc : touch_out)[static_cast<size_t>(mesh.triangles(t, e))] = 1;
  }
  out.contrast = 0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    bool adjacent = false;
    for (int e = 0; e < 3; ++e) {
      int v = mesh.triangles(t, e);
      if (touch_inc[static_cast<size_t>(v)] && touch_out[static_cast<size_t>(v)]) adjacent = true;
    }
    if (adjacent) out.contrast = std::max(out.contrast, metric_deviation(g.tensor(t), h.tensor(t)));
  }
  return out;
}

CollarProfile CollarProfile::identity() {
  CollarProfile p;
  p.kind = Kind::Identity;
  return p;
}

CollarProfile CollarProfile::radial_shrink(double rate, double accel, double core_radius) {
  CollarProfile p;
  p.kind = Kind::RadialShrink;
  p.rate = rate;
  p.accel = accel;
  p.core_radius = core_radius;
  return p;
}

CollarProfile CollarProfile::tentacle(double theta0, double reach_radius, double flat_halfwidth,
                                      double taper_width, double base_rate, double core_radius) {
  CollarProfile p;
  p.kind = Kind::Tentacle;
  p.theta0 = theta0;
  p.reach_radius = reach_radius;
  p.flat_halfwidth = flat_halfwidth;
  p.taper_width = taper_width;
  p.base_rate = base_rate;
  p.core_radius = core_radius;
  return p;
}

namespace {

// flat-bottomed bump: 1 inside |d| <= alpha, smoothstep down to 0 across the taper
struct Shape {
  double value, d1, d2;
};

Shape tentacle_shape(double dtheta, double alpha, double tau) {
  double ad = std::abs(dtheta);
  if (ad <= alpha) return {1.0, 0.0, 0.0};
  double q = (ad - alpha) / tau;
  if (q >= 1.0) return {0.0, 0.0, 0.0};
  double sg = dtheta >= 0 ? 1.0 : -1.0;
  return {1.0 - sstep(q), -sstep_d(q) * sg / tau, -sstep_dd(q) / (tau * tau)};
}

}  // namespace

double CollarProfile::radius(double theta, double t, double r0) const {
  switch (kind) {
    case Kind::Identity:
      return r0;
    case Kind::RadialShrink:
      return r0 * (1.0 - rate * t - accel * t * t);
    case Kind::Tentacle: {
      double depth = r0 * (1.0 - base_rate) - reach_radius;
      Shape s = tentacle_shape(wrap_angle(theta - theta0), flat_halfwidth, taper_width);
      return r0 * (1.0 - base_rate * t) - t * depth * s.value;
    }
  }
  return r0;
}

double CollarProfile::d_dt(double theta, double t, double r0) const {
  switch (kind) {
    case Kind::Identity:
      return 0.0;
    case Kind::RadialShrink:
      return r0 * (-rate - 2.0 * accel * t);
    case Kind::Tentacle: {
      double depth = r0 * (1.0 - base_rate) - reach_radius;
      Shape s = tentacle_shape(wrap_angle(theta - theta0), flat_halfwidth, taper_width);
      return -r0 * base_rate - depth * s.value;
    }
  }
  return 0.0;
}

double CollarProfile::d_dtheta(double theta, double t, double r0) const {
  if (kind != Kind::Tentacle) return 0.0;
  double depth = r0 * (1.0 - base_rate) - reach_radius;
  Shape s = tentacle_shape(wrap_angle(theta - theta0), flat_halfwidth, taper_width);
  return -t * depth * s.d1;
}

double CollarProfile::d2_dtheta2(double theta, double t, double r0) const {
  if (kind != Kind::Tentacle) return 0.0;
  double depth = r0 * (1.0 - base_rate) - reach_radius;
  Shape s = tentacle_shape(wrap_angle(theta - theta0), flat_halfwidth, taper_width);
  return -t * depth * s.d2;
}

double CollarProfile::d2_dtheta_dt(double theta, double t, double r0) const {
  if (kind != Kind::Tentacle) return 0.0;
  double depth = r0 * (1.0 - base_rate) - reach_radius;
  Shape s = tentacle_shape(wrap_angle(theta - theta0), flat_halfwidth, taper_width);
  return -depth * s.d1;
}

namespace {

struct LoopGeometry {
  Eigen::Vector2d center;
  double r0;
};

LoopGeometry circular_loop_geometry(const TriMesh& mesh, int loop) {
  const std::vector<int>& nodes = mesh.loop_nodes(loop);
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  for (int v : nodes) center += Eigen::Vector2d(mesh.nodes.row(v));
  center /= static_cast<double>(nodes.size());
  double r0 = 0;
  for (int v : nodes) r0 += (Eigen::Vector2d(mesh.nodes.row(v)) - center).norm();
  r0 /= static_cast<double>(nodes.size());
  for (int v : nodes) {
    double r = (Eigen::Vector2d(mesh.nodes.row(v)) - center).norm();
    if (std::abs(r - r0) > 1e-9 * r0)
      throw GeometryError("nested families require a circular outer loop");
  }
  return {center, r0};
}

TriMesh morph_mesh(const TriMesh& base, const Eigen::Vector2d& center, double r0,
                   const CollarProfile& profile, double t) {
  TriMesh out = base;
  if (t == 0.0) return out;  // phi_0 is the identity, bit for bit
  for (int i = 0; i < base.num_nodes(); ++i) {
    Eigen::Vector2d d = Eigen::Vector2d(base.nodes.row(i)) - center;
    double r = d.norm();
    if (r < 1e-15) continue;
    double theta = std::atan2(d.y(), d.x());
    double target = profile.radius(theta, t, r0);
    double new_r;
    if (profile.core_radius <= 0) {
      new_r = r * target / r0;
    } else if (r <= profile.core_radius) {
      new_r = r;
    } else {
      new_r = profile.core_radius +
              (r - profile.core_radius) * (target - profile.core_radius) / (r0 - profile.core_radius);
    }
    out.nodes.row(i) = center + (new_r / r) * d;
  }
  return out;
}

CollarFields collar_fields(const TriMesh& base, const Eigen::Vector2d& center, double r0, int loop,
                           const CollarProfile& profile, double t) {
  const std::vector<int>& nodes = base.loop_nodes(loop);
  const int m = static_cast<int>(nodes.size());
  CollarFields f;
  f.eta.resize(m);
  f.x_coeff.resize(m);
  f.div_x.resize(m);
  f.gamma.resize(m);
  for (int i = 0; i < m; ++i) {
    Eigen::Vector2d d = Eigen::Vector2d(base.nodes.row(nodes[static_cast<size_t>(i)])) - center;
    double theta = std::atan2(d.y(), d.x());
    double R = profile.radius(theta, t, r0);
    double Rt = profile.d_dt(theta, t, r0);
    double Rth = profile.d_dtheta(theta, t, r0);
    double Rthth = profile.d2_dtheta2(theta, t, r0);
    double Rtht = profile.d2_dtheta_dt(theta, t, r0);
    double T2 = R * R + Rth * Rth;
    double T = std::sqrt(T2);
    f.eta(i) = -Rt * R / T;
    f.x_coeff(i) = Rt * Rth / T;
    // div(c d_s) = (1/|T|) d_theta (Rt Rth / |T|)
    double num_d = (Rtht * Rth + Rt * Rthth) / T - Rt * Rth * (R * Rth + Rth * Rthth) / (T2 * T);
    f.div_x(i) = num_d / T;
    f.gamma(i) = (R * Rt + Rth * Rtht) / T2;
  }
  return f;
}

}  // namespace

TriMesh NestedFamily::mesh_at(double t) const {
  return morph_mesh(base, center, circular_loop_geometry(base, loop).r0, profile, t);
}

CollarFields NestedFamily::fields_at(double t) const {
  return collar_fields(base, center, circular_loop_geometry(base, loop).r0, loop, profile, t);
}

NestedFamily nested_family(const TriMesh& mesh, int levels, const CollarProfile& profile,
                           double min_eta) {
  if (levels < 1) throw GeometryError("nested family needs at least one level");
  if (mesh.num_loops() < 1 || mesh.num_loops() > 2)
    throw GeometryError("nested families are implemented for disk and annulus meshes");
  LoopGeometry lg = circular_loop_geometry(mesh, 0);

  // the morph must keep the inner boundary outside the inclusion
  double r_inc_max = 0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    if (mesh.region[static_cast<size_t>(t)] != Region::Inclusion) continue;
    for (int e = 0; e < 3; ++e)
      r_inc_max = std::max(r_inc_max,
                           (Eigen::Vector2d(mesh.nodes.row(mesh.triangles(t, e))) - lg.center).norm());
  }

  NestedFamily fam;
  fam.base = mesh;
  fam.center = lg.center;
  fam.loop = 0;
  fam.profile = profile;
  fam.min_eta = min_eta;

  const std::vector<int>& lnodes = mesh.loop_nodes(0);
  for (int k = 0; k <= levels; ++k) {
    double t = static_cast<double>(k) / levels;
    CollarFields f = collar_fields(mesh, lg.center, lg.r0, 0, profile, t);
    if (f.eta.minCoeff() < min_eta)
      throw TransversalityError("profile normal speed " + std::to_string(f.eta.minCoeff()) +
                                " below the transversality floor at t = " + std::to_string(t));
    if (r_inc_max > 0) {
      for (int i = 0; i < static_cast<int>(lnodes.size()); ++i) {
        Eigen::Vector2d d = Eigen::Vector2d(mesh.nodes.row(lnodes[static_cast<size_t>(i)])) - lg.center;
        double theta = std::atan2(d.y(), d.x());
        if (profile.radius(theta, t, lg.r0) <= r_inc_max)
          throw GeometryError("profile drives the inner boundary into the inclusion");
      }
    }
    TriMesh level = morph_mesh(mesh, lg.center, lg.r0, profile, t);
    for (int tt = 0; tt < level.num_triangles(); ++tt)
      if (level.signed_area(tt) <= 0) throw GeometryError("self-intersecting morph at t = " + std::to_string(t));
    fam.meshes.push_back(std::move(level));
    fam.times.push_back(t);
    fam.fields.push_back(std::move(f));
  }
  return fam;
}

double directed_hausdorff(const std::vector<Eigen::Vector2d>& points,
                          const std::vector<Eigen::Vector2d>& polyline) {
  if (polyline.size() < 2) throw DomainError("polyline needs at least two points");
  double worst = 0;
  for (const auto& a : points) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i + 1 < polyline.size(); ++i) {
      Eigen::Vector2d p = polyline[i], q = polyline[i + 1];
      Eigen::Vector2d pq = q - p;
      double s = pq.squaredNorm() > 0 ? std::clamp((a - p).dot(pq) / pq.squaredNorm(), 0.0, 1.0) : 0.0;
      best = std::min(best, (a - (p + s * pq)).norm());
    }
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace dnlab
