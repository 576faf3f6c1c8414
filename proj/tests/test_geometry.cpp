#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "dnlab/dn_operators.hpp"
#include "dnlab/geometry.hpp"
#include "dnlab/mesh.hpp"

using namespace dnlab;
namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("unit disk topology and area") {
  for (int n : {64, 128}) {
    TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, n);
    validate(disk);
    CHECK(disk.euler_characteristic() == 1);
    CHECK(disk.num_loops() == 1);

    // the mesh tiles the inscribed n-gon exactly
    double polygon = n * std::sin(2 * kPi / n) / 2;
    CHECK(disk.total_area() == doctest::Approx(polygon).epsilon(1e-12));
    CHECK(std::abs(disk.total_area() / kPi - 1.0) < 0.02);
  }
  double err64 = std::abs(build_disk_with_inclusion(1.0, {0, 0}, 0.0, 64).total_area() / kPi - 1);
  double err128 = std::abs(build_disk_with_inclusion(1.0, {0, 0}, 0.0, 128).total_area() / kPi - 1);
  CHECK(err128 < err64);
}

TEST_CASE("annulus topology") {
  TriMesh ann = build_annulus(1.0, 0.5, 64);
  validate(ann);
  CHECK(ann.num_loops() == 2);
  CHECK(ann.euler_characteristic() == 0);
}

TEST_CASE("disk with inclusion: regions edge-aligned") {
  DiskSpec spec;
  spec.inclusion_radius = 0.3;
  spec.sigma1_radius = 0.65;
  spec.resolution = 64;
  TriMesh disk = build_disk_with_inclusion(spec);
  validate(disk);

  bool has_inc = false, has_ann = false, has_ext = false;
  for (Region r : disk.region) {
    has_inc |= r == Region::Inclusion;
    has_ann |= r == Region::Annulus;
    has_ext |= r == Region::Exterior;
  }
  CHECK(has_inc);
  CHECK(has_ann);
  CHECK(has_ext);

  for (int v : curve_nodes(disk, Curve::SigmaInterface))
    CHECK(Eigen::Vector2d(disk.nodes.row(v)).norm() == doctest::Approx(0.3).epsilon(1e-12));
  for (int v : curve_nodes(disk, Curve::Sigma1Interface))
    CHECK(Eigen::Vector2d(disk.nodes.row(v)).norm() == doctest::Approx(0.65).epsilon(1e-12));
}

TEST_CASE("off-center inclusion stays legal") {
  DiskSpec spec;
  spec.inclusion_center = {0.2, -0.1};
  spec.inclusion_radius = 0.25;
  spec.resolution = 64;
  TriMesh disk = build_disk_with_inclusion(spec);
  validate(disk);
  for (int v : curve_nodes(disk, Curve::SigmaInterface))
    CHECK((Eigen::Vector2d(disk.nodes.row(v)) - spec.inclusion_center).norm() ==
          doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("inclusion touching the boundary is rejected") {
  CHECK_THROWS_AS(build_disk_with_inclusion(1.0, {0.5, 0.0}, 0.5, 64), GeometryError);
  CHECK_THROWS_AS(build_disk_with_inclusion(1.0, {0, 0}, 0.3, 8), GeometryError);
}

TEST_CASE("refinement halves edges and preserves structure") {
  DiskSpec spec;
  spec.inclusion_radius = 0.3;
  spec.resolution = 32;
  TriMesh disk = build_disk_with_inclusion(spec);
  TriMesh fine = refine(disk);
  validate(fine);
  CHECK(fine.max_edge_length() == doctest::Approx(disk.max_edge_length() / 2).epsilon(1e-12));
  CHECK(fine.num_triangles() == 4 * disk.num_triangles());
  CHECK(fine.num_loops() == disk.num_loops());
  CHECK(fine.euler_characteristic() == disk.euler_characteristic());
  CHECK(fine.total_area() == doctest::Approx(disk.total_area()).epsilon(1e-12));

  int inc_before = 0, inc_after = 0;
  for (Region r : disk.region) inc_before += r == Region::Inclusion;
  for (Region r : fine.region) inc_after += r == Region::Inclusion;
  CHECK(inc_after == 4 * inc_before);
}

TEST_CASE("mesh and metric file round-trip") {
  DiskSpec spec;
  spec.inclusion_radius = 0.3;
  spec.resolution = 32;
  TriMesh disk = build_disk_with_inclusion(spec);
  std::stringstream ss;
  write_mesh(ss, disk);
  TriMesh back = read_mesh(ss);
  validate(back);
  CHECK(back.num_nodes() == disk.num_nodes());
  CHECK((back.nodes - disk.nodes).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.triangles - disk.triangles).cwiseAbs().maxCoeff() == 0);

  MetricField g = MetricField::constant(disk.num_triangles(), (Eigen::Matrix2d() << 2, 0.3, 0.3, 1).finished());
  std::stringstream ms;
  write_metric(ms, g);
  MetricField gb = read_metric(ms);
  CHECK((gb.coeffs - g.coeffs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("composite metric") {
  DiskSpec spec;
  spec.inclusion_radius = 0.3;
  spec.resolution = 32;
  TriMesh disk = build_disk_with_inclusion(spec);
  MetricField g = MetricField::euclidean(disk.num_triangles());

  SUBCASE("h = g gives zero contrast and bitwise-equal field") {
    CompositeMetric cm = composite_metric(g, g, disk);
    CHECK(cm.contrast == 0.0);
    CHECK((cm.field.coeffs - g.coeffs).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("h = 2g has contrast 1") {
    MetricField h = MetricField::constant(disk.num_triangles(), 2 * Eigen::Matrix2d::Identity());
    CompositeMetric cm = composite_metric(g, h, disk);
    CHECK(cm.contrast == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("h = diag(1+c, 1) has contrast c") {
    for (double c : {0.05, 0.4, 2.0}) {
      MetricField h = MetricField::constant(
          disk.num_triangles(), (Eigen::Matrix2d() << 1 + c, 0, 0, 1).finished());
      CompositeMetric cm = composite_metric(g, h, disk);
      CHECK(cm.contrast == doctest::Approx(c).epsilon(1e-12));
    }
  }
  SUBCASE("composite is idempotent") {
    MetricField h = MetricField::constant(disk.num_triangles(), (Eigen::Matrix2d() << 2, 0.5, 0.5, 1).finished());
    CompositeMetric once = composite_metric(g, h, disk);
    CompositeMetric twice = composite_metric(once.field, h, disk);
    CHECK((twice.field.coeffs - once.field.coeffs).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("non-SPD input is rejected") {
    MetricField bad = MetricField::constant(disk.num_triangles(), (Eigen::Matrix2d() << 1, 2, 2, 1).finished());
    CHECK_THROWS_AS(composite_metric(g, bad, disk), MetricError);
  }
}

TEST_CASE("identity profile trips the transversality guard") {
  TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, 32);
  CHECK_THROWS_AS(nested_family(disk, 1, CollarProfile::identity()), TransversalityError);
}

TEST_CASE("uniform radial shrink fields") {
  TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, 64);
  NestedFamily fam = nested_family(disk, 4, CollarProfile::radial_shrink(0.5));
  CHECK(fam.num_levels() == 5);
  for (int k = 0; k < fam.num_levels(); ++k) {
    validate(fam.meshes[static_cast<size_t>(k)]);
    CHECK(fam.fields[static_cast<size_t>(k)].eta.minCoeff() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(fam.fields[static_cast<size_t>(k)].eta.maxCoeff() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(fam.fields[static_cast<size_t>(k)].x_coeff.cwiseAbs().maxCoeff() == 0.0);
    CHECK(fam.fields[static_cast<size_t>(k)].div_x.cwiseAbs().maxCoeff() == 0.0);
    double t = fam.times[static_cast<size_t>(k)];
    CHECK(fam.fields[static_cast<size_t>(k)].gamma(0) ==
          doctest::Approx(-0.5 / (1 - 0.5 * t)).epsilon(1e-12));
  }
  // level 0 is the input mesh
  CHECK((fam.meshes[0].nodes - disk.nodes).cwiseAbs().maxCoeff() == 0.0);
  // shrunken boundary radius
  const auto& loop = fam.meshes[4].loop_nodes(0);
  for (int v : loop) CHECK(Eigen::Vector2d(fam.meshes[4].nodes.row(v)).norm() ==
                           doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("tentacle profile reaches the target arc") {
  DiskSpec spec;
  spec.inclusion_radius = 0.3;
  spec.sigma1_radius = 0.65;
  spec.resolution = 64;
  TriMesh disk = build_disk_with_inclusion(spec);

  const double r0 = 0.15;
  const double alpha = 2 * std::asin(r0 / (2 * spec.inclusion_radius));
  CollarProfile prof = CollarProfile::tentacle(0.0, spec.inclusion_radius + r0 / 8, alpha, 0.6, 0.05, 0.15);
  NestedFamily fam = nested_family(disk, 8, prof);
  for (const auto& f : fam.fields) CHECK(f.eta.minCoeff() > 0);

  // target arc B(x, r0) on the inclusion circle, x at angle 0
  std::vector<Eigen::Vector2d> arc;
  for (int i = -40; i <= 40; ++i) {
    double th = alpha * i / 40.0;
    arc.push_back(spec.inclusion_radius * Eigen::Vector2d(std::cos(th), std::sin(th)));
  }
  const TriMesh& last = fam.meshes.back();
  std::vector<Eigen::Vector2d> polyline;
  for (int v : last.loop_nodes(0)) polyline.push_back(last.nodes.row(v));
  polyline.push_back(polyline.front());
  CHECK(directed_hausdorff(arc, polyline) < r0 / 4);
}

TEST_CASE("profile entering the inclusion is rejected") {
  DiskSpec spec;
  spec.inclusion_radius = 0.3;
  spec.resolution = 32;
  TriMesh disk = build_disk_with_inclusion(spec);
  CHECK_THROWS_AS(nested_family(disk, 4, CollarProfile::radial_shrink(0.8)), GeometryError);
}

TEST_CASE("attach_cylinder") {
  TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, 32);
  MetricField g = MetricField::euclidean(disk.num_triangles());

  SUBCASE("length zero is the identity") {
    CylinderExtension ext = attach_cylinder(disk, g, 0.0, 4);
    CHECK(ext.mesh.num_nodes() == disk.num_nodes());
    CHECK((ext.metric.coeffs - g.coeffs).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("layer count sets the new node count") {
    for (int layers : {2, 5}) {
      CylinderExtension ext = attach_cylinder(disk, g, 1.0, layers);
      validate(ext.mesh);
      CHECK(ext.mesh.num_nodes() == disk.num_nodes() + layers * 32);
      CHECK(ext.mesh.num_loops() == 1);
      validate_spd(ext.metric);
    }
  }
  SUBCASE("needs at least two layers") {
    CHECK_THROWS_AS(attach_cylinder(disk, g, 1.0, 1), GeometryError);
  }
}

TEST_CASE("standalone product cylinder") {
  CylinderExtension cyl = build_cylinder(1.0, 2.0, 32, 16);
  validate(cyl.mesh);
  CHECK(cyl.mesh.num_loops() == 2);
  validate_spd(cyl.metric);
}

TEST_CASE("nested family morph at arbitrary time") {
  TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, 32);
  NestedFamily fam = nested_family(disk, 4, CollarProfile::radial_shrink(0.5));
  TriMesh mid = fam.mesh_at(0.3);
  validate(mid);
  for (int v : mid.loop_nodes(0))
    CHECK(Eigen::Vector2d(mid.nodes.row(v)).norm() == doctest::Approx(0.85).epsilon(1e-12));
  CollarFields f = fam.fields_at(0.3);
  CHECK(f.eta(0) == doctest::Approx(0.5).epsilon(1e-12));
}
