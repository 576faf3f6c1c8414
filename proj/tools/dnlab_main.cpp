// dnlab: batch front door for the discrete Dirichlet-Neumann laboratory.
// Subcommands: mesh, dn, verify-identities, evolve, runge, probe, stability,
// recurrence, report.  Fixed seeds reproduce byte-identical artifacts.

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dnlab/boundary_calculus.hpp"
#include "dnlab/dn_operators.hpp"
#include "dnlab/evolution.hpp"
#include "dnlab/geometry.hpp"
#include "dnlab/identities.hpp"
#include "dnlab/mesh.hpp"
#include "dnlab/probe.hpp"
#include "dnlab/report_io.hpp"
#include "dnlab/runge.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dnlab;

namespace {

constexpr double kPi = std::numbers::pi;

// flat key-value configuration with [sections]; flags override file entries
class RunConfig {
 public:
  void load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    std::string line, section;
    while (std::getline(is, line)) {
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto trim = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        size_t b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[' && line.back() == ']') {
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("bad config line: " + line);
      std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
      kv_[section.empty() ? key : section + "." + key] = value;
    }
  }
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  std::string str(const std::string& key, const std::string& dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
  }
  double num(const std::string& key, double dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : std::stod(it->second);
  }
  long integer(const std::string& key, long dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : std::stol(it->second);
  }
  std::vector<double> numbers(const std::string& key, std::vector<double> dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    std::vector<double> out;
    std::istringstream ss(it->second);
    double x;
    while (ss >> x) out.push_back(x);
    return out;
  }
  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

struct CliState {
  RunConfig cfg;
  std::string out = "out";
  unsigned long long seed = 1;
  int resolution = 0;  // 0: from config / command default
  std::string mesh_name;
  double tol = 0;  // 0: command default
  int parallel = 1;
};

int resolution_or(const CliState& st, const char* key, int dflt) {
  if (st.resolution > 0) return st.resolution;
  return static_cast<int>(st.cfg.integer(key, dflt));
}

TriMesh reference_mesh(const CliState& st, int resolution) {
  DiskSpec spec;
  spec.outer_radius = st.cfg.num("geometry.outer_radius", 1.0);
  spec.inclusion_center = {st.cfg.num("geometry.inclusion_cx", 0.0),
                           st.cfg.num("geometry.inclusion_cy", 0.0)};
  spec.inclusion_radius = st.cfg.num("geometry.inclusion_radius", 0.3);
  spec.sigma1_radius = st.cfg.num("geometry.sigma1_radius", 0.65);
  spec.resolution = resolution;
  return build_disk_with_inclusion(spec);
}

Eigen::VectorXd random_vec(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

json report_line(const IdentityReport& rep) {
  return json{{"identity", rep.identity},
              {"abs", rep.abs_residual},
              {"rel", rep.rel_residual},
              {"resolution", rep.resolution},
              {"pass", rep.pass}};
}

json check_line(const std::string& name, double abs, double rel, int resolution, bool pass) {
  return json{{"identity", name}, {"abs", abs}, {"rel", rel}, {"resolution", resolution}, {"pass", pass}};
}

int finish(Manifest& manifest, const CliState& st, bool pass, const std::string& report_path) {
  manifest.set_pass(pass);
  std::string mpath = manifest.write(st.out);
  if (!pass) {
    std::cerr << "FAIL: see " << report_path << "\n";
    return 1;
  }
  std::cout << "ok: " << mpath << "\n";
  return 0;
}

// ---------------------------------------------------------------- mesh / dn

int cmd_mesh(const CliState& st) {
  fs::create_directories(st.out);
  Manifest manifest("mesh", st.seed);
  std::string name = st.mesh_name.empty() ? st.cfg.str("geometry.mesh", "disk-inclusion") : st.mesh_name;
  int res = resolution_or(st, "geometry.resolution", 64);

  TriMesh mesh;
  MetricField metric = MetricField::euclidean(0);
  if (name == "disk") {
    mesh = build_disk_with_inclusion(st.cfg.num("geometry.outer_radius", 1.0), {0, 0}, 0.0, res);
    metric = MetricField::euclidean(mesh.num_triangles());
  } else if (name == "disk-inclusion") {
    mesh = reference_mesh(st, res);
    metric = MetricField::euclidean(mesh.num_triangles());
  } else if (name == "annulus") {
    mesh = build_annulus(st.cfg.num("geometry.outer_radius", 1.0),
                         st.cfg.num("geometry.inner_radius", 0.5), res);
    metric = MetricField::euclidean(mesh.num_triangles());
  } else if (name == "cylinder") {
    CylinderExtension cyl = build_cylinder(st.cfg.num("geometry.outer_radius", 1.0),
                                           st.cfg.num("geometry.cylinder_length", 2.0), res,
                                           static_cast<int>(st.cfg.integer("geometry.cylinder_layers", res / 3)));
    mesh = std::move(cyl.mesh);
    metric = std::move(cyl.metric);
  } else {
    throw ConfigError("unknown mesh name '" + name + "'");
  }
  validate(mesh);
  std::string mesh_path = st.out + "/mesh.txt", metric_path = st.out + "/metric.txt";
  write_mesh_file(mesh_path, mesh);
  write_metric_file(metric_path, metric);
  manifest.add_output(mesh_path);
  manifest.add_output(metric_path);
  manifest.set_note("nodes", mesh.num_nodes());
  manifest.set_note("triangles", mesh.num_triangles());
  return finish(manifest, st, true, mesh_path);
}

int cmd_dn(const CliState& st) {
  fs::create_directories(st.out);
  Manifest manifest("dn", st.seed);

  TriMesh mesh;
  MetricField metric = MetricField::euclidean(0);
  if (!st.mesh_name.empty() && fs::exists(st.mesh_name)) {
    mesh = read_mesh_file(st.mesh_name);
    fs::path metric_file = fs::path(st.mesh_name).parent_path() / "metric.txt";
    metric = fs::exists(metric_file) ? read_metric_file(metric_file.string())
                                     : MetricField::euclidean(mesh.num_triangles());
  } else {
    mesh = reference_mesh(st, resolution_or(st, "geometry.resolution", 64));
    metric = MetricField::euclidean(mesh.num_triangles());
  }
  StiffnessSystem sys(mesh, metric);
  DNOperator dn = sys.dn_map();

  std::string path = st.out + "/dn.csv";
  std::ofstream os(path);
  os << "dn 1 " << dn.size() << "\n";
  for (int i = 0; i < dn.size(); ++i) {
    for (int j = 0; j < dn.size(); ++j) os << (j ? "," : "") << fmt(dn.form(i, j));
    os << "\n";
  }
  os.close();
  manifest.add_output(path);
  return finish(manifest, st, true, path);
}

// ------------------------------------------------------- verify-identities

int cmd_verify_identities(const CliState& st) {
  fs::create_directories(st.out);
  Manifest manifest("verify-identities", st.seed);
  const int res = resolution_or(st, "identities.resolution", 32);
  const int trials = static_cast<int>(st.cfg.integer("identities.trials", 50));
  const double tol = st.tol > 0 ? st.tol : st.cfg.num("identities.tol", 1e-9);

  JsonlWriter out(st.out + "/identities.jsonl");
  bool all_pass = true;
  std::mt19937_64 rng(st.seed);

  for (int n : {res, 2 * res}) {
    TriMesh mesh = reference_mesh(st, n);
    MetricField g = MetricField::euclidean(mesh.num_triangles());
    MetricField h = g;
    Eigen::Matrix2d anis;
    anis << 2, 0.3, 0.3, 1;
    for (int t = 0; t < mesh.num_triangles(); ++t)
      if (mesh.region[static_cast<size_t>(t)] == Region::Inclusion) h.set_tensor(t, anis);
    IdentityLab lab(mesh, g, h);

    IdentityReport worst_diff, worst_trans, worst_comp;
    for (int trial = 0; trial < trials; ++trial) {
      Eigen::VectorXd u = random_vec(lab.outer_size(), rng), v = random_vec(lab.outer_size(), rng);
      IdentityReport diff = lab.difference_formula(u, v, tol);
      IdentityReport trans = lab.transmission(u, tol);
      IdentityReport comp = lab.comparison_map(v, tol);
      if (trial == 0 || diff.rel_residual > worst_diff.rel_residual) worst_diff = diff;
      if (trial == 0 || trans.rel_residual > worst_trans.rel_residual) worst_trans = trans;
      if (trial == 0 || comp.rel_residual > worst_comp.rel_residual) worst_comp = comp;
    }
    IdentityReport adj = lab.adjoint_formula(tol);
    double worst_pair = 0;
    for (int trial = 0; trial < trials; ++trial)
      worst_pair = std::max(worst_pair, lab.adjoint_pairing_residual(random_vec(lab.outer_size(), rng),
                                                                     random_vec(lab.sigma_size(), rng)));
    for (const IdentityReport& rep : {worst_diff, worst_trans, worst_comp, adj}) {
      out.add(report_line(rep));
      all_pass = all_pass && rep.pass;
    }
    out.add(check_line("adjoint_pairing", worst_pair, worst_pair, n, worst_pair <= 1e-10));
    all_pass = all_pass && worst_pair <= 1e-10;
  }

  // discretization-limited checks on a three-rung ladder
  std::vector<LadderRung> disk_ladder;
  for (int n : {res, 2 * res, 4 * res}) {
    TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, n);
    MetricField g = MetricField::euclidean(disk.num_triangles());
    disk_ladder.push_back({std::move(disk), std::move(g)});
  }
  IdentityReport symbol = symbol_remainder_check(disk_ladder, st.cfg.num("identities.symbol_s", 0.0));
  CommutatorReport comms = commutator_norms(
      disk_ladder, [](double th) { return std::sin(th); }, [](double th) { return std::cos(th); },
      0.5);
  SpectralGapReport gap = spectral_gap_check(disk_ladder);
  for (const IdentityReport& rep : {symbol, comms.scalar, comms.vector, gap.report}) {
    out.add(report_line(rep));
    all_pass = all_pass && rep.pass;
  }

  out.close();
  manifest.add_output(out.path());
  return finish(manifest, st, all_pass, out.path());
}

// ----------------------------------------------------------------- evolve

int cmd_evolve(const CliState& st) {
  fs::create_directories(st.out);
  Manifest manifest("evolve", st.seed);
  const int res = resolution_or(st, "evolve.resolution", 128);
  const int levels = static_cast<int>(st.cfg.integer("evolve.levels", 8));

  TriMesh disk = build_disk_with_inclusion(1.0, {0, 0}, 0.0, res);
  MetricField g = MetricField::euclidean(disk.num_triangles());
  CollarProfile curved = CollarProfile::radial_shrink(st.cfg.num("evolve.rate", 0.25),
                                                      st.cfg.num("evolve.accel", 0.125));
  Eigen::VectorXd f(static_cast<Eigen::Index>(disk.loop_nodes(0).size()));
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    int v = disk.loop_nodes(0)[static_cast<size_t>(i)];
    f(i) = std::cos(std::atan2(disk.nodes(v, 1), disk.nodes(v, 0)));
  }

  JsonlWriter out(st.out + "/evolve.jsonl");
  bool all_pass = true;

  // tautological halving
  double r_coarse = EvolutionLab(nested_family(disk, levels / 2, curved), g)
                        .tautological_residual(f).max_residual;
  double r_fine = EvolutionLab(nested_family(disk, levels, curved), g)
                      .tautological_residual(f).max_residual;
  double ratio = r_fine / r_coarse;
  bool halving = ratio > 0.35 && ratio < 0.65;
  out.add(check_line("tautological_halving", r_fine, ratio, res, halving));
  all_pass = all_pass && halving;

  // time-derivative identity, mode-wise and through a delta ladder, on the
  // uniform shrink;
  // the checked mode range scales with what the mesh resolves
  NestedFamily uniform = nested_family(disk, levels, CollarProfile::radial_shrink(0.5));
  const int mode_count = std::min(8, res / 32);
  DnDerivativeReport modes = dn_time_derivative_residual(uniform, 0.4, g, 0.02, mode_count);
  double worst_mode = 0;
  double radius = 1 - 0.5 * 0.4;
  for (int k = 1; k <= mode_count; ++k) {
    double exact = 0.5 * k / (radius * radius);
    worst_mode = std::max(worst_mode,
                          std::abs(modes.mode_rhs[static_cast<size_t>(k - 1)] / exact - 1));
    worst_mode = std::max(worst_mode,
                          std::abs(modes.mode_lhs[static_cast<size_t>(k - 1)] / exact - 1));
  }
  out.add(check_line("dn_derivative_modes", worst_mode, worst_mode, res, worst_mode <= 0.05));
  all_pass = all_pass && worst_mode <= 0.05;

  std::vector<double> ladder;
  for (double delta : {0.3, 0.15, 0.075})
    ladder.push_back(dn_time_derivative_residual(uniform, 0.4, g, delta, 4, 8).op_residual);
  // each halving drops 1.5x until the rung is already at the mesh floor
  bool ladder_ok = true;
  for (size_t i = 1; i < ladder.size(); ++i) {
    bool dropped = ladder[i] * 1.5 <= ladder[i - 1];
    bool floored = ladder[i - 1] <= 2.0 * ladder.back();
    if (!dropped && !floored) ladder_ok = false;
  }
  ladder_ok = ladder_ok && ladder[1] * 1.5 <= ladder[0];
  out.add(check_line("dn_derivative_delta_ladder", ladder.back(), ladder.back() / ladder.front(),
                     res, ladder_ok));
  all_pass = all_pass && ladder_ok;

  // Rayleigh trace of the curved family
  EvolutionLab lab(nested_family(disk, levels, curved), g);
  RayleighTrace trace = lab.rayleigh_trace(f);
  std::vector<std::vector<std::string>> rows;
  for (size_t k = 0; k < trace.times.size(); ++k)
    rows.push_back({fmt(trace.times[k]), fmt(trace.lambda[k]), fmt(trace.norm_half[k]),
                    fmt(trace.norm_one[k]), fmt(trace.bound[k])});
  write_csv(st.out + "/trace.csv", "t, lambda, norm_half, norm_one, bound_value", rows);
  manifest.add_output(st.out + "/trace.csv");
  out.add(check_line("rayleigh_bound", trace.c1, trace.c2, res, trace.bound_holds));
  all_pass = all_pass && trace.bound_holds;

  out.close();
  manifest.add_output(out.path());
  manifest.set_note("gronwall_c1", trace.c1);
  manifest.set_note("gronwall_c2", trace.c2);
  return finish(manifest, st, all_pass, out.path());
}

// ------------------------------------------------------------------ runge

int cmd_runge(const CliState& st) {
  fs::create_directories(st.out);
  Manifest manifest("runge", st.seed);
  const int res = resolution_or(st, "runge.resolution", 32);
  const double eps = st.tol > 0 ? st.tol : st.cfg.num("runge.eps", 0.2);

  TriMesh mesh = reference_mesh(st, res);
  MetricField g = MetricField::euclidean(mesh.num_triangles());

  CylinderExtension ext = attach_cylinder(mesh, g, st.cfg.num("runge.cylinder_length", 1.5),
                                          static_cast<int>(st.cfg.integer("runge.cylinder_layers", 24)));
  AdjointLowerBoundFit kfit = adjoint_lower_bound_experiment(ext.mesh, ext.metric);

  RungeOperators ops(mesh, g);
  LiEvaluator li;
  FitConstants constants = kfit.constants;
  constants.C = st.cfg.num("runge.c", 0.5);
  RungeConfig rcfg;
  rcfg.eps = eps;
  rcfg.max_iterations = st.cfg.integer("runge.max_iterations", 1000);
  rcfg.envelope_c = st.cfg.num("runge.envelope_c", 0.5);

  Eigen::VectorXd f = ops.inner_calculus().eigenvectors.col(1) +
                      0.5 * ops.inner_calculus().eigenvectors.col(3);
  RungeTrace tr = runge_iterate(f, constants, ops, rcfg, li);

  std::vector<std::vector<std::string>> rows;
  for (size_t i = 0; i < tr.residual.size(); ++i)
    rows.push_back({std::to_string(i + 1), fmt(tr.lambda[i]), fmt(tr.mu[i]), fmt(tr.residual[i]),
                    fmt(tr.cost[i])});
  write_csv(st.out + "/runge_trace.csv", "i, lambda, mu, residual, cost", rows);
  manifest.add_output(st.out + "/runge_trace.csv");

  // cost-vs-eps sweep for the alpha fit
  std::vector<double> eps_grid = st.cfg.numbers("runge.eps_grid", {0.5, 0.3, 0.2, 0.1});
  std::vector<double> xs, ys;
  double sigma0 = std::max(tr.envelope_sigma0, 1e-12);
  for (double e : eps_grid) {
    RungeConfig sweep_cfg = rcfg;
    sweep_cfg.eps = e;
    RungeTrace sweep_tr = runge_iterate(f, constants, ops, sweep_cfg, li);
    double cost = sweep_tr.cost.back();
    if (cost > 1 && e < sigma0) {
      xs.push_back(std::log(sigma0 / e));
      ys.push_back(std::log(std::log(cost)));
    }
  }
  double alpha = 0;
  if (xs.size() >= 2) {
    double xm = 0, ym = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      xm += xs[i];
      ym += ys[i];
    }
    xm /= static_cast<double>(xs.size());
    ym /= static_cast<double>(xs.size());
    double sxx = 0, sxy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      sxx += (xs[i] - xm) * (xs[i] - xm);
      sxy += (xs[i] - xm) * (ys[i] - ym);
    }
    alpha = sxx > 0 ? sxy / sxx : 0;
  }

  json constants_doc{{"K", constants.K}, {"C", constants.C}, {"sigma0", sigma0}, {"alpha", alpha}};
  std::ofstream cs(st.out + "/constants.json");
  cs << constants_doc.dump(2) << "\n";
  cs.close();
  manifest.add_output(st.out + "/constants.json");

  JsonlWriter out(st.out + "/runge.jsonl");
  bool pass = tr.converged && tr.monotone && tr.envelope_holds && kfit.violations == 0;
  out.add(check_line("adjoint_lower_bound", constants.K, double(kfit.violations), res,
                     kfit.violations == 0));
  out.add(check_line("runge_converged", tr.residual.back(), tr.residual.back(), res,
                     tr.converged && tr.monotone));
  out.add(check_line("runge_envelope", tr.envelope_sigma0, double(tr.envelope_holds), res,
                     tr.envelope_holds));
  out.close();
  manifest.add_output(out.path());
  return finish(manifest, st, pass, out.path());
}

// ------------------------------------------------------------------ probe

int cmd_probe(const CliState& st) {
  fs::create_directories(st.out);
  Manifest manifest("probe", st.seed);
  double r0 = st.cfg.num("probe.r0", 0.45);
  std::vector<double> freqs = st.cfg.numbers("probe.xi_r0", {10, 20, 40});
  int res = resolution_or(st, "probe.base_resolution", 512);

  // the limit is joint: |xi| r0 doubles while the support shrinks;
  // a mesh-size Richardson step removes the (k h)^2 quadrature bias
  auto ratio_at = [&](double xi_r0, double support, int resolution) {
    TriMesh mesh = reference_mesh(st, resolution);
    MetricField g = MetricField::euclidean(mesh.num_triangles());
    MetricField h = MetricField::constant(mesh.num_triangles(),
                                          (Eigen::Matrix2d() << 4, 0, 0, 1).finished());
    ProbeSpec spec;
    spec.theta = -kPi / 2;
    spec.r0 = support;
    spec.xi = {xi_r0 / support, 0.0};
    return contrast_lower_bound_estimate(mesh, g, h, spec);
  };

  struct Rung {
    double freq, r0;
    int res;
  };
  std::vector<Rung> rungs;
  for (double freq : freqs) {
    rungs.push_back({freq, r0, res});
    r0 /= std::sqrt(2.0);
    res *= 2;
  }
  // rungs are independent; --parallel fans them out
  std::vector<std::pair<double, double>> results(rungs.size());  // (ratio, expected)
  auto run_rung = [&](size_t i) {
    ContrastEstimate fine = ratio_at(rungs[i].freq, rungs[i].r0, rungs[i].res);
    ContrastEstimate coarse = ratio_at(rungs[i].freq, rungs[i].r0, rungs[i].res / 2);
    results[i] = {(4 * fine.ratio - coarse.ratio) / 3, fine.expected};
  };
  if (st.parallel > 1) {
    std::vector<std::future<void>> jobs;
    for (size_t i = 0; i < rungs.size(); ++i)
      jobs.push_back(std::async(std::launch::async, run_rung, i));
    for (auto& job : jobs) job.get();
  } else {
    for (size_t i = 0; i < rungs.size(); ++i) run_rung(i);
  }

  JsonlWriter out(st.out + "/probe.jsonl");
  std::vector<std::vector<std::string>> rows;
  double prev_dev = 1e300;
  bool monotone = true, within = false;
  for (size_t i = 0; i < rungs.size(); ++i) {
    auto [ratio, expected] = results[i];
    double dev = std::abs(ratio - expected) / expected;
    rows.push_back({fmt(rungs[i].freq), std::to_string(rungs[i].res), fmt(ratio), fmt(expected),
                    fmt(dev)});
    if (dev >= prev_dev) monotone = false;
    prev_dev = dev;
    if (i + 1 == rungs.size()) within = dev <= 0.10;
  }
  write_csv(st.out + "/probe.csv", "xi_r0, resolution, ratio, expected, deviation", rows);
  manifest.add_output(st.out + "/probe.csv");
  out.add(check_line("probe_ratio", prev_dev, prev_dev, rungs.front().res, within && monotone));
  out.close();
  manifest.add_output(out.path());
  return finish(manifest, st, within && monotone, out.path());
}

// -------------------------------------------------------------- stability

int cmd_stability(const CliState& st) {
  fs::create_directories(st.out);
  Manifest manifest("stability", st.seed);
  const int res = resolution_or(st, "stability.resolution", 64);
  // the pipeline geometry keeps the Sigma_1 interface close to the inclusion,
  // as in the tentacle construction; a distant interface damps the probe's
  // view of the contrast by e^(-2 |xi| d)
  DiskSpec spec;
  spec.inclusion_radius = st.cfg.num("geometry.inclusion_radius", 0.3);
  spec.sigma1_radius = st.cfg.num("stability.sigma1_radius", 0.36);
  spec.resolution = res;
  TriMesh mesh = build_disk_with_inclusion(spec);
  MetricField g = MetricField::euclidean(mesh.num_triangles());

  std::vector<double> deltas = st.cfg.numbers("stability.delta", {1, 0, 0, 0});
  Eigen::Matrix2d delta;
  delta << deltas[0], deltas[1], deltas[1], deltas[3];
  std::vector<double> contrasts = st.cfg.numbers("stability.contrasts", {0.05, 0.1, 0.2, 0.4, 0.8});

  SweepOptions opts;
  opts.run_pipeline = st.cfg.integer("stability.pipeline", 1) != 0;
  opts.c_doubleprime = st.cfg.num("stability.c_doubleprime", 4.0);
  opts.probe.theta = -kPi / 2;
  opts.probe.r0 = st.cfg.num("stability.probe_r0", 0.25);
  opts.probe.xi = {st.cfg.num("stability.probe_xi", 8.0), 0.0};
  opts.probe.min_sharpness = 0.5;
  opts.constants.K = st.cfg.num("stability.k", 0.3);
  opts.constants.C = st.cfg.num("stability.c", 0.5);
  opts.runge.max_iterations = st.cfg.integer("stability.max_iterations", 400);

  StabilityCurve curve = stability_sweep(mesh, g, delta, contrasts, opts);
  std::vector<std::vector<std::string>> rows;
  bool increasing = true;
  for (size_t i = 0; i < curve.points.size(); ++i) {
    const auto& pt = curve.points[i];
    rows.push_back({fmt(pt.contrast), fmt(pt.opnorm), std::to_string(pt.resolution), fmt(pt.pairing)});
    if (i > 0 && pt.opnorm <= curve.points[i - 1].opnorm - 1e-12) increasing = false;
  }
  write_csv(st.out + "/curve.csv", "contrast, opnorm, resolution, pairing", rows);
  manifest.add_output(st.out + "/curve.csv");

  LogStabilityFit fit = log_stability_fit(curve);
  json fit_doc{{"C1", fit.c1},
               {"C2", fit.c2},
               {"rms_log_residual", fit.rms_log_residual},
               {"inequality_holds", fit.inequality_holds}};
  std::ofstream fs_out(st.out + "/fit.json");
  fs_out << fit_doc.dump(2) << "\n";
  fs_out.close();
  manifest.add_output(st.out + "/fit.json");

  JsonlWriter out(st.out + "/stability.jsonl");
  bool pass = increasing && fit.inequality_holds;
  out.add(check_line("stability_monotone", curve.points.back().opnorm, fit.rms_log_residual, res,
                     increasing));
  out.add(check_line("log_stability_fit", fit.c1, fit.c2, res, fit.inequality_holds));
  if (opts.run_pipeline) {
    // detectability envelope |pairing| >= C * contrast, sign-consistent over
    // the sweep (a probe pair realizing either sign exists)
    int sign = 0;
    bool pairing_ok = true;
    double c_fit = 1e300;
    for (const auto& pt : curve.points) {
      if (!pt.pipeline_ran || pt.contrast <= 0) continue;
      int s = pt.pairing > 0 ? 1 : (pt.pairing < 0 ? -1 : 0);
      if (sign == 0) sign = s;
      if (s == 0 || s != sign) pairing_ok = false;
      c_fit = std::min(c_fit, std::abs(pt.pairing) / pt.contrast);
    }
    if (c_fit == 1e300) c_fit = 0;
    pairing_ok = pairing_ok && c_fit > 0;
    out.add(check_line("pipeline_pairing", c_fit, double(sign), res, pairing_ok));
    pass = pass && pairing_ok;
  }
  out.close();
  manifest.add_output(out.path());
  return finish(manifest, st, pass, out.path());
}

// ------------------------------------------------------------- recurrence

int cmd_recurrence(const CliState& st) {
  fs::create_directories(st.out);
  Manifest manifest("recurrence", st.seed);
  double sigma0 = st.cfg.num("recurrence.sigma0", 4.0);
  double c = st.cfg.num("recurrence.c", 0.1);
  long steps = st.cfg.integer("recurrence.steps", 100000);

  LiEvaluator li;
  SandwichReport rep = recurrence_sandwich_check(sigma0, c, steps, li);
  JsonlWriter out(st.out + "/recurrence.jsonl");
  out.add(json{{"identity", "recurrence_sandwich"},
               {"abs", rep.min_lower_margin},
               {"rel", rep.min_upper_margin},
               {"resolution", static_cast<int>(steps)},
               {"pass", rep.ok}});
  out.close();
  manifest.add_output(out.path());
  manifest.set_note("first_violation", rep.first_violation);
  return finish(manifest, st, rep.ok, out.path());
}

// ----------------------------------------------------------------- report

int cmd_report(const CliState& st, const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) {
    std::cerr << "cannot open manifest " << manifest_path << "\n";
    return 2;
  }
  json doc;
  try {
    is >> doc;
  } catch (const std::exception& e) {
    std::cerr << "corrupt manifest: " << e.what() << "\n";
    return 2;
  }
  bool all_pass = doc.value("pass", false);
  std::cout << "command: " << doc.value("command", "?") << "  seed: " << doc.value("seed", 0ull)
            << "\n";
  for (const auto& output : doc["outputs"]) {
    std::string path = output["path"];
    if (path.size() > 6 && path.substr(path.size() - 6) == ".jsonl") {
      std::ifstream lines(path);
      if (!lines) {
        std::cout << "MISSING " << path << "\n";
        all_pass = false;
        continue;
      }
      std::string line;
      while (std::getline(lines, line)) {
        if (line.empty()) continue;
        json entry = json::parse(line);
        bool pass = entry.value("pass", false);
        std::cout << (pass ? "PASS " : "FAIL ") << entry.value("identity", "?") << "  rel "
                  << entry.value("rel", 0.0) << "  abs " << entry.value("abs", 0.0) << "  (n="
                  << entry.value("resolution", 0) << ")\n";
        all_pass = all_pass && pass;
      }
    } else {
      std::cout << "FILE " << path << "  hash " << output.value("hash", "?") << "\n";
    }
  }
  std::cout << (all_pass ? "ALL PASS" : "FAILURES PRESENT") << "\n";
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"discrete Dirichlet-Neumann laboratory"};
  app.require_subcommand(1);

  CliState st;
  std::string config_path, manifest_path;
  app.add_option("--config", config_path, "flat key-value config file");
  app.add_option("--out", st.out, "output directory");
  app.add_option("--seed", st.seed, "random seed");
  app.add_option("--resolution", st.resolution, "boundary resolution");
  app.add_option("--mesh", st.mesh_name, "mesh name or mesh file path");
  app.add_option("--tol", st.tol, "tolerance override");
  app.add_option("--parallel", st.parallel, "worker threads (advisory)");

  auto* s_mesh = app.add_subcommand("mesh", "generate a canonical mesh and metric");
  auto* s_dn = app.add_subcommand("dn", "export a DN matrix as CSV");
  auto* s_verify = app.add_subcommand("verify-identities", "exact-algebra and boundedness suite");
  auto* s_evolve = app.add_subcommand("evolve", "layer-stripping evolution experiments");
  auto* s_runge = app.add_subcommand("runge", "density iteration with fitted constants");
  auto* s_probe = app.add_subcommand("probe", "oscillating-probe ratio ladder");
  auto* s_stability = app.add_subcommand("stability", "contrast sweep and log-stability fit");
  auto* s_recurrence = app.add_subcommand("recurrence", "li-sandwich recurrence check");
  auto* s_report = app.add_subcommand("report", "summarize a manifest");
  s_report->add_option("--manifest", manifest_path, "manifest path");
  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (!config_path.empty()) st.cfg.load_file(config_path);
    if (s_mesh->parsed()) return cmd_mesh(st);
    if (s_dn->parsed()) return cmd_dn(st);
    if (s_verify->parsed()) return cmd_verify_identities(st);
    if (s_evolve->parsed()) return cmd_evolve(st);
    if (s_runge->parsed()) return cmd_runge(st);
    if (s_probe->parsed()) return cmd_probe(st);
    if (s_stability->parsed()) return cmd_stability(st);
    if (s_recurrence->parsed()) return cmd_recurrence(st);
    if (s_report->parsed()) {
      if (manifest_path.empty()) manifest_path = st.out + "/manifest.json";
      return cmd_report(st, manifest_path);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
