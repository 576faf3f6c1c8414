#pragma once

#include <Eigen/Core>
#include <vector>

#include "dnlab/dn_operators.hpp"
#include "dnlab/runge.hpp"

namespace dnlab {

/// Oscillating boundary probe on the Sigma_1 interface: the real part
/// cos(xi . (x - x0)) under a flat-topped cutoff of radius r0 around the
/// center, normalized to H^(1/2) norm one.
struct ProbeSpec {
  double theta = 0;                  // center angle on the interface circle
  Eigen::Vector2d xi = {20.0, 0.0};  // frequency covector in the boundary chart
                                     // frame (tangent, inward normal) at the center
  double r0 = 0.3;                   // support radius (chart arclength)
  double min_sharpness = 1.0;        // floor for |xi|^(1/2) r0^(1/2)
};

struct OscillatingProbe {
  Eigen::VectorXd u1, v1;  // nodal data on the interface (v1 = u1)
  Eigen::Vector2d center;
  std::vector<int> nodes;
};

OscillatingProbe oscillating_probe(const ProbeSpec& spec, const TriMesh& mesh,
                                   const MetricField& metric);

struct ContrastEstimate {
  double form_g = 0;   // Lambda_(Sigma1,g)(psi u)(psi u)
  double form_h = 0;
  double ratio = 0;    // form_h / form_g
  double expected = 0; // |xi|_h / |xi|_g (covector norms at the probe center)
  double pairing = 0;  // (Lambda_g - Lambda_h)(u1)(v1)
};

/// Quadratic-form anisotropy ratio in the locally constant-coefficient
/// regime:
/// g and h must be constant across the probe's support patch.
ContrastEstimate contrast_lower_bound_estimate(const TriMesh& mesh, const MetricField& g,
                                               const MetricField& h, const ProbeSpec& spec);

/// ||Lambda_g - Lambda_h|| from H^(1/2) to H^(-1/2) on the outer loop, with
/// constants projected out on both sides.
double dn_difference_norm(const TriMesh& mesh, const MetricField& g, const MetricField& h);

/// Thrown when the sweep direction is conformal (the 2D difference provably
/// vanishes); carries the operator norm measured before rejecting.
struct ConformalRejection : DomainError {
  double measured_norm;
  explicit ConformalRejection(double norm)
      : DomainError("conformal perturbation direction: the 2D DN difference vanishes "
                    "(measured norm " + std::to_string(norm) + "); pick an anisotropic delta"),
        measured_norm(norm) {}
};

struct StabilityPoint {
  double contrast = 0;
  double opnorm = 0;
  int resolution = 0;
  double pairing = 0;       // probe pairing transported through the pipeline
  double eps = 0;           // Lipschitz/transport tolerance used at this point
  bool pipeline_ran = false;
};

struct StabilityCurve {
  std::vector<StabilityPoint> points;
};

struct SweepOptions {
  bool run_pipeline = false;
  double c_doubleprime = 4.0;  // eps = contrast / C''
  ProbeSpec probe;
  FitConstants constants;      // K (and C) for the transport iteration
  RungeConfig runge;
};

/// Contrast sweep h_c = g + c delta on the inclusion, operator norms and
/// optionally the full probe-transport pipeline of the stability proof.
StabilityCurve stability_sweep(const TriMesh& mesh, const MetricField& g,
                               const Eigen::Matrix2d& delta, const std::vector<double>& contrasts,
                               const SweepOptions& opts);

struct LogStabilityFit {
  double c1 = 0, c2 = 0;
  double rms_log_residual = 0;
  bool inequality_holds = false;  // contrast <= C1 |log norm|^(-1/C2) at every point
};

/// Least squares for contrast = C1 |log norm|^(-1/C2) in log-log coordinates.
LogStabilityFit log_stability_fit(const StabilityCurve& curve);

}  // namespace dnlab
