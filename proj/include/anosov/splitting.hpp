// Invariant splitting TM = RX + E^u + E^s, its dual, hyperbolicity
// constants, cone fields and sink/source checks.
//
// Dual bundles are labelled by their dynamics under Phi_t = (dphi_t)^{-T}:
//   E*_u0 (sink, grows like lambda_u^t) annihilates RX + E^u,
//   E*_s0 (source)                       annihilates RX + E^s,
//   E*_00                                annihilates E^u + E^s.
#pragma once

#include "anosov/flow.hpp"
#include "anosov/manifold.hpp"

#include <string>
#include <vector>

namespace anosov {

/// Uniform grid of base points: x on an n_x^2 lattice, t on n_t levels.
struct BaseGrid {
  int n_x = 24;
  int n_t = 24;

  int size() const { return n_x * n_x * n_t; }
  int index(int i, int j, int k) const { return (k * n_x + j) * n_x + i; }
  MappingTorusPoint point(int idx) const;
};

/// Tangent frame in chart components, each vector of unit adapted length.
struct Frame {
  Vec3 e0, eu, es;
};

/// Dual frame. The raw rows satisfy <d00,e0> = <du0,es> = <ds0,eu> = 1 and
/// vanish on the other two primal vectors; the unit fields are the same
/// lines normalised in the adapted metric.
struct DualFrame {
  Vec3 d00, du0, ds0;
  Vec3 e00, eu0, es0;
};

struct SplittingOptions {
  double t_iter = 0.0;  // 0: use 20 / log(lambda_u)
  double convergence_tol = 1e-6;
};

class Splitting {
 public:
  Splitting(Monodromy mono, BaseGrid grid, std::vector<Frame> frames)
      : mono_(std::move(mono)), grid_(grid), frames_(std::move(frames)) {}

  const BaseGrid& grid() const { return grid_; }
  const Monodromy& monodromy() const { return mono_; }
  const std::vector<Frame>& frames() const { return frames_; }
  /// Gluing-aware trilinear interpolation of the line fields.
  Frame at(const MappingTorusPoint& p) const;

 private:
  Monodromy mono_;
  BaseGrid grid_;
  std::vector<Frame> frames_;
};

class DualSplitting {
 public:
  explicit DualSplitting(Splitting s);

  const Splitting& primal() const { return primal_; }
  const std::vector<DualFrame>& frames() const { return frames_; }
  DualFrame at(const MappingTorusPoint& p) const;
  /// Minimum pairwise angle among the unit dual lines on the grid.
  double min_angle() const { return min_angle_; }

 private:
  Splitting primal_;
  std::vector<DualFrame> frames_;
  double min_angle_ = 0;
};

DualFrame dual_of(const Monodromy& mono, double t, const Frame& f);

/// Power iteration: e^u from forward pushes of a generic vector started at
/// phi_{-T}(p), e^s from backward pushes. Throws VerificationFailure when the
/// direction still moves by more than convergence_tol between T and T+1.
Splitting compute_splitting(const Flow& flow, const BaseGrid& grid, SplittingOptions opts = {});

/// Largest angle between d(phi_t) e(p) and e(phi_t p) over the grid.
double invariance_residual(const Flow& flow, const Splitting& s, double t);

struct Decomposition {
  Vec3 xi_s, xi_u, xi_0;
};
Decomposition decompose_covector(const Covector& xi, const DualSplitting& d);

struct HyperbolicConstants {
  double C = 1, beta = 0;
  double theta_min = 0;       // min angle in the primal frame
  double theta_min_dual = 0;  // min angle in the dual frame
  std::string metric = "adapted: |(B(t) v_x, v_t)|, B(t) = exp(t log A)";
};

/// beta from a least-squares fit of max_p log||dphi_{-T}|E^u|| (and the
/// stable analogue) over T in {1,2,4,8}; C as the sup over a t-grid of
/// e^{beta t} ||dphi_{-t}|E^u||.
HyperbolicConstants estimate_constants(const Flow& flow, const Splitting& s, int stride = 1);

struct SinkReport {
  double C_prime = 0, beta_prime = 0;
  bool converges = false;
  bool is_sink = false;
  double final_angle = 0;  // worst angle to the cone centre at the horizon
  int samples = 0;
};

/// Directions sampling a cone at p: the centre plus rings at half and full
/// aperture, `azimuths` per ring. Chart components, unit adapted length.
std::vector<SphereCovector> cone_samples(const Monodromy& mono, const Cone& cone,
                                         const MappingTorusPoint& p, int azimuths = 8);

SinkReport verify_sink(const Flow& flow, const Cone& cone, double horizon, const BaseGrid& grid,
                       double limit_tol = 1e-3, int time_steps = 16);

struct TrappedCone {
  Cone cone;                       // approximation of the trapped set
  std::vector<double> half_angles; // half-angle after each step
  double min_growth = 0;           // min |Phi_step xi| / |xi| over V2 samples
  bool contained = true;           // Phi_step(V2) inside V1 at every sample
  std::vector<MappingTorusPoint> violations;
};

TrappedCone trapped_cone(const Flow& flow, const Cone& v2, const Cone& v1, double step, int steps,
                         const BaseGrid& grid);

/// Cones of the given aperture around E*_u0 and E*_s0 of a dual splitting.
/// The cone refers to `d`, which must outlive it.
Cone sink_cone(const DualSplitting& d, double half_angle);
Cone source_cone(const DualSplitting& d, double half_angle);

}  // namespace anosov
