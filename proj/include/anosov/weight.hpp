// Escape function on S*M for the unperturbed flow: the bump m0 separating
// the source from the sink plane, its flow average m over [-T, T], the flow
// derivative F, the gap constants and the cutoff bold-m = chi(m - T).
#pragma once

#include "anosov/flow.hpp"
#include "anosov/splitting.hpp"

#include <cstdint>
#include <vector>

namespace anosov {

/// Quintic smoothstep on [0,1], clamped outside.
double smoothstep5(double u);
double smoothstep5_derivative(double u);

/// chi = -1 on (-inf, -w], +1 on [w, inf), quintic in between.
struct ChiProfile {
  double width = 0.1;
  double operator()(double y) const;
  double derivative(double y) const;
};

/// T = max((log C - 2 log eps)/beta, t_floor). Throws std::invalid_argument
/// when the eps-neighbourhoods of E*_s0 and E*_u0 + E*_00 intersect, i.e. when
/// 2 eps >= the minimum angle between the line and the plane.
double lemma_time(double eps, double C, double beta, double line_plane_angle, double t_floor = 0.0);

/// Minimum over the grid of the angle between E*_s0 and the plane E*_u0 + E*_00.
double line_plane_angle(const DualSplitting& d);

class BumpM0 {
 public:
  BumpM0(const DualSplitting& d, double eps) : dual_(&d), eps_(eps) {}
  double eps() const { return eps_; }
  /// Angular distances to E*_s0 and to E*_u0 + E*_00.
  std::pair<double, double> distances(const SphereCovector& xi) const;
  double operator()(const SphereCovector& xi) const;

 private:
  const DualSplitting* dual_;
  double eps_;
};

struct LemmaCheck {
  int samples = 0;
  int eligible = 0;   // with d(xi, E*_s0) > eps
  int failures = 0;   // eligible but Phi_T xi not within eps of the plane
  double worst = 0;   // largest plane distance at time T among eligible samples
};

/// Monte-Carlo check of the neighbourhood lemma with random sphere covectors.
LemmaCheck verify_lemma_time(const Flow& flow0, const DualSplitting& d, double eps, double T,
                             int n_samples, std::uint64_t seed);

/// Samples of S*M: base grid times Fibonacci directions (adapted components).
std::vector<SphereCovector> sphere_samples(const Monodromy& mono, const BaseGrid& grid, int n_dirs);

/// Directions concentrated where F changes: at each grid point, `azimuths`
/// directions tilted by each offset angle off the sink plane, and `azimuths`
/// directions at each offset angle around the source line (both signs).
std::vector<SphereCovector> boundary_samples(const DualSplitting& d, const BaseGrid& grid, int azimuths,
                                             const std::vector<double>& offsets);

struct WeightOptions {
  double eps = 0.1;          // neighbourhood size for m0
  double quad_step = 0.02;   // Simpson step along the flow
  double t_floor = 0.0;
  double f_tol_rel = 1e-3;   // {F = 0} means |F| <= f_tol_rel * range(F)
  double fd_step = 1e-5;     // gradients of m
};

/// Chart gradients of m at a sphere covector: base (x1, x2, t) at fixed chart
/// components, and fibre (components) at fixed base.
struct MGradient {
  Vec3 base = Vec3::Zero();
  Vec3 fiber = Vec3::Zero();
};

/// m, F and the cutoff, evaluated by direct quadrature at any sphere covector.
class WeightFunction {
 public:
  WeightFunction(const Flow& flow0, const DualSplitting& d, double T, WeightOptions opts = {});

  double T() const { return T_; }
  const WeightOptions& options() const { return opts_; }
  const BumpM0& m0() const { return m0_; }
  const Flow& flow() const { return *flow_; }

  double m(const SphereCovector& xi) const;
  double F(const SphereCovector& xi) const;
  MGradient gradient(const SphereCovector& xi) const;
  /// Largest change of m along any unit C^1 direction: max(|g_b|, |xi| |g_f|).
  double lift_sensitivity(const SphereCovector& xi, const MGradient& g) const;
  /// dm(V^inf) at xi: g_b.V(p) - g_f.(dV(p)^T xi).
  static double directional(const SphereCovector& xi, const MGradient& g, const Perturbation& v);

  void set_chi(ChiProfile chi) { chi_ = chi; }
  const ChiProfile& chi() const { return chi_; }
  double bold_m(const SphereCovector& xi) const { return chi_(m(xi) - T_); }

 private:
  double m_chart(const Vec2& x, double t, const Vec3& comp) const;

  const Flow* flow_;
  BumpM0 m0_;
  double T_;
  WeightOptions opts_;
  ChiProfile chi_;
};

struct GapConstants {
  double f_tol = 0;
  double delta_m = 0;   // half the min of |m - T| over {|F| <= f_tol}
  double eps_gap = 0;   // chi width
  double delta = 0;     // min F over {|m - T| < eps_gap}, capped by delta_m
  int gap_count = 0;    // samples with |m - T| < eps_gap
  int zero_count = 0;   // samples with |F| <= f_tol
};

/// Sample table: one row per sphere covector.
struct WeightTable {
  std::vector<SphereCovector> samples;
  std::vector<double> m, F;
};

WeightTable tabulate(const WeightFunction& w, std::vector<SphereCovector> samples);

/// Gap constants from a table. Throws VerificationFailure if delta <= 0.
GapConstants gap_constants(const WeightTable& t, double T, double shrink = 0.8);

/// ell(eps) = sup{ d(xi, {F = 0}) : F(xi) <= eps }, distances on S*M, over a
/// subsample of at most `max_points` rows.
std::vector<double> ell_profile(const Monodromy& mono, const WeightTable& t, double f_tol,
                                const std::vector<double>& eps_values, int max_points = 1500);

struct MonotonicityReport {
  double min_value = 0;          // min over samples of X^inf bold-m
  double min_ratio = 0;          // min over supp chi' of X0^inf bold-m / (chi' delta)
  int support_count = 0;         // samples on supp chi'
  int violations = 0;            // samples below -1e-10
  std::vector<int> violation_rows;
};

/// X0^inf bold-m = chi'(m - T) F on the table.
MonotonicityReport check_unperturbed(const WeightTable& t, const ChiProfile& chi, double T, double delta);

/// Per-row gradient data on supp chi', reused by the perturbation checks.
struct SupportData {
  std::vector<int> rows;
  std::vector<MGradient> grads;
  std::vector<double> sensitivity;
};
SupportData support_gradients(const WeightFunction& w, const WeightTable& t);

struct Budget {
  double eta0 = 0;             // 1/2 inf_{supp chi'} F / K_adv
  double implied_C = 0;        // delta / (eta0 T)
  double K_max = 0;            // sup K_adv over supp chi'
  double eta_lift = 0;         // delta / (2 K_lift T) from the fitted lift constant
  int argmin_row = -1;
};
Budget perturbation_budget(const WeightTable& t, const SupportData& s, double delta, double T,
                           double K_lift = 0.0);

/// X_eps^inf bold-m = chi'(m - T)(F + eps dm(V^inf)) over the table.
MonotonicityReport check_perturbed(const WeightTable& t, const SupportData& s, const ChiProfile& chi,
                                   double T, const Perturbation& v, double eps);

/// Single Fourier mode (|q| <= qmax) of unit C^1 norm maximising -dm(V^inf)/F
/// at one of the `candidates` rows with smallest F/K. `ratio` is the achieved
/// fraction of K_adv at that row.
struct Adversary {
  Perturbation v;
  int row = -1;
  double ratio = 0;
};
Adversary adversarial_perturbation(const WeightTable& t, const SupportData& s, int qmax = 3,
                                   int candidates = 20);

}  // namespace anosov
