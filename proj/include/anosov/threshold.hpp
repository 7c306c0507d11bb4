// Quantitative threshold: Lambda, div X, the symbol growth rate, the
// contraction constant c and the minimal strength r_X(s).
#pragma once

#include "anosov/flow.hpp"
#include "anosov/splitting.hpp"

#include <vector>

namespace anosov {

/// Grid sup of the operator norm of the adapted derivative.
double lambda_max(const Flow& flow, const BaseGrid& grid);
/// Grid sup of ||dX|| in chart coordinates (0 for the suspension field).
double chart_lambda(const Flow& flow, const BaseGrid& grid);
/// Grid sup of |div X|.
double div_sup(const Flow& flow, const BaseGrid& grid);

struct GrowthRange {
  double sup = 0;  // sup over S*M of d/dt log|Phi_t xi| at t = 0
  double inf = 0;
  SphereCovector argmax;
  SphereCovector argmin;
};
/// Exact per base point: the extreme eigenvalues of -sym(L) for the adapted
/// derivative L, maximised over the grid.
GrowthRange growth_range(const Flow& flow, const BaseGrid& grid);

/// c = Lambda (C'/2)^{Lambda/beta'}. Throws std::invalid_argument if Lambda <= 0.
double contraction_c(double Lambda, double C_prime, double beta_prime);

/// 1 / sup over sink-cone samples of (1/|xi|) int_0^{T1} |Phi_t xi| dt
/// (trapezoid, `steps` intervals). Used when Lambda = 0.
double contraction_c_integral(const Flow& flow, const Cone& cone, double T1, const BaseGrid& grid,
                              int steps = 64);

/// min over sink-cone samples of log(|Phi_T xi| / |xi|) - log 2; positive
/// means the cone doubles by time T.
double doubling_margin(const Flow& flow, const Cone& cone, double T, const BaseGrid& grid);

struct ThresholdOptions {
  BaseGrid grid{12, 12};        // sup grid for Lambda, div and growth
  BaseGrid sink_grid{3, 3};     // base points for the sink constants
  double cone_angle = 0.1;
  double horizon = 8.0;
  int k = 0;
};

struct ThresholdReport {
  double Lambda = 0;
  double chart_Lambda = 0;
  double div_sup = 0;
  double growth_sup = 0;
  double growth_inf = 0;
  double C_prime = 0, beta_prime = 0;
  double T1_formula = 0;   // log(2/C')/beta', the time behind the closed form for c
  double T1_sink = 0;      // log(2C')/beta', the time the sink bound guarantees doubling
  double doubling_formula = 0;
  double doubling_sink = 0;
  double c = 0;
  bool c_degenerate = false;  // c from the integral definition
  int k = 0;

  /// (1/Lambda)(2/C')^{Lambda/beta'}, which equals 1/c.
  double prefactor() const { return 1.0 / c; }
  double C1(double re_s) const { return div_sup / 2 - re_s; }
  double C0_min(double re_s) const { return 4 * C1(re_s); }
  /// r_X(s) + |k|.
  double r(double re_s) const;
};

ThresholdReport threshold_report(const Flow& flow, const DualSplitting& d, const ThresholdOptions& opts = {});

struct StrengthTable {
  std::vector<double> re_s;
  std::vector<double> r;
};

/// Tabulated r(s) = sup over the family reports of r_{X_eps}(s), made
/// non-increasing in Re s.
StrengthTable uniform_strength(const std::vector<ThresholdReport>& family, const std::vector<double>& re_s);

}  // namespace anosov
