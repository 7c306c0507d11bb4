#include "anosov/threshold.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace anosov {

namespace {
template <class F>
void for_grid(const BaseGrid& grid, F&& f) {
  for (int idx = 0; idx < grid.size(); ++idx) f(grid.point(idx));
}

std::vector<SphereCovector> sink_samples(const Monodromy& mono, const Cone& cone, const BaseGrid& grid) {
  std::vector<SphereCovector> out;
  for_grid(grid, [&](const MappingTorusPoint& p) {
    const auto s = cone_samples(mono, cone, p);
    out.insert(out.end(), s.begin(), s.end());
  });
  return out;
}
}  // namespace

double lambda_max(const Flow& flow, const BaseGrid& grid) {
  double sup = 0;
  for_grid(grid, [&](const MappingTorusPoint& p) {
    const Mat3 L = adapted_derivative(flow.monodromy(), flow.field(), p);
    sup = std::max(sup, Eigen::JacobiSVD<Mat3>(L).singularValues()(0));
  });
  return sup;
}

double chart_lambda(const Flow& flow, const BaseGrid& grid) {
  double sup = 0;
  for_grid(grid, [&](const MappingTorusPoint& p) {
    sup = std::max(sup, Eigen::JacobiSVD<Mat3>(flow.field().jacobian(p)).singularValues()(0));
  });
  return sup;
}

double div_sup(const Flow& flow, const BaseGrid& grid) {
  double sup = 0;
  for_grid(grid, [&](const MappingTorusPoint& p) { sup = std::max(sup, std::abs(flow.field().divergence(p))); });
  return sup;
}

GrowthRange growth_range(const Flow& flow, const BaseGrid& grid) {
  GrowthRange g;
  g.sup = -std::numeric_limits<double>::infinity();
  g.inf = std::numeric_limits<double>::infinity();
  const auto& mono = flow.monodromy();
  for_grid(grid, [&](const MappingTorusPoint& p) {
    const Mat3 L = adapted_derivative(mono, flow.field(), p);
    const Mat3 G = -0.5 * (L + L.transpose());
    Eigen::SelfAdjointEigenSolver<Mat3> es(G);
    const Mat3 inv = cotangent_adapter(mono, p.t).inverse();
    if (es.eigenvalues()(2) > g.sup) {
      g.sup = es.eigenvalues()(2);
      g.argmax = SphereCovector{p, inv * es.eigenvectors().col(2)};
    }
    if (es.eigenvalues()(0) < g.inf) {
      g.inf = es.eigenvalues()(0);
      g.argmin = SphereCovector{p, inv * es.eigenvectors().col(0)};
    }
  });
  return g;
}

double contraction_c(double Lambda, double C_prime, double beta_prime) {
  if (!(Lambda > 0)) throw std::invalid_argument("contraction_c: Lambda must be positive");
  if (!(C_prime > 0) || !(beta_prime > 0)) throw std::invalid_argument("contraction_c: need C' > 0, beta' > 0");
  return Lambda * std::pow(C_prime / 2, Lambda / beta_prime);
}

double contraction_c_integral(const Flow& flow, const Cone& cone, double T1, const BaseGrid& grid, int steps) {
  double sup = 0;
  const double h = T1 / steps;
  for (const auto& xi : sink_samples(flow.monodromy(), cone, grid)) {
    double acc = 0;
    for (int j = 0; j <= steps; ++j) {
      const double w = (j == 0 || j == steps) ? 0.5 : 1.0;
      acc += w * std::exp(flow.projective(xi, j * h).log_growth);
    }
    sup = std::max(sup, acc * h);
  }
  return 1.0 / sup;
}

double doubling_margin(const Flow& flow, const Cone& cone, double T, const BaseGrid& grid) {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& xi : sink_samples(flow.monodromy(), cone, grid))
    worst = std::min(worst, flow.projective(xi, T).log_growth - std::log(2.0));
  return worst;
}

double ThresholdReport::r(double re_s) const {
  return prefactor() * (2 * div_sup - 4 * re_s + growth_sup) + std::abs(k);
}

ThresholdReport threshold_report(const Flow& flow, const DualSplitting& d, const ThresholdOptions& opts) {
  ThresholdReport rep;
  rep.k = opts.k;
  rep.Lambda = lambda_max(flow, opts.grid);
  rep.chart_Lambda = chart_lambda(flow, opts.grid);
  rep.div_sup = div_sup(flow, opts.grid);
  const auto g = growth_range(flow, opts.grid);
  rep.growth_sup = g.sup;
  rep.growth_inf = g.inf;

  const Cone cone = sink_cone(d, opts.cone_angle);
  const auto sink = verify_sink(flow, cone, opts.horizon, opts.sink_grid);
  rep.C_prime = sink.C_prime;
  rep.beta_prime = sink.beta_prime;
  if (!(rep.beta_prime > 0)) throw std::runtime_error("threshold: sink cone does not grow (beta' <= 0)");
  rep.T1_formula = std::log(2 / rep.C_prime) / rep.beta_prime;
  rep.T1_sink = std::log(2 * rep.C_prime) / rep.beta_prime;
  rep.doubling_formula = doubling_margin(flow, cone, rep.T1_formula, opts.sink_grid);
  rep.doubling_sink = doubling_margin(flow, cone, rep.T1_sink, opts.sink_grid);

  if (rep.Lambda > 0) {
    rep.c = contraction_c(rep.Lambda, rep.C_prime, rep.beta_prime);
  } else {
    rep.c = contraction_c_integral(flow, cone, rep.T1_sink, opts.sink_grid);
    rep.c_degenerate = true;
  }
  return rep;
}

StrengthTable uniform_strength(const std::vector<ThresholdReport>& family, const std::vector<double>& re_s) {
  StrengthTable t;
  t.re_s = re_s;
  std::sort(t.re_s.begin(), t.re_s.end());
  t.r.assign(t.re_s.size(), -std::numeric_limits<double>::infinity());
  for (const auto& rep : family)
    for (std::size_t i = 0; i < t.re_s.size(); ++i) t.r[i] = std::max(t.r[i], rep.r(t.re_s[i]));
  for (std::size_t i = t.r.size(); i-- > 1;) t.r[i - 1] = std::max(t.r[i - 1], t.r[i]);
  return t;
}

}  // namespace anosov
