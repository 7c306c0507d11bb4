#include "anosov/weight.hpp"

#include "anosov/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace anosov {

double smoothstep5(double u) {
  if (u <= 0) return 0;
  if (u >= 1) return 1;
  return u * u * u * (10 + u * (-15 + 6 * u));
}

double smoothstep5_derivative(double u) {
  if (u <= 0 || u >= 1) return 0;
  const double v = u * (1 - u);
  return 30 * v * v;
}

double ChiProfile::operator()(double y) const {
  return 2 * smoothstep5((y + width) / (2 * width)) - 1;
}

double ChiProfile::derivative(double y) const {
  return smoothstep5_derivative((y + width) / (2 * width)) / width;
}

double lemma_time(double eps, double C, double beta, double line_plane_angle, double t_floor) {
  if (!(eps > 0) || !(beta > 0) || !(C >= 1)) throw std::invalid_argument("lemma_time: need eps > 0, beta > 0, C >= 1");
  if (2 * eps >= line_plane_angle)
    throw std::invalid_argument("lemma_time: eps-neighbourhoods of source and sink plane intersect");
  return std::max((std::log(C) - 2 * std::log(eps)) / beta, t_floor);
}

double line_plane_angle(const DualSplitting& d) {
  const auto& g = d.primal().grid();
  const auto& mono = d.primal().monodromy();
  double worst = std::numbers::pi / 2;
  for (int idx = 0; idx < g.size(); ++idx) {
    const auto& f = d.frames()[idx];
    const double t = g.point(idx).t;
    worst = std::min(worst, angle_to_plane(mono, t, f.es0, f.e00, f.eu0));
  }
  return worst;
}

std::pair<double, double> BumpM0::distances(const SphereCovector& xi) const {
  const auto& mono = dual_->primal().monodromy();
  const DualFrame f = dual_->at(xi.base);
  return {angle_to_line(mono, xi.base.t, xi.comp, f.es0),
          angle_to_plane(mono, xi.base.t, xi.comp, f.e00, f.eu0)};
}

double BumpM0::operator()(const SphereCovector& xi) const {
  const auto [ds, dp] = distances(xi);
  if (ds <= eps_) return 0.0;
  if (dp <= eps_) return 1.0;
  const double u = ds - eps_, v = dp - eps_;
  return smoothstep5(u / (u + v));
}

namespace {
SphereCovector random_sphere_covector(const Monodromy& mono, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> g(0, 1);
  const MappingTorusPoint p{Vec2(u(rng), u(rng)), u(rng)};
  const Vec3 a = Vec3(g(rng), g(rng), g(rng)).normalized();
  return SphereCovector{p, cotangent_adapter(mono, p.t).inverse() * a};
}
}  // namespace

LemmaCheck verify_lemma_time(const Flow& flow0, const DualSplitting& d, double eps, double T,
                             int n_samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const BumpM0 m0(d, eps);
  LemmaCheck out;
  for (int i = 0; i < n_samples; ++i) {
    const auto xi = random_sphere_covector(flow0.monodromy(), rng);
    ++out.samples;
    if (m0.distances(xi).first <= eps) continue;
    ++out.eligible;
    const double dp = m0.distances(flow0.projective(xi, T).xi).second;
    out.worst = std::max(out.worst, dp);
    if (dp > eps) ++out.failures;
  }
  return out;
}

std::vector<SphereCovector> sphere_samples(const Monodromy& mono, const BaseGrid& grid, int n_dirs) {
  const auto dirs = fibonacci_sphere(n_dirs);
  std::vector<SphereCovector> out;
  out.reserve(std::size_t(grid.size()) * n_dirs);
  for (int idx = 0; idx < grid.size(); ++idx) {
    const auto p = grid.point(idx);
    const Mat3 inv = cotangent_adapter(mono, p.t).inverse();
    for (const auto& a : dirs) out.push_back(SphereCovector{p, inv * a});
  }
  return out;
}

std::vector<SphereCovector> boundary_samples(const DualSplitting& d, const BaseGrid& grid, int azimuths,
                                             const std::vector<double>& offsets) {
  const auto& mono = d.primal().monodromy();
  std::vector<SphereCovector> out;
  for (int idx = 0; idx < grid.size(); ++idx) {
    const auto p = grid.point(idx);
    const DualFrame f = d.at(p);
    const Mat3 ad = cotangent_adapter(mono, p.t);
    const Mat3 inv = ad.inverse();
    const Vec3 p1 = (ad * f.e00).normalized();
    const Vec3 p2 = ((ad * f.eu0) - p1.dot(ad * f.eu0) * p1).normalized();
    const Vec3 nrm = p1.cross(p2);
    const Vec3 line = (ad * f.es0).normalized();
    const Vec3 u1 = line.unitOrthogonal(), u2 = line.cross(u1);
    for (int k = 0; k < azimuths; ++k) {
      const double phi = 2 * std::numbers::pi * (k + 0.5) / azimuths;
      const Vec3 in_plane = std::cos(phi) * p1 + std::sin(phi) * p2;
      const Vec3 around = std::cos(phi) * u1 + std::sin(phi) * u2;
      for (double a : offsets) {
        out.push_back(SphereCovector{p, inv * (std::cos(a) * in_plane + std::sin(a) * nrm)});
        for (double sign : {1.0, -1.0})
          out.push_back(SphereCovector{p, inv * (sign * std::cos(a) * line + std::sin(a) * around)});
      }
    }
  }
  return out;
}

WeightFunction::WeightFunction(const Flow& flow0, const DualSplitting& d, double T, WeightOptions opts)
    : flow_(&flow0), m0_(d, opts.eps), T_(T), opts_(opts) {}

double WeightFunction::m(const SphereCovector& xi) const {
  int n = static_cast<int>(std::ceil(2 * T_ / opts_.quad_step));
  if (n % 2) ++n;
  const double h = 2 * T_ / n;
  const bool exact = flow_->options().use_exact && flow_->field().exact;
  double acc = 0;
  SphereCovector cur = exact ? xi : flow_->projective(xi, -T_).xi;
  for (int i = 0; i <= n; ++i) {
    const double s = -T_ + i * h;
    if (exact) {
      cur = flow_->projective(xi, s).xi;
    } else if (i > 0) {
      cur = flow_->projective(cur, h).xi;
    }
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * m0_(cur);
  }
  return acc * h / 3.0;
}

double WeightFunction::F(const SphereCovector& xi) const {
  return m0_(flow_->projective(xi, T_).xi) - m0_(flow_->projective(xi, -T_).xi);
}

double WeightFunction::m_chart(const Vec2& x, double t, const Vec3& comp) const {
  const Covector c = normalize_covector(flow_->monodromy(), x, t, comp);
  return m(to_sphere(flow_->monodromy(), c));
}

MGradient WeightFunction::gradient(const SphereCovector& xi) const {
  const double h = opts_.fd_step;
  MGradient g;
  for (int j = 0; j < 3; ++j) {
    Vec2 xp = xi.base.x, xm = xi.base.x;
    double tp = xi.base.t, tm = xi.base.t;
    if (j < 2) {
      xp(j) += h;
      xm(j) -= h;
    } else {
      tp += h;
      tm -= h;
    }
    g.base(j) = (m_chart(xp, tp, xi.comp) - m_chart(xm, tm, xi.comp)) / (2 * h);
    Vec3 cp = xi.comp, cm = xi.comp;
    cp(j) += h;
    cm(j) -= h;
    g.fiber(j) = (m_chart(xi.base.x, xi.base.t, cp) - m_chart(xi.base.x, xi.base.t, cm)) / (2 * h);
  }
  return g;
}

double WeightFunction::lift_sensitivity(const SphereCovector& xi, const MGradient& g) const {
  return std::max(g.base.norm(), xi.comp.norm() * g.fiber.norm());
}

double WeightFunction::directional(const SphereCovector& xi, const MGradient& g, const Perturbation& v) {
  return g.base.dot(v.value(xi.base)) - g.fiber.dot(v.jacobian(xi.base).transpose() * xi.comp);
}

WeightTable tabulate(const WeightFunction& w, std::vector<SphereCovector> samples) {
  WeightTable t;
  t.samples = std::move(samples);
  t.m.resize(t.samples.size());
  t.F.resize(t.samples.size());
  for (std::size_t i = 0; i < t.samples.size(); ++i) {
    t.m[i] = w.m(t.samples[i]);
    t.F[i] = w.F(t.samples[i]);
  }
  return t;
}

GapConstants gap_constants(const WeightTable& t, double T, double shrink) {
  GapConstants gc;
  const auto [fmin, fmax] = std::minmax_element(t.F.begin(), t.F.end());
  gc.f_tol = 1e-3 * (*fmax - *fmin);
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t.F.size(); ++i) {
    if (std::abs(t.F[i]) <= gc.f_tol) {
      ++gc.zero_count;
      min_gap = std::min(min_gap, std::abs(t.m[i] - T));
    }
  }
  gc.delta_m = 0.5 * min_gap;
  if (!(gc.delta_m > 0)) throw VerificationFailure("gap constants: F vanishes where m = T; refine the grid");

  double eps = std::isfinite(gc.delta_m) ? gc.delta_m : T;
  for (int iter = 0; iter < 60; ++iter) {
    double fmin_gap = std::numeric_limits<double>::infinity();
    int count = 0;
    for (std::size_t i = 0; i < t.F.size(); ++i) {
      if (std::abs(t.m[i] - T) < eps) {
        ++count;
        fmin_gap = std::min(fmin_gap, t.F[i]);
      }
    }
    if (fmin_gap > gc.f_tol) {
      gc.eps_gap = eps;
      gc.gap_count = count;
      gc.delta = std::min(gc.delta_m, fmin_gap);
      return gc;
    }
    eps *= shrink;
  }
  throw VerificationFailure("gap constants: no admissible eps found (delta <= 0)");
}

std::vector<double> ell_profile(const Monodromy& mono, const WeightTable& t, double f_tol,
                                const std::vector<double>& eps_values, int max_points) {
  auto subsample = [&](auto pred) {
    std::vector<int> rows;
    for (std::size_t i = 0; i < t.F.size(); ++i)
      if (pred(i)) rows.push_back(static_cast<int>(i));
    if (static_cast<int>(rows.size()) > max_points) {
      std::vector<int> thin;
      const double stride = double(rows.size()) / max_points;
      for (int k = 0; k < max_points; ++k) thin.push_back(rows[std::size_t(k * stride)]);
      rows.swap(thin);
    }
    return rows;
  };
  auto adapted = [&](int i) { return adapted_direction(mono, t.samples[i]); };

  const auto zeros = subsample([&](std::size_t i) { return std::abs(t.F[i]) <= f_tol; });
  std::vector<Vec3> zdir;
  for (int z : zeros) zdir.push_back(adapted(z));

  std::vector<double> out;
  for (double eps : eps_values) {
    const auto rows = subsample([&](std::size_t i) { return t.F[i] <= eps; });
    double sup = 0;
    for (int r : rows) {
      const Vec3 a = adapted(r);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < zeros.size(); ++k) {
        const double ang = std::atan2(a.cross(zdir[k]).norm(), a.dot(zdir[k]));
        best = std::min(best, base_distance(t.samples[r].base, t.samples[zeros[k]].base) + ang);
      }
      if (std::isfinite(best)) sup = std::max(sup, best);
    }
    out.push_back(sup);
  }
  return out;
}

MonotonicityReport check_unperturbed(const WeightTable& t, const ChiProfile& chi, double T, double delta) {
  MonotonicityReport r;
  r.min_value = std::numeric_limits<double>::infinity();
  r.min_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t.F.size(); ++i) {
    const double cp = chi.derivative(t.m[i] - T);
    const double val = cp * t.F[i];
    r.min_value = std::min(r.min_value, val);
    if (cp > 0) {
      ++r.support_count;
      r.min_ratio = std::min(r.min_ratio, t.F[i] / delta);
    }
    if (val < -1e-10) {
      ++r.violations;
      r.violation_rows.push_back(static_cast<int>(i));
    }
  }
  return r;
}

SupportData support_gradients(const WeightFunction& w, const WeightTable& t) {
  SupportData s;
  for (std::size_t i = 0; i < t.F.size(); ++i) {
    if (w.chi().derivative(t.m[i] - w.T()) <= 0) continue;
    s.rows.push_back(static_cast<int>(i));
    s.grads.push_back(w.gradient(t.samples[i]));
    s.sensitivity.push_back(w.lift_sensitivity(t.samples[i], s.grads.back()));
  }
  return s;
}

Budget perturbation_budget(const WeightTable& t, const SupportData& s, double delta, double T,
                           double K_lift) {
  Budget b;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < s.rows.size(); ++k) {
    b.K_max = std::max(b.K_max, s.sensitivity[k]);
    if (s.sensitivity[k] <= 0) continue;
    const double ratio = t.F[s.rows[k]] / s.sensitivity[k];
    if (ratio < best) {
      best = ratio;
      b.argmin_row = s.rows[k];
    }
  }
  b.eta0 = std::isfinite(best) ? 0.5 * best : 0.0;
  if (delta <= 0) b.eta0 = 0.0;
  b.implied_C = b.eta0 > 0 ? delta / (b.eta0 * T) : 0.0;
  b.eta_lift = K_lift > 0 ? delta / (2.0 * K_lift * T) : 0.0;
  return b;
}

MonotonicityReport check_perturbed(const WeightTable& t, const SupportData& s, const ChiProfile& chi,
                                   double T, const Perturbation& v, double eps) {
  MonotonicityReport r;
  r.min_value = 0;  // off supp chi' the derivative vanishes identically
  r.min_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < s.rows.size(); ++k) {
    const int i = s.rows[k];
    const double cp = chi.derivative(t.m[i] - T);
    const double rate = t.F[i] + eps * WeightFunction::directional(t.samples[i], s.grads[k], v);
    const double val = cp * rate;
    ++r.support_count;
    r.min_value = std::min(r.min_value, val);
    if (val < -1e-10) {
      ++r.violations;
      r.violation_rows.push_back(i);
    }
  }
  return r;
}

Adversary adversarial_perturbation(const WeightTable& t, const SupportData& s, int qmax, int candidates) {
  std::vector<std::size_t> order(s.rows.size());
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](std::size_t k) {
    return s.sensitivity[k] > 0 ? t.F[s.rows[k]] / s.sensitivity[k] : std::numeric_limits<double>::infinity();
  };
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return key(a) < key(b); });
  if (static_cast<int>(order.size()) > candidates) order.resize(candidates);

  Adversary best;
  double best_score = -1;
  const std::complex<double> I(0, 1);
  const double two_pi = 2 * std::numbers::pi;
  for (std::size_t k : order) {
    const auto& xi = t.samples[s.rows[k]];
    const auto& g = s.grads[k];
    const double b = bump(xi.base.t), db = bump_derivative(xi.base.t);
    for (int q1 = 0; q1 <= qmax; ++q1)
      for (int q2 = -qmax; q2 <= qmax; ++q2) {
        if ((q1 == 0 && q2 < 0) || q1 * q1 + q2 * q2 > qmax * qmax) continue;
        const double ph = two_pi * (q1 * xi.base.x(0) + q2 * xi.base.x(1));
        const std::complex<double> e(std::cos(ph), std::sin(ph));
        // dm(V^inf) = Re(c . z) for V = b(t) Re(c e^{2 pi i q.x}).
        const std::complex<double> fib =
            b * two_pi * I * (double(q1) * g.fiber(0) + double(q2) * g.fiber(1)) + db * g.fiber(2);
        Eigen::Vector3cd z = e * (b * g.base.cast<std::complex<double>>() - fib * xi.comp.cast<std::complex<double>>());
        Eigen::Vector3cd c;
        if (q1 == 0 && q2 == 0) {
          const Vec3 zr = z.real();
          if (zr.norm() == 0) continue;
          c = (-zr / zr.norm()).cast<std::complex<double>>();
        } else {
          if (z.norm() == 0) continue;
          c = -z.conjugate() / z.norm();
        }
        Perturbation v({FourierMode{Eigen::Vector2i(q1, q2), c}});
        const double norm = v.c1_norm(12);
        // Rank by how far the mode pushes F + eps dm below zero at this row.
        const double score = -WeightFunction::directional(xi, g, v) / norm / t.F[s.rows[k]];
        if (score > best_score) {
          best_score = score;
          best.v = v;
          best.row = s.rows[k];
        }
      }
  }
  if (best.row >= 0) {
    best.v = best.v.normalized(32);
    for (std::size_t k = 0; k < s.rows.size(); ++k)
      if (s.rows[k] == best.row)
        best.ratio = -WeightFunction::directional(t.samples[best.row], s.grads[k], best.v) / s.sensitivity[k];
  }
  return best;
}

}  // namespace anosov
