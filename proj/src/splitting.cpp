#include "anosov/splitting.hpp"

#include "anosov/errors.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

namespace anosov {

namespace {

double line_angle(const Vec3& a, const Vec3& b) {
  const double th = std::atan2(a.cross(b).norm(), a.dot(b));
  return std::min(th, std::numbers::pi - th);
}

double tangent_line_angle(const Monodromy& mono, double t, const Vec3& a, const Vec3& b) {
  const Mat3 n = tangent_adapter(mono, t);
  return line_angle(n * a, n * b);
}

Vec3 unit_tangent(const Monodromy& mono, double t, const Vec3& v) {
  return v / tangent_norm(mono, t, v);
}

Vec3 unit_covector(const Monodromy& mono, double t, const Vec3& v) {
  return v / covector_norm(mono, t, v);
}

// Weighted sum of line representatives with signs aligned to the first.
Vec3 blend_lines(const Vec3* v, const double* w, int n) {
  Vec3 acc = Vec3::Zero();
  for (int i = 0; i < n; ++i) {
    const double s = (i == 0 || v[i].dot(v[0]) >= 0) ? 1.0 : -1.0;
    acc += w[i] * s * v[i];
  }
  return acc;
}

std::string where(const MappingTorusPoint& p) {
  std::ostringstream os;
  os << "(x=" << p.x(0) << "," << p.x(1) << ", t=" << p.t << ")";
  return os.str();
}

}  // namespace

MappingTorusPoint BaseGrid::point(int idx) const {
  const int i = idx % n_x;
  const int j = (idx / n_x) % n_x;
  const int k = idx / (n_x * n_x);
  return MappingTorusPoint{Vec2(double(i) / n_x, double(j) / n_x), double(k) / n_t};
}

Frame Splitting::at(const MappingTorusPoint& p) const {
  const int nx = grid_.n_x, nt = grid_.n_t;

  // Bilinear interpolation on one t-level; level nt is level 0 pulled back
  // through the gluing.
  auto level = [&](int k, const Vec2& x) {
    Vec2 xq = x;
    Mat3 pull = Mat3::Identity();
    if (k == nt) {
      xq = wrap_torus(mono_.A() * x);
      pull = tangent_transport(mono_, -1);
      k = 0;
    }
    const double fx = xq(0) * nx, fy = xq(1) * nx;
    const int i0 = static_cast<int>(std::floor(fx)), j0 = static_cast<int>(std::floor(fy));
    const double wx = fx - i0, wy = fy - j0;
    Vec3 e0[4], eu[4], es[4];
    double w[4];
    int c = 0;
    for (int dj = 0; dj < 2; ++dj)
      for (int di = 0; di < 2; ++di, ++c) {
        const Frame& f = frames_[grid_.index((i0 + di) % nx, (j0 + dj) % nx, k)];
        e0[c] = pull * f.e0;
        eu[c] = pull * f.eu;
        es[c] = pull * f.es;
        w[c] = (di ? wx : 1 - wx) * (dj ? wy : 1 - wy);
      }
    return Frame{blend_lines(e0, w, 4), blend_lines(eu, w, 4), blend_lines(es, w, 4)};
  };

  const double ft = p.t * nt;
  int k0 = static_cast<int>(std::floor(ft));
  if (k0 >= nt) k0 = nt - 1;
  const double wt = ft - k0;
  const Frame a = level(k0, p.x);
  Frame out = a;
  if (wt > 0) {
    const Frame b = level(k0 + 1, p.x);
    const double w[2] = {1 - wt, wt};
    Vec3 v0[2] = {a.e0, b.e0}, vu[2] = {a.eu, b.eu}, vs[2] = {a.es, b.es};
    out = Frame{blend_lines(v0, w, 2), blend_lines(vu, w, 2), blend_lines(vs, w, 2)};
  }
  out.e0 = unit_tangent(mono_, p.t, out.e0);
  out.eu = unit_tangent(mono_, p.t, out.eu);
  out.es = unit_tangent(mono_, p.t, out.es);
  return out;
}

DualFrame dual_of(const Monodromy& mono, double t, const Frame& f) {
  Mat3 P;
  P.col(0) = f.e0;
  P.col(1) = f.eu;
  P.col(2) = f.es;
  const Mat3 Pinv = P.inverse();
  DualFrame d;
  d.d00 = Pinv.row(0).transpose();
  d.ds0 = Pinv.row(1).transpose();  // annihilates e0, es: decays under Phi_t
  d.du0 = Pinv.row(2).transpose();  // annihilates e0, eu: grows under Phi_t
  d.e00 = unit_covector(mono, t, d.d00);
  d.eu0 = unit_covector(mono, t, d.du0);
  d.es0 = unit_covector(mono, t, d.ds0);
  return d;
}

DualSplitting::DualSplitting(Splitting s) : primal_(std::move(s)) {
  const auto& g = primal_.grid();
  const auto& mono = primal_.monodromy();
  frames_.reserve(g.size());
  min_angle_ = std::numbers::pi;
  for (int idx = 0; idx < g.size(); ++idx) {
    const auto p = g.point(idx);
    const DualFrame d = dual_of(mono, p.t, primal_.frames()[idx]);
    const Mat3 ad = cotangent_adapter(mono, p.t);
    const Vec3 a = ad * d.e00, b = ad * d.eu0, c = ad * d.es0;
    min_angle_ = std::min({min_angle_, line_angle(a, b), line_angle(a, c), line_angle(b, c)});
    frames_.push_back(d);
  }
  if (min_angle_ < 1e-3) throw VerificationFailure("dual splitting: degenerate frame (angle below 1e-3 rad)");
}

DualFrame DualSplitting::at(const MappingTorusPoint& p) const {
  return dual_of(primal_.monodromy(), p.t, primal_.at(p));
}

Splitting compute_splitting(const Flow& flow, const BaseGrid& grid, SplittingOptions opts) {
  const Monodromy& mono = flow.monodromy();
  const double T = opts.t_iter > 0 ? opts.t_iter : 20.0 / std::log(mono.lambda_u());
  const Vec3 generic(0.6, -0.37, 0.21);

  // Direction of dphi_{sign*T} v pushed to p, and the same for T+1.
  auto iterate = [&](const MappingTorusPoint& p, double sign, Vec3& dir) {
    const auto q1 = flow.evolve(p, -sign * (T + 1)).endpoint;
    const auto j1 = flow.evolve(q1, sign * 1.0);
    const auto jt = flow.evolve(j1.endpoint, sign * T);
    const Vec3 w1 = jt.jacobian * generic;
    const Vec3 w2 = jt.jacobian * (j1.jacobian * generic);
    if (!w1.allFinite() || !w2.allFinite()) throw NumericalFailure("splitting: non-finite push-forward");
    dir = unit_tangent(mono, p.t, w2);
    return tangent_line_angle(mono, p.t, w1, w2);
  };

  std::vector<Frame> frames(grid.size());
  for (int idx = 0; idx < grid.size(); ++idx) {
    const auto p = grid.point(idx);
    Frame f;
    f.e0 = unit_tangent(mono, p.t, flow.field().value(p));
    const double du = iterate(p, +1.0, f.eu);
    const double ds = iterate(p, -1.0, f.es);
    if (du > opts.convergence_tol || ds > opts.convergence_tol)
      throw VerificationFailure("splitting: not uniformly hyperbolic at " + where(p));
    frames[idx] = f;
  }
  return Splitting(mono, grid, std::move(frames));
}

double invariance_residual(const Flow& flow, const Splitting& s, double t) {
  const auto& g = s.grid();
  const auto& mono = s.monodromy();
  double worst = 0;
  for (int idx = 0; idx < g.size(); ++idx) {
    const auto p = g.point(idx);
    const Frame& f = s.frames()[idx];
    const auto jet = flow.evolve(p, t);
    const Frame img = s.at(jet.endpoint);
    const double te = jet.endpoint.t;
    worst = std::max({worst, tangent_line_angle(mono, te, jet.jacobian * f.eu, img.eu),
                      tangent_line_angle(mono, te, jet.jacobian * f.es, img.es),
                      tangent_line_angle(mono, te, jet.jacobian * f.e0, img.e0)});
  }
  return worst;
}

Decomposition decompose_covector(const Covector& xi, const DualSplitting& d) {
  const Frame f = d.primal().at(xi.base);
  const DualFrame df = dual_of(d.primal().monodromy(), xi.base.t, f);
  Decomposition out;
  out.xi_0 = xi.comp.dot(f.e0) * df.d00;
  out.xi_u = xi.comp.dot(f.es) * df.du0;
  out.xi_s = xi.comp.dot(f.eu) * df.ds0;
  return out;
}

HyperbolicConstants estimate_constants(const Flow& flow, const Splitting& s, int stride) {
  const auto& g = s.grid();
  const auto& mono = s.monodromy();
  constexpr double kDt = 0.25;
  constexpr int kSteps = 32;  // t in [0, 8]
  const int fit_idx[4] = {4, 8, 16, 32};
  const double fit_T[4] = {1, 2, 4, 8};

  // gmax[side][step]: max over points of log||dphi_{-+t} restricted||
  double gmax[2][kSteps + 1];
  for (auto& side : gmax)
    for (double& v : side) v = -1e300;

  HyperbolicConstants hc;
  hc.theta_min = std::numbers::pi;
  std::vector<std::array<std::array<double, kSteps + 1>, 2>> traces;
  for (int idx = 0; idx < g.size(); idx += stride) {
    const auto p = g.point(idx);
    const Frame& f = s.frames()[idx];
    const Mat3 ad = tangent_adapter(mono, p.t);
    const Vec3 a = ad * f.e0, b = ad * f.eu, c = ad * f.es;
    hc.theta_min = std::min({hc.theta_min, line_angle(a, b), line_angle(a, c), line_angle(b, c)});

    // Growth of e_s (forward) and e_u (backward) measured transversally to the
    // plane spanned by e_0 and the other line: |det M| area(P) / area(M P).
    // That plane attracts under the chosen time direction, so errors in the
    // frame decay instead of being amplified.
    std::array<std::array<double, kSteps + 1>, 2> tr{};
    for (int side = 0; side < 2; ++side) {
      // side 0: unstable vector backward; side 1: stable vector forward.
      const double dir = side == 0 ? -1.0 : 1.0;
      Vec3 pa = ad * f.e0, pb = ad * (side == 0 ? f.es : f.eu);
      pa.normalize();
      pb = (pb - pa.dot(pb) * pa).normalized();
      MappingTorusPoint q = p;
      Mat3 ad_q_inv = ad.inverse();
      double acc = 0;
      tr[side][0] = 0;
      for (int k = 1; k <= kSteps; ++k) {
        const auto jet = flow.evolve(q, dir * kDt);
        q = jet.endpoint;
        const Mat3 ad_next = tangent_adapter(mono, q.t);
        const Mat3 M = ad_next * jet.jacobian * ad_q_inv;
        ad_q_inv = ad_next.inverse();
        pa = M * pa;
        pb = M * pb;
        acc += std::log(std::abs(M.determinant())) - std::log(pa.cross(pb).norm());
        pa.normalize();
        pb = (pb - pa.dot(pb) * pa).normalized();
        tr[side][k] = acc;
        gmax[side][k] = std::max(gmax[side][k], acc);
      }
    }
    traces.push_back(tr);
  }

  double beta = 1e300;
  for (int side = 0; side < 2; ++side) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < 4; ++i) {
      const double x = fit_T[i], y = gmax[side][fit_idx[i]];
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double slope = (4 * sxy - sx * sy) / (4 * sxx - sx * sx);
    beta = std::min(beta, -slope);
  }
  if (!(beta > 0)) throw VerificationFailure("constants: non-positive beta estimate, flow not Anosov on the grid");
  hc.beta = beta;

  double logC = 0;
  for (const auto& tr : traces)
    for (int side = 0; side < 2; ++side)
      for (int k = 0; k <= kSteps; ++k) logC = std::max(logC, beta * k * kDt + tr[side][k]);
  hc.C = std::exp(logC);

  hc.theta_min_dual = DualSplitting(s).min_angle();
  return hc;
}

std::vector<SphereCovector> cone_samples(const Monodromy& mono, const Cone& cone,
                                         const MappingTorusPoint& p, int azimuths) {
  const Mat3 ad = cotangent_adapter(mono, p.t);
  const Mat3 ad_inv = ad.inverse();
  const Vec3 c = (ad * cone.center(p)).normalized();
  Vec3 u = c.unitOrthogonal();
  Vec3 w = c.cross(u);
  std::vector<SphereCovector> out;
  out.push_back(SphereCovector{p, ad_inv * c});
  for (double frac : {0.5, 1.0}) {
    const double a = frac * cone.half_angle;
    for (int k = 0; k < azimuths; ++k) {
      const double phi = 2 * std::numbers::pi * k / azimuths;
      const Vec3 d = std::cos(a) * c + std::sin(a) * (std::cos(phi) * u + std::sin(phi) * w);
      out.push_back(SphereCovector{p, ad_inv * d});
    }
  }
  return out;
}

SinkReport verify_sink(const Flow& flow, const Cone& cone, double horizon, const BaseGrid& grid,
                       double limit_tol, int time_steps) {
  const auto& mono = flow.monodromy();
  const double dt = horizon / time_steps;
  const int half = time_steps / 2;
  SinkReport rep;
  rep.beta_prime = 1e300;
  std::vector<std::vector<double>> growth;
  for (int idx = 0; idx < grid.size(); ++idx) {
    for (const auto& xi0 : cone_samples(mono, cone, grid.point(idx))) {
      std::vector<double> g(time_steps + 1, 0.0);
      SphereCovector xi = xi0;
      for (int k = 1; k <= time_steps; ++k) {
        const auto r = flow.projective(xi, dt);
        xi = r.xi;
        g[k] = g[k - 1] + r.log_growth;
      }
      rep.beta_prime = std::min(rep.beta_prime, (g[time_steps] - g[half]) / (dt * (time_steps - half)));
      rep.final_angle = std::max(rep.final_angle, cone.angle_from_center(mono, xi));
      growth.push_back(std::move(g));
      ++rep.samples;
    }
  }
  double logC = 0;
  for (const auto& g : growth)
    for (int k = 0; k <= time_steps; ++k) logC = std::max(logC, rep.beta_prime * k * dt - g[k]);
  rep.C_prime = std::exp(logC);
  rep.converges = rep.final_angle <= limit_tol;
  rep.is_sink = rep.beta_prime > 0 && rep.converges;
  return rep;
}

TrappedCone trapped_cone(const Flow& flow, const Cone& v2, const Cone& v1, double step, int steps,
                         const BaseGrid& grid) {
  const auto& mono = flow.monodromy();
  TrappedCone out;
  out.half_angles.assign(steps, 0.0);
  out.min_growth = 1e300;
  for (int idx = 0; idx < grid.size(); ++idx) {
    const auto p = grid.point(idx);
    for (const auto& xi0 : cone_samples(mono, v2, p)) {
      SphereCovector xi = xi0;
      for (int k = 0; k < steps; ++k) {
        const auto r = flow.projective(xi, step);
        xi = r.xi;
        if (k == 0) {
          out.min_growth = std::min(out.min_growth, std::exp(r.log_growth));
          if (!v1.contains(mono, xi)) {
            out.contained = false;
            out.violations.push_back(p);
          }
        }
        out.half_angles[k] = std::max(out.half_angles[k], v2.angle_from_center(mono, xi));
      }
    }
  }
  out.cone = Cone{v2.center, steps > 0 ? out.half_angles.back() : v2.half_angle};
  return out;
}

Cone sink_cone(const DualSplitting& d, double half_angle) {
  return Cone{[&d](const MappingTorusPoint& p) { return d.at(p).eu0; }, half_angle};
}

Cone source_cone(const DualSplitting& d, double half_angle) {
  return Cone{[&d](const MappingTorusPoint& p) { return d.at(p).es0; }, half_angle};
}

}  // namespace anosov
