#include "anosov/flow.hpp"

#include "anosov/errors.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <random>

namespace anosov {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double op_norm(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m);
  return svd.singularValues()(0);
}
}  // namespace

VectorField suspension_field(const Monodromy& mono) {
  VectorField f;
  f.name = "suspension";
  f.value = [](const MappingTorusPoint&) { return Vec3(0, 0, 1); };
  f.jacobian = [](const MappingTorusPoint&) { return Mat3::Zero().eval(); };
  f.exact = [mono](const MappingTorusPoint& p, double t) {
    int n = 0;
    FlowJet jet;
    jet.endpoint = normalize(mono, p.x, p.t + t, &n);
    jet.jacobian = tangent_transport(mono, n);
    jet.elapsed = t;
    return jet;
  };
  return f;
}

double bump(double t) {
  const double s = std::sin(std::numbers::pi * t);
  return s * s * s * s;
}

double bump_derivative(double t) {
  const double s = std::sin(std::numbers::pi * t);
  return 4.0 * std::numbers::pi * s * s * s * std::cos(std::numbers::pi * t);
}

Perturbation Perturbation::random(std::uint64_t seed, int qmax, bool divergence_free) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<FourierMode> modes;
  for (int q1 = 0; q1 <= qmax; ++q1) {
    for (int q2 = -qmax; q2 <= qmax; ++q2) {
      if (q1 == 0 && q2 < 0) continue;
      if (q1 * q1 + q2 * q2 > qmax * qmax) continue;
      FourierMode m;
      m.q = Eigen::Vector2i(q1, q2);
      if (divergence_free) {
        if (q1 == 0 && q2 == 0) continue;
        const std::complex<double> d(nd(rng), nd(rng));
        const std::complex<double> i(0, 1);
        m.c = Eigen::Vector3cd(kTwoPi * i * double(q2) * d, -kTwoPi * i * double(q1) * d, 0.0);
      } else {
        for (int k = 0; k < 3; ++k) {
          const double re = nd(rng);
          const double im = nd(rng);
          m.c(k) = (q1 == 0 && q2 == 0) ? std::complex<double>(re, 0) : std::complex<double>(re, im);
        }
      }
      modes.push_back(m);
    }
  }
  return Perturbation(std::move(modes));
}

Vec3 Perturbation::value(const MappingTorusPoint& p) const {
  Vec3 v = Vec3::Zero();
  for (const auto& m : modes_) {
    const double ph = kTwoPi * (m.q(0) * p.x(0) + m.q(1) * p.x(1));
    const std::complex<double> e(std::cos(ph), std::sin(ph));
    v += (m.c * e).real();
  }
  return bump(p.t) * v;
}

Mat3 Perturbation::jacobian(const MappingTorusPoint& p) const {
  Mat3 d = Mat3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 vx1 = Vec3::Zero(), vx2 = Vec3::Zero();
  for (const auto& m : modes_) {
    const double ph = kTwoPi * (m.q(0) * p.x(0) + m.q(1) * p.x(1));
    const std::complex<double> e(std::cos(ph), std::sin(ph));
    const Eigen::Vector3cd ce = m.c * e;
    const std::complex<double> i(0, 1);
    v += ce.real();
    vx1 += (ce * (i * kTwoPi * double(m.q(0)))).real();
    vx2 += (ce * (i * kTwoPi * double(m.q(1)))).real();
  }
  const double b = bump(p.t);
  d.col(0) = b * vx1;
  d.col(1) = b * vx2;
  d.col(2) = bump_derivative(p.t) * v;
  return d;
}

Perturbation Perturbation::scaled(double a) const {
  auto modes = modes_;
  for (auto& m : modes) m.c *= a;
  return Perturbation(std::move(modes));
}

double Perturbation::c1_norm(int n) const {
  double sup = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        MappingTorusPoint p{Vec2(double(i) / n, double(j) / n), double(k) / n};
        sup = std::max(sup, value(p).norm() + op_norm(jacobian(p)));
      }
  return sup;
}

Perturbation Perturbation::normalized(int n) const {
  const double c = c1_norm(n);
  if (!(c > 0)) return *this;
  return scaled(1.0 / c);
}

std::vector<FourierMode> Perturbation::full_spectrum() const {
  std::map<std::pair<int, int>, Eigen::Vector3cd> acc;
  auto add = [&](int a, int b, const Eigen::Vector3cd& c) {
    auto [it, fresh] = acc.try_emplace({a, b}, Eigen::Vector3cd::Zero());
    it->second += c;
  };
  for (const auto& m : modes_) {
    if (m.q.isZero()) {
      add(0, 0, Eigen::Vector3cd(m.c.real().cast<std::complex<double>>()));
    } else {
      add(m.q(0), m.q(1), 0.5 * m.c);
      add(-m.q(0), -m.q(1), 0.5 * m.c.conjugate());
    }
  }
  std::vector<FourierMode> out;
  for (const auto& [q, c] : acc) out.push_back({Eigen::Vector2i(q.first, q.second), c});
  return out;
}

VectorField Perturbation::as_field() const {
  VectorField f;
  f.name = "perturbation";
  auto self = *this;
  f.value = [self](const MappingTorusPoint& p) { return self.value(p); };
  f.jacobian = [self](const MappingTorusPoint& p) { return self.jacobian(p); };
  return f;
}

VectorField perturbed_field(const VectorField& x0, const Perturbation& v, double eps) {
  if (eps == 0.0) return x0;
  VectorField f;
  f.name = x0.name + "+eps*V";
  f.value = [x0, v, eps](const MappingTorusPoint& p) { return Vec3(x0.value(p) + eps * v.value(p)); };
  f.jacobian = [x0, v, eps](const MappingTorusPoint& p) {
    return Mat3(x0.jacobian(p) + eps * v.jacobian(p));
  };
  return f;
}

VectorField reversed(const VectorField& x) {
  VectorField f;
  f.name = "-" + x.name;
  f.value = [x](const MappingTorusPoint& p) { return Vec3(-x.value(p)); };
  f.jacobian = [x](const MappingTorusPoint& p) { return Mat3(-x.jacobian(p)); };
  if (x.exact) f.exact = [x](const MappingTorusPoint& p, double t) { return x.exact(p, -t); };
  return f;
}

Mat3 adapted_derivative(const Monodromy& mono, const VectorField& x, const MappingTorusPoint& p) {
  const Mat3 n = tangent_adapter(mono, p.t);
  Mat3 log_n = Mat3::Zero();
  log_n.topLeftCorner<2, 2>() = mono.log_A();
  return n * x.jacobian(p) * n.inverse() + x.value(p)(2) * log_n;
}

double c1_distance(const VectorField& x, const VectorField& y, int n) {
  double sup = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        MappingTorusPoint p{Vec2(double(i) / n, double(j) / n), double(k) / n};
        sup = std::max(sup, (x.value(p) - y.value(p)).norm() +
                                op_norm(x.jacobian(p) - y.jacobian(p)));
      }
  return sup;
}

Flow::State Flow::rk4(const State& s, double h, bool with_xi) const {
  struct D {
    Vec3 v;
    Mat3 J;
    Vec3 xi;
  };
  auto f = [&](const Vec2& x, double t, const Mat3& J, const Vec3& xi) {
    const MappingTorusPoint p{x, t};
    const Mat3 dX = field_.jacobian(p);
    D d{field_.value(p), dX * J, Vec3::Zero()};
    if (with_xi) d.xi = -dX.transpose() * xi;
    return d;
  };
  auto shift = [](const State& s0, const D& d, double a) {
    return State{s0.x + a * d.v.head<2>(), s0.t + a * d.v(2), s0.J + a * d.J, s0.xi + a * d.xi};
  };
  const D k1 = f(s.x, s.t, s.J, s.xi);
  const State s2 = shift(s, k1, 0.5 * h);
  const D k2 = f(s2.x, s2.t, s2.J, s2.xi);
  const State s3 = shift(s, k2, 0.5 * h);
  const D k3 = f(s3.x, s3.t, s3.J, s3.xi);
  const State s4 = shift(s, k3, h);
  const D k4 = f(s4.x, s4.t, s4.J, s4.xi);
  State out;
  out.x = s.x + h / 6.0 * (k1.v + 2 * k2.v + 2 * k3.v + k4.v).head<2>();
  out.t = s.t + h / 6.0 * (k1.v(2) + 2 * k2.v(2) + 2 * k3.v(2) + k4.v(2));
  out.J = s.J + h / 6.0 * (k1.J + 2 * k2.J + 2 * k3.J + k4.J);
  out.xi = s.xi + h / 6.0 * (k1.xi + 2 * k2.xi + 2 * k3.xi + k4.xi);
  return out;
}

void Flow::integrate(State& s, double t, bool with_xi, double& log_scale) const {
  if (std::abs(t) > opts_.t_max) throw std::invalid_argument("flow: |t| exceeds t_max");
  if (t == 0.0) return;
  const int n = static_cast<int>(std::ceil(std::abs(t) / opts_.step - 1e-9));
  const double h = t / n;

  auto glue = [&](int crossing) {
    s.x = wrap_torus((crossing > 0 ? mono_.A() : mono_.A_inv()) * s.x);
    s.t = crossing > 0 ? 0.0 : 1.0;
    s.J = tangent_transport(mono_, crossing) * s.J;
    if (with_xi) s.xi = cotangent_transport(mono_, crossing) * s.xi;
  };
  auto renorm = [&]() {
    if (!with_xi) return;
    const double nrm = s.xi.norm();
    s.xi /= nrm;
    log_scale += std::log(nrm);
  };

  for (int i = 0; i < n; ++i) {
    if (h < 0 && s.t <= 0.0) glue(-1);
    double remaining = h;
    for (int guard = 0; guard < 8 && remaining != 0.0; ++guard) {
      State next = rk4(s, remaining, with_xi);
      const bool fwd_cross = next.t >= 1.0;
      const bool bwd_cross = next.t < 0.0;
      if (!fwd_cross && !bwd_cross) {
        s = next;
        break;
      }
      const double boundary = fwd_cross ? 1.0 : 0.0;
      double lo = 0.0, hi = remaining;  // t(lo) inside, t(hi) outside
      while (std::abs(hi - lo) > opts_.crossing_tol) {
        const double mid = 0.5 * (lo + hi);
        const double tm = rk4(s, mid, with_xi).t;
        const bool outside = fwd_cross ? tm >= boundary : tm < boundary;
        (outside ? hi : lo) = mid;
      }
      s = rk4(s, hi, with_xi);
      s.t = boundary;
      glue(fwd_cross ? +1 : -1);
      remaining -= hi;
    }
    s.x = wrap_torus(s.x);
    if (s.t >= 1.0) glue(+1);
    renorm();
    if (!s.x.allFinite() || !std::isfinite(s.t) || !s.J.allFinite() || !s.xi.allFinite())
      throw NumericalFailure("flow: non-finite state");
  }
}

FlowJet Flow::evolve(const MappingTorusPoint& p, double t) const {
  if (opts_.use_exact && field_.exact) return field_.exact(p, t);
  State s{p.x, p.t, Mat3::Identity(), Vec3::Zero()};
  double ls = 0;
  integrate(s, t, false, ls);
  FlowJet jet;
  jet.endpoint = normalize(mono_, s.x, s.t);
  jet.jacobian = s.J;
  jet.elapsed = t;
  return jet;
}

Covector Flow::cotangent_lift(const Covector& xi, double t) const {
  const FlowJet jet = evolve(xi.base, t);
  return Covector{jet.endpoint, jet.jacobian.transpose().partialPivLu().solve(xi.comp)};
}

ProjectiveResult Flow::projective(const SphereCovector& xi, double t) const {
  const double n0 = covector_norm(mono_, xi.base.t, xi.comp);
  if (opts_.use_exact && field_.exact) {
    const FlowJet jet = field_.exact(xi.base, t);
    const Vec3 c = jet.jacobian.transpose().partialPivLu().solve(xi.comp);
    const double n1 = covector_norm(mono_, jet.endpoint.t, c);
    return {SphereCovector{jet.endpoint, c / n1}, std::log(n1 / n0)};
  }
  State s{xi.base.x, xi.base.t, Mat3::Identity(), xi.comp};
  double ls = 0;
  integrate(s, t, true, ls);
  const MappingTorusPoint end = normalize(mono_, s.x, s.t);
  const double n1 = covector_norm(mono_, end.t, s.xi);
  return {SphereCovector{end, s.xi / n1}, ls + std::log(n1 / n0)};
}

Vec3 adapted_direction(const Monodromy& mono, const SphereCovector& xi) {
  return (cotangent_adapter(mono, xi.base.t) * xi.comp).normalized();
}

SphereTangent Flow::sphere_generator(const SphereCovector& xi, double h_fd) const {
  const Vec3 ep = adapted_direction(mono_, projective(xi, h_fd).xi);
  const Vec3 em = adapted_direction(mono_, projective(xi, -h_fd).xi);
  SphereTangent out;
  out.base = field_.value(xi.base);
  out.fiber = (ep - em) / (2.0 * h_fd);
  return out;
}

}  // namespace anosov
