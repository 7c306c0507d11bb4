#include "anosov/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace anosov {

Monodromy::Monodromy(int a, int b, int c, int d) {
  a_int_ << a, b, c, d;
  const int det = a * d - b * c;
  if (det != 1 && det != -1) throw std::invalid_argument("monodromy: det A must be +-1");
  a_ = a_int_.cast<double>();
  a_inv_ = a_.inverse();

  const double tr = a + d;
  const double disc = tr * tr - 4.0 * det;
  if (disc <= 0) throw std::invalid_argument("monodromy: A is not hyperbolic");
  const double l1 = 0.5 * (tr + std::sqrt(disc));
  const double l2 = 0.5 * (tr - std::sqrt(disc));
  // The adapted metric needs a real logarithm of A.
  if (l1 <= 0 || l2 <= 0)
    throw std::invalid_argument("monodromy: eigenvalues must be positive (need det 1, trace > 2)");
  lambda_u_ = std::max(l1, l2);
  lambda_s_ = std::min(l1, l2);

  auto eigvec = [&](double l) {
    Vec2 v = std::abs(b) > 0 ? Vec2(b, l - a) : Vec2(l - d, c);
    return Vec2(v.normalized());
  };
  v_u_ = eigvec(lambda_u_);
  v_s_ = eigvec(lambda_s_);
  if (v_u_(0) < 0) v_u_ = -v_u_;
  if (v_s_(0) < 0) v_s_ = -v_s_;

  eig_vecs_.col(0) = v_u_;
  eig_vecs_.col(1) = v_s_;
  eig_vecs_inv_ = eig_vecs_.inverse();
  log_a_ = eig_vecs_ * Eigen::Vector2d(std::log(lambda_u_), std::log(lambda_s_)).asDiagonal() *
           eig_vecs_inv_;
}

Mat2 Monodromy::frame(double t) const {
  return eig_vecs_ * Eigen::Vector2d(std::pow(lambda_u_, t), std::pow(lambda_s_, t)).asDiagonal() *
         eig_vecs_inv_;
}

Mat2 Monodromy::power(int n) const {
  Mat2 base = n >= 0 ? a_ : a_inv_;
  Mat2 out = Mat2::Identity();
  for (int i = 0; i < std::abs(n); ++i) out = base * out;
  return out;
}

Vec2 wrap_torus(const Vec2& x) {
  Vec2 y;
  for (int i = 0; i < 2; ++i) {
    y(i) = x(i) - std::floor(x(i));
    if (y(i) >= 1.0) y(i) = 0.0;
  }
  return y;
}

MappingTorusPoint normalize(const Monodromy& mono, const Vec2& x, double t, int* crossings) {
  const double n = std::floor(t);
  MappingTorusPoint p;
  p.t = t - n;
  if (p.t >= 1.0) p.t = 0.0;
  const int k = static_cast<int>(n) + (t - n >= 1.0 ? 1 : 0);
  // Wrap between applications so the integer matrix acts on small numbers.
  Vec2 y = wrap_torus(x);
  const Mat2& step = k >= 0 ? mono.A() : mono.A_inv();
  for (int i = 0; i < std::abs(k); ++i) y = wrap_torus(step * y);
  p.x = y;
  if (crossings) *crossings = k;
  return p;
}

Covector normalize_covector(const Monodromy& mono, const Vec2& x, double t, const Vec3& comp) {
  int n = 0;
  Covector out;
  out.base = normalize(mono, x, t, &n);
  out.comp = cotangent_transport(mono, n) * comp;
  return out;
}

Mat3 tangent_transport(const Monodromy& mono, int n) {
  Mat3 m = Mat3::Identity();
  m.topLeftCorner<2, 2>() = mono.power(n);
  return m;
}

Mat3 cotangent_transport(const Monodromy& mono, int n) {
  Mat3 m = Mat3::Identity();
  m.topLeftCorner<2, 2>() = mono.power(-n).transpose();
  return m;
}

TangentVector glue_transport(const Monodromy& mono, const TangentVector& v, int crossing) {
  TangentVector out;
  out.comp = tangent_transport(mono, crossing) * v.comp;
  const Mat2 m = crossing > 0 ? mono.A() : mono.A_inv();
  out.base.x = wrap_torus(m * v.base.x);
  out.base.t = crossing > 0 ? 0.0 : 1.0;
  return out;
}

Covector glue_transport(const Monodromy& mono, const Covector& xi, int crossing) {
  Covector out;
  out.comp = cotangent_transport(mono, crossing) * xi.comp;
  const Mat2 m = crossing > 0 ? mono.A() : mono.A_inv();
  out.base.x = wrap_torus(m * xi.base.x);
  out.base.t = crossing > 0 ? 0.0 : 1.0;
  return out;
}

Mat3 tangent_adapter(const Monodromy& mono, double t) {
  Mat3 m = Mat3::Identity();
  m.topLeftCorner<2, 2>() = mono.frame(t);
  return m;
}

Mat3 cotangent_adapter(const Monodromy& mono, double t) {
  Mat3 m = Mat3::Identity();
  m.topLeftCorner<2, 2>() = mono.frame(-t).transpose();
  return m;
}

double tangent_norm(const Monodromy& mono, double t, const Vec3& v) {
  return (tangent_adapter(mono, t) * v).norm();
}

double covector_norm(const Monodromy& mono, double t, const Vec3& xi) {
  return (cotangent_adapter(mono, t) * xi).norm();
}

SphereCovector to_sphere(const Monodromy& mono, const MappingTorusPoint& p, const Vec3& comp) {
  const double n = covector_norm(mono, p.t, comp);
  if (!(n > 0) || !std::isfinite(n)) throw std::domain_error("to_sphere: zero or non-finite covector");
  return SphereCovector{p, comp / n};
}

SphereCovector to_sphere(const Monodromy& mono, const Covector& xi) {
  return to_sphere(mono, xi.base, xi.comp);
}

double base_distance(const MappingTorusPoint& a, const MappingTorusPoint& b) {
  double d2 = 0;
  for (int i = 0; i < 2; ++i) {
    double d = std::abs(a.x(i) - b.x(i));
    d = std::min(d, 1.0 - d);
    d2 += d * d;
  }
  return std::sqrt(d2) + std::abs(a.t - b.t);
}

namespace {
double angle_between(const Vec3& a, const Vec3& b) {
  // atan2 form keeps full accuracy near 0 and pi.
  return std::atan2(a.cross(b).norm(), a.dot(b));
}
}  // namespace

double fiber_angle(const Monodromy& mono, double ta, const Vec3& a, double tb, const Vec3& b) {
  return angle_between(cotangent_adapter(mono, ta) * a, cotangent_adapter(mono, tb) * b);
}

double sphere_distance(const Monodromy& mono, const SphereCovector& a, const SphereCovector& b) {
  return base_distance(a.base, b.base) + fiber_angle(mono, a.base.t, a.comp, b.base.t, b.comp);
}

double angle_to_line(const Monodromy& mono, double t, const Vec3& xi, const Vec3& line) {
  const double th = fiber_angle(mono, t, xi, t, line);
  return std::min(th, std::numbers::pi - th);
}

double angle_to_plane(const Monodromy& mono, double t, const Vec3& xi, const Vec3& p1,
                      const Vec3& p2) {
  const Mat3 ad = cotangent_adapter(mono, t);
  const Vec3 n = (ad * p1).cross(ad * p2).normalized();
  const Vec3 u = (ad * xi).normalized();
  return std::asin(std::min(1.0, std::abs(n.dot(u))));
}

double Cone::angle_from_center(const Monodromy& mono, const SphereCovector& xi) const {
  return angle_to_line(mono, xi.base.t, xi.comp, center(xi.base));
}

bool Cone::contains(const Monodromy& mono, const SphereCovector& xi) const {
  return angle_from_center(mono, xi) <= half_angle;
}

std::vector<Vec3> fibonacci_sphere(int n) {
  std::vector<Vec3> out;
  out.reserve(n);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(1.0 - z * z);
    const double phi = golden * i;
    out.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return out;
}

}  // namespace anosov
