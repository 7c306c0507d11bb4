// Geometry of the mapping torus M = T^2 x [0,1] / (x,1) ~ (Ax,0) of a
// hyperbolic toral automorphism A, and of its cosphere bundle S*M.
//
// Points are stored in the fundamental domain x in [0,1)^2, t in [0,1).
// Tangent and cotangent components are given in the chart frame
// (d/dx1, d/dx2, d/dt) and (dx1, dx2, dt).
//
// Fiber metric: the chart frame is rescaled by B(t) = exp(t log A), i.e.
//   |v|^2 = |B(t) v_x|^2 + v_t^2,   |xi|^2 = |B(t)^{-T} xi_x|^2 + xi_t^2.
// Because B(1) = A this metric is invariant under the gluing, so it is a
// smooth Riemannian metric on M (the Sol metric when A is symmetric).
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <vector>

namespace anosov {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

class Monodromy {
 public:
  /// Default cat map [[2,1],[1,1]].
  Monodromy() : Monodromy(2, 1, 1, 1) {}
  /// Throws std::invalid_argument unless det = +-1 and the eigenvalues are
  /// real, positive, with lambda_u > 1 > lambda_s.
  Monodromy(int a, int b, int c, int d);

  const Eigen::Matrix2i& matrix() const { return a_int_; }
  const Mat2& A() const { return a_; }
  const Mat2& A_inv() const { return a_inv_; }
  double lambda_u() const { return lambda_u_; }
  double lambda_s() const { return lambda_s_; }
  /// Unit (Euclidean) eigenvectors, A v_u = lambda_u v_u.
  const Vec2& v_u() const { return v_u_; }
  const Vec2& v_s() const { return v_s_; }
  const Mat2& log_A() const { return log_a_; }

  /// B(t) = exp(t log A); B(n) = A^n for integer n.
  Mat2 frame(double t) const;
  /// A^n for any integer n.
  Mat2 power(int n) const;

 private:
  Eigen::Matrix2i a_int_;
  Mat2 a_, a_inv_, log_a_;
  Mat2 eig_vecs_, eig_vecs_inv_;
  double lambda_u_ = 0, lambda_s_ = 0;
  Vec2 v_u_, v_s_;
};

struct MappingTorusPoint {
  Vec2 x = Vec2::Zero();
  double t = 0.0;
};

struct TangentVector {
  MappingTorusPoint base;
  Vec3 comp = Vec3::Zero();
};

struct Covector {
  MappingTorusPoint base;
  Vec3 comp = Vec3::Zero();
};

/// A covector normalised to unit length in the fiber metric; represents a
/// point of S*M = (T*M \ 0) / R+.
struct SphereCovector {
  MappingTorusPoint base;
  Vec3 comp = Vec3::UnitZ();
};

/// Reduce raw chart coordinates into the fundamental domain, applying the
/// gluing x -> A x when t crosses 1 and x -> A^{-1} x when t crosses 0.
/// `crossings` (optional) receives the signed number of gluing crossings.
MappingTorusPoint normalize(const Monodromy& mono, const Vec2& x, double t,
                            int* crossings = nullptr);

/// Covector with raw chart base coordinates, reduced to the fundamental
/// domain with its components transported through every gluing crossed.
Covector normalize_covector(const Monodromy& mono, const Vec2& x, double t, const Vec3& comp);

/// Reduce a point whose t is already in [0,1) (only wraps x).
Vec2 wrap_torus(const Vec2& x);

/// Transport across the gluing. crossing = +1 maps a vector at (x,1) to
/// (A x mod 1, 0); crossing = -1 maps a vector at (x,0) to (A^{-1}x mod 1, 1)
/// (the returned base keeps t = 1 in that case).
TangentVector glue_transport(const Monodromy& mono, const TangentVector& v, int crossing);
Covector glue_transport(const Monodromy& mono, const Covector& xi, int crossing);

/// Chart-component maps for n gluing crossings: tangent diag(A^n, 1),
/// cotangent diag(A^{-nT}, 1).
Mat3 tangent_transport(const Monodromy& mono, int n);
Mat3 cotangent_transport(const Monodromy& mono, int n);

/// Matrices taking chart components to orthonormal (adapted) components.
Mat3 tangent_adapter(const Monodromy& mono, double t);
Mat3 cotangent_adapter(const Monodromy& mono, double t);

double tangent_norm(const Monodromy& mono, double t, const Vec3& v);
double covector_norm(const Monodromy& mono, double t, const Vec3& xi);

SphereCovector to_sphere(const Monodromy& mono, const Covector& xi);
SphereCovector to_sphere(const Monodromy& mono, const MappingTorusPoint& p, const Vec3& comp);

/// Distance on the base: flat distance on the torus (periodic in x) plus |dt|.
double base_distance(const MappingTorusPoint& a, const MappingTorusPoint& b);

/// Angle in [0, pi] between two covectors at base times ta, tb, measured
/// after mapping each to adapted components.
double fiber_angle(const Monodromy& mono, double ta, const Vec3& a, double tb, const Vec3& b);

/// Metric on S*M: base distance plus angular distance.
double sphere_distance(const Monodromy& mono, const SphereCovector& a, const SphereCovector& b);

/// Angle between a covector and a line (unsigned, in [0, pi/2]).
double angle_to_line(const Monodromy& mono, double t, const Vec3& xi, const Vec3& line);
/// Angle between a covector and the plane spanned by p1, p2 (in [0, pi/2]).
double angle_to_plane(const Monodromy& mono, double t, const Vec3& xi, const Vec3& p1,
                      const Vec3& p2);

/// Conical neighbourhood of a line field: the set of directions within
/// `half_angle` of +-center(p).
struct Cone {
  std::function<Vec3(const MappingTorusPoint&)> center;
  double half_angle = 0.1;

  bool contains(const Monodromy& mono, const SphereCovector& xi) const;
  double angle_from_center(const Monodromy& mono, const SphereCovector& xi) const;
};

/// Evenly spread unit vectors (Fibonacci sphere), deterministic.
std::vector<Vec3> fibonacci_sphere(int n);

}  // namespace anosov
