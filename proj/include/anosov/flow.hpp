// Flows on the mapping torus: base flow with its Jacobian, cotangent lift,
// projective flow on S*M and its generator, perturbation families.
#pragma once

#include "anosov/manifold.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace anosov {

struct FlowJet {
  MappingTorusPoint endpoint;
  Mat3 jacobian = Mat3::Identity();
  double elapsed = 0.0;
};

struct VectorField {
  std::string name;
  std::function<Vec3(const MappingTorusPoint&)> value;
  /// Chart Jacobian: column j is the derivative of the components in x1, x2, t.
  std::function<Mat3(const MappingTorusPoint&)> jacobian;
  /// Exact time-t map, if known in closed form.
  std::function<FlowJet(const MappingTorusPoint&, double)> exact;

  /// Divergence for the volume dx1 dx2 dt (the Riemannian volume of the
  /// adapted metric, since det A = 1).
  double divergence(const MappingTorusPoint& p) const { return jacobian(p).trace(); }
};

/// The suspension field d/dt.
VectorField suspension_field(const Monodromy& mono);

/// Smooth bump b(t) = sin^4(pi t): vanishes to third order at the gluing so
/// every perturbation is automatically compatible with it.
double bump(double t);
double bump_derivative(double t);

struct FourierMode {
  Eigen::Vector2i q = Eigen::Vector2i::Zero();
  Eigen::Vector3cd c = Eigen::Vector3cd::Zero();
};

/// V(x,t) = b(t) * Re sum_q c_q exp(2 pi i q.x).
class Perturbation {
 public:
  Perturbation() = default;
  explicit Perturbation(std::vector<FourierMode> modes) : modes_(std::move(modes)) {}

  /// Random coefficients on |q| <= qmax (half lattice), deterministic in seed.
  /// With divergence_free the field is b(t)(d2 psi, -d1 psi, 0) for a random
  /// stream function psi.
  static Perturbation random(std::uint64_t seed, int qmax, bool divergence_free);

  const std::vector<FourierMode>& modes() const { return modes_; }
  Vec3 value(const MappingTorusPoint& p) const;
  Mat3 jacobian(const MappingTorusPoint& p) const;

  Perturbation scaled(double a) const;
  /// Grid sup of |V| + ||dV|| (chart norms) on an n^3 grid.
  double c1_norm(int n = 32) const;
  /// Rescaled so that c1_norm(n) = 1.
  Perturbation normalized(int n = 32) const;

  /// Fourier coefficients of each component as a_{q} with V = b(t) sum_q a_q e^{2 pi i q.x}
  /// over the full lattice (conjugate pairs expanded).
  std::vector<FourierMode> full_spectrum() const;

  VectorField as_field() const;

 private:
  std::vector<FourierMode> modes_;
};

/// The field -X (its flow is phi_{-t}).
VectorField reversed(const VectorField& x);

/// Derivative of X in the adapted frame, N dX N^{-1} + X_t N' N^{-1} with
/// N = diag(B(t), 1). Its symmetric part governs norm growth:
/// d/dt log|Phi_t xi| = -eta^T L eta for the adapted unit covector eta.
Mat3 adapted_derivative(const Monodromy& mono, const VectorField& x, const MappingTorusPoint& p);

/// X0 + eps V.
VectorField perturbed_field(const VectorField& x0, const Perturbation& v, double eps);

/// sup over an n^3 grid of |X - Y| + ||dX - dY||.
double c1_distance(const VectorField& x, const VectorField& y, int n = 32);

struct FlowOptions {
  double step = 1e-3;
  double t_max = 200.0;
  double crossing_tol = 1e-12;
  bool use_exact = true;
};

struct ProjectiveResult {
  SphereCovector xi;
  double log_growth = 0.0;
};

/// Velocity of the projective flow: base velocity in the chart and the
/// derivative of the unit covector in adapted components.
struct SphereTangent {
  Vec3 base = Vec3::Zero();
  Vec3 fiber = Vec3::Zero();
  double norm() const { return std::sqrt(base.squaredNorm() + fiber.squaredNorm()); }
};

class Flow {
 public:
  Flow(Monodromy mono, VectorField field, FlowOptions opts = {})
      : mono_(std::move(mono)), field_(std::move(field)), opts_(opts) {}

  const Monodromy& monodromy() const { return mono_; }
  const VectorField& field() const { return field_; }
  const FlowOptions& options() const { return opts_; }

  FlowJet evolve(const MappingTorusPoint& p, double t) const;
  Covector cotangent_lift(const Covector& xi, double t) const;
  ProjectiveResult projective(const SphereCovector& xi, double t) const;
  /// Central difference of the projective flow with step h_fd.
  SphereTangent sphere_generator(const SphereCovector& xi, double h_fd = 1e-5) const;

 private:
  struct State {
    Vec2 x;
    double t;
    Mat3 J;
    Vec3 xi;
  };
  State rk4(const State& s, double h, bool with_xi) const;
  // Integrates J (and optionally a covector, renormalised every step).
  void integrate(State& s, double t, bool with_xi, double& log_scale) const;

  Monodromy mono_;
  VectorField field_;
  FlowOptions opts_;
};

/// Adapted unit vector of a sphere covector.
Vec3 adapted_direction(const Monodromy& mono, const SphereCovector& xi);

}  // namespace anosov
