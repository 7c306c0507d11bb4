#include "anosov/flow.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace anosov;

namespace {
Flow perturbed_flow(double eps, std::uint64_t seed = 3, bool div_free = false) {
  Monodromy m;
  const auto v = Perturbation::random(seed, 3, div_free).normalized(16);
  return Flow(m, perturbed_field(suspension_field(m), v, eps));
}
}  // namespace

TEST_CASE("suspension flow below the roof and across the gluing") {
  Monodromy m;
  Flow f(m, suspension_field(m));
  const MappingTorusPoint p{Vec2(0.1, 0.45), 0.2};
  auto jet = f.evolve(p, 0.3);
  CHECK(jet.endpoint.t == doctest::Approx(0.5));
  CHECK((jet.endpoint.x - p.x).norm() < 1e-15);
  CHECK((jet.jacobian - Mat3::Identity()).norm() == 0.0);

  const MappingTorusPoint q{Vec2(0.1, 0.45), 0.5};
  jet = f.evolve(q, 1.0);
  CHECK(jet.endpoint.t == doctest::Approx(0.5));
  CHECK((jet.endpoint.x - wrap_torus(m.A() * q.x)).norm() < 1e-14);
  CHECK((jet.jacobian - tangent_transport(m, 1)).norm() < 1e-15);

  // RK4 with located crossings reproduces the exact map.
  Flow g(m, suspension_field(m), FlowOptions{.use_exact = false});
  auto jet2 = g.evolve(q, 1.0);
  CHECK(base_distance(jet2.endpoint, jet.endpoint) < 1e-10);
  CHECK((jet2.jacobian - jet.jacobian).norm() < 1e-10);
  auto jet3 = g.evolve(q, -2.3);
  auto jet4 = f.evolve(q, -2.3);
  CHECK(base_distance(jet3.endpoint, jet4.endpoint) < 1e-10);
  CHECK((jet3.jacobian - jet4.jacobian).norm() < 1e-9);
}

TEST_CASE("property: group law for a perturbed flow") {
  const Flow f = perturbed_flow(0.05);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 100; ++i) {
    const MappingTorusPoint p{Vec2(u(rng), u(rng)), u(rng)};
    const auto a = f.evolve(p, 0.3);
    const auto b = f.evolve(a.endpoint, 0.7);
    const auto c = f.evolve(p, 1.0);
    CHECK(base_distance(b.endpoint, c.endpoint) <= 1e-9);
    CHECK((b.jacobian * a.jacobian - c.jacobian).norm() <= 1e-8 * c.jacobian.norm());
    CHECK(b.jacobian.determinant() > 0);
  }
}

TEST_CASE("cotangent lift: symbol conservation, duality, homogeneity") {
  const Flow f = perturbed_flow(0.08);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> g(0, 1);
  for (int i = 0; i < 20; ++i) {
    const MappingTorusPoint p{Vec2(u(rng), u(rng)), u(rng)};
    const Covector xi{p, Vec3(g(rng), g(rng), g(rng))};
    const Vec3 v(g(rng), g(rng), g(rng));
    for (double t : {-5.0, -1.3, 2.1, 5.0}) {
      const auto jet = f.evolve(p, t);
      const Covector lifted = f.cotangent_lift(xi, t);
      const double sym0 = xi.comp.dot(f.field().value(p));
      const double sym1 = lifted.comp.dot(f.field().value(lifted.base));
      CHECK(std::abs(sym1 - sym0) <= 1e-9 * std::max(1.0, std::abs(sym0)));
      CHECK(lifted.comp.dot(jet.jacobian * v) == doctest::Approx(xi.comp.dot(v)).epsilon(1e-9));
      const Covector twice = f.cotangent_lift(Covector{p, 2.0 * xi.comp}, t);
      CHECK((twice.comp - 2.0 * lifted.comp).norm() <= 1e-14 * twice.comp.norm());
    }
  }
}

TEST_CASE("projective flow of the suspension") {
  Monodromy m;
  Flow f(m, suspension_field(m));
  const MappingTorusPoint p{Vec2(0.3, 0.8), 0.5};
  const Vec3 eu_dual(m.v_s()(0), m.v_s()(1), 0.0);
  const auto r = f.projective(to_sphere(m, p, eu_dual), 1.0);
  CHECK(r.log_growth == doctest::Approx(std::log(m.lambda_u())).epsilon(1e-12));
  CHECK(angle_to_line(m, r.xi.base.t, r.xi.comp, eu_dual) < 1e-12);

  const auto dt = f.projective(to_sphere(m, p, Vec3(0, 0, 1)), 3.7);
  CHECK(std::abs(dt.log_growth) < 1e-13);
  CHECK((dt.xi.comp - Vec3(0, 0, 1)).norm() < 1e-13);

  const auto id = f.projective(to_sphere(m, p, Vec3(1, 2, 3)), 0.0);
  CHECK(id.log_growth == 0.0);
}

TEST_CASE("property: log-growth cocycle (integrated flow)") {
  const Flow f = perturbed_flow(0.05);
  Monodromy m;
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 10; ++i) {
    const auto xi = to_sphere(m, MappingTorusPoint{Vec2(u(rng), u(rng)), u(rng)},
                              Vec3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5));
    const auto a = f.projective(xi, 0.8);
    const auto b = f.projective(a.xi, 1.1);
    const auto c = f.projective(xi, 1.9);
    CHECK(std::abs(a.log_growth + b.log_growth - c.log_growth) <= 1e-8);
  }
}

TEST_CASE("sphere generator: invariance and O(eps) closeness") {
  Monodromy m;
  Flow f0(m, suspension_field(m));
  const MappingTorusPoint p{Vec2(0.2, 0.7), 0.35};
  const Vec3 eu_dual(m.v_s()(0), m.v_s()(1), 0.0);
  const auto gen = f0.sphere_generator(to_sphere(m, p, eu_dual));
  CHECK(gen.fiber.norm() < 1e-8);
  CHECK((gen.base - Vec3(0, 0, 1)).norm() == 0.0);

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<SphereCovector> samples;
  for (int i = 0; i < 40; ++i)
    samples.push_back(to_sphere(m, MappingTorusPoint{Vec2(u(rng), u(rng)), 0.1 + 0.8 * u(rng)},
                                Vec3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5)));
  std::vector<double> ks;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    const Flow fe = perturbed_flow(eps);
    double sup = 0;
    for (const auto& xi : samples) {
      const auto a = fe.sphere_generator(xi), b = f0.sphere_generator(xi);
      sup = std::max(sup, SphereTangent{a.base - b.base, a.fiber - b.fiber}.norm());
    }
    ks.push_back(sup / eps);
  }
  for (double k : ks) CHECK(k == doctest::Approx(ks[0]).epsilon(0.2));

  // Derivative of a flow-invariant function vanishes: u = symbol xi(X0).
  const auto xi = samples[3];
  const auto fwd = f0.projective(xi, 1e-5), bwd = f0.projective(xi, -1e-5);
  const double du = (fwd.xi.comp(2) * std::exp(fwd.log_growth) - bwd.xi.comp(2) * std::exp(bwd.log_growth)) / 2e-5;
  CHECK(std::abs(du) < 1e-6);
}

TEST_CASE("perturbation families") {
  Monodromy m;
  const auto x0 = suspension_field(m);
  const auto v = Perturbation::random(21, 3, false).normalized(12);
  CHECK(v.c1_norm(12) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c1_distance(x0, x0, 12) == 0.0);
  const double d1 = c1_distance(perturbed_field(x0, v, 0.01), x0, 12);
  const double d2 = c1_distance(perturbed_field(x0, v, 0.02), x0, 12);
  CHECK(d1 <= 0.01 * (1 + 1e-12));
  CHECK(d2 == doctest::Approx(2 * d1).epsilon(1e-12));

  // Gluing compatibility: V vanishes with its derivatives at the gluing.
  const MappingTorusPoint p0{Vec2(0.3, 0.1), 0.0};
  CHECK(v.value(p0).norm() == 0.0);
  CHECK(v.jacobian(p0).norm() == 0.0);

  const auto w = Perturbation::random(22, 3, true);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 50; ++i) {
    const MappingTorusPoint p{Vec2(u(rng), u(rng)), u(rng)};
    CHECK(std::abs(w.jacobian(p).trace()) < 1e-12 * (1 + w.jacobian(p).norm()));
  }

  // full_spectrum reproduces the real field.
  const MappingTorusPoint p{Vec2(0.17, 0.61), 0.42};
  Eigen::Vector3cd acc = Eigen::Vector3cd::Zero();
  for (const auto& mode : v.full_spectrum()) {
    const double ph = 2 * M_PI * (mode.q(0) * p.x(0) + mode.q(1) * p.x(1));
    acc += mode.c * std::complex<double>(std::cos(ph), std::sin(ph));
  }
  CHECK((bump(p.t) * acc.real() - v.value(p)).norm() < 1e-13);
  CHECK(acc.imag().norm() < 1e-13);
}
