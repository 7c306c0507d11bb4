#include "anosov/splitting.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace anosov;

namespace {
struct CatFixture {
  Monodromy mono;
  Flow flow{mono, suspension_field(mono)};
  BaseGrid grid{6, 6};
  Splitting split = compute_splitting(flow, grid);
  DualSplitting dual{split};
};

double chart_line_angle(const Vec3& a, const Vec3& b) {
  const double th = std::atan2(a.cross(b).norm(), a.dot(b));
  return std::min(th, M_PI - th);
}
}  // namespace

TEST_CASE_FIXTURE(CatFixture, "cat suspension splitting matches the eigenvectors of A") {
  const Vec3 vu(mono.v_u()(0), mono.v_u()(1), 0), vs(mono.v_s()(0), mono.v_s()(1), 0);
  for (int idx = 0; idx < grid.size(); ++idx) {
    const Frame& f = split.frames()[idx];
    CHECK(chart_line_angle(f.eu, vu) <= 1e-8);
    CHECK(chart_line_angle(f.es, vs) <= 1e-8);
    CHECK(chart_line_angle(f.e0, Vec3(0, 0, 1)) == 0.0);
  }
  CHECK(invariance_residual(flow, split, 1.0) <= 1e-8);
}

TEST_CASE_FIXTURE(CatFixture, "interpolated frames off the grid, including across the gluing") {
  const Vec3 vu(mono.v_u()(0), mono.v_u()(1), 0);
  for (double t : {0.01, 0.5, 0.93, 0.999}) {
    const Frame f = split.at(MappingTorusPoint{Vec2(0.123, 0.871), t});
    CHECK(chart_line_angle(f.eu, vu) <= 1e-8);
    CHECK(tangent_norm(mono, t, f.eu) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE_FIXTURE(CatFixture, "dual splitting: annihilation, pairing and invariance") {
  for (int idx = 0; idx < grid.size(); ++idx) {
    const Frame& f = split.frames()[idx];
    const DualFrame& d = dual.frames()[idx];
    CHECK(std::abs(d.e00.dot(f.eu)) <= 1e-12);
    CHECK(std::abs(d.e00.dot(f.es)) <= 1e-12);
    CHECK(std::abs(d.eu0.dot(f.e0)) <= 1e-12);
    CHECK(std::abs(d.eu0.dot(f.eu)) <= 1e-12);
    CHECK(std::abs(d.es0.dot(f.e0)) <= 1e-12);
    CHECK(std::abs(d.es0.dot(f.es)) <= 1e-12);
    Mat3 D, P;
    D << d.d00.transpose(), d.du0.transpose(), d.ds0.transpose();
    P << f.e0, f.es, f.eu;
    CHECK((D * P - Mat3::Identity()).norm() <= 1e-10);
  }
  // E*_u0 is the line through (v_s, 0) and grows at rate log lambda_u.
  const MappingTorusPoint p{Vec2(0.25, 0.5), 0.5};
  const DualFrame d = dual.at(p);
  CHECK(chart_line_angle(d.eu0, Vec3(mono.v_s()(0), mono.v_s()(1), 0)) < 1e-8);
  const auto r = flow.projective(SphereCovector{p, d.eu0}, 1.0);
  CHECK(r.log_growth == doctest::Approx(std::log(mono.lambda_u())).epsilon(1e-8));
  CHECK(angle_to_line(mono, r.xi.base.t, r.xi.comp, dual.at(r.xi.base).eu0) <= 1e-8);
  CHECK(dual.min_angle() > 1.0);
}

TEST_CASE_FIXTURE(CatFixture, "covector decomposition") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> g(0, 1);
  for (int i = 0; i < 1000; ++i) {
    const Covector xi{MappingTorusPoint{Vec2(u(rng), u(rng)), u(rng)}, Vec3(g(rng), g(rng), g(rng))};
    const auto dec = decompose_covector(xi, dual);
    CHECK((dec.xi_s + dec.xi_u + dec.xi_0 - xi.comp).norm() <= 1e-12 * (1 + xi.comp.norm()));
  }
  const MappingTorusPoint p{Vec2(0.4, 0.1), 0.3};
  const Vec3 sink = dual.at(p).eu0;
  const auto d1 = decompose_covector(Covector{p, sink}, dual);
  CHECK((d1.xi_u - sink).norm() < 1e-12);
  CHECK(d1.xi_s.norm() < 1e-12);
  CHECK(d1.xi_0.norm() < 1e-12);
  // xi = dt: |xi_0| comparable to |xi(X0)| = 1 with C = 1.
  const auto d2 = decompose_covector(Covector{p, Vec3(0, 0, 1)}, dual);
  CHECK(covector_norm(mono, p.t, d2.xi_0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE_FIXTURE(CatFixture, "hyperbolicity constants of the cat suspension") {
  const auto hc = estimate_constants(flow, split);
  CHECK(hc.beta == doctest::Approx(std::log((3 + std::sqrt(5.0)) / 2)).epsilon(1e-6));
  CHECK(std::abs(hc.C - 1.0) <= 1e-6);
  CHECK(hc.theta_min > 1.0);
}

TEST_CASE_FIXTURE(CatFixture, "sink and source verification") {
  const BaseGrid coarse{3, 3};
  const double beta = std::log(mono.lambda_u());
  const auto sink = verify_sink(flow, sink_cone(dual, 0.1), 8.0, coarse);
  CHECK(sink.is_sink);
  CHECK(sink.beta_prime == doctest::Approx(beta).epsilon(1e-3));
  CHECK(sink.C_prime <= 1.0 / std::cos(0.1) + 1e-9);
  CHECK(sink.C_prime >= 1.0);

  const auto fwd_source = verify_sink(flow, source_cone(dual, 0.1), 8.0, coarse);
  CHECK(fwd_source.beta_prime < 0);
  CHECK_FALSE(fwd_source.is_sink);

  const Flow back(mono, reversed(suspension_field(mono)));
  const auto source = verify_sink(back, source_cone(dual, 0.1), 8.0, coarse);
  CHECK(source.is_sink);
  CHECK(source.beta_prime == doctest::Approx(beta).epsilon(1e-3));
  CHECK_FALSE(verify_sink(back, sink_cone(dual, 0.1), 8.0, coarse).is_sink);
}

TEST_CASE_FIXTURE(CatFixture, "trapped cone collapses onto E*_u0") {
  const BaseGrid coarse{3, 3};
  const auto tc = trapped_cone(flow, sink_cone(dual, 0.3), sink_cone(dual, 0.3), 1.0, 20, coarse);
  CHECK(tc.half_angles.front() < 0.3 / 2);
  CHECK(tc.half_angles.back() <= 1e-6);
  CHECK(tc.contained);
  const auto tc2 = trapped_cone(flow, sink_cone(dual, 0.3), sink_cone(dual, 0.15), 2.0, 1, coarse);
  CHECK(tc2.contained);
  CHECK(tc2.min_growth > 2.0);
}

TEST_CASE("perturbed flow: splitting still hyperbolic with nearby constants") {
  Monodromy mono;
  const auto v = Perturbation::random(5, 2, false).normalized(12);
  const Flow f(mono, perturbed_field(suspension_field(mono), v, 0.02));
  const BaseGrid g{2, 2};
  const Splitting s = compute_splitting(f, g, SplittingOptions{.t_iter = 14.0});
  const DualSplitting d(s);
  CHECK(d.min_angle() > 0.5);
  const auto hc = estimate_constants(f, s);
  CHECK(hc.beta > std::log(mono.lambda_u()) / 2);
  CHECK(hc.C >= 1.0);
}
