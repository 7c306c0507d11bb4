#include "anosov/weight.hpp"

#include "doctest.h"

#include <cmath>

using namespace anosov;

namespace {
struct WeightFixture {
  Monodromy mono;
  Flow flow{mono, suspension_field(mono)};
  BaseGrid grid{4, 4};
  DualSplitting dual{compute_splitting(flow, grid)};
  double T = lemma_time(0.1, 1.0, std::log(mono.lambda_u()), line_plane_angle(dual));
  WeightFunction w{flow, dual, T};

  SphereCovector line_point(const MappingTorusPoint& p) const { return {p, dual.at(p).es0}; }
  SphereCovector plane_point(const MappingTorusPoint& p) const {
    const auto f = dual.at(p);
    return {p, 0.6 * f.e00 + 0.8 * f.eu0};
  }
  SphereCovector generic_point(const MappingTorusPoint& p) const {
    const auto f = dual.at(p);
    return {p, f.e00 + f.eu0 + f.es0};
  }
};
}  // namespace

TEST_CASE("smoothstep and cutoff profile") {
  CHECK(smoothstep5(-1) == 0.0);
  CHECK(smoothstep5(2) == 1.0);
  CHECK(smoothstep5(0.5) == doctest::Approx(0.5));
  double prev = 0;
  for (int i = 1; i <= 100; ++i) {
    const double u = i / 100.0;
    CHECK(smoothstep5(u) >= prev);
    prev = smoothstep5(u);
    const double h = 1e-6;
    CHECK(std::abs((smoothstep5(u + h) - smoothstep5(u - h)) / (2 * h) - smoothstep5_derivative(u)) <= 1e-6);
  }
  const ChiProfile chi{0.3};
  CHECK(chi(-1) == -1.0);
  CHECK(chi(1) == 1.0);
  CHECK(chi(0) == doctest::Approx(0.0));
  CHECK(chi.derivative(0.5) == 0.0);
  CHECK(chi.derivative(0.0) > 0.0);
}

TEST_CASE("neighbourhood time") {
  const double beta = std::log((3 + std::sqrt(5.0)) / 2);
  CHECK(lemma_time(0.1, 1.0, beta, 1.5) == doctest::Approx(-2 * std::log(0.1) / beta).epsilon(1e-14));
  CHECK(lemma_time(0.1, 1.0, beta, 1.5, 10.0) == 10.0);
  CHECK_THROWS_AS(lemma_time(0.8, 1.0, beta, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(lemma_time(0.1, 0.5, beta, 1.5), std::invalid_argument);
}

TEST_CASE_FIXTURE(WeightFixture, "bump m0 and the neighbourhood lemma") {
  CHECK(line_plane_angle(dual) == doctest::Approx(M_PI / 2).epsilon(1e-9));
  const BumpM0& m0 = w.m0();
  const MappingTorusPoint p{Vec2(0.3, 0.7), 0.4};
  CHECK(m0(line_point(p)) == 0.0);
  CHECK(m0(plane_point(p)) == 1.0);
  const double g = m0(generic_point(p));
  CHECK(g > 0.0);
  CHECK(g < 1.0);
  const auto lc = verify_lemma_time(flow, dual, 0.1, T, 2000, 11);
  CHECK(lc.eligible > 1900);
  CHECK(lc.failures == 0);
  CHECK(lc.worst <= 0.1);
}

TEST_CASE_FIXTURE(WeightFixture, "m and F on the invariant sets and generically") {
  const MappingTorusPoint p{Vec2(0.61, 0.05), 0.77};
  CHECK(w.m(line_point(p)) == doctest::Approx(0.0));
  CHECK(w.F(line_point(p)) == 0.0);
  CHECK(w.m(plane_point(p)) == doctest::Approx(2 * T).epsilon(1e-12));
  CHECK(w.F(plane_point(p)) == 0.0);
  const auto xi = generic_point(p);
  CHECK(w.F(xi) == doctest::Approx(1.0));
  CHECK(std::abs(w.m(xi) - T) < T);
}

TEST_CASE_FIXTURE(WeightFixture, "F is the derivative of m along the lifted flow") {
  const double h = 1e-3;
  for (const auto& p : {MappingTorusPoint{Vec2(0.2, 0.3), 0.1}, MappingTorusPoint{Vec2(0.9, 0.45), 0.95}}) {
    for (double tilt : {1.0, 1e-4}) {
      const auto f = dual.at(p);
      const SphereCovector xi{p, f.e00 + f.eu0 + tilt * f.es0};
      const double fd =
          (w.m(flow.projective(xi, h).xi) - w.m(flow.projective(xi, -h).xi)) / (2 * h);
      CHECK(std::abs(fd - w.F(xi)) <= 1e-3);
    }
  }
}

TEST_CASE_FIXTURE(WeightFixture, "lifted perturbation derivative matches the perturbed lifted flow") {
  const auto v = Perturbation::random(21, 2, false).normalized(16);
  const double eps = 0.05;
  const Flow fe(mono, perturbed_field(suspension_field(mono), v, eps), FlowOptions{.step = 1e-4});
  const MappingTorusPoint p{Vec2(0.37, 0.14), 0.45};
  const auto f = dual.at(p);
  const SphereCovector xi{p, f.e00 + 0.5 * f.eu0 + f.es0};
  const auto g = w.gradient(xi);
  const double rate = w.F(xi) + eps * WeightFunction::directional(xi, g, v);
  const double h = 2e-3;
  const double fd = (w.m(fe.projective(xi, h).xi) - w.m(fe.projective(xi, -h).xi)) / (2 * h);
  CHECK(std::abs(fd - rate) <= 2e-3);
  CHECK(w.lift_sensitivity(xi, g) > 0);
}

TEST_CASE_FIXTURE(WeightFixture, "gap constants, dichotomy and monotonicity on a small table") {
  auto samples = sphere_samples(mono, BaseGrid{2, 2}, 12);
  const auto bs = boundary_samples(dual, BaseGrid{2, 2}, 3, {0.0, 1e-5, -1e-5, 1e-3, 0.05});
  samples.insert(samples.end(), bs.begin(), bs.end());
  const auto tab = tabulate(w, samples);
  const auto gc = gap_constants(tab, T);
  CHECK(gc.delta > 0);
  CHECK(gc.zero_count > 0);
  CHECK(gc.gap_count > 0);
  for (std::size_t i = 0; i < tab.F.size(); ++i)
    if (std::abs(tab.F[i]) <= gc.f_tol) CHECK(std::abs(tab.m[i] - T) >= 2 * gc.delta);

  const ChiProfile chi{gc.eps_gap};
  const auto mr = check_unperturbed(tab, chi, T, gc.delta);
  CHECK(mr.violations == 0);
  CHECK(mr.min_value >= -1e-10);
  CHECK(mr.min_ratio >= 1.0 - 1e-12);

  const auto ell = ell_profile(mono, tab, gc.f_tol, {0.5});
  CHECK(ell[0] >= 0);
  CHECK(ell[0] <= 1e-3 + 1e-12);

  w.set_chi(chi);
  const auto sd = support_gradients(w, tab);
  const auto b = perturbation_budget(tab, sd, gc.delta, T);
  CHECK(b.eta0 > 0);
  CHECK(b.implied_C > 0);
  const auto v = Perturbation::random(4, 3, false).normalized(32);
  CHECK(check_perturbed(tab, sd, chi, T, v, 0.5 * b.eta0).violations == 0);
  const auto adv = adversarial_perturbation(tab, sd);
  CHECK(adv.row >= 0);
  CHECK(adv.ratio > 0);
  CHECK(adv.v.c1_norm(32) == doctest::Approx(1.0).epsilon(1e-12));
}
