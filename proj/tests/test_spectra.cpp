#include "anosov/spectra.hpp"

#include "anosov/errors.hpp"
#include "doctest.h"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

using namespace anosov;

namespace {
const double two_pi = 2 * std::numbers::pi;

SpectralProblem cat_problem(int K, int N, double h, const Perturbation* v = nullptr, double eps = 0) {
  Monodromy mono;
  SpectralProblem P;
  P.basis = assemble_basis(mono, K, N);
  P.X = assemble_generator(P.basis, v, eps);
  P.q = assemble_mollifier(P.basis, 1.0);
  P.w = Eigen::VectorXd::Ones(P.basis.dim());
  P.h = h;
  return P;
}

// Zeros of a polynomial with known roots, in the determinant interface.
DetValue poly_det(cplx s, const std::vector<cplx>& roots) {
  cplx v = 1;
  for (cplx r : roots) v *= (s - r);
  DetValue d;
  d.value = v;
  d.exact_zero = v == 0.0;
  d.log_abs = std::log(std::abs(v));
  d.arg = std::arg(v);
  return d;
}
}  // namespace

TEST_CASE("basis lattice, ordering and orbit pairing") {
  Monodromy mono;
  const auto b0 = assemble_basis(mono, 0, 8);
  CHECK(b0.modes.size() == 1);
  CHECK(b0.dim() == 8);
  CHECK(b0.downstream[0] == 0);

  const auto b = assemble_basis(mono, 4, 10);
  CHECK(b.modes.size() == 49);
  CHECK(b.dim() == 490);
  for (std::size_t i = 1; i < b.modes.size(); ++i) CHECK(b.modes[i - 1].squaredNorm() <= b.modes[i].squaredNorm());
  // Orbit of (1,0) under A^T: (2,1), (5,3), ... ; downstream is the inverse direction.
  const int i10 = b.find(Eigen::Vector2i(1, 0)), i21 = b.find(Eigen::Vector2i(2, 1));
  REQUIRE(i10 >= 0);
  REQUIRE(i21 >= 0);
  CHECK(b.downstream[i21] == i10);
  CHECK(b.find(Eigen::Vector2i(5, 3)) == -1);
  // Pairing is injective on the retained indices.
  std::vector<int> hits(b.modes.size(), 0);
  for (int d : b.downstream)
    if (d >= 0) ++hits[d];
  for (int h : hits) CHECK(h <= 1);
  CHECK(b.truncated.size() + std::count_if(hits.begin(), hits.end(), [](int h) { return h == 1; }) ==
        b.modes.size());
  CHECK_THROWS_AS(assemble_basis(mono, 2, 3), std::invalid_argument);
  CHECK(b.quad.sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("generator: constants, the k = 0 block and the adjoint identity") {
  const auto P = cat_problem(3, 16, 0.1);
  Eigen::VectorXcd one = Eigen::VectorXcd::Zero(P.basis.dim());
  for (int r = 0; r < P.basis.N_t; ++r) one(P.basis.flat(0, r)) = 1.0;
  CHECK((P.X * one).norm() <= 1e-12);

  // Collocation resolves the k = 0 modes 2 pi i n for |n| <= N_t / 8.
  const auto b32 = assemble_basis(Monodromy{}, 0, 32);
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es{Eigen::MatrixXcd(assemble_generator(b32))};
  for (int n = -4; n <= 4; ++n) {
    double best = 1e9;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
      best = std::min(best, std::abs(es.eigenvalues()(i) - cplx(0, two_pi * n)));
    CHECK(best <= 1e-8);
  }

  // Divergence-free V: <V u, u> is imaginary in L^2, i.e. V is skew on smooth data.
  const auto v = Perturbation::random(13, 2, true).normalized(16);
  const auto b = assemble_basis(Monodromy{}, 6, 24);
  const SpMat V = assemble_perturbation(b, v);
  Eigen::VectorXcd u = Eigen::VectorXcd::Zero(b.dim());
  for (int r = 0; r < b.N_t; ++r) {
    const double t = b.t(r);
    const double env = std::pow(std::sin(std::numbers::pi * t), 2);
    u(b.flat(b.find(Eigen::Vector2i(1, 0)), r)) = env * cplx(1.0, 0.3);
    u(b.flat(b.find(Eigen::Vector2i(0, 1)), r)) = env * cplx(-0.4, 0.2);
  }
  Eigen::VectorXd S(b.dim());
  for (int m = 0; m < static_cast<int>(b.modes.size()); ++m)
    for (int r = 0; r < b.N_t; ++r) S(b.flat(m, r)) = b.quad(r);
  const cplx form = u.dot(S.asDiagonal() * (V * u));
  CHECK(std::abs(form.real()) <= 1e-8 * (1 + std::abs(form)));
}

TEST_CASE("mollifier and weight operators") {
  const auto P = cat_problem(4, 6, 0.1);
  const auto& b = P.basis;
  CHECK(P.q(b.flat(0, 0)) == 1.0);
  for (int m = 0; m < static_cast<int>(b.modes.size()); ++m) {
    const double k = b.modes[m].cast<double>().norm();
    CHECK(P.q(b.flat(m, 0)) >= 0.0);
    CHECK(P.q(b.flat(m, 0)) <= 1.0);
    if (k >= 2.0) CHECK(P.q(b.flat(m, 0)) == 0.0);
  }
  CHECK(P.support().size() == 9u * 6u);
  CHECK(mollifier_profile(1.5, MollifierProfile::Cosine) == doctest::Approx(0.5));

  const SymbolFn one = [](double, const Eigen::Vector2i&) { return 1.0; };
  const auto W0 = assemble_weight(b, one, 0.0, 0.0);
  CHECK((W0.w.array() == 1.0).all());
  const auto W = assemble_weight(b, one, 2.0, 0.0);
  const int i = b.find(Eigen::Vector2i(3, 0));
  REQUIRE(i >= 0);
  CHECK(W.w(b.flat(i, 2)) == doctest::Approx(std::exp(-2 * std::log(4.0))).epsilon(1e-14));
  CHECK(std::exp(-2 * std::log(11.0)) == doctest::Approx(0.00826).epsilon(1e-3));
  CHECK_THROWS_AS(assemble_weight(b, one, 40.0, 0.0, 1e12), NumericalFailure);
}

TEST_CASE("zero search on polynomials") {
  const std::vector<cplx> roots{{0.1, 0.2}, {-0.3, 1.5}, {0.05, -2.0}, {0.05, -2.0 + 1e-4}};
  const auto z = find_zeros([&](cplx s) { return poly_det(s, roots); }, Box{-0.5, 0.2, -3, 3});
  CHECK(z.winding == 4);
  int total = 0;
  for (const auto& r : z.zeros) total += r.multiplicity;
  CHECK(total == 4);
  for (cplx r : {roots[0], roots[1]}) {
    double best = 1e9;
    for (const auto& zz : z.zeros) best = std::min(best, std::abs(zz.s - r));
    CHECK(best <= 1e-10);
  }
  const auto none = find_zeros([&](cplx s) { return poly_det(s, roots); }, Box{0.15, 0.2, 1, 3});
  CHECK(none.winding == 0);
  CHECK(none.zeros.empty());
  CHECK(zero_set_distance({cplx(0, 1), cplx(1, 0)}, {cplx(1, 1e-7), cplx(0, 1)}) == doctest::Approx(1e-7));
  CHECK(std::isinf(zero_set_distance({cplx(0, 1)}, {})));
}

TEST_CASE("determinant of the unperturbed suspension") {
  const auto P = cat_problem(3, 16, 0.1);
  auto F = [&](cplx s) { return fredholm_det(P, s); };
  // D decays like 1/Re s.
  double prev = 2;
  for (double re : {1e3, 1e4, 1e5, 1e6}) {
    const double dev = std::abs(F(cplx(re, 0)).value - 1.0);
    CHECK(dev < prev);
    prev = dev;
  }
  CHECK(prev <= 2e-3);
  const auto z = find_zeros(F, Box{});
  REQUIRE(z.zeros.size() == 3);
  CHECK(std::abs(z.zeros[0].s - cplx(0, -two_pi)) <= 1e-6);
  CHECK(std::abs(z.zeros[1].s) <= 1e-6);
  CHECK(std::abs(z.zeros[2].s - cplx(0, two_pi)) <= 1e-6);
  std::vector<cplx> zs;
  for (const auto& r : z.zeros) zs.push_back(r.s);
  CHECK(zero_set_distance(zs, eigenvalues_in_box(P.X, Box{})) <= 1e-6);
  CHECK(find_zeros(F, Box{0.1, 0.2, -7, 7}).zeros.empty());

  std::vector<cplx> pts{{-0.3, -5}, {0.0, 1.0}, {0.15, 6.5}};
  CHECK(cauchy_riemann_residual(F, pts) <= 1e-6);
}

TEST_CASE("resolvent residual, decay and weighted norm") {
  auto P = cat_problem(3, 12, 0.1);
  const auto r1 = resolvent_norm(P, cplx(-0.1, 0.5));
  CHECK(r1.residual <= 1e-10);
  CHECK(r1.norm > 0);
  const auto big = resolvent_norm(P, cplx(100, 0));
  CHECK(big.norm * 100 == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("determinant derivative: trace formula against finite differences") {
  const auto v = Perturbation::random(3, 2, false).normalized(16);
  auto P = cat_problem(3, 12, 0.1, &v, 0.01);
  const SpMat V = assemble_perturbation(P.basis, v);
  const cplx s(-0.1, 0.3);
  const auto d = det_derivative(P, V, s);
  const double h = 1e-5;
  const auto Pp = cat_problem(3, 12, 0.1, &v, 0.01 + h), Pm = cat_problem(3, 12, 0.1, &v, 0.01 - h);
  const cplx fd = (fredholm_det(Pp, s).value - fredholm_det(Pm, s).value) / (2 * h);
  CHECK(std::abs(d.dF - fd) <= 1e-4 * std::abs(fd));
  CHECK(d.bound_holds);
  CHECK(d.dD_trace_norm > 0);

  const Perturbation zero;
  const auto d0 = det_derivative(P, assemble_perturbation(P.basis, zero), s);
  CHECK(d0.dF == cplx(0, 0));
}
