#include "anosov/continuation.hpp"

#include "anosov/errors.hpp"
#include "doctest.h"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

using namespace anosov;

namespace {
const double two_pi = 2 * std::numbers::pi;
const cplx I(0, 1);

DetFn poly(const std::vector<cplx>& roots) {
  return [roots](cplx s) {
    cplx v = 1;
    for (cplx r : roots) v *= (s - r);
    DetValue d;
    d.value = v;
    d.exact_zero = v == 0.0;
    d.log_abs = std::log(std::abs(v));
    d.arg = std::arg(v);
    return d;
  };
}

// V = b(t) d/dt: the k = 0 block is (1 + eps b) d/dt, whose eigenvalues are
// 2 pi i n / int_0^1 dt / (1 + eps b(t)).
Perturbation time_speed() {
  FourierMode m;
  m.c = Eigen::Vector3cd(0, 0, 1);
  return Perturbation({m});
}

double inverse_speed_integral(double eps) {
  const int n = 4000;
  double acc = 0;
  for (int j = 0; j < n; ++j) {
    const double t = (j + 0.5) / n;
    acc += 1 / (1 + eps * std::pow(std::sin(std::numbers::pi * t), 4));
  }
  return acc / n;
}
}  // namespace

TEST_CASE("zero counting: roots, empty contours, additivity and rejection") {
  const std::vector<cplx> roots{{0.1, 0.2}, {0.3, -0.1}, {2.0, 2.0}};
  const auto F = poly(roots);
  const auto one = count_zeros(Circle{cplx(0.1, 0.2), 0.15}, F);
  CHECK(one.count == 1);
  CHECK(std::abs(one.raw - 1) <= 1e-8);
  CHECK(std::abs(one.moment - roots[0]) <= 1e-10);
  CHECK(count_zeros(Circle{cplx(-1, -1), 0.5}, F).count == 0);
  const auto a = count_zeros(Circle{cplx(0.1, 0.2), 0.2}, F);
  const auto b = count_zeros(Circle{cplx(0.3, -0.1), 0.1}, F);
  const auto both = count_zeros(Circle{cplx(0.2, 0.05), 0.6}, F);
  CHECK(a.count + b.count == both.count);
  CHECK(both.count == 2);
  CHECK(std::abs(both.moment - (roots[0] + roots[1])) <= 1e-10);
  // A root on the contour.
  CHECK_THROWS_AS(count_zeros(Circle{cplx(0.0, 0.2), 0.1, 4}, F), NumericalFailure);
  CHECK_THROWS_AS(count_zeros(Circle{cplx(0.1, 0.2), 1e-9, 64}, poly({cplx(0.1, 0.2 + 1e-9)})), NumericalFailure);
}

TEST_CASE("family assembly is affine in eps") {
  const auto v = Perturbation::random(4, 2, false).normalized(16);
  const Family f = make_family(2, 12, 0.1, 1.0, v);
  const SpMat direct = assemble_generator(f.basis, &v, 0.3);
  CHECK(Eigen::MatrixXcd(f.at(0.3).X - direct).norm() <= 1e-12 * Eigen::MatrixXcd(direct).norm());
}

TEST_CASE("unperturbed resonances and the trivial count") {
  const Family f = make_family(2, 16, 0.1, 1.0, Perturbation{});
  const SpectralProblem P = f.at(0.0);
  const DetFn F = [&](cplx s) { return fredholm_det(P, s); };
  CHECK(count_zeros(Circle{0.0, 0.5}, F).count == 1);
  CHECK(count_zeros(Circle{cplx(0, 3), 0.5}, F).count == 0);
  CHECK(count_zeros(Circle{cplx(0, 3.5), 4.0}, F).count == 2);
}

TEST_CASE("tracking: exact speed-change oracle, conjugate symmetry, crossing") {
  const Family f = make_family(1, 24, 0.1, 1.0, time_speed());
  std::vector<double> grid;
  for (int j = -4; j <= 4; ++j) grid.push_back(0.025 * j);
  const auto tr = track(f, grid, {0.0, two_pi * I, -two_pi * I});
  REQUIRE(tr.eps.size() == 9);
  for (std::size_t j = 0; j < tr.eps.size(); ++j) {
    CHECK(tr.total_count[j] == 3);
    CHECK(std::abs(tr.paths[0].lambda[j]) <= 1e-8);
    const cplx exact = two_pi * I / inverse_speed_integral(tr.eps[j]);
    CHECK(std::abs(tr.paths[1].lambda[j] - exact) <= 1e-6);
    // Real family: the spectrum is closed under conjugation.
    CHECK(std::abs(tr.paths[2].lambda[j] - std::conj(tr.paths[1].lambda[j])) <= 1e-9);
  }
  CHECK(tr.halvings == 0);
  CHECK(tr.max_second_difference < 10);

  // Implicit-function slope at eps = 0: d/deps 2 pi i / int 1/(1 + eps b) = 2 pi i * 3/8.
  CHECK(std::abs(implicit_slope(f, 0.0, tr.paths[1].lambda[4]) - two_pi * I * 0.375) <= 1e-6);

  // At eps = 1.5 the resonance near 2 pi i has left its disc.
  CHECK_THROWS_AS(track(f, {1.5}, {0.0, two_pi * I, -two_pi * I}), VerificationFailure);
}

TEST_CASE("tracking a generic family: slope against the implicit function") {
  const auto v = Perturbation::random(5, 2, false).normalized(16);
  const Family f = make_family(2, 16, 0.1, 1.0, v);
  const double de = 1e-3;
  const auto tr = track(f, {-de, de}, {0.0, two_pi * I});
  REQUIRE(tr.eps.size() == 3);
  for (int c : tr.total_count) CHECK(c == 2);
  for (const auto& l : tr.paths[0].lambda) CHECK(std::abs(l) <= 1e-8);
  const cplx fd = (tr.paths[1].lambda[2] - tr.paths[1].lambda[0]) / (2 * de);
  const cplx a = implicit_slope(f, 0.0, tr.paths[1].lambda[1]);
  CHECK(std::abs(fd - a) <= 1e-3 * std::abs(a));

  // Independent oracle: first-order eigenvalue perturbation l^* V r / l^* r.
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(Eigen::MatrixXcd(f.X0));
  Eigen::Index k = 0;
  (es.eigenvalues().array() - two_pi * I).abs().minCoeff(&k);
  const Eigen::VectorXcd r = es.eigenvectors().col(k);
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> esl(Eigen::MatrixXcd(f.X0).adjoint());
  Eigen::Index kl = 0;
  (esl.eigenvalues().array() + two_pi * I).abs().minCoeff(&kl);
  const Eigen::VectorXcd l = esl.eigenvectors().col(kl);
  const cplx pert = l.dot(f.V * r) / l.dot(r);
  CHECK(std::abs(pert - a) <= 1e-6 * std::abs(a));
}

TEST_CASE("projectors: rank, idempotency, constants and empty contours") {
  const Family f = make_family(2, 16, 0.1, 1.0, Perturbation{});
  const SpectralProblem P = f.at(0.0);
  const auto p0 = projector(Circle{0.0, 0.5}, P);
  CHECK(p0.rank == 1);
  CHECK(p0.idempotency <= 1e-8);
  CHECK(p0.trace_defect <= 1e-6);
  // Constants in weighted coordinates (W = 1): sqrt of the quadrature weights.
  Eigen::VectorXcd one = Eigen::VectorXcd::Zero(P.basis.dim());
  for (int r = 0; r < P.basis.N_t; ++r) one(P.basis.flat(0, r)) = std::sqrt(P.basis.quad(r));
  CHECK((p0.Pi * one - one).norm() <= 1e-6 * one.norm());

  const auto empty = projector(Circle{cplx(0, 3), 0.5}, P);
  CHECK(empty.rank == 0);
  CHECK(empty.Pi.norm() <= 1e-8);

  const Circle two{cplx(0, 3.5), 4.0};
  const auto p2 = projector(two, P, ProjectorOptions{.nodes = 128});
  const DetFn F = [&](cplx s) { return fredholm_det(P, s); };
  CHECK(p2.rank == count_zeros(two, F).count);
  CHECK(p2.idempotency <= 1e-8);
  CHECK(p2.trace_defect <= 1e-6);
}

TEST_CASE("projector derivative: contour formula, identity, rank and finite differences") {
  const Circle c{two_pi * I, 0.5};
  const Family zero = make_family(2, 12, 0.1, 1.0, Perturbation{});
  const auto d0 = projector_derivative_check(zero, 0.0, c, {1e-3});
  CHECK(d0.norm == 0.0);
  CHECK(d0.fd_rel_error[0] == 0.0);

  const auto v = Perturbation::random(5, 2, false).normalized(16);
  const Family f = make_family(2, 12, 0.1, 1.0, v);
  const auto d = projector_derivative_check(f, 0.002, c);
  CHECK(d.projector_rank == 1);
  CHECK(d.norm > 0);
  CHECK(d.identity_defect <= 1e-5);
  CHECK(d.numerical_rank <= 2);
  REQUIRE(d.fd_rel_error.size() == 2);
  CHECK(d.fd_rel_error[0] <= 1e-4);
  // O(h^2): a tenfold smaller step cuts the error by close to 100 until round-off.
  CHECK((d.fd_rel_error[1] <= d.fd_rel_error[0] / 50 || d.fd_rel_error[1] <= 1e-9));
}
