#include "anosov/spectra.hpp"

#include "anosov/errors.hpp"
#include "anosov/weight.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace anosov {

namespace {
constexpr double kPi = std::numbers::pi;

// Chebyshev-Gauss-Lobatto nodes x_j = cos(pi j / N) mapped to t = (1 - x)/2.
void chebyshev(int N, Eigen::VectorXd& t, Eigen::MatrixXd& D) {
  Eigen::VectorXd x(N + 1), c(N + 1);
  for (int j = 0; j <= N; ++j) {
    x(j) = std::cos(kPi * j / N);
    c(j) = ((j == 0 || j == N) ? 2.0 : 1.0) * ((j % 2) ? -1.0 : 1.0);
  }
  D.resize(N + 1, N + 1);
  for (int i = 0; i <= N; ++i)
    for (int j = 0; j <= N; ++j)
      D(i, j) = i == j ? 0.0 : (c(i) / c(j)) / (x(i) - x(j));
  for (int i = 0; i <= N; ++i) D(i, i) = -D.row(i).sum();
  t = (1.0 - x.array()) / 2.0;
  D *= -2.0;
}

// Clenshaw-Curtis weights on [0, 1] for the same nodes.
Eigen::VectorXd clenshaw_curtis(int N) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(N + 1);
  for (int j = 0; j <= N; ++j) {
    double s = 0;
    for (int k = 0; k <= N / 2; ++k) {
      const double bk = (k == 0 || 2 * k == N) ? 1.0 : 2.0;
      s += bk / (1.0 - 4.0 * k * k) * std::cos(2.0 * k * j * kPi / N);
    }
    w(j) = ((j == 0 || j == N) ? 1.0 : 2.0) / N * s / 2.0;
  }
  return w;
}

void add_time_derivative(const GalerkinBasis& b, int row_mode, int col_mode, const Eigen::VectorXcd& scale,
                         std::vector<Eigen::Triplet<cplx>>& trip) {
  const int N = b.N_t;
  const int down = b.downstream[col_mode];
  for (int r = 0; r < N; ++r) {
    if (scale(r) == 0.0) continue;
    for (int c = 0; c < N; ++c) trip.emplace_back(b.flat(row_mode, r), b.flat(col_mode, c), scale(r) * b.D(r, c));
    if (down >= 0) trip.emplace_back(b.flat(row_mode, r), b.flat(down, 0), scale(r) * b.D(r, N));
  }
}

void add_perturbation(const GalerkinBasis& b, const Perturbation& v, double eps,
                      std::vector<Eigen::Triplet<cplx>>& trip) {
  const int N = b.N_t;
  Eigen::VectorXd bt(N);
  for (int r = 0; r < N; ++r) bt(r) = bump(b.t(r));
  const cplx two_pi_i(0, 2 * kPi);
  for (const auto& mode : v.full_spectrum()) {
    const Eigen::Vector3cd& a = mode.c;
    for (int i = 0; i < static_cast<int>(b.modes.size()); ++i) {
      const Eigen::Vector2i km = b.modes[i] - mode.q;
      const int j = b.find(km);
      if (j < 0) continue;
      const cplx coef = two_pi_i * (a(0) * double(km(0)) + a(1) * double(km(1)));
      if (coef != 0.0)
        for (int r = 0; r < N; ++r) trip.emplace_back(b.flat(i, r), b.flat(j, r), eps * coef * bt(r));
      if (a(2) != 0.0) add_time_derivative(b, i, j, (eps * a(2) * bt).cast<cplx>(), trip);
    }
  }
}

Eigen::VectorXd sqrt_quad(const GalerkinBasis& b) {
  Eigen::VectorXd s(b.dim());
  for (int m = 0; m < static_cast<int>(b.modes.size()); ++m)
    for (int r = 0; r < b.N_t; ++r) s(b.flat(m, r)) = std::sqrt(b.quad(r));
  return s;
}

double wrap_angle(double a) {
  a = std::remainder(a, 2 * kPi);
  return a;
}
}  // namespace

int GalerkinBasis::find(const Eigen::Vector2i& k) const {
  const int r2 = k.squaredNorm();
  if (r2 > K_max * K_max) return -1;
  auto key = [](const Eigen::Vector2i& a) { return std::make_tuple(a.squaredNorm(), a(0), a(1)); };
  const auto target = key(k);
  auto it = std::lower_bound(modes.begin(), modes.end(), target,
                             [&](const Eigen::Vector2i& a, const auto& tk) { return key(a) < tk; });
  if (it == modes.end() || *it != k) return -1;
  return static_cast<int>(it - modes.begin());
}

GalerkinBasis assemble_basis(const Monodromy& mono, int K_max, int N_t) {
  if (K_max < 0 || N_t < 4) throw std::invalid_argument("assemble_basis: need K_max >= 0 and N_t >= 4");
  GalerkinBasis b;
  b.K_max = K_max;
  b.N_t = N_t;
  for (int k1 = -K_max; k1 <= K_max; ++k1)
    for (int k2 = -K_max; k2 <= K_max; ++k2)
      if (k1 * k1 + k2 * k2 <= K_max * K_max) b.modes.emplace_back(k1, k2);
  std::sort(b.modes.begin(), b.modes.end(), [](const auto& a, const auto& c) {
    return std::make_tuple(a.squaredNorm(), a(0), a(1)) < std::make_tuple(c.squaredNorm(), c(0), c(1));
  });
  const Eigen::Matrix2i AinvT = mono.A_inv().transpose().array().round().cast<int>();
  for (int i = 0; i < static_cast<int>(b.modes.size()); ++i) {
    const int d = b.find(AinvT * b.modes[i]);
    b.downstream.push_back(d);
    if (d < 0) b.truncated.push_back(i);
  }
  chebyshev(N_t, b.t, b.D);
  const Eigen::VectorXd w = clenshaw_curtis(N_t);
  b.quad = w.head(N_t);
  b.quad(0) += w(N_t);
  return b;
}

SpMat assemble_generator(const GalerkinBasis& b, const Perturbation* v, double eps) {
  std::vector<Eigen::Triplet<cplx>> trip;
  const Eigen::VectorXcd ones = Eigen::VectorXcd::Ones(b.N_t);
  for (int i = 0; i < static_cast<int>(b.modes.size()); ++i) add_time_derivative(b, i, i, ones, trip);
  if (v && eps != 0.0) add_perturbation(b, *v, eps, trip);
  SpMat X(b.dim(), b.dim());
  X.setFromTriplets(trip.begin(), trip.end());
  X.prune(cplx(0.0));
  X.makeCompressed();
  return X;
}

SpMat assemble_perturbation(const GalerkinBasis& b, const Perturbation& v) {
  std::vector<Eigen::Triplet<cplx>> trip;
  add_perturbation(b, v, 1.0, trip);
  SpMat V(b.dim(), b.dim());
  V.setFromTriplets(trip.begin(), trip.end());
  V.makeCompressed();
  return V;
}

double mollifier_profile(double rho, MollifierProfile profile) {
  if (rho <= 1) return 1.0;
  if (rho >= 2) return 0.0;
  if (profile == MollifierProfile::Cosine) return 0.5 * (1 + std::cos(kPi * (rho - 1)));
  return 1.0 - smoothstep5(rho - 1);
}

Eigen::VectorXd assemble_mollifier(const GalerkinBasis& b, double k0, MollifierProfile profile) {
  Eigen::VectorXd q(b.dim());
  for (int m = 0; m < static_cast<int>(b.modes.size()); ++m) {
    const double val = mollifier_profile(b.modes[m].cast<double>().norm() / k0, profile);
    for (int r = 0; r < b.N_t; ++r) q(b.flat(m, r)) = val;
  }
  return q;
}

WeightOperator assemble_weight(const GalerkinBasis& b, const SymbolFn& m, double r, double k_shift,
                               double max_condition) {
  WeightOperator W;
  W.w.resize(b.dim());
  for (int i = 0; i < static_cast<int>(b.modes.size()); ++i) {
    const double lg = std::log1p(b.modes[i].cast<double>().norm());
    for (int n = 0; n < b.N_t; ++n) {
      const double sym = (r == 0.0 || lg == 0.0) ? 0.0 : m(b.t(n), b.modes[i]);
      W.w(b.flat(i, n)) = std::exp(-r * sym * lg - k_shift * lg);
    }
  }
  W.condition = W.w.maxCoeff() / W.w.minCoeff();
  if (!(W.condition <= max_condition))
    throw NumericalFailure("assemble_weight: condition number " + std::to_string(W.condition) + " too large");
  return W;
}

struct ShiftedSolver::Impl {
  bool dense = false;
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> sparse;
  Eigen::PartialPivLU<Eigen::MatrixXcd> full;
};

ShiftedSolver::ShiftedSolver(const SpMat& X, double a, const Eigen::VectorXd& d, cplx s)
    : impl_(std::make_unique<Impl>()) {
  const int n = static_cast<int>(X.rows());
  std::vector<Eigen::Triplet<cplx>> diag;
  for (int i = 0; i < n; ++i) diag.emplace_back(i, i, d(i) + s);
  SpMat shift(n, n);
  shift.setFromTriplets(diag.begin(), diag.end());
  M_ = a * X - shift;
  M_.makeCompressed();
  const double density = double(M_.nonZeros()) / (double(n) * n);
  impl_->dense = density > 0.1;
  if (impl_->dense) {
    impl_->full.compute(Eigen::MatrixXcd(M_));
  } else {
    impl_->sparse.analyzePattern(M_);
    impl_->sparse.factorize(M_);
    if (impl_->sparse.info() != Eigen::Success) throw NumericalFailure("sparse LU failed: singular shifted generator");
  }
}

ShiftedSolver::~ShiftedSolver() = default;
ShiftedSolver::ShiftedSolver(ShiftedSolver&&) noexcept = default;

bool ShiftedSolver::dense() const { return impl_->dense; }

Eigen::MatrixXcd ShiftedSolver::solve(const Eigen::MatrixXcd& rhs) const {
  if (impl_->dense) return impl_->full.solve(rhs);
  return impl_->sparse.solve(rhs);
}

Eigen::MatrixXcd ShiftedSolver::solve_adjoint(const Eigen::MatrixXcd& rhs) const {
  if (impl_->dense) return impl_->full.adjoint().solve(rhs);
  return impl_->sparse.adjoint().solve(rhs);
}

Eigen::MatrixXcd ShiftedSolver::solve_transpose(const Eigen::MatrixXcd& rhs) const {
  if (impl_->dense) return impl_->full.transpose().solve(rhs);
  return impl_->sparse.transpose().solve(rhs);
}

std::vector<int> SpectralProblem::support() const {
  std::vector<int> out;
  for (int i = 0; i < q.size(); ++i)
    if (q(i) > 0) out.push_back(i);
  return out;
}

namespace {
// Columns e_j for j in the support.
Eigen::MatrixXcd selector(int n, const std::vector<int>& P) {
  Eigen::MatrixXcd E = Eigen::MatrixXcd::Zero(n, static_cast<Eigen::Index>(P.size()));
  for (std::size_t j = 0; j < P.size(); ++j) E(P[j], static_cast<Eigen::Index>(j)) = 1.0;
  return E;
}

DetValue det_of(const Eigen::MatrixXcd& M) {
  DetValue d;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(M);
  const auto& LU = lu.matrixLU();
  double arg = lu.permutationP().determinant() < 0 ? kPi : 0.0;
  for (Eigen::Index i = 0; i < LU.rows(); ++i) {
    const cplx u = LU(i, i);
    if (u == 0.0) {
      d.exact_zero = true;
      d.log_abs = -std::numeric_limits<double>::infinity();
      return d;
    }
    d.log_abs += std::log(std::abs(u));
    arg += std::arg(u);
  }
  d.arg = wrap_angle(arg);
  d.value = std::polar(std::exp(d.log_abs), d.arg);
  return d;
}

struct Blocks {
  std::vector<int> P;
  Eigen::VectorXd qh;      // q_P / h
  Eigen::MatrixXcd Y;      // R E_P
  Eigen::MatrixXcd Zrow;   // E_P^T R
  Eigen::MatrixXcd IpD;    // I_p + diag(qh) (E_P^T R E_P)
};

Blocks blocks(const SpectralProblem& P, const ShiftedSolver& S, bool rows) {
  Blocks B;
  B.P = P.support();
  const int n = P.basis.dim();
  const int p = static_cast<int>(B.P.size());
  B.qh.resize(p);
  for (int j = 0; j < p; ++j) B.qh(j) = P.q(B.P[j]) / P.h;
  const Eigen::MatrixXcd E = selector(n, B.P);
  B.Y = S.solve(E);
  if (rows) B.Zrow = S.solve_transpose(E).transpose();
  Eigen::MatrixXcd Z(p, p);
  for (int i = 0; i < p; ++i) Z.row(i) = B.Y.row(B.P[i]);
  B.IpD = Eigen::MatrixXcd::Identity(p, p) + B.qh.asDiagonal() * Z;
  return B;
}

double trace_norm(const Eigen::MatrixXcd& M) {
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(M);
  return svd.singularValues().sum();
}
}  // namespace

DetValue fredholm_det(const SpectralProblem& P, cplx s) {
  const ShiftedSolver S(P.X, 1.0, P.q / P.h, s);
  return det_of(blocks(P, S, false).IpD);
}

DetDerivative det_derivative(const SpectralProblem& P, const SpMat& V, cplx s) {
  const ShiftedSolver S(P.X, 1.0, P.q / P.h, s);
  const Blocks B = blocks(P, S, true);
  const int n = P.basis.dim();
  const int p = static_cast<int>(B.P.size());
  DetDerivative out;
  out.F = det_of(B.IpD);

  // dD = -h^{-1} Q R V R; only the support rows are non-zero.
  const Eigen::MatrixXcd ZV = (V.transpose() * B.Zrow.transpose()).transpose();  // p x n
  Eigen::MatrixXcd G = ZV * B.Y;                                                   // p x p
  const Eigen::MatrixXcd dD_PP = -(B.qh.asDiagonal() * G);
  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(B.IpD);
  out.trace = lu.solve(dD_PP).trace();
  out.dF = out.F.value * out.trace;

  // Weighted-space norms: rows scaled by sqrt(S)/w, columns by w/sqrt(S).
  const Eigen::VectorXd sq = sqrt_quad(P.basis);
  const Eigen::VectorXd col = (P.w.array() / sq.array()).matrix();
  Eigen::VectorXd rowP(p);
  for (int j = 0; j < p; ++j) rowP(j) = sq(B.P[j]) / P.w(B.P[j]);

  const Eigen::MatrixXcd ZVR = S.solve_transpose(ZV.transpose()).transpose();  // p x n = E_P^T R V R
  const Eigen::MatrixXcd dD_rows = -(B.qh.asDiagonal() * ZVR);
  out.dD_trace_norm = trace_norm(rowP.asDiagonal() * dD_rows * col.asDiagonal());
  const Eigen::MatrixXcd D_rows = B.qh.asDiagonal() * B.Zrow;
  out.D_trace_norm = trace_norm(rowP.asDiagonal() * D_rows * col.asDiagonal());

  // Rows of (1 + D)^{-1} in the support are (I + D_PP)^{-1} [I | -D_PQ]; the
  // remaining rows are those of the identity.
  Eigen::MatrixXcd off = D_rows;
  for (int j = 0; j < p; ++j) off.col(B.P[j]).setZero();
  const Eigen::MatrixXcd E_P = selector(n, B.P);
  Eigen::MatrixXcd delta = lu.solve(E_P.transpose() - off) - E_P.transpose();  // p x n
  const Eigen::VectorXd left = sq.cwiseQuotient(P.w);
  for (int j = 0; j < p; ++j) delta.row(j) *= left(B.P[j]);
  delta = delta * col.asDiagonal();
  // Weighted inverse = I + E_P delta; power iteration on its normal operator.
  auto apply = [&](const Eigen::VectorXcd& x) {
    Eigen::VectorXcd y = x;
    const Eigen::VectorXcd dx = delta * x;
    for (int j = 0; j < p; ++j) y(B.P[j]) += dx(j);
    return y;
  };
  auto apply_adj = [&](const Eigen::VectorXcd& y) {
    Eigen::VectorXcd yP(p);
    for (int j = 0; j < p; ++j) yP(j) = y(B.P[j]);
    return Eigen::VectorXcd(y + delta.adjoint() * yP);
  };
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0, 1);
  Eigen::VectorXcd x(n);
  for (int i = 0; i < n; ++i) x(i) = cplx(g(rng), g(rng));
  x.normalize();
  double sigma = 0;
  for (int it = 0; it < 500; ++it) {
    const Eigen::VectorXcd y = apply_adj(apply(x));
    const double next = std::sqrt(y.norm());
    x = y / y.norm();
    const bool done = std::abs(next - sigma) <= 1e-10 * next;
    sigma = next;
    if (done) break;
  }
  out.F_inv_norm = std::abs(out.F.value) * sigma;
  out.bound_holds = out.F_inv_norm <= std::exp(2 * out.D_trace_norm) + 1;
  return out;
}

ResolventNorm resolvent_norm(const SpectralProblem& P, cplx s, int iters, std::uint64_t seed) {
  const ShiftedSolver S(P.X, P.h, P.q, s);
  const int n = P.basis.dim();
  const Eigen::VectorXd sq = sqrt_quad(P.basis);
  const Eigen::VectorXd right = (P.w.array() / sq.array()).matrix();  // W S^{-1/2}
  const Eigen::VectorXd left = (sq.array() / P.w.array()).matrix();   // S^{1/2} W^{-1}
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1);
  Eigen::VectorXcd x(n);
  for (int i = 0; i < n; ++i) x(i) = cplx(g(rng), g(rng));
  x.normalize();

  ResolventNorm out;
  {
    const Eigen::VectorXcd sol = S.solve(x);
    out.residual = (S.matrix() * sol - x).norm() / x.norm();
  }
  double sigma = 0;
  for (int it = 0; it < iters; ++it) {
    const Eigen::VectorXcd u = left.asDiagonal() * S.solve(right.asDiagonal() * x);
    const Eigen::VectorXcd y = right.asDiagonal() * S.solve_adjoint(left.asDiagonal() * u);
    const double next = u.norm();
    x = y / y.norm();
    if (std::abs(next - sigma) <= 1e-9 * next) {
      sigma = next;
      break;
    }
    sigma = next;
  }
  out.norm = sigma;
  return out;
}

ControlFit fit_control(const std::vector<const SpectralProblem*>& problems, const std::vector<double>& re_s,
                       int n_im) {
  ControlFit fit;
  for (const auto* P : problems) {
    const double im_max = 1.0 / std::sqrt(P->h);
    double worst = 0;
    for (double re : re_s)
      for (int j = 0; j < n_im; ++j) {
        const double im = n_im == 1 ? 0.0 : -im_max + 2 * im_max * j / (n_im - 1);
        worst = std::max(worst, resolvent_norm(*P, cplx(re, im)).norm);
      }
    fit.h.push_back(P->h);
    fit.C.push_back(P->h * worst);
  }
  const auto [lo, hi] = std::minmax_element(fit.C.begin(), fit.C.end());
  fit.spread = *hi / *lo - 1;
  return fit;
}

namespace {
class ZeroFinder {
 public:
  ZeroFinder(const std::function<DetValue(cplx)>& F, ZeroSearchOptions o) : F_(F), o_(o) {}

  DetValue eval(cplx s) {
    const auto key = std::make_pair(s.real(), s.imag());
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    ++evaluations;
    DetValue v = F_(s);
    cache_.emplace(key, v);
    return v;
  }

  // Total phase change of F along the segment a -> b.
  double edge_phase(cplx a, cplx b) {
    double total = 0;
    for (int i = 0; i < o_.edge_points; ++i) {
      const cplx s0 = a + (b - a) * (double(i) / o_.edge_points);
      const cplx s1 = a + (b - a) * (double(i + 1) / o_.edge_points);
      total += segment_phase(s0, s1, 0);
    }
    return total;
  }

  int winding(const Box& b) {
    const cplx c00(b.re_lo, b.im_lo), c10(b.re_hi, b.im_lo), c11(b.re_hi, b.im_hi), c01(b.re_lo, b.im_hi);
    const double total = edge_phase(c00, c10) + edge_phase(c10, c11) + edge_phase(c11, c01) + edge_phase(c01, c00);
    const double w = total / (2 * kPi);
    const long r = std::lround(w);
    if (std::abs(w - r) > 0.05) throw NumericalFailure("find_zeros: winding number not integral; zero near the contour");
    return static_cast<int>(r);
  }

  void search(const Box& b, int w, std::vector<Zero>& out, int depth = 0) {
    if (w == 0) return;
    if (w < 0) throw NumericalFailure("find_zeros: negative winding (pole inside the box)");
    const double size = std::max(b.re_hi - b.re_lo, b.im_hi - b.im_lo);
    const bool small = size <= o_.min_box || depth > 60;
    if (w == 1 || small) {
      Zero z;
      if (newton(b, w, z) || small) {
        out.push_back(z);
        return;
      }
    }
    // Halve the longer side off-centre so symmetric zeros stay off the new edge.
    Box kids[2] = {b, b};
    if (b.re_hi - b.re_lo >= b.im_hi - b.im_lo) {
      const double cut = b.re_lo + (0.5 + 0.0123) * (b.re_hi - b.re_lo);
      kids[0].re_hi = kids[1].re_lo = cut;
    } else {
      const double cut = b.im_lo + (0.5 + 0.0217) * (b.im_hi - b.im_lo);
      kids[0].im_hi = kids[1].im_lo = cut;
    }
    int ws[2], sum = 0;
    for (int k = 0; k < 2; ++k) sum += ws[k] = winding(kids[k]);
    if (sum != w) throw NumericalFailure("find_zeros: subdivision lost zeros");
    for (int k = 0; k < 2; ++k) search(kids[k], ws[k], out, depth + 1);
  }

  int evaluations = 0;

 private:
  double segment_phase(cplx a, cplx b, int depth) {
    const DetValue fa = eval(a), fb = eval(b);
    if (fa.exact_zero || fb.exact_zero) throw NumericalFailure("find_zeros: F vanishes on the contour");
    const double d = wrap_angle(fb.arg - fa.arg);
    if ((std::abs(d) <= o_.max_phase_step && std::abs(fb.log_abs - fa.log_abs) <= 2.0) || depth >= o_.max_bisection) {
      if (depth >= o_.max_bisection && std::abs(d) > 2.0)
        throw NumericalFailure("find_zeros: phase not resolved on the contour");
      return d;
    }
    const cplx m = 0.5 * (a + b);
    return segment_phase(a, m, depth + 1) + segment_phase(m, b, depth + 1);
  }

  cplx derivative(cplx s) {
    const double d = 1e-6 * std::max(1.0, std::abs(s));
    const DetValue p = F_(s + d), m = F_(s - d);
    evaluations += 2;
    return (p.value - m.value) / (2 * d);
  }

  bool newton(const Box& b, int mult, Zero& z) {
    cplx s(0.5 * (b.re_lo + b.re_hi), 0.5 * (b.im_lo + b.im_hi));
    const double size = std::max(b.re_hi - b.re_lo, b.im_hi - b.im_lo);
    z.multiplicity = mult;
    for (int it = 0; it < o_.newton_iters; ++it) {
      const DetValue f = F_(s);
      ++evaluations;
      if (f.exact_zero) break;
      const cplx step = double(mult) * f.value / derivative(s);
      const cplx lim = std::abs(step) > 0.5 * size ? step * (0.5 * size / std::abs(step)) : step;
      s -= lim;
      if (std::abs(step) <= o_.newton_tol * std::max(1.0, std::abs(s))) break;
    }
    z.s = s;
    const DetValue f = F_(s);
    ++evaluations;
    z.abs_F = f.exact_zero ? 0.0 : std::exp(f.log_abs);
    const double pad = 1e-9 * std::max(1.0, size);
    return s.real() >= b.re_lo - pad && s.real() <= b.re_hi + pad && s.imag() >= b.im_lo - pad &&
           s.imag() <= b.im_hi + pad;
  }

  const std::function<DetValue(cplx)>& F_;
  ZeroSearchOptions o_;
  std::map<std::pair<double, double>, DetValue> cache_;
};
}  // namespace

ZeroSearch find_zeros(const std::function<DetValue(cplx)>& F, const Box& box, ZeroSearchOptions opts) {
  ZeroFinder zf(F, opts);
  ZeroSearch out;
  out.winding = zf.winding(box);
  zf.search(box, out.winding, out.zeros);
  std::sort(out.zeros.begin(), out.zeros.end(), [](const Zero& a, const Zero& b) {
    return std::make_pair(a.s.imag(), a.s.real()) < std::make_pair(b.s.imag(), b.s.real());
  });
  out.evaluations = zf.evaluations;
  return out;
}

std::vector<cplx> eigenvalues_in_box(const SpMat& X, const Box& box) {
  const int n = static_cast<int>(X.rows());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto root = [&](int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (int k = 0; k < X.outerSize(); ++k)
    for (SpMat::InnerIterator it(X, k); it; ++it) parent[root(int(it.row()))] = root(int(it.col()));
  std::map<int, std::vector<int>> comps;
  for (int i = 0; i < n; ++i) comps[root(i)].push_back(i);

  std::vector<cplx> out;
  const Eigen::MatrixXcd dense(X);
  for (const auto& [r, idx] : comps) {
    const int m = static_cast<int>(idx.size());
    Eigen::MatrixXcd sub(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) sub(i, j) = dense(idx[i], idx[j]);
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(sub, false);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
      if (box.contains(es.eigenvalues()(i))) out.push_back(es.eigenvalues()(i));
  }
  std::sort(out.begin(), out.end(), [](cplx a, cplx b) {
    return std::make_pair(a.imag(), a.real()) < std::make_pair(b.imag(), b.real());
  });
  return out;
}

double cauchy_riemann_residual(const std::function<DetValue(cplx)>& F, const std::vector<cplx>& points,
                               double step) {
  double worst = 0;
  for (cplx s : points) {
    const cplx f = F(s).value;
    const cplx dx = (F(s + step).value - F(s - step).value) / (2 * step);
    const cplx dy = (F(s + cplx(0, step)).value - F(s - cplx(0, step)).value) / (2 * step);
    worst = std::max(worst, std::abs(dy - cplx(0, 1) * dx) / (std::abs(dx) + std::abs(f)));
  }
  return worst;
}

double zero_set_distance(std::vector<cplx> a, std::vector<cplx> b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0;
  std::vector<bool> used(b.size(), false);
  for (cplx z : a) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < b.size(); ++j)
      if (!used[j] && std::abs(z - b[j]) < best) {
        best = std::abs(z - b[j]);
        arg = j;
      }
    used[arg] = true;
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace anosov
