#include "anosov/continuation.hpp"

#include "anosov/errors.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>

namespace anosov {

namespace {
constexpr double kPi = std::numbers::pi;
const cplx kI(0, 1);

// S^{1/2} W^{-1} and its inverse: the weighted coordinates of the basis.
Eigen::VectorXd left_scale(const SpectralProblem& P) {
  Eigen::VectorXd l(P.basis.dim());
  for (int m = 0; m < static_cast<int>(P.basis.modes.size()); ++m)
    for (int r = 0; r < P.basis.N_t; ++r) l(P.basis.flat(m, r)) = std::sqrt(P.basis.quad(r));
  return l.cwiseQuotient(P.w);
}

// Node values scaled by exp(-max log|F|) so that small determinants do not underflow.
struct NodeValues {
  std::vector<cplx> s;
  std::vector<DetValue> F;
};

void add_nodes(NodeValues& nv, const Circle& c, int n, const DetFn& F) {
  // Existing nodes are the even nodes of the doubled grid.
  std::vector<cplx> s(n);
  std::vector<DetValue> v(n);
  const int old = static_cast<int>(nv.s.size());
  for (int j = 0; j < n; ++j) {
    s[j] = c.node(j, n);
    if (old > 0 && n == 2 * old && j % 2 == 0) {
      v[j] = nv.F[j / 2];
    } else {
      v[j] = F(s[j]);
      if (v[j].exact_zero || !std::isfinite(v[j].log_abs))
        throw NumericalFailure("count_zeros: F vanishes on the contour at node " + std::to_string(j));
    }
  }
  nv.s = std::move(s);
  nv.F = std::move(v);
}

// d/dtheta of periodic samples by the trigonometric interpolant.
std::vector<cplx> spectral_derivative(const std::vector<cplx>& g) {
  const int n = static_cast<int>(g.size());
  std::vector<cplx> G(n, 0.0), out(n, 0.0);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j) G[k] += g[j] * std::polar(1.0, -2 * kPi * double(k) * j / n);
  for (int k = 0; k < n; ++k) {
    const int kk = k <= n / 2 ? k : k - n;
    G[k] *= (2 * kk == n) ? cplx(0) : cplx(0, kk) / double(n);
  }
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) out[j] += G[k] * std::polar(1.0, 2 * kPi * double(k) * j / n);
  return out;
}

int phase_winding(const std::vector<DetValue>& F) {
  double total = 0;
  const int n = static_cast<int>(F.size());
  for (int j = 0; j < n; ++j) total += std::remainder(F[(j + 1) % n].arg - F[j].arg, 2 * kPi);
  return static_cast<int>(std::lround(total / (2 * kPi)));
}

// Stops at tol or once the step no longer shrinks (round-off level).
cplx newton(const std::function<DetValue(cplx)>& F, cplx s, double tol, int iters) {
  double last = std::numeric_limits<double>::infinity();
  for (int it = 0; it < iters; ++it) {
    const double d = 1e-6 * std::max(1.0, std::abs(s));
    const cplx f = F(s).value;
    const cplx df = (F(s + d).value - F(s - d).value) / (2 * d);
    if (f == 0.0) return s;
    if (df == 0.0 || !std::isfinite(std::abs(df))) throw NumericalFailure("newton: vanishing derivative");
    const cplx step = f / df;
    const double size = std::abs(step) / std::max(1.0, std::abs(s));
    if (size >= last && size < 1e-8) return s;
    s -= step;
    if (size <= tol) return s;
    last = size;
  }
  return s;
}

double frob(const Eigen::MatrixXcd& A) { return A.norm(); }

Eigen::VectorXd singular_values(const Eigen::MatrixXcd& A) {
  return Eigen::BDCSVD<Eigen::MatrixXcd>(A).singularValues();
}

// sum_j rho e^{i theta_j} / n * g(s_j) over the nodes j with j % stride == offset.
template <class G>
Eigen::MatrixXcd contour_sum(const Circle& c, int n, int stride, int offset, G&& g) {
  Eigen::MatrixXcd acc;
  for (int j = offset; j < n; j += stride) {
    const cplx s = c.node(j, n);
    const cplx wgt = (s - c.center) / double(n);
    Eigen::MatrixXcd term = g(s, j);
    if (acc.size() == 0) acc = Eigen::MatrixXcd::Zero(term.rows(), term.cols());
    acc += wgt * term;
  }
  return acc;
}

// Weighted resolvent (s - X)^{-1} applied to `rhs` given in weighted coordinates.
Eigen::MatrixXcd weighted_resolvent(const ShiftedSolver& S, const Eigen::VectorXd& left,
                                    const Eigen::MatrixXcd& rhs) {
  const Eigen::VectorXd right = left.cwiseInverse();
  return -(left.asDiagonal() * S.solve(right.asDiagonal() * rhs));
}

ShiftedSolver node_solver(const SpectralProblem& P, cplx s, int j) {
  try {
    return ShiftedSolver(P.X, 1.0, Eigen::VectorXd::Zero(P.basis.dim()), s);
  } catch (const NumericalFailure& e) {
    throw NumericalFailure("projector: resolvent solve failed at node " + std::to_string(j) + ": " + e.what());
  }
}

Eigen::MatrixXcd projector_matrix(const Circle& c, const SpectralProblem& P, int n, int stride, int offset) {
  const Eigen::VectorXd left = left_scale(P);
  const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(P.basis.dim(), P.basis.dim());
  return contour_sum(c, n, stride, offset,
                     [&](cplx s, int j) { return weighted_resolvent(node_solver(P, s, j), left, I); });
}
}  // namespace

cplx Circle::node(int j, int n) const { return center + std::polar(radius, 2 * kPi * j / n); }

ZeroCount count_zeros(const Circle& c, const DetFn& F, CountOptions opts) {
  NodeValues nv;
  int n = c.nodes;
  add_nodes(nv, c, n, F);
  for (;;) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& v : nv.F) {
      lo = std::min(lo, v.log_abs);
      hi = std::max(hi, v.log_abs);
    }
    ZeroCount zc;
    zc.nodes = n;
    zc.min_rel_abs = std::exp(lo - hi);
    if (zc.min_rel_abs < opts.floor_rel)
      throw NumericalFailure("count_zeros: |F| below floor on the contour (min/max " + std::to_string(zc.min_rel_abs) +
                             "); move the contour");
    std::vector<cplx> g(n);
    for (int j = 0; j < n; ++j) g[j] = std::polar(std::exp(nv.F[j].log_abs - hi), nv.F[j].arg);
    const auto dg = spectral_derivative(g);
    cplx raw = 0, moment = 0;
    for (int j = 0; j < n; ++j) {
      raw += dg[j] / g[j];
      moment += nv.s[j] * dg[j] / g[j];
    }
    raw /= kI * double(n);
    moment /= kI * double(n);
    zc.raw = raw.real();
    zc.count = static_cast<int>(std::lround(zc.raw));
    zc.moment = moment;
    const bool settled = std::abs(raw - double(zc.count)) <= opts.integer_tol && zc.count == phase_winding(nv.F);
    if (settled) return zc;
    if (2 * n > opts.max_nodes)
      throw NumericalFailure("count_zeros: winding number did not settle (raw " + std::to_string(zc.raw) + ")");
    n *= 2;
    add_nodes(nv, c, n, F);
  }
}

SpectralProblem Family::at(double eps) const {
  SpectralProblem P;
  P.basis = basis;
  P.X = eps == 0.0 ? X0 : SpMat(X0 + eps * V);
  P.q = q;
  P.w = w;
  P.h = h;
  return P;
}

Family make_family(int K_max, int N_t, double h, double k0, const Perturbation& v) {
  Family f;
  f.basis = assemble_basis(Monodromy{}, K_max, N_t);
  f.X0 = assemble_generator(f.basis);
  f.V = assemble_perturbation(f.basis, v);
  f.q = assemble_mollifier(f.basis, k0);
  f.w = Eigen::VectorXd::Ones(f.basis.dim());
  f.h = h;
  return f;
}

TrackReport track(const Family& fam, const std::vector<double>& eps_grid, const std::vector<cplx>& start,
                  TrackOptions opts) {
  const int m = static_cast<int>(start.size());
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      if (std::abs(start[i] - start[j]) < 2 * opts.delta)
        throw std::invalid_argument("track: discs around the starting resonances overlap");

  std::vector<Circle> discs;
  for (cplx s : start) discs.push_back(Circle{s, opts.delta, opts.nodes});

  struct State {
    std::vector<cplx> lambda;
    std::vector<int> count;
  };
  auto solve_at = [&](double eps, const std::vector<cplx>& prev) {
    const SpectralProblem P = fam.at(eps);
    const DetFn F = [&](cplx s) { return fredholm_det(P, s); };
    State st;
    for (int i = 0; i < m; ++i) {
      const ZeroCount zc = count_zeros(discs[i], F, opts.count);
      st.count.push_back(zc.count);
      cplx lam = std::numeric_limits<double>::quiet_NaN();
      if (zc.count == 1) {
        lam = newton(F, prev[i], opts.newton_tol, opts.newton_iters);
        if (!discs[i].contains(lam)) lam = zc.moment;
      } else if (zc.count > 1) {
        lam = zc.moment / double(zc.count);
      }
      st.lambda.push_back(lam);
    }
    return st;
  };

  TrackReport rep;
  std::map<double, State> done;
  const State base = solve_at(0.0, start);
  done[0.0] = base;

  auto match_radius = [&](const std::vector<cplx>& lam) {
    double gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j) gap = std::min(gap, std::abs(lam[i] - lam[j]));
    return std::min(opts.delta, 0.5 * gap);
  };

  std::function<void(double, double, int)> advance = [&](double a, double b, int depth) {
    const State& sa = done.at(a);
    State sb;
    bool ok = true;
    try {
      sb = solve_at(b, sa.lambda);
    } catch (const NumericalFailure&) {
      ok = false;  // a zero sits on a contour: treat like a count change
    }
    ok = ok && sb.count == base.count;
    const double radius = match_radius(sa.lambda);
    for (int i = 0; ok && i < m; ++i)
      if (base.count[i] > 0 && !(std::abs(sb.lambda[i] - sa.lambda[i]) < radius)) ok = false;
    if (ok) {
      done[b] = sb;
      return;
    }
    if (depth >= opts.max_halvings)
      throw VerificationFailure("track: contour crossing between eps = " + std::to_string(a) + " and " +
                                std::to_string(b));
    ++rep.halvings;
    const double mid = 0.5 * (a + b);
    advance(a, mid, depth + 1);
    advance(mid, b, depth + 1);
  };

  std::vector<double> pos, neg;
  for (double e : eps_grid) (e > 0 ? pos : neg).push_back(e);
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end(), std::greater<>());
  for (const auto* side : {&pos, &neg}) {
    double a = 0.0;
    for (double b : *side) {
      if (b == 0.0) continue;
      if (done.count(b) == 0) advance(a, b, 0);
      a = b;
    }
  }

  rep.paths.resize(m);
  for (int i = 0; i < m; ++i) {
    rep.paths[i].start = start[i];
    rep.paths[i].multiplicity = base.count[i];
  }
  for (const auto& [e, st] : done) {
    rep.eps.push_back(e);
    int total = 0;
    for (int c : st.count) total += c;
    rep.total_count.push_back(total);
    for (int i = 0; i < m; ++i) rep.paths[i].lambda.push_back(st.lambda[i]);
  }
  const int ne = static_cast<int>(rep.eps.size());
  for (const auto& p : rep.paths) {
    if (p.multiplicity == 0) continue;
    for (int j = 0; j + 1 < ne; ++j) rep.max_step = std::max(rep.max_step, std::abs(p.lambda[j + 1] - p.lambda[j]));
    if (p.multiplicity != 1) continue;
    for (int j = 1; j + 1 < ne; ++j) {
      const double d0 = rep.eps[j] - rep.eps[j - 1], d1 = rep.eps[j + 1] - rep.eps[j];
      if (std::abs(d0 - d1) > 1e-9 * std::max(d0, d1)) continue;
      const double sd = std::abs(p.lambda[j + 1] - 2.0 * p.lambda[j] + p.lambda[j - 1]) / (d0 * d0);
      rep.max_second_difference = std::max(rep.max_second_difference, sd);
    }
  }
  return rep;
}

cplx implicit_slope(const Family& fam, double eps, cplx lambda, double rho) {
  const SpectralProblem P = fam.at(eps);
  const DetDerivative d = det_derivative(P, fam.V, lambda);
  const int n = 16;
  cplx dFds = 0;
  for (int j = 0; j < n; ++j) {
    const cplx e = std::polar(1.0, 2 * kPi * j / n);
    dFds += fredholm_det(P, lambda + rho * e).value / e;
  }
  dFds /= rho * double(n);
  if (dFds == 0.0) throw NumericalFailure("implicit_slope: dF/ds vanishes (zero not simple)");
  return -d.dF / dFds;
}

ProjectorReport projector(const Circle& c, const SpectralProblem& P, ProjectorOptions opts) {
  ProjectorReport rep;
  int n = opts.nodes;
  // The rule on n / 2 nodes uses the even nodes, so the stability check is free.
  const Eigen::MatrixXcd even = projector_matrix(c, P, n, 2, 0);
  Eigen::MatrixXcd Pi = even + projector_matrix(c, P, n, 2, 1);
  rep.node_change = frob(Pi - 2.0 * even);
  while (rep.node_change > opts.stable_tol * std::max(1.0, frob(Pi)) && 2 * n <= opts.max_nodes) {
    const Eigen::MatrixXcd next = 0.5 * Pi + projector_matrix(c, P, 2 * n, 2, 1);
    rep.node_change = frob(next - Pi);
    Pi = next;
    n *= 2;
  }
  rep.nodes = n;
  rep.singular_values = singular_values(Pi);
  rep.norm = rep.singular_values.size() ? rep.singular_values(0) : 0.0;
  rep.rank = static_cast<int>((rep.singular_values.array() > 0.5).count());
  rep.idempotency = frob(Pi * Pi - Pi);
  rep.trace_defect = std::abs(Pi.trace() - double(rep.rank));
  rep.Pi = std::move(Pi);
  return rep;
}

ProjectorDerivativeReport projector_derivative_check(const Family& fam, double eps, const Circle& c,
                                                     const std::vector<double>& fd_steps, ProjectorOptions opts) {
  ProjectorDerivativeReport rep;
  const SpectralProblem P = fam.at(eps);
  const ProjectorReport pr = projector(c, P, opts);
  rep.projector_rank = pr.rank;
  const int n = pr.nodes;

  const Eigen::VectorXd left = left_scale(P);
  const SpMat Vw = left.asDiagonal() * fam.V * left.cwiseInverse().asDiagonal();
  const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(P.basis.dim(), P.basis.dim());
  rep.D1 = contour_sum(c, n, 1, 0, [&](cplx s, int j) {
    const ShiftedSolver S = node_solver(P, s, j);
    const Eigen::MatrixXcd R = weighted_resolvent(S, left, I);
    return Eigen::MatrixXcd(weighted_resolvent(S, left, Vw * R));
  });
  rep.singular_values = singular_values(rep.D1);
  rep.norm = rep.singular_values.size() ? rep.singular_values(0) : 0.0;
  rep.numerical_rank = rep.norm == 0.0 ? 0 : int((rep.singular_values.array() > 1e-8 * rep.norm).count());
  rep.identity_defect = frob(rep.D1 - pr.Pi * rep.D1 - rep.D1 * pr.Pi);

  for (double he : fd_steps) {
    const Eigen::MatrixXcd Pp = projector_matrix(c, fam.at(eps + he), n, 1, 0);
    const Eigen::MatrixXcd Pm = projector_matrix(c, fam.at(eps - he), n, 1, 0);
    const Eigen::MatrixXcd D2 = (Pp - Pm) / (2 * he);
    const double diff = frob(rep.D1 - D2), scale = frob(rep.D1);
    rep.fd_step.push_back(he);
    rep.fd_rel_error.push_back(scale > 0 ? diff / scale : diff);
  }
  return rep;
}

}  // namespace anosov
