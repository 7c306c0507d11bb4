// Resonance tracking over a one-parameter family X0 + eps V by zero counting
// on fixed contours, contour spectral projectors and their eps-derivative.
#pragma once

#include "anosov/spectra.hpp"

#include <functional>
#include <vector>

namespace anosov {

using DetFn = std::function<DetValue(cplx)>;

/// Circle with `nodes` equispaced trapezoid nodes.
struct Circle {
  cplx center{0, 0};
  double radius = 0.5;
  int nodes = 64;
  cplx node(int j, int n) const;
  bool contains(cplx s) const { return std::abs(s - center) < radius; }
};

struct ZeroCount {
  int count = 0;
  double raw = 0;           // (1/2 pi i) \oint F'/F ds before rounding
  double min_rel_abs = 0;   // min |F| / max |F| over the nodes
  cplx moment{0, 0};        // (1/2 pi i) \oint s F'/F ds = sum of the enclosed zeros
  int nodes = 0;
};

struct CountOptions {
  double floor_rel = 1e-6;     // contour rejected below this min |F| / max |F|
  double integer_tol = 0.05;
  int max_nodes = 1024;        // nodes doubled until raw is within integer_tol
};

/// Argument principle with F' from spectral differentiation of the node values.
/// Throws NumericalFailure if |F| falls below the floor on the contour or the
/// count does not settle on an integer.
ZeroCount count_zeros(const Circle& c, const DetFn& F, CountOptions opts = {});

/// X(eps) = X0 + eps V on a fixed basis with fixed Q, W and h.
struct Family {
  GalerkinBasis basis;
  SpMat X0, V;
  Eigen::VectorXd q, w;
  double h = 0.1;

  SpectralProblem at(double eps) const;
  DetValue det(double eps, cplx s) const { return fredholm_det(at(eps), s); }
};

/// Family on the cat suspension with unit weight and mollifier cut-off k0.
Family make_family(int K_max, int N_t, double h, double k0, const Perturbation& v);

struct TrackOptions {
  double delta = 0.5;     // radius of the discs around the eps = 0 resonances
  int nodes = 32;         // initial contour nodes per disc
  int max_halvings = 8;
  CountOptions count;
  double newton_tol = 1e-13;
  int newton_iters = 40;
};

/// One disc of Omega_delta. A disc holding more than one zero is a cluster and
/// is tracked by the mean of its zeros.
struct ResonancePath {
  cplx start{0, 0};
  int multiplicity = 1;
  std::vector<cplx> lambda;  // per eps
};

struct TrackReport {
  std::vector<double> eps;  // ascending, including every inserted step
  std::vector<ResonancePath> paths;
  std::vector<int> total_count;  // Rouche count in Omega_delta per eps
  double max_step = 0;           // largest |lambda(eps_{j+1}) - lambda(eps_j)|
  double max_second_difference = 0;  // max |second difference| / d eps^2 on uniform stretches
  int halvings = 0;
};

/// Continues the resonances `start` (at eps = 0) outward over `eps_grid`.
/// Step halving on a count change or a jump beyond the matching radius; after
/// max_halvings throws VerificationFailure("contour crossing").
TrackReport track(const Family& fam, const std::vector<double>& eps_grid, const std::vector<cplx>& start,
                  TrackOptions opts = {});

/// dlambda/deps = -dF/deps / dF/ds at a simple zero; dF/deps by the trace
/// formula, dF/ds by a Cauchy integral on a circle of radius `rho`.
cplx implicit_slope(const Family& fam, double eps, cplx lambda, double rho = 1e-3);

struct ProjectorOptions {
  int nodes = 64;
  double stable_tol = 1e-8;  // nodes doubled until the n and n/2 rules differ by less
  int max_nodes = 512;
};

/// Pi = (1/2 pi i) \oint (s - X)^{-1} ds in weighted coordinates
/// S^{1/2} W^{-1} (.) W S^{-1/2}.
struct ProjectorReport {
  Eigen::MatrixXcd Pi;
  int rank = 0;                 // singular values above 1/2 (a projector has none in (0, 1))
  double norm = 0;
  double idempotency = 0;       // ||Pi^2 - Pi||_F (bounds the operator norm)
  double trace_defect = 0;      // |tr Pi - rank|
  double node_change = 0;       // ||Pi_n - Pi_{n/2}||_F
  int nodes = 0;
  Eigen::VectorXd singular_values;
};

/// Throws NumericalFailure naming the node when a resolvent solve fails.
ProjectorReport projector(const Circle& c, const SpectralProblem& P, ProjectorOptions opts = {});

struct ProjectorDerivativeReport {
  Eigen::MatrixXcd D1;              // contour formula
  double norm = 0;                  // operator norm
  std::vector<double> fd_step;      // eps steps of the central differences
  std::vector<double> fd_rel_error; // ||D1 - D2||_F / ||D1||_F, absolute when D1 = 0
  double identity_defect = 0;       // ||D1 - Pi D1 - D1 Pi||_F
  Eigen::VectorXd singular_values;  // of D1
  int numerical_rank = 0;           // singular values above 1e-8 of the largest
  int projector_rank = 0;
};

ProjectorDerivativeReport projector_derivative_check(const Family& fam, double eps, const Circle& c,
                                                     const std::vector<double>& fd_steps = {1e-3, 1e-4},
                                                     ProjectorOptions opts = {});

}  // namespace anosov
