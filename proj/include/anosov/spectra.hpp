// Galerkin discretisation on the mapping torus: Fourier modes in x, Chebyshev
// collocation in t with the gluing c_k(1) = c_{A^{-T}k}(0) eliminated. The
// generator, weight, mollifier, resolvent, Fredholm determinant, its
// derivative in the perturbation parameter, and zero search.
#pragma once

#include "anosov/flow.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <complex>
#include <functional>
#include <memory>
#include <vector>

namespace anosov {

using cplx = std::complex<double>;
using SpMat = Eigen::SparseMatrix<cplx>;

struct GalerkinBasis {
  int K_max = 4;
  int N_t = 20;
  std::vector<Eigen::Vector2i> modes;  // |k| <= K_max, ordered by (|k|^2, k1, k2)
  std::vector<int> downstream;         // index of A^{-T}k, -1 when truncated (absorbing)
  std::vector<int> truncated;          // modes whose downstream left the lattice
  Eigen::VectorXd t;                   // N_t + 1 Chebyshev-Gauss-Lobatto nodes, t(0) = 0, t(N_t) = 1
  Eigen::MatrixXd D;                   // differentiation on all N_t + 1 nodes
  Eigen::VectorXd quad;                // Clenshaw-Curtis weights on the N_t unknown nodes

  int dim() const { return static_cast<int>(modes.size()) * N_t; }
  int flat(int mode, int node) const { return mode * N_t + node; }
  /// Index of k, or -1.
  int find(const Eigen::Vector2i& k) const;
};

/// Throws std::invalid_argument unless K_max >= 0 and N_t >= 4.
GalerkinBasis assemble_basis(const Monodromy& mono, int K_max, int N_t);

/// Matrix of u -> (X0 + eps V) u. With eps = 0 this is d/dt with the orbit
/// boundary condition.
SpMat assemble_generator(const GalerkinBasis& b, const Perturbation* v = nullptr, double eps = 0.0);
/// Matrix of u -> V u (the eps-derivative of the generator).
SpMat assemble_perturbation(const GalerkinBasis& b, const Perturbation& v);

enum class MollifierProfile { Quintic, Cosine };
/// Diagonal of Q: q(|k|/k0) on every node, q = 1 on [0,1], 0 on [2, inf).
Eigen::VectorXd assemble_mollifier(const GalerkinBasis& b, double k0,
                                   MollifierProfile profile = MollifierProfile::Quintic);
double mollifier_profile(double rho, MollifierProfile profile = MollifierProfile::Quintic);

/// Escape symbol on the discrete frequencies: m(t, k) in [-1, 1] for the
/// covector 2 pi k.dx at time t (x-independent weights).
using SymbolFn = std::function<double(double t, const Eigen::Vector2i& k)>;

struct WeightOperator {
  Eigen::VectorXd w;   // diagonal of W = exp(-r m log(1+|k|) - kshift log(1+|k|))
  double condition = 1;
};
/// Throws NumericalFailure if the condition number exceeds `max_condition`.
WeightOperator assemble_weight(const GalerkinBasis& b, const SymbolFn& m, double r, double k_shift,
                               double max_condition = 1e16);

/// Factorisation of a X - diag(d) - s. Sparse LU for sparse X, dense LU otherwise.
class ShiftedSolver {
 public:
  ShiftedSolver(const SpMat& X, double a, const Eigen::VectorXd& d, cplx s);
  ~ShiftedSolver();
  ShiftedSolver(ShiftedSolver&&) noexcept;
  Eigen::MatrixXcd solve(const Eigen::MatrixXcd& rhs) const;
  Eigen::MatrixXcd solve_adjoint(const Eigen::MatrixXcd& rhs) const;
  Eigen::MatrixXcd solve_transpose(const Eigen::MatrixXcd& rhs) const;
  const SpMat& matrix() const { return M_; }
  bool dense() const;

 private:
  struct Impl;
  SpMat M_;
  std::unique_ptr<Impl> impl_;
};

/// Everything that defines the discrete problem at one h.
struct SpectralProblem {
  GalerkinBasis basis;
  SpMat X;              // generator
  Eigen::VectorXd q;    // mollifier diagonal
  Eigen::VectorXd w;    // weight diagonal
  double h = 0.1;
  std::vector<int> support() const;  // indices with q > 0
};

struct DetValue {
  cplx value{0, 0};
  double log_abs = 0;
  double arg = 0;
  bool exact_zero = false;
};

/// F(X, s) = det(1 + h^{-1} Q (X - h^{-1} Q - s)^{-1}), computed on the rank-q block.
DetValue fredholm_det(const SpectralProblem& P, cplx s);

struct DetDerivative {
  DetValue F;
  cplx dF{0, 0};           // dF/deps by the trace formula
  cplx trace{0, 0};        // Tr[(1 + D)^{-1} dD]
  double dD_trace_norm = 0;
  double D_trace_norm = 0;
  double F_inv_norm = 0;   // ||F (1 + D)^{-1}||
  bool bound_holds = true; // ||F (1 + D)^{-1}|| <= exp(2 ||D||_Tr) + 1
};
/// Norms are in the weighted space: S^{1/2} W^{-1} (.) W S^{-1/2}, S the quadrature weights.
DetDerivative det_derivative(const SpectralProblem& P, const SpMat& V, cplx s);

struct ResolventNorm {
  double norm = 0;      // ||(hX - Q - s)^{-1}|| in the weighted space
  double residual = 0;  // relative residual of one solve
};
ResolventNorm resolvent_norm(const SpectralProblem& P, cplx s, int iters = 60, std::uint64_t seed = 1);

/// C(h) = h max_s ||(hX - Q - s)^{-1}|| for each problem over its s grid.
struct ControlFit {
  std::vector<double> h, C;
  double spread = 0;  // max C / min C - 1
};
/// s grid per problem: Re s in `re_s`, `n_im` values of Im s evenly on [-h^{-1/2}, h^{-1/2}].
ControlFit fit_control(const std::vector<const SpectralProblem*>& problems, const std::vector<double>& re_s,
                       int n_im = 5);

struct Box {
  double re_lo = -0.5, re_hi = 0.2, im_lo = -7, im_hi = 7;
  bool contains(cplx s) const {
    return s.real() > re_lo && s.real() <= re_hi && s.imag() >= im_lo && s.imag() <= im_hi;
  }
};

struct Zero {
  cplx s{0, 0};
  int multiplicity = 1;
  double abs_F = 0;
};

struct ZeroSearchOptions {
  int edge_points = 4;         // initial samples per box edge, refined adaptively
  double max_phase_step = 0.6; // radians between contour samples
  int max_bisection = 16;
  double min_box = 1e-3;       // below this a cluster is accepted with its winding multiplicity
  double newton_tol = 1e-12;
  int newton_iters = 60;
};

struct ZeroSearch {
  std::vector<Zero> zeros;
  int winding = 0;        // argument-principle count for the whole box
  int evaluations = 0;
};

/// Argument principle with phase tracking on box edges. A box with one zero
/// goes to Newton; boxes with more are halved until each holds one, or until
/// min_box, where the cluster is refined by Newton with the winding multiplicity.
/// Throws NumericalFailure when F vanishes on a contour.
ZeroSearch find_zeros(const std::function<DetValue(cplx)>& F, const Box& box, ZeroSearchOptions opts = {});

/// Eigenvalues of X inside the box, from the connected components of its sparsity graph.
std::vector<cplx> eigenvalues_in_box(const SpMat& X, const Box& box);

/// Max over interior grid points of |dF/dx + i dF/dy| / (|F'| + |F|), central
/// differences with step `step`.
double cauchy_riemann_residual(const std::function<DetValue(cplx)>& F, const std::vector<cplx>& points,
                               double step = 1e-4);

/// Sort and match two zero sets; returns the largest distance, or +inf if the counts differ.
double zero_set_distance(std::vector<cplx> a, std::vector<cplx> b);

}  // namespace anosov
