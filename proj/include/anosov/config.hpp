// Run configuration: one JSON document, every key optional, unknown keys rejected.
#pragma once

#include "json.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace anosov {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SplittingConfig {
  int grid_x = 6, grid_t = 6;
  double t_iter = 0.0;          // 0: automatic
  int invariance_samples = 48;  // grid points used for the time-1 invariance check
};

struct WeightConfig {
  double eps = 0.1;
  double quad_step = 0.02;
  double f_tol_rel = 1e-3;
  int grid_x = 8, grid_t = 9;   // base points of the monotonicity table
  int directions = 26;          // Fibonacci directions per base point
  int azimuths = 4;             // boundary samples around the source line and sink plane
  std::vector<double> offsets{0.0, 1e-6, -1e-6, 1e-5, -1e-5, 3e-5, -3e-5, 1e-4, -1e-4, 1e-3, -1e-3, 0.05, -0.05};
  int lemma_samples = 2000;
  int check_samples = 4000;     // independent random covectors for the dichotomy
  int perturb_grid_x = 4, perturb_grid_t = 4;
  int random_perturbations = 20;
  int perturbation_qmax = 2;
  int adversary_qmax = 3;
  int adversary_candidates = 20;
  double adversary_factor = 4.0;
};

struct ThresholdConfig {
  int grid = 12;
  int sink_grid = 3;
  double cone_angle = 0.1;
  double horizon = 8.0;
  int k = 0;
  std::vector<double> re_s{-0.5, -0.4, -0.3, -0.2, -0.1, 0.0, 0.1, 0.2};
  int family_size = 20;         // perturbed flows in the uniform bound
  double eps_fraction = 0.5;    // eps0 = eps_fraction * eta0
  double uniform_tol = 0.1;
};

struct ResonanceConfig {
  int K_max = 4, N_t = 20;
  double h = 0.1;
  double k0 = 1.0;
  std::string profile = "quintic";
  std::vector<double> box{-0.5, 0.2, -7.0, 7.0};
  double r = 0.0;               // 0: floor(r_X(box re_lo)) + 1 + |k|
  double k_shift = 0.0;
  bool stability = true;
  std::vector<double> expected_im{0.0, 6.283185307179586, -6.283185307179586};
  double zero_tol = 1e-6;
  std::vector<double> control_h{0.2, 0.1, 0.05};
  std::vector<double> control_re_s{-0.1, 0.0, 0.1, 0.2};
  int control_n_im = 5;
  double control_spread = 0.5;
  std::vector<double> derivative_eps{0.0, 0.003};
  int derivative_points = 5;    // s values per eps
  double derivative_fd_step = 1e-5;
  double derivative_tol = 1e-4;
  std::vector<double> trace_h{0.2, 0.1, 0.05};
  double trace_exponent = -5.0;
  double trace_exponent_tol = 0.5;
};

struct ContinuationConfig {
  int K_max = 3, N_t = 16;
  double h = 0.1;
  double k0 = 1.0;
  double delta = 0.5;
  int steps = 4;                // grid points on each side of eps = 0
  double eps_fraction = 0.5;    // range [-f eta0, f eta0]
  double zero_tol = 1e-8;
  double slope_tol = 1e-3;
  double track_im = 6.283185307179586;  // resonance whose slope is compared
  // Projector
  double contour_re = 0.0, contour_im = 6.283185307179586, contour_radius = 0.5;
  int contour_nodes = 64;
  double projector_eps = 0.0;
  std::vector<double> fd_steps{1e-3, 1e-4};
  double idempotency_tol = 1e-8;
  double identity_tol = 1e-5;
  double fd_tol = 1e-4;
};

struct Config {
  std::uint64_t seed = 1;
  SplittingConfig splitting;
  WeightConfig weight;
  ThresholdConfig threshold;
  ResonanceConfig resonances;
  ContinuationConfig continuation;
};

/// Parses and validates; throws ConfigError on unknown keys, wrong types or bad values.
Config parse_config(const nlohmann::json& j);
Config load_config(const std::string& path);
nlohmann::json to_json(const Config& c);

}  // namespace anosov
