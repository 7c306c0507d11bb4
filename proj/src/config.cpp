#include "anosov/config.hpp"

#include <fstream>

namespace anosov {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SplittingConfig, grid_x, grid_t, t_iter, invariance_samples)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(WeightConfig, eps, quad_step, f_tol_rel, grid_x, grid_t, directions,
                                                azimuths, offsets, lemma_samples, check_samples, perturb_grid_x,
                                                perturb_grid_t, random_perturbations, perturbation_qmax,
                                                adversary_qmax, adversary_candidates, adversary_factor)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ThresholdConfig, grid, sink_grid, cone_angle, horizon, k, re_s,
                                                family_size, eps_fraction, uniform_tol)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ResonanceConfig, K_max, N_t, h, k0, profile, box, r, k_shift,
                                                stability, expected_im, zero_tol, control_h, control_re_s,
                                                control_n_im, control_spread, derivative_eps, derivative_points,
                                                derivative_fd_step, derivative_tol, trace_h, trace_exponent,
                                                trace_exponent_tol)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ContinuationConfig, K_max, N_t, h, k0, delta, steps, eps_fraction,
                                                zero_tol, slope_tol, track_im, contour_re, contour_im,
                                                contour_radius, contour_nodes, projector_eps, fd_steps,
                                                idempotency_tol, identity_tol, fd_tol)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Config, seed, splitting, weight, threshold, resonances, continuation)

namespace {
void reject_unknown(const nlohmann::json& given, const nlohmann::json& known, const std::string& path) {
  if (!given.is_object()) throw ConfigError("config: " + (path.empty() ? std::string("root") : path) +
                                            " must be an object");
  for (const auto& [key, value] : given.items()) {
    if (!known.contains(key)) throw ConfigError("config: unknown key '" + path + key + "'");
    if (known[key].is_object()) reject_unknown(value, known[key], path + key + ".");
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("config: " + what);
}
}  // namespace

Config parse_config(const nlohmann::json& j) {
  reject_unknown(j, to_json(Config{}), "");
  Config c;
  try {
    c = j.get<Config>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  require(c.splitting.grid_x >= 2 && c.splitting.grid_t >= 2, "splitting grid must be at least 2");
  require(c.weight.eps > 0, "weight.eps must be positive");
  require(c.weight.grid_x >= 1 && c.weight.grid_t >= 1 && c.weight.directions >= 1, "weight grids must be positive");
  require(c.weight.random_perturbations >= 0, "weight.random_perturbations must be non-negative");
  require(c.threshold.grid >= 1 && c.threshold.sink_grid >= 1, "threshold grids must be positive");
  require(!c.threshold.re_s.empty(), "threshold.re_s must not be empty");
  require(c.resonances.box.size() == 4 && c.resonances.box[0] < c.resonances.box[1] &&
              c.resonances.box[2] < c.resonances.box[3],
          "resonances.box must be [re_lo, re_hi, im_lo, im_hi] with lo < hi");
  require(c.resonances.profile == "quintic" || c.resonances.profile == "cosine",
          "resonances.profile must be 'quintic' or 'cosine'");
  require(c.resonances.k0 >= 1 && c.resonances.k0 < c.resonances.K_max, "need 1 <= resonances.k0 < K_max");
  require(c.resonances.h > 0 && c.continuation.h > 0, "h must be positive");
  require(c.resonances.r >= 0, "resonances.r must be non-negative");
  require(c.resonances.control_h.size() >= 2 && c.resonances.trace_h.size() >= 2,
          "control_h and trace_h need at least two values");
  require(c.continuation.k0 >= 1 && c.continuation.k0 < c.continuation.K_max, "need 1 <= continuation.k0 < K_max");
  require(c.continuation.steps >= 1 && c.continuation.delta > 0 && c.continuation.contour_radius > 0,
          "continuation steps, delta and contour radius must be positive");
  require(c.continuation.fd_steps.size() >= 1, "continuation.fd_steps must not be empty");
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config(j);
}

nlohmann::json to_json(const Config& c) {
  nlohmann::json j = c;
  return j;
}

}  // namespace anosov
