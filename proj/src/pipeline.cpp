#include "anosov/pipeline.hpp"

#include "anosov/continuation.hpp"
#include "anosov/errors.hpp"
#include "anosov/threshold.hpp"

#include <openssl/evp.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace anosov {

namespace {
using json = nlohmann::json;
constexpr double kPi = std::numbers::pi;
// Bumped when stage outputs change meaning, so old caches are not reused.
constexpr const char* kCacheVersion = "anosov-stage-v3";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : width_(header.size()) { row_strings(header); }
  template <class... T>
  void row(const T&... cells) {
    std::vector<std::string> r{cell(cells)...};
    if (r.size() != width_) throw std::logic_error("csv: row width mismatch");
    row_strings(r);
  }
  std::string str() const { return out_.str(); }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double v) { return fmt(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  void row_strings(const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) out_ << (i ? "," : "") << r[i];
    out_ << "\n";
  }
  std::size_t width_;
  std::ostringstream out_;
};

json check_json(const Check& c) {
  return json{{"id", c.id},       {"criterion", c.criterion}, {"pass", c.pass},     {"gating", c.gating},
              {"value", c.value}, {"limit", c.limit},         {"detail", c.detail}};
}

// value <= limit
Check at_most(std::string id, int criterion, double value, double limit, std::string detail = "",
              bool gating = true) {
  return Check{std::move(id), criterion, value <= limit, gating, value, limit, std::move(detail)};
}
Check at_least(std::string id, int criterion, double value, double limit, std::string detail = "",
               bool gating = true) {
  return Check{std::move(id), criterion, value >= limit, gating, value, limit, std::move(detail)};
}

void add(json& report, const Check& c) { report["checks"].push_back(check_json(c)); }

double chart_line_angle(const Vec3& a, const Vec3& b) {
  const double th = std::atan2(a.cross(b).norm(), a.dot(b));
  return std::min(th, kPi - th);
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::uint64_t sub_seed(std::uint64_t seed, int i) { return seed * 1000 + static_cast<std::uint64_t>(i); }

MollifierProfile profile_of(const std::string& s) {
  return s == "cosine" ? MollifierProfile::Cosine : MollifierProfile::Quintic;
}

// r(s) from the stored threshold constants.
double strength_at(const json& th, double re_s) {
  return th.at("prefactor").get<double>() *
             (2 * th.at("div_sup").get<double>() - 4 * re_s + th.at("growth_sup").get<double>()) +
         std::abs(th.at("k").get<double>());
}

// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const int n = static_cast<int>(x.size());
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (int i = 0; i < n; ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}
}  // namespace

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> s{Stage::Splitting,  Stage::Weight,       Stage::Threshold,
                                    Stage::Resonances, Stage::Continuation, Stage::Projector};
  return s;
}

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::Splitting: return "splitting";
    case Stage::Weight: return "weight";
    case Stage::Threshold: return "threshold";
    case Stage::Resonances: return "resonances";
    case Stage::Continuation: return "continuation";
    case Stage::Projector: return "projector";
  }
  return "?";
}

Stage stage_from_name(const std::string& name) {
  for (Stage s : all_stages())
    if (stage_name(s) == name) return s;
  throw std::invalid_argument("unknown stage '" + name + "'");
}

std::vector<Check> StageResult::checks() const {
  std::vector<Check> out;
  if (!report.contains("checks")) return out;
  for (const auto& c : report["checks"])
    out.push_back(Check{c.at("id"), c.at("criterion"), c.at("pass"), c.at("gating"), c.at("value"), c.at("limit"),
                        c.at("detail")});
  return out;
}

bool StageResult::failed() const {
  for (const auto& c : checks())
    if (c.gating && !c.pass) return true;
  return false;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

SymbolFn escape_symbol(std::shared_ptr<const WeightFunction> w) {
  auto memo = std::make_shared<std::map<std::tuple<double, int, int>, double>>();
  return [w, memo](double t, const Eigen::Vector2i& k) {
    const auto key = std::make_tuple(t, k(0), k(1));
    if (auto it = memo->find(key); it != memo->end()) return it->second;
    const Monodromy& mono = w->flow().monodromy();
    Vec3 comp(2 * kPi * k(0), 2 * kPi * k(1), 0);
    comp /= covector_norm(mono, t, comp);
    const double v = w->bold_m(SphereCovector{MappingTorusPoint{Vec2::Zero(), t}, comp});
    memo->emplace(key, v);
    return v;
  };
}

// Objects rebuilt from the configuration and upstream reports when a stage needs them.
struct Pipeline::Context {
  const Config& cfg;
  Monodromy mono;
  std::unique_ptr<Flow> flow0;
  std::unique_ptr<DualSplitting> dual;
  std::shared_ptr<WeightFunction> weight;

  explicit Context(const Config& c) : cfg(c) {}

  const Flow& flow() {
    if (!flow0) flow0 = std::make_unique<Flow>(mono, suspension_field(mono));
    return *flow0;
  }
  const DualSplitting& dual_splitting() {
    if (!dual) {
      SplittingOptions o;
      o.t_iter = cfg.splitting.t_iter;
      dual = std::make_unique<DualSplitting>(
          compute_splitting(flow(), BaseGrid{cfg.splitting.grid_x, cfg.splitting.grid_t}, o));
    }
    return *dual;
  }
  WeightOptions weight_options() const {
    WeightOptions o;
    o.eps = cfg.weight.eps;
    o.quad_step = cfg.weight.quad_step;
    o.f_tol_rel = cfg.weight.f_tol_rel;
    return o;
  }
  std::shared_ptr<const WeightFunction> weight_function(const json& wrep) {
    if (!weight) {
      weight = std::make_shared<WeightFunction>(flow(), dual_splitting(), wrep.at("T").get<double>(),
                                                weight_options());
      weight->set_chi(ChiProfile{wrep.at("chi_width").get<double>()});
    }
    return weight;
  }
};

namespace {

StageResult run_splitting(const Config& cfg, const Flow& flow, const DualSplitting& dual, double build_seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  const Monodromy& mono = flow.monodromy();
  const Splitting& split = dual.primal();
  const BaseGrid& grid = split.grid();
  const Vec3 vu(mono.v_u()(0), mono.v_u()(1), 0), vs(mono.v_s()(0), mono.v_s()(1), 0);

  StageResult r;
  r.stage = Stage::Splitting;
  json& rep = r.report;
  rep["checks"] = json::array();
  Csv csv({"index", "x1", "x2", "t", "angle_eu", "angle_es", "annihilation", "pairing"});
  double worst_angle = 0, worst_ann = 0, worst_pair = 0;
  for (int idx = 0; idx < grid.size(); ++idx) {
    const auto p = grid.point(idx);
    const Frame& f = split.frames()[idx];
    const DualFrame& d = dual.frames()[idx];
    const double au = chart_line_angle(f.eu, vu), as = chart_line_angle(f.es, vs);
    const double ann = std::max({std::abs(d.e00.dot(f.eu)), std::abs(d.e00.dot(f.es)), std::abs(d.eu0.dot(f.e0)),
                                 std::abs(d.eu0.dot(f.eu)), std::abs(d.es0.dot(f.e0)), std::abs(d.es0.dot(f.es))});
    Mat3 D, P;
    D << d.d00.transpose(), d.du0.transpose(), d.ds0.transpose();
    P << f.e0, f.es, f.eu;
    const double pair = (D * P - Mat3::Identity()).cwiseAbs().maxCoeff();
    worst_angle = std::max({worst_angle, au, as});
    worst_ann = std::max(worst_ann, ann);
    worst_pair = std::max(worst_pair, pair);
    csv.row(idx, p.x(0), p.x(1), p.t, au, as, ann, pair);
  }

  // Invariance of the dual lines under the time-1 map, on a subset of grid points.
  double worst_inv = 0;
  const int stride = std::max(1, grid.size() / std::max(1, cfg.splitting.invariance_samples));
  for (int idx = 0; idx < grid.size(); idx += stride) {
    const auto p = grid.point(idx);
    const DualFrame d = dual.at(p);
    const std::pair<Vec3, Vec3 DualFrame::*> lines[] = {
        {d.e00, &DualFrame::e00}, {d.eu0, &DualFrame::eu0}, {d.es0, &DualFrame::es0}};
    for (const auto& [line, member] : lines) {
      const Vec3 xi = line / covector_norm(mono, p.t, line);
      const auto img = flow.projective(SphereCovector{p, xi}, 1.0);
      worst_inv = std::max(worst_inv, angle_to_line(mono, img.xi.base.t, img.xi.comp, dual.at(img.xi.base).*member));
    }
  }

  const auto hc = estimate_constants(flow, split);
  const double beta_exact = std::log(mono.lambda_u());
  const double seconds = build_seconds + elapsed(t0);
  rep["grid"] = {grid.n_x, grid.n_x, grid.n_t};
  rep["C"] = hc.C;
  rep["beta"] = hc.beta;
  rep["beta_exact"] = beta_exact;
  rep["theta_min"] = hc.theta_min;
  rep["theta_min_dual"] = hc.theta_min_dual;
  rep["dual_min_angle"] = dual.min_angle();
  rep["metric"] = hc.metric;
  rep["primal_invariance"] = invariance_residual(flow, split, 1.0);
  rep["runtime_s"] = seconds;
  add(rep, at_most("splitting.eigenvector_angle", 1, worst_angle, 1e-8, "max angle of e^u, e^s to eigenvectors of A"));
  add(rep, at_most("splitting.beta", 1, std::abs(hc.beta - beta_exact), 1e-3, "|beta - log lambda_u|"));
  add(rep, at_most("splitting.runtime", 1, seconds, 30.0, "seconds", false));
  add(rep, at_most("splitting.annihilation", 2, worst_ann, 1e-10));
  add(rep, at_most("splitting.pairing", 2, worst_pair, 1e-10, "max |D P - I|"));
  add(rep, at_most("splitting.dual_invariance", 2, worst_inv, 1e-6, "time-1 image angle of E*_00, E*_u0, E*_s0"));
  r.csv["splitting_frames"] = csv.str();
  return r;
}

StageResult run_weight(const Config& cfg, const Flow& flow, const DualSplitting& dual) {
  const auto& wc = cfg.weight;
  const Monodromy& mono = flow.monodromy();
  StageResult r;
  r.stage = Stage::Weight;
  json& rep = r.report;
  rep["checks"] = json::array();

  const auto hc = estimate_constants(flow, dual.primal());
  const double angle = line_plane_angle(dual);
  const double T = lemma_time(wc.eps, hc.C, hc.beta, angle);
  const auto lemma = verify_lemma_time(flow, dual, wc.eps, T, wc.lemma_samples, sub_seed(cfg.seed, 900));
  add(rep, at_most("weight.neighbourhood_lemma", 3, lemma.failures, 0, "samples failing Phi_T into the plane nbhd"));

  WeightOptions wo;
  wo.eps = wc.eps;
  wo.quad_step = wc.quad_step;
  wo.f_tol_rel = wc.f_tol_rel;
  WeightFunction w(flow, dual, T, wo);

  auto samples_on = [&](const BaseGrid& g) {
    auto s = sphere_samples(mono, g, wc.directions);
    const auto b = boundary_samples(dual, g, wc.azimuths, wc.offsets);
    s.insert(s.end(), b.begin(), b.end());
    return s;
  };
  const WeightTable tab = tabulate(w, samples_on(BaseGrid{wc.grid_x, wc.grid_t}));
  const GapConstants gc = gap_constants(tab, T);
  const ChiProfile chi{gc.eps_gap};
  w.set_chi(chi);
  const auto mono_rep = check_unperturbed(tab, chi, T, gc.delta);

  // Dichotomy on the table and on independent random covectors.
  auto dichotomy = [&](const WeightTable& t) {
    double worst = std::numeric_limits<double>::infinity();
    int zero = 0;
    for (std::size_t i = 0; i < t.m.size(); ++i)
      if (std::abs(t.F[i]) <= gc.f_tol) {
        ++zero;
        worst = std::min(worst, std::abs(t.m[i] - T));
      }
    return std::make_pair(worst, zero);
  };
  std::mt19937_64 rng(sub_seed(cfg.seed, 901));
  std::uniform_real_distribution<double> u01(0, 1);
  std::normal_distribution<double> g01(0, 1);
  std::vector<SphereCovector> random;
  for (int i = 0; i < wc.check_samples; ++i) {
    const MappingTorusPoint p{Vec2(u01(rng), u01(rng)), u01(rng)};
    const Vec3 a = Vec3(g01(rng), g01(rng), g01(rng)).normalized();
    random.push_back(SphereCovector{p, cotangent_adapter(mono, p.t).inverse() * a});
  }
  const WeightTable rtab = tabulate(w, random);
  const auto rmono = check_unperturbed(rtab, chi, T, gc.delta);
  const auto [dich, dich_n] = dichotomy(tab);
  const auto [rdich, rdich_n] = dichotomy(rtab);

  add(rep, at_least("weight.sample_count", 3, double(tab.m.size()), 1e5, "sphere covectors in the table", false));
  add(rep, at_least("weight.monotone", 3, mono_rep.min_value, -1e-10, "min X0 bold-m over the table"));
  add(rep, at_least("weight.delta_positive", 3, gc.delta, 1e-300, "delta"));
  add(rep, at_least("weight.support_bound", 3, mono_rep.min_ratio, 1.0 - 1e-12,
                    "min X0 bold-m / (chi' delta) on supp chi'"));
  add(rep, at_least("weight.dichotomy", 3, std::isfinite(dich) ? dich : 1e300, 2 * gc.delta,
                    "min |m - T| where |F| <= f_tol"));
  add(rep, at_least("weight.monotone_random", 3, rmono.min_value, -1e-10, "independent random covectors"));
  add(rep, at_least("weight.dichotomy_random", 3, std::isfinite(rdich) ? rdich : 1e300, 2 * gc.delta,
                    "independent random covectors"));

  // Perturbation budget on the smaller table.
  const WeightTable ptab = tabulate(w, samples_on(BaseGrid{wc.perturb_grid_x, wc.perturb_grid_t}));
  const SupportData sd = support_gradients(w, ptab);
  const Budget budget = perturbation_budget(ptab, sd, gc.delta, T);
  add(rep, at_least("weight.eta0_positive", 4, budget.eta0, 1e-300, "eta0"));

  Csv pcsv({"kind", "seed", "eps", "min_value", "violations"});
  int worst_viol = 0;
  double worst_min = std::numeric_limits<double>::infinity();
  for (int i = 0; i < wc.random_perturbations; ++i) {
    const auto seed = sub_seed(cfg.seed, i);
    const auto v = Perturbation::random(seed, wc.perturbation_qmax, false).normalized(32);
    const auto pr = check_perturbed(ptab, sd, chi, T, v, 0.5 * budget.eta0);
    worst_viol = std::max(worst_viol, pr.violations);
    worst_min = std::min(worst_min, pr.min_value);
    pcsv.row("random", std::to_string(seed), 0.5 * budget.eta0, pr.min_value, pr.violations);
  }
  const Adversary adv = adversarial_perturbation(ptab, sd, wc.adversary_qmax, wc.adversary_candidates);
  const auto adv_rep = check_perturbed(ptab, sd, chi, T, adv.v, wc.adversary_factor * budget.eta0);
  const auto adv_half = check_perturbed(ptab, sd, chi, T, adv.v, 0.5 * budget.eta0);
  pcsv.row("adversarial", "-", wc.adversary_factor * budget.eta0, adv_rep.min_value, adv_rep.violations);
  pcsv.row("adversarial", "-", 0.5 * budget.eta0, adv_half.min_value, adv_half.violations);
  add(rep, at_most("weight.random_perturbations", 4, worst_viol, 0,
                   std::to_string(wc.random_perturbations) + " random V at eta0/2"));
  add(rep, at_least("weight.adversary_violates", 4, adv_rep.violations, 1, "adversarial V at 4 eta0"));

  const std::vector<double> ell_eps{0.01, 0.1, 0.5, 0.9};
  const auto ell = ell_profile(mono, tab, gc.f_tol, ell_eps);

  Csv scsv({"row", "t", "m", "F", "X0_bold_m"});
  for (std::size_t i = 0; i < tab.m.size(); ++i)
    scsv.row(i, tab.samples[i].base.t, tab.m[i], tab.F[i], chi.derivative(tab.m[i] - T) * tab.F[i]);

  rep["T"] = T;
  rep["C"] = hc.C;
  rep["beta"] = hc.beta;
  rep["line_plane_angle"] = angle;
  rep["lemma"] = {{"samples", lemma.samples}, {"eligible", lemma.eligible}, {"failures", lemma.failures},
                  {"worst", lemma.worst}};
  rep["samples"] = tab.m.size();
  rep["f_tol"] = gc.f_tol;
  rep["delta_m"] = gc.delta_m;
  rep["chi_width"] = gc.eps_gap;
  rep["delta"] = gc.delta;
  rep["gap_count"] = gc.gap_count;
  rep["zero_count"] = gc.zero_count;
  rep["support_count"] = mono_rep.support_count;
  rep["min_X0_bold_m"] = mono_rep.min_value;
  rep["dichotomy_min"] = dich;
  rep["dichotomy_zero_rows"] = dich_n;
  rep["random_dichotomy_zero_rows"] = rdich_n;
  rep["perturb_samples"] = ptab.m.size();
  rep["perturb_support"] = sd.rows.size();
  rep["eta0"] = budget.eta0;
  rep["implied_C"] = budget.implied_C;
  rep["K_max"] = budget.K_max;
  rep["random_min_value"] = worst_min;
  rep["adversary"] = {{"ratio", adv.ratio}, {"row", adv.row}, {"violations_4eta0", adv_rep.violations},
                      {"violations_half_eta0", adv_half.violations}};
  rep["ell"] = json::object();
  for (std::size_t i = 0; i < ell.size(); ++i) rep["ell"][fmt(ell_eps[i])] = ell[i];
  r.csv["weight_samples"] = scsv.str();
  r.csv["weight_perturbations"] = pcsv.str();
  return r;
}

ThresholdOptions threshold_options(const ThresholdConfig& tc) {
  ThresholdOptions o;
  o.grid = BaseGrid{tc.grid, tc.grid};
  o.sink_grid = BaseGrid{tc.sink_grid, tc.sink_grid};
  o.cone_angle = tc.cone_angle;
  o.horizon = tc.horizon;
  o.k = tc.k;
  return o;
}

json threshold_json(const ThresholdReport& t) {
  return json{{"Lambda", t.Lambda},
              {"chart_Lambda", t.chart_Lambda},
              {"div_sup", t.div_sup},
              {"growth_sup", t.growth_sup},
              {"growth_inf", t.growth_inf},
              {"C_prime", t.C_prime},
              {"beta_prime", t.beta_prime},
              {"T1_formula", t.T1_formula},
              {"T1_sink", t.T1_sink},
              {"doubling_formula", t.doubling_formula},
              {"doubling_sink", t.doubling_sink},
              {"c", t.c},
              {"c_degenerate", t.c_degenerate},
              {"prefactor", t.prefactor()},
              {"k", t.k}};
}

StageResult run_threshold(const Config& cfg, const Flow& flow, const DualSplitting& dual, const json& wrep) {
  const auto& tc = cfg.threshold;
  const auto opts = threshold_options(tc);
  StageResult r;
  r.stage = Stage::Threshold;
  json& rep = r.report;
  const ThresholdReport base = threshold_report(flow, dual, opts);
  rep = threshold_json(base);
  rep["checks"] = json::array();

  // Formula-level slope: r(a) - r(b) = 4 prefactor (b - a).
  std::vector<double> grid = tc.re_s;
  std::sort(grid.begin(), grid.end());
  double slope_err = 0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double expect = 4 * base.prefactor() * (grid[i + 1] - grid[i]);
    const double got = base.r(grid[i]) - base.r(grid[i + 1]);
    slope_err = std::max(slope_err, std::abs(got - expect) / std::abs(expect));
  }
  add(rep, at_most("threshold.slope", 5, slope_err, 1e-12, "relative error of r(a) - r(b) against 4 prefactor (b - a)"));
  add(rep, at_least("threshold.decreasing", 5, base.prefactor(), 1e-300, "prefactor > 0"));

  // Uniform bound over X0 + eps0 V_i, sink cone fixed from X0.
  const double eps0 = tc.eps_fraction * wrep.at("eta0").get<double>();
  std::vector<ThresholdReport> family{base};
  Csv fcsv({"member", "seed", "Lambda", "growth_sup", "div_sup", "C_prime", "beta_prime", "prefactor"});
  auto member_row = [&](int i, const std::string& seed, const ThresholdReport& t) {
    fcsv.row(i, seed, t.Lambda, t.growth_sup, t.div_sup, t.C_prime, t.beta_prime, t.prefactor());
  };
  member_row(0, "-", family[0]);
  for (int i = 0; i < tc.family_size; ++i) {
    const auto seed = sub_seed(cfg.seed, i);
    const auto v = Perturbation::random(seed, cfg.weight.perturbation_qmax, false).normalized(32);
    const Flow fi(flow.monodromy(), perturbed_field(flow.field(), v, eps0));
    family.push_back(threshold_report(fi, dual, opts));
    member_row(i + 1, std::to_string(seed), family.back());
  }
  const StrengthTable table = uniform_strength(family, grid);
  Csv scsv({"re_s", "r_X0", "r_uniform", "relative_excess"});
  double excess = 0;
  for (std::size_t i = 0; i < table.re_s.size(); ++i) {
    const double r0 = family[0].r(table.re_s[i]);
    const double rel = (table.r[i] - r0) / r0;
    excess = std::max(excess, std::abs(rel));
    scsv.row(table.re_s[i], r0, table.r[i], rel);
  }
  add(rep, at_most("threshold.uniform_family", 5, excess, tc.uniform_tol,
                   "max |r_uniform / r_X0 - 1| over the Re s grid, eps0 = eta0/2"));
  rep["eps0"] = eps0;
  rep["family_size"] = family.size();
  rep["r_at"] = json::object();
  for (double a : grid) rep["r_at"][fmt(a)] = base.r(a);
  r.csv["threshold_strength"] = scsv.str();
  r.csv["threshold_family"] = fcsv.str();
  return r;
}

struct ProblemSpec {
  int K = 4, N = 20;
  double h = 0.1, k0 = 1.0, r = 0.0, k_shift = 0.0;
  MollifierProfile profile = MollifierProfile::Quintic;
};

SpectralProblem make_problem(const ProblemSpec& ps, const SymbolFn& sym, const Perturbation* v = nullptr,
                             double eps = 0.0) {
  SpectralProblem P;
  P.basis = assemble_basis(Monodromy{}, ps.K, ps.N);
  P.X = assemble_generator(P.basis, v, eps);
  P.q = assemble_mollifier(P.basis, ps.k0, ps.profile);
  P.w = assemble_weight(P.basis, sym, ps.r, ps.k_shift).w;
  P.h = ps.h;
  return P;
}

// Strength used by the resonance and projector stages.
double strength_used(const ResonanceConfig& rc, const json& trep) {
  if (rc.r > 0) return rc.r;
  return std::floor(strength_at(trep, rc.box[0])) + 1.0;
}

StageResult run_resonances(const Config& cfg, const SymbolFn& sym, const json& trep) {
  const auto& rc = cfg.resonances;
  StageResult r;
  r.stage = Stage::Resonances;
  json& rep = r.report;
  rep["checks"] = json::array();
  const auto t0 = std::chrono::steady_clock::now();

  const Box box{rc.box[0], rc.box[1], rc.box[2], rc.box[3]};
  ProblemSpec base;
  base.K = rc.K_max;
  base.N = rc.N_t;
  base.h = rc.h;
  base.k0 = rc.k0;
  base.profile = profile_of(rc.profile);
  base.r = strength_used(rc, trep);
  base.k_shift = rc.k_shift;
  const double r_needed = strength_at(trep, box.re_lo) + std::abs(rc.k_shift);
  add(rep, Check{"resonances.strength", 6, base.r > r_needed, true, base.r, r_needed, "r > r_X(re_lo) + |k|"});

  Csv zcsv({"variant", "re", "im", "multiplicity", "abs_F", "evaluations"});
  auto locate = [&](const std::string& name, const ProblemSpec& ps) {
    const SpectralProblem P = make_problem(ps, sym);
    const auto z = find_zeros([&](cplx s) { return fredholm_det(P, s); }, box);
    std::vector<cplx> out;
    int worst_mult = 0;
    for (const auto& zz : z.zeros) {
      out.push_back(zz.s);
      worst_mult = std::max(worst_mult, zz.multiplicity);
      zcsv.row(name, zz.s.real(), zz.s.imag(), zz.multiplicity, zz.abs_F, z.evaluations);
    }
    return std::make_tuple(out, worst_mult, P.X);
  };

  std::vector<cplx> expected;
  for (double im : rc.expected_im) expected.emplace_back(0.0, im);
  const auto [zeros, mult, X] = locate("base", base);
  const double dist = zero_set_distance(zeros, expected);
  const double eig = zero_set_distance(zeros, eigenvalues_in_box(X, box));
  add(rep, at_most("resonances.zero_set", 6, dist, rc.zero_tol, "distance to {0, +-2 pi i}"));
  add(rep, at_most("resonances.simple", 6, mult, 1, "largest multiplicity"));
  add(rep, at_most("resonances.eigen_crosscheck", 6, eig, rc.zero_tol, "distance to eigenvalues of X in the box"));
  rep["zeros"] = json::array();
  for (cplx z : zeros) rep["zeros"].push_back({z.real(), z.imag()});
  rep["r"] = base.r;
  rep["k_shift"] = base.k_shift;
  rep["r_needed"] = r_needed;

  if (rc.stability) {
    ProblemSpec v = base;
    const std::vector<std::pair<std::string, ProblemSpec>> variants = [&] {
      std::vector<std::pair<std::string, ProblemSpec>> out;
      v = base; v.K += 4; out.emplace_back("K_max+4", v);
      v = base; v.N += 8; out.emplace_back("N_t+8", v);
      v = base; v.h /= 2; out.emplace_back("h/2", v);
      v = base; v.r += 1; v.k_shift += 1; out.emplace_back("r+1,k+1", v);
      v = base;
      v.profile = base.profile == MollifierProfile::Quintic ? MollifierProfile::Cosine : MollifierProfile::Quintic;
      out.emplace_back("other Q profile", v);
      return out;
    }();
    for (const auto& [name, ps] : variants) {
      const auto [zv, mv, Xv] = locate(name, ps);
      const int crit = name == "other Q profile" ? 0 : 6;
      add(rep, at_most("resonances.stable[" + name + "]", crit, zero_set_distance(zv, zeros), rc.zero_tol,
                       "distance to the base zero set"));
      add(rep, at_most("resonances.simple[" + name + "]", crit, mv, 1, "largest multiplicity"));
    }
  }
  const double zero_seconds = elapsed(t0);
  rep["zero_search_s"] = zero_seconds;
  add(rep, at_most("resonances.runtime", 6, zero_seconds, 300.0, "seconds for the zero search and variants", false));

  // Control constant C(h) = h sup ||(hX - Q - s)^{-1}||.
  std::vector<SpectralProblem> cps;
  for (double h : rc.control_h) {
    ProblemSpec ps = base;
    ps.h = h;
    cps.push_back(make_problem(ps, sym));
  }
  std::vector<const SpectralProblem*> cptr;
  for (const auto& p : cps) cptr.push_back(&p);
  const ControlFit fit = fit_control(cptr, rc.control_re_s, rc.control_n_im);
  Csv ccsv({"h", "C"});
  for (std::size_t i = 0; i < fit.h.size(); ++i) ccsv.row(fit.h[i], fit.C[i]);
  add(rep, at_most("resonances.control_spread", 7, fit.spread, rc.control_spread, "max C / min C - 1"));
  rep["control"] = {{"h", fit.h}, {"C", fit.C}, {"spread", fit.spread},
                    {"s_points", rc.control_re_s.size() * rc.control_n_im}};

  // Determinant derivative: trace formula against central differences.
  const auto v = Perturbation::random(sub_seed(cfg.seed, 500), cfg.weight.perturbation_qmax, false).normalized(32);
  Csv dcsv({"eps", "re_s", "im_s", "dF_re", "dF_im", "fd_re", "fd_im", "relative_error", "bound_holds"});
  double worst_rel = 0;
  bool bound = true;
  const SpMat V = assemble_perturbation(make_problem(base, sym).basis, v);
  for (double eps : rc.derivative_eps) {
    const SpectralProblem P = make_problem(base, sym, &v, eps);
    const double de = rc.derivative_fd_step;
    const SpectralProblem Pp = make_problem(base, sym, &v, eps + de), Pm = make_problem(base, sym, &v, eps - de);
    for (int j = 0; j < rc.derivative_points; ++j) {
      const double a = (j + 0.5) / rc.derivative_points;
      const cplx s(box.re_lo + a * (box.re_hi - box.re_lo), box.im_lo + 0.9 * a * (box.im_hi - box.im_lo) + 0.3);
      const auto d = det_derivative(P, V, s);
      const cplx fd = (fredholm_det(Pp, s).value - fredholm_det(Pm, s).value) / (2 * de);
      const double rel = std::abs(d.dF - fd) / std::abs(fd);
      worst_rel = std::max(worst_rel, rel);
      bound = bound && d.bound_holds;
      dcsv.row(eps, s.real(), s.imag(), d.dF.real(), d.dF.imag(), fd.real(), fd.imag(), rel,
               d.bound_holds ? 1 : 0);
    }
  }
  add(rep, at_most("resonances.derivative", 8, worst_rel, rc.derivative_tol,
                   std::to_string(rc.derivative_eps.size() * rc.derivative_points) + " (eps, s) pairs"));
  add(rep, Check{"resonances.determinant_bound", 8, bound, true, bound ? 1.0 : 0.0, 1.0,
                 "||F (1+D)^{-1}|| <= exp(2 ||D||_Tr) + 1 at every pair"});

  // Trace-norm scaling in h.
  Csv tcsv({"h", "dD_trace_norm", "D_trace_norm"});
  std::vector<double> tn;
  const cplx s_tr(-0.1, 0.3);
  for (double h : rc.trace_h) {
    ProblemSpec ps = base;
    ps.h = h;
    const SpectralProblem P = make_problem(ps, sym, &v, rc.derivative_eps.back());
    const auto d = det_derivative(P, V, s_tr);
    tn.push_back(d.dD_trace_norm);
    tcsv.row(h, d.dD_trace_norm, d.D_trace_norm);
  }
  const double expo = loglog_slope(rc.trace_h, tn);
  add(rep, at_most("resonances.trace_exponent", 8, std::abs(expo - rc.trace_exponent), rc.trace_exponent_tol,
                   "fitted exponent " + fmt(expo) + " against " + fmt(rc.trace_exponent) +
                       "; Q has h-independent rank, so only the h^-1 prefactor and the resolvent enter",
                   false));
  rep["trace_exponent"] = expo;
  rep["trace_norms"] = tn;

  const SpectralProblem P0 = make_problem(base, sym);
  std::vector<cplx> pts{{-0.3, -5}, {0.0, 1.0}, {0.15, 6.5}, {-0.45, 3.3}};
  const double cr = cauchy_riemann_residual([&](cplx s) { return fredholm_det(P0, s); }, pts);
  add(rep, at_most("resonances.holomorphy", 0, cr, 1e-6, "Cauchy-Riemann residual of F"));

  r.csv["resonances_zeros"] = zcsv.str();
  r.csv["resonances_control"] = ccsv.str();
  r.csv["resonances_derivative"] = dcsv.str();
  r.csv["resonances_trace"] = tcsv.str();
  return r;
}

std::vector<cplx> zeros_of(const json& rrep) {
  std::vector<cplx> z;
  for (const auto& p : rrep.at("zeros")) z.emplace_back(p[0].get<double>(), p[1].get<double>());
  return z;
}

std::vector<double> eps_grid(const ContinuationConfig& cc, double eta0) {
  const double range = cc.eps_fraction * eta0;
  std::vector<double> g;
  for (int j = -cc.steps; j <= cc.steps; ++j) g.push_back(range * j / cc.steps);
  return g;
}

StageResult run_continuation(const Config& cfg, const json& wrep, const json& rrep) {
  const auto& cc = cfg.continuation;
  StageResult r;
  r.stage = Stage::Continuation;
  json& rep = r.report;
  rep["checks"] = json::array();
  const auto grid = eps_grid(cc, wrep.at("eta0").get<double>());
  const auto start = zeros_of(rrep);
  TrackOptions to;
  to.delta = cc.delta;

  Csv csv({"family", "eps", "start_re", "start_im", "multiplicity", "re", "im", "total_count"});
  auto dump = [&](const std::string& name, const TrackReport& tr) {
    for (std::size_t i = 0; i < tr.eps.size(); ++i)
      for (const auto& p : tr.paths)
        csv.row(name, tr.eps[i], p.start.real(), p.start.imag(), p.multiplicity, p.lambda[i].real(),
                p.lambda[i].imag(), tr.total_count[i]);
  };
  auto summary = [](const TrackReport& tr) {
    return json{{"eps_points", tr.eps.size()},
                {"max_step", tr.max_step},
                {"max_second_difference", tr.max_second_difference},
                {"halvings", tr.halvings},
                {"count_min", *std::min_element(tr.total_count.begin(), tr.total_count.end())},
                {"count_max", *std::max_element(tr.total_count.begin(), tr.total_count.end())}};
  };

  // Volume-preserving family: the resonance at 0 stays put.
  const auto vdiv = Perturbation::random(sub_seed(cfg.seed, 600), cfg.weight.perturbation_qmax, true).normalized(32);
  const Family fdiv = make_family(cc.K_max, cc.N_t, cc.h, cc.k0, vdiv);
  const TrackReport tdiv = track(fdiv, grid, start, to);
  double drift0 = 0;
  bool has_zero = false;
  for (const auto& p : tdiv.paths) {
    if (std::abs(p.start) > 1e-3) continue;
    has_zero = true;
    for (cplx l : p.lambda) drift0 = std::max(drift0, std::abs(l));
  }
  add(rep, Check{"continuation.zero_present", 9, has_zero, true, has_zero ? 1.0 : 0.0, 1.0, "a path starts at 0"});
  add(rep, at_most("continuation.volume_preserving", 9, drift0, cc.zero_tol,
                   "max |lambda(eps)| on the path from 0, divergence-free V"));
  dump("divergence_free", tdiv);
  rep["divergence_free"] = summary(tdiv);

  // Generic family: continuous paths with a constant Rouche count.
  const auto vgen = Perturbation::random(sub_seed(cfg.seed, 700), cfg.weight.perturbation_qmax, false).normalized(32);
  const Family fgen = make_family(cc.K_max, cc.N_t, cc.h, cc.k0, vgen);
  const TrackReport tgen = track(fgen, grid, start, to);
  const json sg = summary(tgen);
  add(rep, at_most("continuation.count_constant", 9, sg["count_max"].get<int>() - sg["count_min"].get<int>(), 0,
                   "spread of the Rouche count over eps"));
  add(rep, at_most("continuation.continuity", 9, tgen.max_step, cc.delta / 2,
                   "largest step of a path between neighbouring eps"));
  dump("generic", tgen);
  rep["generic"] = sg;

  // FD slope of the tracked resonance against the implicit-function value at eps = 0.
  const auto it0 = std::find(tgen.eps.begin(), tgen.eps.end(), 0.0);
  if (it0 == tgen.eps.begin() || it0 == tgen.eps.end() || it0 + 1 == tgen.eps.end())
    throw VerificationFailure("continuation: eps grid does not straddle 0");
  const std::size_t i0 = static_cast<std::size_t>(it0 - tgen.eps.begin());
  const ResonancePath* path = nullptr;
  for (const auto& p : tgen.paths)
    if (p.multiplicity == 1 && std::abs(p.start - cplx(0, cc.track_im)) < 1e-3) path = &p;
  if (!path) throw VerificationFailure("continuation: no simple resonance at i*" + fmt(cc.track_im));
  const double de_p = tgen.eps[i0 + 1], de_m = tgen.eps[i0 - 1];
  const cplx fd = (path->lambda[i0 + 1] - path->lambda[i0 - 1]) / (de_p - de_m);
  const cplx imp = implicit_slope(fgen, 0.0, path->lambda[i0]);
  const double slope_err = std::abs(fd - imp) / std::max(std::abs(imp), 1e-12);
  add(rep, at_most("continuation.slope", 9, slope_err, cc.slope_tol, "relative |FD - implicit| at eps = 0"));
  rep["slope"] = {{"fd", {fd.real(), fd.imag()}}, {"implicit", {imp.real(), imp.imag()}}, {"relative_error", slope_err}};
  rep["eps_range"] = {grid.front(), grid.back()};

  r.csv["continuation_paths"] = csv.str();
  return r;
}

StageResult run_projector(const Config& cfg, const SymbolFn& sym, const json& trep, const json& rrep) {
  const auto& cc = cfg.continuation;
  StageResult r;
  r.stage = Stage::Projector;
  json& rep = r.report;
  rep["checks"] = json::array();

  const auto vgen = Perturbation::random(sub_seed(cfg.seed, 700), cfg.weight.perturbation_qmax, false).normalized(32);
  Family fam = make_family(cc.K_max, cc.N_t, cc.h, cc.k0, vgen);
  const double strength = rrep.at("r").get<double>();
  const double k_shift = rrep.at("k_shift").get<double>();
  fam.w = assemble_weight(fam.basis, sym, strength, k_shift).w;
  const Circle circle{cplx(cc.contour_re, cc.contour_im), cc.contour_radius, cc.contour_nodes};
  const double needed = strength_at(trep, cc.contour_re - cc.contour_radius) + std::abs(k_shift);
  add(rep, Check{"projector.strength", 10, strength > needed, true, strength, needed,
                 "r > r_X(Re s) + |k| on the contour"});

  ProjectorOptions po;
  po.nodes = cc.contour_nodes;
  const SpectralProblem P = fam.at(cc.projector_eps);
  const ProjectorReport pr = projector(circle, P, po);
  CountOptions co;
  const ZeroCount zc = count_zeros(circle, [&](cplx s) { return fredholm_det(P, s); }, co);
  add(rep, at_most("projector.idempotency", 10, pr.idempotency, cc.idempotency_tol, "||Pi^2 - Pi||_F"));
  add(rep, Check{"projector.rank", 10, pr.rank == zc.count, true, double(pr.rank), double(zc.count),
                 "rank against the Rouche count"});
  add(rep, at_most("projector.trace", 10, pr.trace_defect, cc.idempotency_tol, "|tr Pi - rank|"));
  add(rep, at_most("projector.node_stability", 10, pr.node_change, 1e-8, "||Pi_n - Pi_{n/2}||_F"));

  const ProjectorDerivativeReport dr = projector_derivative_check(fam, cc.projector_eps, circle, cc.fd_steps, po);
  const double fd_best = *std::min_element(dr.fd_rel_error.begin(), dr.fd_rel_error.end());
  add(rep, at_most("projector.derivative_identity", 10, dr.identity_defect, cc.identity_tol,
                   "||dPi - Pi dPi - dPi Pi||_F"));
  add(rep, at_most("projector.derivative_fd", 10, fd_best, cc.fd_tol, "relative error of the best FD step"));
  if (dr.projector_rank == 1)
    add(rep, at_most("projector.derivative_rank", 10, dr.numerical_rank, 2, "numerical rank of dPi, rank-1 Pi"));

  Csv csv({"operator", "index", "singular_value"});
  for (int i = 0; i < std::min<int>(8, pr.singular_values.size()); ++i) csv.row("Pi", i, pr.singular_values(i));
  for (int i = 0; i < std::min<int>(8, dr.singular_values.size()); ++i) csv.row("dPi", i, dr.singular_values(i));
  r.csv["projector_singular_values"] = csv.str();

  rep["projector"] = {{"rank", pr.rank},           {"count", zc.count},         {"norm", pr.norm},
                      {"idempotency", pr.idempotency}, {"trace_defect", pr.trace_defect},
                      {"node_change", pr.node_change}, {"nodes", pr.nodes}};
  rep["derivative"] = {{"norm", dr.norm},
                       {"fd_step", dr.fd_step},
                       {"fd_rel_error", dr.fd_rel_error},
                       {"identity_defect", dr.identity_defect},
                       {"numerical_rank", dr.numerical_rank},
                       {"projector_rank", dr.projector_rank}};
  rep["r"] = strength;
  return r;
}

}  // namespace

namespace {
std::vector<Stage> upstream(Stage s) {
  switch (s) {
    case Stage::Splitting: return {};
    case Stage::Weight: return {Stage::Splitting};
    case Stage::Threshold: return {Stage::Weight};
    case Stage::Resonances: return {Stage::Weight, Stage::Threshold};
    case Stage::Continuation: return {Stage::Weight, Stage::Resonances};
    case Stage::Projector: return {Stage::Weight, Stage::Threshold, Stage::Resonances};
  }
  return {};
}

json config_subtree(const Config& cfg, Stage s) {
  const json c = to_json(cfg);
  switch (s) {
    case Stage::Splitting: return c["splitting"];
    case Stage::Weight: return c["weight"];
    case Stage::Threshold: return c["threshold"];
    case Stage::Resonances: return c["resonances"];
    case Stage::Continuation:
    case Stage::Projector: return c["continuation"];
  }
  return {};
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json payload_json(const StageResult& r) { return json{{"report", r.report}, {"csv", r.csv}, {"seconds", r.seconds}}; }
}  // namespace

Pipeline::Pipeline(Config cfg, std::filesystem::path out_dir, bool use_cache)
    : cfg_(std::move(cfg)), out_(std::move(out_dir)), use_cache_(use_cache), ctx_(std::make_unique<Context>(cfg_)) {
  std::filesystem::create_directories(out_ / "cache");
}

Pipeline::~Pipeline() = default;

std::string Pipeline::stage_key(Stage s) {
  json k{{"version", kCacheVersion},
         {"stage", stage_name(s)},
         {"seed", cfg_.seed},
         {"config", config_subtree(cfg_, s)},
         {"upstream", json::array()}};
  for (Stage u : upstream(s)) k["upstream"].push_back(run(u).key);
  return sha256_hex(k.dump());
}

bool Pipeline::load_cache(Stage s, const std::string& key, StageResult& out) {
  const auto path = out_ / "cache" / (stage_name(s) + ".cbor");
  const std::string name = stage_name(s);
  if (!std::filesystem::exists(path)) {
    log_.push_back(name + ": no cache");
    return false;
  }
  try {
    const std::string bytes = read_file(path);
    const json c = json::from_cbor(bytes);
    if (c.at("key").get<std::string>() != key) {
      log_.push_back(name + ": configuration hash changed, recomputed");
      return false;
    }
    const auto& bin = c.at("payload").get_binary();
    const std::string payload(bin.begin(), bin.end());
    if (sha256_hex(payload) != c.at("checksum").get<std::string>()) {
      log_.push_back(name + ": checksum mismatch, recomputed");
      return false;
    }
    const json p = json::from_cbor(payload);
    out.stage = s;
    out.report = p.at("report");
    out.csv = p.at("csv").get<std::map<std::string, std::string>>();
    out.seconds = p.at("seconds").get<double>();
    out.key = key;
    out.from_cache = true;
    log_.push_back(name + ": cache hit");
    return true;
  } catch (const json::exception& e) {
    log_.push_back(name + ": unreadable cache (" + std::string(e.what()) + "), recomputed");
    return false;
  }
}

void Pipeline::store(const StageResult& r) const {
  const auto bytes = json::to_cbor(payload_json(r));
  const std::string payload(bytes.begin(), bytes.end());
  const json c{{"stage", stage_name(r.stage)},
               {"key", r.key},
               {"checksum", sha256_hex(payload)},
               {"payload", json::binary(std::vector<std::uint8_t>(bytes.begin(), bytes.end()))}};
  const auto cbor = json::to_cbor(c);
  write_file(out_ / "cache" / (stage_name(r.stage) + ".cbor"), std::string(cbor.begin(), cbor.end()));
}

StageResult Pipeline::compute(Stage s) {
  Context& c = *ctx_;
  auto report = [&](Stage u) -> const json& { return done_.at(u).report; };
  switch (s) {
    case Stage::Splitting: {
      const auto t0 = std::chrono::steady_clock::now();
      const DualSplitting& d = c.dual_splitting();
      return run_splitting(cfg_, c.flow(), d, elapsed(t0));
    }
    case Stage::Weight: return run_weight(cfg_, c.flow(), c.dual_splitting());
    case Stage::Threshold: return run_threshold(cfg_, c.flow(), c.dual_splitting(), report(Stage::Weight));
    case Stage::Resonances:
      return run_resonances(cfg_, escape_symbol(c.weight_function(report(Stage::Weight))), report(Stage::Threshold));
    case Stage::Continuation: return run_continuation(cfg_, report(Stage::Weight), report(Stage::Resonances));
    case Stage::Projector:
      return run_projector(cfg_, escape_symbol(c.weight_function(report(Stage::Weight))),
                           report(Stage::Threshold), report(Stage::Resonances));
  }
  throw std::logic_error("unknown stage");
}

const StageResult* Pipeline::result(Stage s) const {
  const auto it = done_.find(s);
  return it == done_.end() ? nullptr : &it->second;
}

const StageResult& Pipeline::run(Stage s) {
  if (auto it = done_.find(s); it != done_.end()) return it->second;
  const std::string name = stage_name(s);
  for (Stage u : upstream(s)) {
    if (run(u).failed())
      throw VerificationFailure(name + ": upstream stage " + stage_name(u) + " failed a gating check");
  }
  const std::string key = stage_key(s);

  StageResult r;
  if (!(use_cache_ && load_cache(s, key, r))) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r = compute(s);
    } catch (const std::exception& e) {
      const json err{{"stage", name}, {"key", key}, {"error", e.what()}};
      write_file(out_ / (name + ".json"), err.dump(2) + "\n");
      throw;
    }
    r.stage = s;
    r.key = key;
    r.seconds = elapsed(t0);
    store(r);
  }

  json doc = r.report;
  doc["stage"] = name;
  doc["key"] = key;
  doc["from_cache"] = r.from_cache;
  doc["seconds"] = r.seconds;
  write_file(out_ / (name + ".json"), doc.dump(2) + "\n");
  for (const auto& [stem, contents] : r.csv) write_file(out_ / (stem + ".csv"), contents);
  return done_.emplace(s, std::move(r)).first->second;
}

}  // namespace anosov
