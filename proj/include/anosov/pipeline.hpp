// Stage runner: splitting -> weight -> threshold -> resonances -> continuation
// -> projector. Each stage writes <stage>.json, its CSV tables and a cache file
// cache/<stage>.cbor holding the payload, the stage key (hash of the relevant
// configuration and of the upstream keys) and a checksum of the payload.
#pragma once

#include "anosov/config.hpp"
#include "anosov/spectra.hpp"
#include "anosov/weight.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace anosov {

enum class Stage { Splitting, Weight, Threshold, Resonances, Continuation, Projector };

const std::vector<Stage>& all_stages();
std::string stage_name(Stage s);
/// Throws std::invalid_argument for an unknown name.
Stage stage_from_name(const std::string& name);

struct Check {
  std::string id;
  int criterion = 0;   // acceptance criterion it belongs to, 0 for none
  bool pass = false;
  bool gating = true;  // a failing gating check halts the pipeline
  double value = 0;
  double limit = 0;
  std::string detail;
};

struct StageResult {
  Stage stage = Stage::Splitting;
  nlohmann::json report;                   // constants, diagnostics, "checks"
  std::map<std::string, std::string> csv;  // file stem -> contents
  std::string key;
  bool from_cache = false;
  double seconds = 0;                      // compute time of the run that produced the payload

  std::vector<Check> checks() const;
  bool failed() const;  // some gating check failed
};

/// bold-m at (x = 0, t) on the covector 2 pi k.dx, memoised. The cat-suspension
/// weight does not depend on x.
SymbolFn escape_symbol(std::shared_ptr<const WeightFunction> w);

/// SHA-256 as lowercase hex.
std::string sha256_hex(const std::string& bytes);

class Pipeline {
 public:
  Pipeline(Config cfg, std::filesystem::path out_dir, bool use_cache = true);
  ~Pipeline();

  /// Runs `s` after its upstream stages. Upstream stages with a failing gating
  /// check raise VerificationFailure. Numerical or verification exceptions
  /// inside a stage are recorded in <stage>.json and rethrown.
  const StageResult& run(Stage s);

  /// Result of a stage that already ran in this pipeline, else nullptr.
  const StageResult* result(Stage s) const;

  const Config& config() const { return cfg_; }
  const std::filesystem::path& out_dir() const { return out_; }
  /// Cache events, one line each ("weight: cache hit", "weight: checksum mismatch, recomputed", ...).
  const std::vector<std::string>& log() const { return log_; }

 private:
  struct Context;
  std::string stage_key(Stage s);
  StageResult compute(Stage s);
  bool load_cache(Stage s, const std::string& key, StageResult& out);
  void store(const StageResult& r) const;

  Config cfg_;
  std::filesystem::path out_;
  bool use_cache_;
  std::map<Stage, StageResult> done_;
  std::vector<std::string> log_;
  std::unique_ptr<Context> ctx_;
};

}  // namespace anosov
