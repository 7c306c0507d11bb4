// Runs the default pipeline twice without cache and prints one line per
// acceptance criterion, followed by the individual checks behind it.
// Usage: acceptance [output_dir]
#include "anosov/errors.hpp"
#include "anosov/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace anosov;
namespace fs = std::filesystem;

namespace {

const char* kTitles[] = {"",
                         "splitting: eigenvector alignment, beta, runtime",
                         "duality: annihilation, pairing, invariance",
                         "weight: monotonicity, support bound, dichotomy",
                         "perturbations: random V pass, adversarial V fails",
                         "threshold: slope formula, uniform family bound",
                         "resonances: zero set, simplicity, stability, runtime",
                         "control constant stable in h",
                         "determinant derivative: trace formula, h scaling",
                         "continuation: fixed zero, Rouche count, slope",
                         "projectors: idempotency, rank, derivative",
                         "reproducibility: identical CSV across runs"};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Outcome {
  std::vector<Check> checks;
  std::vector<std::string> errors;
};

// Runs every stage, recording exceptions instead of stopping.
std::map<Stage, std::string> run_all(Pipeline& p) {
  std::map<Stage, std::string> errors;
  for (Stage s : all_stages()) {
    try {
      p.run(s);
    } catch (const std::exception& e) {
      errors[s] = e.what();
    }
  }
  return errors;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path base = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
  fs::remove_all(base);
  const auto t0 = std::chrono::steady_clock::now();
  const Config cfg;

  Pipeline first(cfg, base / "run1", false);
  const auto errors = run_all(first);
  const double first_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::map<int, Outcome> by;
  const std::map<Stage, std::vector<int>> stage_criteria{
      {Stage::Splitting, {1, 2}},  {Stage::Weight, {3, 4}},        {Stage::Threshold, {5}},
      {Stage::Resonances, {6, 7, 8}}, {Stage::Continuation, {9}}, {Stage::Projector, {10}}};
  for (Stage s : all_stages()) {
    if (const auto it = errors.find(s); it != errors.end()) {
      for (int c : stage_criteria.at(s)) by[c].errors.push_back(stage_name(s) + ": " + it->second);
      continue;
    }
    for (const auto& c : first.result(s)->checks())
      if (c.criterion > 0) by[c.criterion].checks.push_back(c);
  }

  // Second run for reproducibility, compared file by file.
  Pipeline second(cfg, base / "run2", false);
  const auto errors2 = run_all(second);
  int compared = 0, differing = 0;
  for (Stage s : all_stages()) {
    const auto* r = first.result(s);
    if (!r) continue;
    for (const auto& [stem, contents] : r->csv) {
      ++compared;
      const std::string a = slurp(base / "run1" / (stem + ".csv")), b = slurp(base / "run2" / (stem + ".csv"));
      if (a != b || a != contents) {
        ++differing;
        by[11].errors.push_back(stem + ".csv differs");
      }
    }
  }
  if (errors2.size() != errors.size()) by[11].errors.push_back("second run raised a different set of errors");
  by[11].checks.push_back(Check{"reproducibility.csv", 11, compared > 0 && differing == 0, true,
                                double(differing), 0, std::to_string(compared) + " files compared"});
  const double total_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  int failed = 0;
  for (int c = 1; c <= 11; ++c) {
    const Outcome& o = by[c];
    bool pass = o.errors.empty() && !o.checks.empty();
    for (const auto& ch : o.checks) pass = pass && ch.pass;
    failed += pass ? 0 : 1;
    std::printf("criterion %2d %s  %s\n", c, pass ? "PASS" : "FAIL", kTitles[c]);
    for (const auto& ch : o.checks)
      std::printf("    %-4s %-40s value %-14.6g limit %.6g%s\n", ch.pass ? "ok" : "bad", ch.id.c_str(), ch.value,
                  ch.limit, ch.gating ? "" : " (non-gating)");
    for (const auto& e : o.errors) std::printf("    error: %s\n", e.c_str());
  }
  std::printf("pipeline %.1f s (target 900 s), acceptance total %.1f s\n", first_s, total_s);
  std::printf("%d of 11 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
