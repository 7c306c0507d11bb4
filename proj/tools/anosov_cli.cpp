// Command-line driver: one subcommand per stage plus `pipeline` for all of them.
// Exit codes: 0 success, 1 usage or configuration error, 2 verification failure,
// 3 numerical failure.
#include "anosov/errors.hpp"
#include "anosov/pipeline.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>

namespace {

void print_result(const anosov::StageResult& r) {
  std::printf("%s: %s in %.1f s%s\n", anosov::stage_name(r.stage).c_str(), r.failed() ? "FAILED" : "ok", r.seconds,
              r.from_cache ? " (cached)" : "");
  for (const auto& c : r.checks())
    std::printf("  %-4s %-42s %-14.6g limit %-12.6g%s\n", c.pass ? "pass" : (c.gating ? "FAIL" : "warn"),
                c.id.c_str(), c.value, c.limit, c.gating ? "" : " (non-gating)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anosov flow resonance pipeline"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  std::string config_path, out_dir = "out";
  bool no_cache = false;
  app.add_option("-c,--config", config_path, "JSON configuration file (defaults apply when omitted)")
      ->check(CLI::ExistingFile);
  app.add_option("-o,--out", out_dir, "output directory");
  app.add_flag("--no-cache", no_cache, "ignore cached stage results");
  bool print_config = false;
  app.add_flag("--print-config", print_config, "print the effective configuration and exit");

  const std::vector<std::pair<std::string, std::vector<anosov::Stage>>> commands{
      {"splitting", {anosov::Stage::Splitting}},
      {"weight", {anosov::Stage::Weight}},
      {"threshold", {anosov::Stage::Threshold}},
      {"resonances", {anosov::Stage::Resonances}},
      {"continue", {anosov::Stage::Continuation}},
      {"projector", {anosov::Stage::Projector}},
      {"pipeline", anosov::all_stages()},
  };
  for (const auto& [name, stages] : commands) {
    const std::string help = name == "pipeline" ? "run every stage" : "run the " + name + " stage and its inputs";
    app.add_subcommand(name, help);
  }
  CLI11_PARSE(app, argc, argv);

  std::vector<anosov::Stage> stages;
  for (const auto& [name, st] : commands)
    if (app.got_subcommand(name)) stages = st;

  try {
    const anosov::Config cfg = config_path.empty() ? anosov::parse_config(nlohmann::json::object())
                                                   : anosov::load_config(config_path);
    if (print_config) {
      std::printf("%s\n", anosov::to_json(cfg).dump(2).c_str());
      return 0;
    }
    anosov::Pipeline pipe(cfg, out_dir, !no_cache);
    bool failed = false;
    for (anosov::Stage s : stages)
      if (pipe.run(s).failed()) {
        failed = true;
        break;
      }
    for (anosov::Stage s : anosov::all_stages())
      if (const auto* r = pipe.result(s)) print_result(*r);
    for (const auto& line : pipe.log()) std::printf("cache: %s\n", line.c_str());
    std::printf("outputs in %s\n", out_dir.c_str());
    return failed ? 2 : 0;
  } catch (const anosov::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const anosov::VerificationFailure& e) {
    std::cerr << "verification failure: " << e.what() << "\n";
    return 2;
  } catch (const anosov::NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
}
