#include <CLI11.hpp>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "sketchbreak/experiment.hpp"

using namespace sketchbreak;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

json load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::uint64_t parse_seed(const std::string& s, const char* where) {
  try {
    size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(std::string(where) + ": not a non-negative integer: " + s);
}

struct Options {
  std::string config;
  std::string output;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string oracle_cmd;
  bool diagnostics = false;
};

int run(Scenario scenario, const Options& o) {
  json doc = o.config.empty() ? json{{"scenario", to_string(scenario)}} : load_config(o.config);
  if (doc.is_object() && !doc.contains("scenario")) doc["scenario"] = to_string(scenario);
  ExperimentConfig cfg = ExperimentConfig::from_json(doc);
  if (cfg.scenario != scenario) {
    throw ConfigError(std::string("scenario: config says ") + to_string(cfg.scenario) +
                      " but the subcommand runs " + to_string(scenario));
  }
  if (const char* env = std::getenv("SKETCHBREAK_SEED"); env && *env) cfg.seed = parse_seed(env, "SKETCHBREAK_SEED");
  if (o.seed) cfg.seed = *o.seed;
  cfg.jobs = o.jobs;
  if (o.diagnostics) cfg.diagnostics = true;
  if (!o.output.empty()) cfg.output_path = o.output;
  if (!o.oracle_cmd.empty()) cfg.oracle_cmd = split_command(o.oracle_cmd);
  cfg.validate();

  auto res = run_campaign(cfg, &g_stop);
  switch (scenario) {
    case Scenario::kChi2Table:
      if (cfg.output_path.empty()) std::cout << table_csv(res.table);
      else std::cerr << "wrote " << cfg.output_path << ".csv\n";
      break;
    case Scenario::kLemmaValidation:
      for (const auto& c : res.report["checks"]) {
        std::cout << (c["pass"].get<bool>() ? "PASS " : "FAIL ") << c["name"].get<std::string>()
                  << " margin=" << c["margin"].get<double>() << " (" << c["detail"].get<std::string>() << ")\n";
      }
      break;
    default:
      std::cout << summary_csv(res.summary);
      if (g_stop) {
        std::cerr << "interrupted after " << res.records.size() << " trials\n";
        return 130;
      }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive attacks on linear sketches"};
  app.require_subcommand(1);
  Options opt;
  std::string seed_text;
  const std::pair<const char*, Scenario> commands[] = {
      {"attack", Scenario::kGapNormAttack},
      {"lp", Scenario::kLpAttack},
      {"recovery", Scenario::kSparseRecoveryAttack},
      {"chi2-table", Scenario::kChi2Table},
      {"validate", Scenario::kLemmaValidation},
  };
  const char* help[] = {"run the attack against a GapNorm oracle",
                        "attack an lp-norm estimator",
                        "attack a sparse-recovery sketch",
                        "tabulate Delta(s)",
                        "run the numeric lemma checks"};
  std::vector<CLI::App*> subs;
  for (size_t i = 0; i < std::size(commands); ++i) {
    auto* sub = app.add_subcommand(commands[i].first, help[i]);
    sub->add_option("--config", opt.config, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--output", opt.output, "output prefix (overrides the config)");
    sub->add_option("--seed", seed_text, "base seed (overrides config and SKETCHBREAK_SEED)");
    sub->add_option("--jobs", opt.jobs, "concurrent trials")->check(CLI::PositiveNumber);
    sub->add_option("--oracle-cmd", opt.oracle_cmd, "external oracle command line");
    sub->add_flag("--diagnostics", opt.diagnostics, "record alignment diagnostics");
    subs.push_back(sub);
  }
  CLI11_PARSE(app, argc, argv);

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  try {
    if (!seed_text.empty()) opt.seed = parse_seed(seed_text, "--seed");
    for (size_t i = 0; i < subs.size(); ++i) {
      if (subs[i]->parsed()) return run(commands[i].second, opt);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
