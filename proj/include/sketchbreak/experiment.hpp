#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "sketchbreak/applications.hpp"
#include "sketchbreak/attack.hpp"

namespace sketchbreak {

using json = nlohmann::json;

enum class Scenario { kGapNormAttack, kLpAttack, kSparseRecoveryAttack, kChi2Table, kLemmaValidation };
const char* to_string(Scenario s);
Scenario parse_scenario(const std::string& s);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  Scenario scenario = Scenario::kGapNormAttack;
  json params = json::object();
  std::string output_path;  // prefix; empty writes nothing
  int trials = 1;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool diagnostics = false;
  std::vector<std::string> oracle_cmd;

  // Reads keys trials, seed, output, diagnostics out of the document; the rest
  // stays in params.
  static ExperimentConfig from_json(const json& doc);
  void validate() const;
};

// Attack parameters shared by the attack scenarios.
AttackConfig attack_config_from(const json& params);
json to_json(const AttackConfig& cfg);
json to_json(const CellRecord& c);
json to_json(const FailureCertificate& c);
json to_json(const LpViolation& v);
json to_json(const RecoveryViolation& v);

struct TrialRecord {
  int trial = 0;
  std::uint64_t seed = 0;
  std::string outcome;  // certificate | violation | exhausted | ...
  bool success = false;
  int rounds = 0;
  long queries = 0;
  double wall_seconds = 0.0;
  json detail = json::object();
  std::vector<json> trace;  // one object per (round, sigma^2) cell
};

struct CampaignSummary {
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;
  double median_rounds = 0.0;
  double median_queries = 0.0;
  long total_queries = 0;
};

struct CampaignResult {
  std::vector<TrialRecord> records;
  CampaignSummary summary;
  std::vector<std::vector<double>> table;  // chi2-table rows (s, Delta(s))
  json report;                             // lemma-validation report
};

// One trial of an attack scenario; deterministic in (params, seed).
TrialRecord run_trial(const ExperimentConfig& cfg, int trial);

// Runs cfg.trials trials on cfg.jobs threads. With an output prefix, trials are
// appended to <prefix>.trace.jsonl and <prefix>.trials.jsonl in trial order as
// they complete, and <prefix>.summary.csv is written at the end. Setting *stop
// lets running trials finish and skips the rest.
CampaignResult run_campaign(const ExperimentConfig& cfg, const std::atomic<bool>* stop = nullptr);

CampaignSummary summarize(const std::vector<TrialRecord>& records);

std::string trace_jsonl(const TrialRecord& record);
std::string trial_json(const TrialRecord& record);
std::string summary_csv(const CampaignSummary& s);
std::string table_csv(const std::vector<std::vector<double>>& rows);

std::vector<std::vector<double>> chi2_table(int d, double B, int points, double s_max);

struct LemmaCheck {
  std::string name;
  bool pass = false;
  double margin = 0.0;  // positive means satisfied with room
  std::string detail;
};

struct LemmaReport {
  std::vector<LemmaCheck> checks;
  bool all_pass() const;
  json to_json() const;
};

struct LemmaValidationOptions {
  int d_negative = 20;
  double B_negative = 4.0;
  int grid_points = 1000;
  int d_stau = 64;
  double B_stau = 8.0;
  int ks_samples = 10000;
  int coupling_trials = 100000;
  int spike_trials = 100;
  std::uint64_t seed = 7;
  // test fixture hook: scales the density used in the normalization check
  double density_scale = 1.0;
};

// The groups validate_lemmas runs, in report order.
std::vector<LemmaCheck> chi2_suite_checks(const LemmaValidationOptions& opt);
std::vector<LemmaCheck> negative_lemma_checks(const LemmaValidationOptions& opt);
std::vector<LemmaCheck> stau_checks(const LemmaValidationOptions& opt);
LemmaCheck suffstat_check(const LemmaValidationOptions& opt);
LemmaCheck tv_coupling_check(const LemmaValidationOptions& opt);
LemmaCheck planted_spike_check(const LemmaValidationOptions& opt);

LemmaReport validate_lemmas(const LemmaValidationOptions& opt);
LemmaValidationOptions lemma_options_from(const json& params);

}  // namespace sketchbreak
