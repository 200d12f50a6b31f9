#include "sketchbreak/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "sketchbreak/chi2.hpp"
#include "sketchbreak/stats.hpp"

namespace sketchbreak {

namespace {

const std::set<std::string> kCommonKeys = {"trials", "seed", "diagnostics"};

const std::set<std::string> kAttackKeys = {
    "m",           "r_bound",  "epsilon",        "grid_points",  "delta_gain",
    "delta_multiplier",        "min_positive_fraction",        "max_rounds",
    "noise_var",   "rule",     "z",              "pool",         "verify_samples",
    "verify_level", "max_queries"};

std::set<std::string> allowed_keys(Scenario s) {
  std::set<std::string> keys = kCommonKeys;
  auto add = [&](std::initializer_list<const char*> more) {
    for (auto k : more) keys.insert(k);
  };
  switch (s) {
    case Scenario::kGapNormAttack:
      keys.insert(kAttackKeys.begin(), kAttackKeys.end());
      add({"n", "r", "B", "q", "answer_noise", "oracle", "calibration_max_error", "calibration_probes"});
      break;
    case Scenario::kLpAttack:
      keys.insert(kAttackKeys.begin(), kAttackKeys.end());
      add({"n", "r", "p", "C", "budget", "B_factor", "extract_samples"});
      break;
    case Scenario::kSparseRecoveryAttack:
      keys.insert(kAttackKeys.begin(), kAttackKeys.end());
      add({"n", "r", "k", "C", "kappa", "gamma", "probes", "budget", "extract_samples", "depth"});
      break;
    case Scenario::kChi2Table:
      add({"d", "B", "points", "s_max"});
      break;
    case Scenario::kLemmaValidation:
      add({"d_negative", "B_negative", "grid_points", "d_stau", "B_stau", "ks_samples",
           "coupling_trials", "spike_trials", "density_scale"});
      break;
  }
  return keys;
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw ConfigError("parameters." + key + ": " + why);
}

double num(const json& p, const std::string& k, double def) {
  if (!p.contains(k)) return def;
  const auto& v = p.at(k);
  if (!v.is_number()) bad(k, "expected a number");
  return v.get<double>();
}

long integer(const json& p, const std::string& k, long def) {
  if (!p.contains(k)) return def;
  const auto& v = p.at(k);
  if (v.is_number_integer()) return v.get<long>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::floor(d) == d && std::abs(d) < 9e15) return static_cast<long>(d);
  }
  bad(k, "expected an integer");
}

bool boolean(const json& p, const std::string& k, bool def) {
  if (!p.contains(k)) return def;
  if (!p.at(k).is_boolean()) bad(k, "expected true or false");
  return p.at(k).get<bool>();
}

std::string text(const json& p, const std::string& k, const std::string& def) {
  if (!p.contains(k)) return def;
  if (!p.at(k).is_string()) bad(k, "expected a string");
  return p.at(k).get<std::string>();
}

double lp_exponent(const json& p) {
  if (p.contains("p") && p.at("p").is_string()) {
    const auto s = p.at("p").get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    bad("p", "expected a number or \"inf\"");
  }
  return num(p, "p", 2.0);
}

json basis_json(const Subspace& v) {
  json cols = json::array();
  for (int j = 0; j < v.dim(); ++j) {
    json c = json::array();
    for (int i = 0; i < v.ambient_dim(); ++i) c.push_back(v.basis()(i, j));
    cols.push_back(std::move(c));
  }
  return cols;
}

json vec_json(const Vec& x) {
  json a = json::array();
  for (int i = 0; i < x.size(); ++i) a.push_back(x(i));
  return a;
}

struct GapNormSetup {
  int n = 64;
  int r = 16;
  double B = 8.0;
  int q = 1;
  double answer_noise = 0.0;
  std::string oracle = "gapnorm";
  GapNormOptions gap;
  AttackConfig attack;
};

GapNormSetup gapnorm_setup(const json& p) {
  GapNormSetup s;
  s.n = static_cast<int>(integer(p, "n", 64));
  s.r = static_cast<int>(integer(p, "r", 16));
  s.B = num(p, "B", 8.0);
  s.q = static_cast<int>(integer(p, "q", 1));
  s.answer_noise = num(p, "answer_noise", 0.0);
  s.oracle = text(p, "oracle", "gapnorm");
  s.gap.max_error = num(p, "calibration_max_error", s.gap.max_error);
  s.gap.calibration_probes = static_cast<int>(integer(p, "calibration_probes", s.gap.calibration_probes));
  if (s.n < 2) bad("n", "must be >= 2");
  if (s.oracle != "gapnorm" && s.oracle != "fullspace") bad("oracle", "must be \"gapnorm\" or \"fullspace\"");
  if (s.oracle == "fullspace") {
    if (p.contains("r") && s.r != s.n) bad("r", "must equal n for the full-space oracle");
    s.r = s.n;
  } else if (s.r < 1 || s.r >= s.n) {
    bad("r", "must lie in [1, n)");
  }
  if (!(s.B >= 8)) bad("B", "must be >= 8");
  if (s.q < 1 || s.q % 2 == 0) bad("q", "must be odd and >= 1");
  if (!(s.answer_noise >= 0 && s.answer_noise < 0.5)) bad("answer_noise", "must lie in [0, 0.5)");
  if (!(s.gap.max_error > 0 && s.gap.max_error < 0.5)) bad("calibration_max_error", "must lie in (0, 0.5)");
  if (s.gap.calibration_probes < 0) bad("calibration_probes", "must be >= 0");
  json a = p;
  if (!a.contains("epsilon") && s.q > 1) a["epsilon"] = 0.25;
  if (!a.contains("r_bound")) a["r_bound"] = s.r;
  a["n"] = s.n;
  a["B"] = s.B;
  s.attack = attack_config_from(a);
  s.attack.blocks = s.q;
  return s;
}

struct LpSetup {
  int n = 64;
  int r = 16;
  double p = 2.0;
  double C = 4.0;
  long budget = 10000000;
  LpAttackOptions opt;
};

LpSetup lp_setup(const json& p) {
  LpSetup s;
  s.n = static_cast<int>(integer(p, "n", 64));
  s.r = static_cast<int>(integer(p, "r", 16));
  s.p = lp_exponent(p);
  s.C = num(p, "C", 4.0);
  s.budget = integer(p, "budget", s.budget);
  s.opt.B_factor = num(p, "B_factor", s.opt.B_factor);
  s.opt.extract_samples = static_cast<int>(integer(p, "extract_samples", s.opt.extract_samples));
  if (s.n < 2) bad("n", "must be >= 2");
  if (s.r < 1 || s.r > s.n) bad("r", "must lie in [1, n]");
  if (!(s.p >= 1)) bad("p", "must be >= 1");
  if (!(s.C > 1)) bad("C", "must exceed 1");
  if (!(s.opt.B_factor * s.C * s.C >= 8)) bad("B_factor", "B_factor * C^2 must be >= 8");
  if (s.opt.extract_samples < 1) bad("extract_samples", "must be >= 1");
  if (s.budget <= s.opt.extract_samples) bad("budget", "must exceed extract_samples");
  json a = p;
  a["n"] = s.n;
  a["B"] = s.opt.B_factor * s.C * s.C;
  if (!a.contains("r_bound")) a["r_bound"] = s.r;
  s.opt.attack = attack_config_from(a);
  return s;
}

struct SparseSetup {
  int n = 256;
  int r = 24;
  int k = 1;
  double C = 4.0;
  RecoveryOptions rec;
  SparseAttackOptions opt;
};

SparseSetup sparse_setup(const json& p) {
  SparseSetup s;
  s.n = static_cast<int>(integer(p, "n", 256));
  s.r = static_cast<int>(integer(p, "r", 24));
  s.k = static_cast<int>(integer(p, "k", 1));
  s.C = num(p, "C", 4.0);
  s.rec.depth = static_cast<int>(integer(p, "depth", s.rec.depth));
  s.opt.kappa = num(p, "kappa", s.opt.kappa);
  s.opt.gamma = num(p, "gamma", s.opt.gamma);
  s.opt.probes = static_cast<int>(integer(p, "probes", s.opt.probes));
  s.opt.budget = integer(p, "budget", s.opt.budget);
  s.opt.extract_samples = static_cast<int>(integer(p, "extract_samples", s.opt.extract_samples));
  if (s.n < 2) bad("n", "must be >= 2");
  if (s.k < 1 || s.k > s.n / 2) bad("k", "must lie in [1, n/2]");
  if (s.rec.depth < 1) bad("depth", "must be >= 1");
  if (s.r < 1 || s.r >= s.n) bad("r", "must lie in [1, n)");
  if (s.r % s.rec.depth != 0) bad("r", "must be a multiple of depth");
  if (!(s.C > 1)) bad("C", "must exceed 1");
  if (!(s.opt.kappa > 0 && s.opt.kappa < s.C)) bad("kappa", "must lie in (0, C)");
  if (!(s.opt.gamma > 0)) bad("gamma", "must be positive");
  if (!(s.opt.gamma * s.opt.gamma * s.n >= 8)) bad("gamma", "gamma^2 n must be >= 8");
  if (s.opt.probes < 0) bad("probes", "must be >= 0");
  if (s.opt.extract_samples < 1) bad("extract_samples", "must be >= 1");
  if (s.opt.budget <= static_cast<long>(s.opt.extract_samples) * (s.opt.probes + 1)) {
    bad("budget", "must exceed extract_samples * (probes + 1)");
  }
  json a = p;
  a["n"] = s.n;
  a["B"] = s.opt.gamma * s.opt.gamma * s.n;
  if (!a.contains("r_bound")) a["r_bound"] = s.r;
  if (!a.contains("m")) a["m"] = 1000;
  s.opt.attack = attack_config_from(a);
  return s;
}

struct TableSetup {
  int d = 20;
  double B = 4.0;
  int points = 400;
  double s_max = 40.0;
};

TableSetup table_setup(const json& p) {
  TableSetup t;
  t.d = static_cast<int>(integer(p, "d", 20));
  t.B = num(p, "B", 4.0);
  t.points = static_cast<int>(integer(p, "points", 400));
  t.s_max = num(p, "s_max", t.B * t.d / 2.0);
  if (t.d < 5) bad("d", "must be >= 5");
  if (!(t.B > 1)) bad("B", "must exceed 1");
  if (t.points < 1) bad("points", "must be >= 1");
  if (!(t.s_max > 0)) bad("s_max", "must be positive");
  return t;
}

void fill_attack_outcome(TrialRecord& rec, const AttackResult& res, bool diagnostics) {
  rec.rounds = res.rounds;
  for (const auto& c : res.trace) {
    json j = to_json(c);
    j["trial"] = rec.trial;
    if (!diagnostics) j.erase("proj_onto_A");
    rec.trace.push_back(std::move(j));
  }
  if (diagnostics) {
    rec.detail["accepted_alignment"] = res.accepted_alignment;
    if (!res.accepted_alignment.empty()) rec.detail["median_alignment"] = median(res.accepted_alignment);
  }
  rec.detail["final_dim_v"] = res.final_v.dim();
  if (res.certificate) rec.detail["certificate"] = to_json(*res.certificate);
}

AlignmentProbe probe_for(const SketchOracle& o, bool diagnostics) {
  if (!diagnostics) return nullptr;
  auto a = o.reveal_rowspace();
  return a ? alignment_probe(*a) : nullptr;
}

TrialRecord gapnorm_trial(const ExperimentConfig& cfg, int trial, std::uint64_t seed) {
  const auto s = gapnorm_setup(cfg.params);
  TrialRecord rec;
  Rng sk = stream(seed, Stream::kSketch);
  BinaryOraclePtr base;
  if (!cfg.oracle_cmd.empty()) {
    base = std::make_shared<ProcessOracle>(s.n, cfg.oracle_cmd);
  } else if (s.oracle == "fullspace") {
    base = make_fullspace_oracle(s.n, s.B);
  } else {
    base = make_gapnorm_oracle(s.n, s.r, s.B, sk, s.gap);
  }
  BinaryOraclePtr single = base;
  if (s.answer_noise > 0) single = wrap_randomized(base, s.answer_noise, stream(seed, Stream::kOracle));
  BinaryOraclePtr top = s.q > 1 ? BinaryOraclePtr(amplify_majority(single, s.q)) : single;

  AttackConfig ac = s.attack;
  ac.seed = seed;
  auto res = run_attack(*top, ac, probe_for(*base, cfg.diagnostics));
  rec.trial = trial;
  fill_attack_outcome(rec, res, cfg.diagnostics);
  rec.queries = top->queries_used();
  if (!res.certificate) {
    rec.outcome = "exhausted";
    return rec;
  }
  if (s.q == 1) {
    rec.outcome = "certificate";
    rec.success = true;
    return rec;
  }
  Rng er = stream(seed, Stream::kExtract);
  auto block = extract_strong_certificate(*res.certificate, s.q, er);
  auto vr = verify_certificate(block, *single, ac.verify_samples, er, ac.verify_level);
  block.empirical_rate = vr.empirical_rate;
  block.verify_samples = ac.verify_samples;
  rec.detail["block_certificate"] = to_json(block);
  rec.detail["block_verify"] = {{"rate", vr.empirical_rate}, {"lo", vr.lo}, {"hi", vr.hi}, {"violated", vr.violated}};
  const long verify_queries = single->queries_used() - static_cast<long>(s.q) * top->queries_used();
  rec.queries = top->queries_used() + verify_queries;
  rec.success = vr.violated;
  rec.outcome = vr.violated ? "strong-certificate" : "block-certificate-not-verified";
  return rec;
}

TrialRecord lp_trial(const ExperimentConfig& cfg, int trial, std::uint64_t seed) {
  const auto s = lp_setup(cfg.params);
  Rng sk = stream(seed, Stream::kSketch);
  auto o = make_lp_oracle(s.n, s.r, s.p, s.C, sk);
  auto res = attack_lp(o, s.C, s.p, s.budget, seed, s.opt, probe_for(*o, cfg.diagnostics));
  TrialRecord rec;
  rec.trial = trial;
  fill_attack_outcome(rec, res.attack, cfg.diagnostics);
  rec.queries = res.queries;
  rec.outcome = res.outcome;
  if (res.violation) {
    rec.success = lp_violation_holds(*res.violation);
    rec.detail["violation"] = to_json(*res.violation);
  }
  return rec;
}

TrialRecord sparse_trial(const ExperimentConfig& cfg, int trial, std::uint64_t seed) {
  const auto s = sparse_setup(cfg.params);
  Rng sk = stream(seed, Stream::kSketch);
  RecoveryOraclePtr o;
  if (!cfg.oracle_cmd.empty()) {
    o = std::make_shared<ProcessRecoveryOracle>(s.n + s.k - 1, s.k, s.C, cfg.oracle_cmd);
  } else {
    o = make_countsketch_recovery_oracle(s.n + s.k - 1, s.r, s.k, s.C, sk, s.rec);
  }
  AlignmentProbe probe;
  if (cfg.diagnostics) {
    if (auto a = o->reveal_rowspace()) {
      const Subspace head = Subspace::span(a->basis().topRows(s.n));
      probe = alignment_probe(head);
    }
  }
  auto res = attack_sparse_recovery(o, seed, s.opt, probe);
  TrialRecord rec;
  rec.trial = trial;
  fill_attack_outcome(rec, res.attack, cfg.diagnostics);
  rec.queries = res.recovery_queries;
  rec.outcome = res.outcome;
  if (res.violation) {
    rec.success = recovery_violation_holds(*res.violation);
    rec.detail["violation"] = to_json(*res.violation);
  }
  return rec;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::kGapNormAttack: return "gapnorm-attack";
    case Scenario::kLpAttack: return "lp-attack";
    case Scenario::kSparseRecoveryAttack: return "sparse-recovery-attack";
    case Scenario::kChi2Table: return "chi2-table";
    case Scenario::kLemmaValidation: return "lemma-validation";
  }
  return "?";
}

Scenario parse_scenario(const std::string& s) {
  for (auto sc : {Scenario::kGapNormAttack, Scenario::kLpAttack, Scenario::kSparseRecoveryAttack,
                  Scenario::kChi2Table, Scenario::kLemmaValidation}) {
    if (s == to_string(sc)) return sc;
  }
  throw ConfigError("scenario: unknown value \"" + s + "\"");
}

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  ExperimentConfig cfg;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const auto& k = it.key();
    if (k != "scenario" && k != "parameters" && k != "params" && k != "output_path" && k != "output") {
      throw ConfigError(k + ": unknown top-level key");
    }
  }
  if (!doc.contains("scenario") || !doc.at("scenario").is_string()) throw ConfigError("scenario: required string");
  cfg.scenario = parse_scenario(doc.at("scenario").get<std::string>());
  if (doc.contains("parameters") && doc.contains("params")) throw ConfigError("parameters: given twice");
  const char* pkey = doc.contains("params") ? "params" : "parameters";
  if (doc.contains(pkey)) {
    if (!doc.at(pkey).is_object()) throw ConfigError("parameters: expected an object");
    cfg.params = doc.at(pkey);
  }
  const char* okey = doc.contains("output") ? "output" : "output_path";
  if (doc.contains(okey)) {
    if (!doc.at(okey).is_string()) throw ConfigError("output_path: expected a string");
    cfg.output_path = doc.at(okey).get<std::string>();
  }
  cfg.trials = static_cast<int>(integer(cfg.params, "trials", 1));
  const long seed = integer(cfg.params, "seed", 1);
  if (seed < 0) bad("seed", "must be >= 0");
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.diagnostics = boolean(cfg.params, "diagnostics", false);
  return cfg;
}

void ExperimentConfig::validate() const {
  if (trials < 0) bad("trials", "must be >= 0");
  if (jobs < 1) throw ConfigError("jobs: must be >= 1");
  const auto keys = allowed_keys(scenario);
  for (auto it = params.begin(); it != params.end(); ++it) {
    if (!keys.count(it.key())) {
      bad(it.key(), std::string("not a parameter of scenario ") + to_string(scenario));
    }
  }
  if (!oracle_cmd.empty() && scenario != Scenario::kGapNormAttack &&
      scenario != Scenario::kSparseRecoveryAttack) {
    throw ConfigError("oracle_cmd: only the gapnorm-attack and sparse-recovery-attack scenarios take an external oracle");
  }
  switch (scenario) {
    case Scenario::kGapNormAttack: gapnorm_setup(params); break;
    case Scenario::kLpAttack: lp_setup(params); break;
    case Scenario::kSparseRecoveryAttack: sparse_setup(params); break;
    case Scenario::kChi2Table: table_setup(params); break;
    case Scenario::kLemmaValidation: lemma_options_from(params); break;
  }
}

AttackConfig attack_config_from(const json& p) {
  AttackConfig c;
  c.n = static_cast<int>(integer(p, "n", c.n));
  c.B = num(p, "B", c.B);
  c.r_bound = static_cast<int>(integer(p, "r_bound", c.r_bound));
  c.m = static_cast<int>(integer(p, "m", c.m));
  c.epsilon = num(p, "epsilon", c.epsilon);
  c.grid_points = static_cast<int>(integer(p, "grid_points", c.grid_points));
  c.delta_gain = num(p, "delta_gain", c.delta_gain);
  c.delta_multiplier = num(p, "delta_multiplier", c.delta_multiplier);
  c.min_positive_fraction = num(p, "min_positive_fraction", c.min_positive_fraction);
  c.max_rounds = static_cast<int>(integer(p, "max_rounds", c.max_rounds));
  c.noise_var = num(p, "noise_var", c.noise_var);
  const auto rule = text(p, "rule", "held-out");
  if (rule == "held-out") {
    c.rule = AcceptanceRule::kHeldOut;
  } else if (rule == "objective") {
    c.rule = AcceptanceRule::kObjective;
  } else {
    bad("rule", "must be \"held-out\" or \"objective\"");
  }
  c.z = num(p, "z", c.z);
  c.pool_accepting_cells = boolean(p, "pool", c.pool_accepting_cells);
  c.verify_samples = static_cast<int>(integer(p, "verify_samples", c.verify_samples));
  c.verify_level = num(p, "verify_level", c.verify_level);
  c.max_queries = integer(p, "max_queries", c.max_queries);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    const std::string prefix = "attack config: ";
    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
    const auto sp = msg.find(' ');
    throw ConfigError("parameters." + msg.substr(0, sp) + ":" + msg.substr(sp));
  }
  return c;
}

json to_json(const AttackConfig& c) {
  return {{"n", c.n},
          {"B", c.B},
          {"r_bound", c.r_bound},
          {"m", c.m},
          {"epsilon", c.epsilon},
          {"grid_points", c.grid_points},
          {"delta", c.delta()},
          {"min_positive_fraction", c.min_positive_fraction},
          {"rounds", c.rounds()},
          {"seed", c.seed},
          {"noise_var", c.noise_var},
          {"rule", c.rule == AcceptanceRule::kHeldOut ? "held-out" : "objective"},
          {"z", c.z},
          {"pool", c.pool_accepting_cells},
          {"verify_samples", c.verify_samples},
          {"verify_level", c.verify_level},
          {"blocks", c.blocks},
          {"max_queries", c.max_queries}};
}

json to_json(const CellRecord& c) {
  json j;
  j["t"] = c.t;
  j["sigma_sq"] = c.sigma_sq;
  j["rate"] = c.rate;
  j["m_prime"] = c.m_prime;
  j["objective"] = c.objective ? json(*c.objective) : json(nullptr);
  j["accepted"] = c.accepted;
  j["proj_onto_A"] = c.proj_onto_a ? json(*c.proj_onto_a) : json(nullptr);
  if (c.certificate) j["certificate"] = to_string(*c.certificate);
  if (c.verified_rate) j["verified_rate"] = *c.verified_rate;
  return j;
}

json to_json(const FailureCertificate& c) {
  return {{"dim_v", c.subspace_v.dim()},
          {"ambient_dim", c.subspace_v.ambient_dim()},
          {"sigma_sq", c.sigma_sq},
          {"branch", to_string(c.branch)},
          {"strong", c.strong},
          {"tolerance", c.tolerance},
          {"noise_var", c.noise_var},
          {"empirical_rate", c.empirical_rate},
          {"verify_samples", c.verify_samples},
          {"B", c.B},
          {"basis", basis_json(c.subspace_v)}};
}

json to_json(const LpViolation& v) {
  return {{"x", vec_json(v.x)},
          {"z", v.z_value},
          {"p", std::isinf(v.p) ? json("inf") : json(v.p)},
          {"C", v.C},
          {"side", to_string(v.side)},
          {"norm", lp_norm(v.x, v.p)},
          {"holds", lp_violation_holds(v)}};
}

json to_json(const RecoveryViolation& v) {
  return {{"x", vec_json(v.x)}, {"x_prime", vec_json(v.x_prime)}, {"k", v.k},     {"C", v.C},
          {"lhs", v.lhs},       {"rhs", v.rhs},                   {"holds", recovery_violation_holds(v)}};
}

TrialRecord run_trial(const ExperimentConfig& cfg, int trial) {
  const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(trial);
  const auto t0 = std::chrono::steady_clock::now();
  TrialRecord rec;
  try {
    switch (cfg.scenario) {
      case Scenario::kGapNormAttack: rec = gapnorm_trial(cfg, trial, seed); break;
      case Scenario::kLpAttack: rec = lp_trial(cfg, trial, seed); break;
      case Scenario::kSparseRecoveryAttack: rec = sparse_trial(cfg, trial, seed); break;
      default: throw ConfigError(std::string("scenario ") + to_string(cfg.scenario) + " has no trials");
    }
  } catch (const CalibrationError& e) {
    rec = TrialRecord{};
    rec.outcome = std::string("calibration-error: ") + e.what();
  }
  rec.trial = trial;
  rec.seed = seed;
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

CampaignSummary summarize(const std::vector<TrialRecord>& records) {
  CampaignSummary s;
  s.trials = static_cast<int>(records.size());
  std::vector<double> rounds, queries;
  for (const auto& r : records) {
    s.successes += r.success;
    s.total_queries += r.queries;
    rounds.push_back(r.rounds);
    queries.push_back(static_cast<double>(r.queries));
  }
  if (s.trials > 0) {
    s.success_rate = static_cast<double>(s.successes) / s.trials;
    s.median_rounds = median(rounds);
    s.median_queries = median(queries);
  }
  return s;
}

std::string trace_jsonl(const TrialRecord& record) {
  std::string out;
  for (const auto& c : record.trace) out += c.dump() + "\n";
  return out;
}

std::string trial_json(const TrialRecord& r) {
  nlohmann::ordered_json j;
  j["trial"] = r.trial;
  j["seed"] = r.seed;
  j["outcome"] = r.outcome;
  j["success"] = r.success;
  j["rounds"] = r.rounds;
  j["queries"] = r.queries;
  j["wall_seconds"] = r.wall_seconds;
  j["detail"] = r.detail;
  return j.dump();
}

std::string summary_csv(const CampaignSummary& s) {
  std::ostringstream os;
  os << "trials,successes,success_rate,median_rounds,median_queries,total_queries\n";
  os << s.trials << ',' << s.successes << ',' << fmt(s.success_rate) << ',';
  if (s.trials > 0) os << fmt(s.median_rounds) << ',' << fmt(s.median_queries);
  else os << ',';
  os << ',' << s.total_queries << '\n';
  return os.str();
}

std::string table_csv(const std::vector<std::vector<double>>& rows) {
  std::ostringstream os;
  os << "s,delta\n";
  for (const auto& r : rows) os << fmt(r[0]) << ',' << fmt(r[1]) << '\n';
  return os.str();
}

std::vector<std::vector<double>> chi2_table(int d, double B, int points, double s_max) {
  ChiSquareParams p;
  p.d = d;
  p.B = B;
  std::vector<std::vector<double>> rows;
  rows.reserve(points);
  for (int i = 1; i <= points; ++i) {
    const double s = s_max * i / points;
    rows.push_back({s, delta_advantage(s, p)});
  }
  return rows;
}

namespace {

std::ofstream open_out(const std::string& path, bool append = false) {
  std::ofstream f(path, append ? std::ios::app : std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  return f;
}

}  // namespace

CampaignResult run_campaign(const ExperimentConfig& cfg, const std::atomic<bool>* stop) {
  cfg.validate();
  CampaignResult res;
  const bool write = !cfg.output_path.empty();
  if (cfg.scenario == Scenario::kChi2Table) {
    const auto t = table_setup(cfg.params);
    res.table = chi2_table(t.d, t.B, t.points, t.s_max);
    if (write) open_out(cfg.output_path + ".csv") << table_csv(res.table);
    return res;
  }
  if (cfg.scenario == Scenario::kLemmaValidation) {
    auto opt = lemma_options_from(cfg.params);
    opt.seed = cfg.seed;
    res.report = validate_lemmas(opt).to_json();
    if (write) open_out(cfg.output_path + ".report.json") << res.report.dump(2) << "\n";
    return res;
  }

  std::ofstream trace_f, trials_f;
  if (write) {
    trace_f = open_out(cfg.output_path + ".trace.jsonl");
    trials_f = open_out(cfg.output_path + ".trials.jsonl");
  }
  std::vector<std::optional<TrialRecord>> slots(cfg.trials);
  std::mutex mu;
  int flushed = 0;
  std::atomic<int> next{0};
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      if (stop && stop->load()) return;
      const int i = next.fetch_add(1);
      if (i >= cfg.trials) return;
      TrialRecord rec;
      try {
        rec = run_trial(cfg, i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = cfg.trials;
        return;
      }
      std::lock_guard lock(mu);
      slots[i] = std::move(rec);
      while (flushed < cfg.trials && slots[flushed]) {
        if (write) {
          trace_f << trace_jsonl(*slots[flushed]);
          trials_f << trial_json(*slots[flushed]) << "\n";
          trace_f.flush();
          trials_f.flush();
        }
        ++flushed;
      }
    }
  };
  const int jobs = std::max(1, std::min(cfg.jobs, cfg.trials));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& s : slots) {
    if (s) res.records.push_back(std::move(*s));
  }
  res.summary = summarize(res.records);
  if (write) open_out(cfg.output_path + ".summary.csv") << summary_csv(res.summary);
  if (failure) std::rethrow_exception(failure);
  return res;
}

}  // namespace sketchbreak
