/*
 * Copyright 2026 The pdforge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "pdforge/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>

#include "pdforge/error.hpp"
#include "pdforge/hash.hpp"

namespace pdforge::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::array<const char *, 6> kPanels = {"reward",   "c_format", "c_execution",
                                                 "c_length", "c_answer", "c_sql"};

std::string read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw LookupError(fmt::format("cannot read '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path &path, const std::string &bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
  if (!out)
    throw Error(fmt::format("cannot write '{}'", path.string()));
}

std::string checksum_of(const fs::path &path) {
  return fmt::format("fnv1a64:{:016x}", fnv1a64(read_file(path)));
}

std::string utc_now(const char *pattern = "{:%Y-%m-%dT%H:%M:%SZ}") {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  return fmt::format(fmt::runtime(pattern), fmt::gmtime(now));
}

fs::path resolve(const fs::path &base, const std::string &p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void reject_unknown(const nlohmann::json &j, std::initializer_list<const char *> known,
                    const std::string &where) {
  if (!j.is_object())
    throw ConfigError(fmt::format("{}: expected an object", where));
  for (const auto &[key, value] : j.items())
    if (std::none_of(known.begin(), known.end(), [&](const char *k) { return key == k; }))
      throw ConfigError(fmt::format("{}: unknown field '{}'", where, key));
}

ObjectiveConfig parse_objective(const nlohmann::json &j) {
  reject_unknown(j, {"beta", "thresholds"}, "objective");
  ObjectiveConfig c;
  c.beta = j.value("beta", c.beta);
  if (j.contains("thresholds")) {
    const auto &t = j.at("thresholds");
    if (t.is_number()) {
      c.thresholds.assign(kNumConstraints, t.get<double>());
    } else {
      c.thresholds = t.get<std::vector<double>>();
    }
  }
  if (c.thresholds.size() != kNumConstraints)
    throw ConfigError(fmt::format("objective.thresholds needs {} entries (got {})",
                                  kNumConstraints, c.thresholds.size()));
  c.validate();
  return c;
}

ScoringConfig parse_scoring(const nlohmann::json &j) {
  reject_unknown(j,
                 {"length_threshold", "answer_prop_min", "answer_prop_max", "sql_prop_min",
                  "timeout_ms", "order_sensitive"},
                 "scoring");
  ScoringConfig c;
  c.length_threshold = j.value("length_threshold", c.length_threshold);
  c.answer_prop_min = j.value("answer_prop_min", c.answer_prop_min);
  c.answer_prop_max = j.value("answer_prop_max", c.answer_prop_max);
  c.sql_prop_min = j.value("sql_prop_min", c.sql_prop_min);
  c.timeout = std::chrono::milliseconds(j.value("timeout_ms", c.timeout.count()));
  c.order_sensitive = j.value("order_sensitive", c.order_sensitive);
  if (!(c.answer_prop_min <= c.answer_prop_max))
    throw ConfigError("scoring.answer_prop_min exceeds scoring.answer_prop_max");
  if (c.timeout.count() <= 0)
    throw ConfigError("scoring.timeout_ms must be positive");
  return c;
}

CertifyOptions parse_oracle(const nlohmann::json &j) {
  reject_unknown(j,
                 {"tol", "max_iterations", "lambda_cap", "gap_tolerance", "primal_method",
                  "grid_resolution", "barrier_gap_tol", "max_newton_iterations"},
                 "oracle");
  CertifyOptions o;
  o.dual.tol = j.value("tol", o.dual.tol);
  o.dual.max_iterations = j.value("max_iterations", o.dual.max_iterations);
  o.dual.lambda_cap = j.value("lambda_cap", o.dual.lambda_cap);
  o.gap_tolerance = j.value("gap_tolerance", o.gap_tolerance);
  o.primal.grid_resolution = j.value("grid_resolution", o.primal.grid_resolution);
  o.primal.gap_tol = j.value("barrier_gap_tol", o.primal.gap_tol);
  o.primal.max_newton_iterations =
      j.value("max_newton_iterations", o.primal.max_newton_iterations);
  const std::string method = j.value("primal_method", std::string("barrier"));
  if (method == "barrier")
    o.primal.method = PrimalMethod::barrier;
  else if (method == "grid")
    o.primal.method = PrimalMethod::grid;
  else if (method == "automatic")
    o.primal.method = PrimalMethod::automatic;
  else
    throw ConfigError(fmt::format("oracle.primal_method '{}' is not one of barrier, grid, automatic",
                                  method));
  if (!(o.dual.tol > 0.0))
    throw ConfigError("oracle.tol must be positive");
  if (o.dual.max_iterations < 0)
    throw ConfigError("oracle.max_iterations must be nonnegative");
  if (!(o.dual.lambda_cap > 0.0))
    throw ConfigError("oracle.lambda_cap must be positive");
  if (!(o.gap_tolerance >= 0.0))
    throw ConfigError("oracle.gap_tolerance must be nonnegative");
  return o;
}

bool valid_run_id(const std::string &id) {
  return !id.empty() && id != "." && id != ".." &&
         std::all_of(id.begin(), id.end(), [](char c) {
           return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ||
                  c == '.';
         });
}

int exit_code_for(const std::exception &e) {
  if (dynamic_cast<const InfeasibleError *>(&e))
    return kInfeasible;
  if (dynamic_cast<const ConvergenceError *>(&e))
    return kConvergence;
  if (dynamic_cast<const ConfigError *>(&e) || dynamic_cast<const ValidationError *>(&e) ||
      dynamic_cast<const LookupError *>(&e) || dynamic_cast<const FixtureError *>(&e) ||
      dynamic_cast<const TaskError *>(&e) || dynamic_cast<const nlohmann::json::exception *>(&e))
    return kValidation;
  return kInternal;
}

const char *status_for(int code) {
  switch (code) {
  case kOk:
    return "succeeded";
  case kInfeasible:
    return "infeasible";
  case kConvergence:
    return "not_converged";
  case kValidation:
    return "invalid_input";
  default:
    return "failed";
  }
}

struct GlobalOptions {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::string run_id;
  bool deterministic = false;
};

std::size_t worker_count(const GlobalOptions &g) {
  if (g.deterministic)
    return 1;
  return std::max(1u, std::thread::hardware_concurrency());
}

// Everything a run needs, built before anything is written.
struct Prepared {
  RunConfig config;
  fs::path config_path;
  TaskSuite suite;
  std::optional<Problem> problem;
};

Prepared prepare(const GlobalOptions &g, const char *command) {
  if (g.config.empty())
    throw ConfigError(fmt::format("{} needs --config <path>", command));
  Prepared p;
  p.config_path = g.config;
  p.config = RunConfig::load(p.config_path);
  if (g.seed_set)
    p.config.trainer.seed = g.seed;
  p.suite = p.config.materialize_suite();
  const auto space = p.suite.space();
  auto reference = p.config.materialize_reference(space);
  auto table = SignalTable::build(p.suite, p.config.scoring, worker_count(g));
  p.problem.emplace(make_problem(p.suite, std::move(table), std::move(reference),
                                 p.config.objective));
  return p;
}

class RunDirectory {
public:
  RunDirectory(const GlobalOptions &g, const Prepared &p, std::string command)
      : started_(utc_now()) {
    fs::path root;
    if (!g.out.empty())
      root = g.out;
    else if (p.config.out)
      root = *p.config.out;
    else if (const char *env = std::getenv("PDFORGE_RUNS_DIR"); env && *env)
      root = env;
    else
      root = "runs";

    std::string id = !g.run_id.empty() ? g.run_id : p.config.run_id.value_or("");
    if (!id.empty()) {
      if (!valid_run_id(id))
        throw ConfigError(fmt::format("run id '{}' may only use letters, digits, '-', '_', '.'", id));
      if (fs::exists(root / id))
        throw ConfigError(fmt::format("run directory '{}' already exists", (root / id).string()));
    } else {
      const std::string stem = fmt::format("{}-{}-s{}", command, utc_now("{:%Y%m%dT%H%M%S}"),
                                           p.config.trainer.seed);
      id = stem;
      for (int n = 2; fs::exists(root / id); ++n)
        id = fmt::format("{}-{}", stem, n);
    }
    dir_ = root / id;
    fs::create_directories(dir_);
    write_file(dir_ / "config.snapshot", p.config.raw);

    manifest_.run_id = id;
    manifest_.command = std::move(command);
    manifest_.seed = p.config.trainer.seed;
    manifest_.config_path = p.config_path.string();
    manifest_.started_at = started_;
    artifacts_.push_back("config.snapshot");
  }

  const fs::path &path() const { return dir_; }
  void add_artifact(std::string name) { artifacts_.push_back(std::move(name)); }

  void finish(int code, const std::string &message) {
    manifest_.finished_at = utc_now();
    manifest_.status = status_for(code);
    manifest_.message = message;
    for (const auto &name : artifacts_)
      if (fs::exists(dir_ / name))
        manifest_.checksums[name] = checksum_of(dir_ / name);
    write_file(dir_ / "manifest.json", manifest_.to_json().dump(2) + "\n");
  }

private:
  fs::path dir_;
  std::string started_;
  RunManifest manifest_;
  std::vector<std::string> artifacts_;
};

std::string format_vector(const std::vector<double> &v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += fmt::format("{}{:.4f}", i ? " " : "", v[i]);
  return s;
}

int cmd_generate(const GlobalOptions &g, std::string spec_path, std::string out_path,
                 std::ostream &out) {
  if (spec_path.empty())
    spec_path = g.config;
  if (out_path.empty())
    out_path = g.out;
  if (spec_path.empty())
    throw ConfigError("generate needs a spec file (positional or --config)");
  if (out_path.empty())
    throw ConfigError("generate needs an output path (positional or --out)");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(spec_path));
  } catch (const nlohmann::json::parse_error &e) {
    throw ConfigError(fmt::format("generator spec: invalid JSON: {}", e.what()));
  }
  if (j.is_object() && j.contains("generator"))
    j = j.at("generator");
  if (j.is_object())
    j.erase("schema_version");
  auto spec = GeneratorSpec::from_json(j);
  if (g.seed_set)
    spec.seed = g.seed;
  spec.validate();

  const auto generated = generate_suite(spec);
  save_suite(generated.suite, out_path);

  std::array<std::size_t, kNumArchetypes> realized{};
  std::size_t responses = 0;
  for (const auto &row : generated.archetypes)
    for (auto a : row) {
      ++realized[static_cast<std::size_t>(a)];
      ++responses;
    }
  out << fmt::format("wrote {} tasks ({} responses) to {}\n", generated.suite.tasks.size(),
                     responses, out_path);
  for (std::size_t a = 0; a < kNumArchetypes; ++a)
    if (realized[a] > 0)
      out << fmt::format("  {:<20} {:>5}  ({:.3f})\n", kArchetypeNames[a], realized[a],
                         static_cast<double>(realized[a]) / static_cast<double>(responses));
  return kOk;
}

int cmd_train(const GlobalOptions &g, std::ostream &out, std::ostream &err) {
  Prepared p = prepare(g, "train");
  RunDirectory run(g, p, "train");
  int code = kOk;
  std::string message;
  try {
    std::ofstream metrics(run.path() / "metrics.csv", std::ios::binary);
    run.add_artifact("metrics.csv");
    TrainingLog::write_header(metrics);
    const auto result = train(*p.problem, p.config.trainer, [&](const TrainingRecord &r) {
      TrainingLog::write_row(metrics, r);
      metrics.flush();
    });
    metrics.close();
    write_file(run.path() / "checkpoint.json", result.checkpoint_json().dump(2) + "\n");
    run.add_artifact("checkpoint.json");

    const auto &last = result.log.records.back();
    message = fmt::format("reward {:.4f}", last.expected_reward);
    out << fmt::format("run {}\n", run.path().string());
    out << fmt::format("iterations   {}\n", last.iteration);
    out << fmt::format("reward       {:.4f}\n", last.expected_reward);
    out << fmt::format("constraints  {}\n", format_vector(last.constraints));
    out << fmt::format("lambdas      {}\n", format_vector(last.lambdas));
    out << fmt::format("kl           {:.4f}\n", last.kl);
  } catch (const std::exception &e) {
    code = exit_code_for(e);
    message = e.what();
    err << "error: training aborted: " << e.what() << "\n";
  }
  run.finish(code, message);
  return code;
}

int cmd_certify(const GlobalOptions &g, std::ostream &out, std::ostream &err) {
  Prepared p = prepare(g, "certify");
  RunDirectory run(g, p, "certify");
  int code = kOk;
  std::string message;
  try {
    const auto cert = certify_theorem(*p.problem, p.config.oracle);
    auto j = cert.to_json();
    j["beta"] = p.config.objective.beta;
    j["thresholds"] = p.config.objective.thresholds;
    write_file(run.path() / "certificate.json", j.dump(2) + "\n");
    run.add_artifact("certificate.json");
    out << fmt::format("run {}\n", run.path().string());
    out << fmt::format("dual value    {:.10f}\n", cert.dual_value);
    out << fmt::format("primal value  {:.10f}\n", cert.primal_value);
    out << fmt::format("gap           {:.3e} (bound {:.3e} + {:.1e})\n", cert.gap, cert.bound,
                       p.config.oracle.gap_tolerance);
    out << fmt::format("lambda*       {}\n",
                       format_vector({cert.lambda_star.values().begin(),
                                      cert.lambda_star.values().end()}));
    out << fmt::format("certificate   {}\n", cert.passed ? "PASSED" : "FAILED");
    message = cert.passed ? "certificate passed" : "certificate failed";
    if (!cert.passed)
      code = kInternal;
  } catch (const InfeasibleError &e) {
    code = kInfeasible;
    message = e.what();
    const auto c_ref = constraint_expectations(p.problem->reference.table(), *p.problem);
    err << "infeasible: " << e.what() << "\n";
    for (std::size_t i = 0; i < c_ref.size(); ++i) {
      double best = 0.0;
      for (std::size_t x = 0; x < p.problem->num_prompts(); ++x) {
        double top = 0.0;
        for (std::size_t y = 0; y < p.problem->table.catalog_size(x); ++y)
          top = std::max(top, p.problem->table.constraint(x, y, i));
        best += p.problem->dist[x] * top;
      }
      err << fmt::format("  {:<10} threshold {:.4f}  best achievable {:.4f}\n",
                         kConstraintNames[i], p.problem->config.thresholds[i], best);
    }
  } catch (const std::exception &e) {
    code = exit_code_for(e);
    message = e.what();
    err << "error: " << e.what() << "\n";
  }
  run.finish(code, message);
  return code;
}

int cmd_score(const GlobalOptions &g, const std::string &suite_path,
              const std::string &responses_path, std::ostream &out) {
  ScoringConfig scoring;
  if (!g.config.empty())
    scoring = RunConfig::load(g.config).scoring;
  const TaskSuite suite = load_suite(suite_path, scoring);
  std::map<std::string, const Task *> by_id;
  for (const auto &t : suite.tasks)
    by_id[t.task_id] = &t;

  std::istringstream lines(read_file(responses_path));
  std::vector<std::pair<std::string, std::size_t>> keys;
  std::vector<ScoreRequest> requests;
  std::set<std::string> unknown;
  std::string line;
  for (std::size_t n = 1; std::getline(lines, line); ++n) {
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }))
      continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error &e) {
      throw ValidationError(fmt::format("{}:{}: invalid JSON: {}", responses_path, n, e.what()));
    }
    if (!j.is_object() || !j.contains("task_id") || !j.at("task_id").is_string() ||
        !j.contains("response") || !j.at("response").is_string())
      throw ValidationError(fmt::format(
          "{}:{}: expected {{\"task_id\": string, \"response\": string}}", responses_path, n));
    const auto id = j.at("task_id").get<std::string>();
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      unknown.insert(id);
      continue;
    }
    keys.emplace_back(id, n);
    requests.push_back({j.at("response").get<std::string>(), it->second->gt_sql,
                        &suite.fixture_for(*it->second)});
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto &id : unknown)
      list += (list.empty() ? "" : ", ") + id;
    throw ValidationError(fmt::format("unknown task ids: {}", list));
  }

  const auto signals = score_batch(requests, scoring, worker_count(g));
  std::ostringstream csv;
  csv << "task_id,line,reward";
  for (const auto &name : kConstraintNames)
    csv << "," << name;
  csv << "\n";
  for (std::size_t k = 0; k < signals.size(); ++k) {
    csv << fmt::format("{},{},{}", keys[k].first, keys[k].second, signals[k].reward);
    for (double c : signals[k].constraints)
      csv << fmt::format(",{}", c);
    csv << "\n";
  }
  if (g.out.empty())
    out << csv.str();
  else
    write_file(g.out, csv.str());
  return kOk;
}

int cmd_report(const GlobalOptions &g, std::string run_dir, std::ostream &out) {
  if (run_dir.empty())
    run_dir = g.out;
  if (run_dir.empty())
    throw ConfigError("report needs a run directory");
  write_report(run_dir);
  out << fmt::format("wrote {} plots and summary.txt to {}\n", kPanels.size(), run_dir);
  return kOk;
}

} // namespace

RunConfig RunConfig::parse(const std::string &text, const fs::path &base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error &e) {
    throw ConfigError(fmt::format("config: invalid JSON: {}", e.what()));
  }
  reject_unknown(j,
                 {"schema_version", "suite", "generator", "reference", "objective", "trainer",
                  "scoring", "oracle", "out", "run_id"},
                 "config");
  RunConfig c;
  c.raw = text;
  try {
    if (!j.contains("schema_version"))
      throw ConfigError("config: schema_version is required");
    const int version = j.at("schema_version").get<int>();
    if (version != kSchemaVersion)
      throw ConfigError(fmt::format("config: schema_version {} is not supported (expected {})",
                                    version, kSchemaVersion));
    if (j.contains("suite") == j.contains("generator"))
      throw ConfigError("config: exactly one of 'suite' and 'generator' must be given");
    if (j.contains("suite")) {
      c.suite_path = resolve(base_dir, j.at("suite").get<std::string>());
      if (!fs::is_regular_file(*c.suite_path))
        throw ConfigError(fmt::format("config: suite '{}' does not exist", c.suite_path->string()));
    } else {
      c.generator = GeneratorSpec::from_json(j.at("generator"));
      c.generator->validate();
    }
    if (j.contains("reference")) {
      const auto ref = j.at("reference").get<std::string>();
      if (ref != "uniform") {
        c.reference_path = resolve(base_dir, ref);
        if (!fs::is_regular_file(*c.reference_path))
          throw ConfigError(
              fmt::format("config: reference '{}' does not exist", c.reference_path->string()));
      }
    }
    if (j.contains("objective"))
      c.objective = parse_objective(j.at("objective"));
    if (j.contains("trainer"))
      c.trainer = TrainerConfig::from_json(j.at("trainer"));
    if (j.contains("scoring"))
      c.scoring = parse_scoring(j.at("scoring"));
    if (j.contains("oracle"))
      c.oracle = parse_oracle(j.at("oracle"));
    if (j.contains("out"))
      c.out = resolve(base_dir, j.at("out").get<std::string>());
    if (j.contains("run_id")) {
      c.run_id = j.at("run_id").get<std::string>();
      if (!valid_run_id(*c.run_id))
        throw ConfigError(fmt::format("config: run_id '{}' is not a valid directory name",
                                      *c.run_id));
    }
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(fmt::format("config: {}", e.what()));
  }
  std::copy(c.objective.thresholds.begin(), c.objective.thresholds.end(),
            c.scoring.thresholds.begin());
  return c;
}

RunConfig RunConfig::load(const fs::path &path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const LookupError &) {
    throw ConfigError(fmt::format("config file '{}' cannot be read", path.string()));
  }
  return parse(text, path.parent_path());
}

TaskSuite RunConfig::materialize_suite() const {
  if (suite_path)
    return load_suite(*suite_path, scoring);
  return generate_suite(*generator, scoring).suite;
}

ReferencePolicy RunConfig::materialize_reference(const SpacePtr &space) const {
  if (!reference_path)
    return ReferencePolicy::uniform(space);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(*reference_path));
  } catch (const nlohmann::json::parse_error &e) {
    throw ConfigError(fmt::format("reference: invalid JSON: {}", e.what()));
  }
  auto ref = ReferencePolicy::from_json(j);
  if (!(*ref.space() == *space))
    throw ValidationError("reference policy does not cover the suite's prompts and catalogs");
  return ReferencePolicy(space, ref.table());
}

nlohmann::json RunManifest::to_json() const {
  return {{"run_id", run_id},
          {"command", command},
          {"seed", seed},
          {"config", config_path},
          {"config_snapshot", "config.snapshot"},
          {"checksums", checksums},
          {"started_at", started_at},
          {"finished_at", finished_at},
          {"status", status},
          {"message", message}};
}

std::vector<double> MetricsTable::column(const std::string &name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end())
    throw ValidationError(fmt::format("metrics have no column '{}'", name));
  const auto idx = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto &row : rows)
    out.push_back(row[idx]);
  return out;
}

MetricsTable read_metrics(const fs::path &path) {
  if (!fs::is_regular_file(path))
    throw LookupError(fmt::format("no metrics at '{}'", path.string()));
  std::istringstream in(read_file(path));
  MetricsTable table;
  std::string line;
  if (!std::getline(in, line))
    throw ValidationError(fmt::format("'{}' is empty", path.string()));
  std::istringstream header(line);
  for (std::string cell; std::getline(header, cell, ',');)
    table.columns.push_back(cell);
  for (const char *needed : kPanels)
    if (std::find(table.columns.begin(), table.columns.end(), needed) == table.columns.end())
      throw ValidationError(fmt::format("'{}' lacks column '{}'", path.string(), needed));
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty())
      continue;
    std::vector<double> row;
    std::istringstream cells(line);
    for (std::string cell; std::getline(cells, cell, ',');) {
      char *end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || *end != '\0')
        throw ValidationError(fmt::format("{}:{}: bad number '{}'", path.string(), n, cell));
      row.push_back(v);
    }
    if (row.size() != table.columns.size())
      throw ValidationError(fmt::format("{}:{}: expected {} cells, got {}", path.string(), n,
                                        table.columns.size(), row.size()));
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<double> moving_average(const std::vector<double> &series, std::size_t window) {
  if (window == 0)
    throw ConfigError("smoothing window must be positive");
  std::vector<double> out(series.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    acc += series[k];
    if (k >= window)
      acc -= series[k - window];
    out[k] = acc / static_cast<double>(std::min(k + 1, window));
  }
  return out;
}

std::string render_svg(const std::string &title, const std::vector<double> &iterations,
                       const std::vector<double> &values) {
  constexpr double W = 480, H = 300, left = 64, right = 16, top = 36, bottom = 40;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!values.empty()) {
    x0 = *std::min_element(iterations.begin(), iterations.end());
    x1 = *std::max_element(iterations.begin(), iterations.end());
    y0 = *std::min_element(values.begin(), values.end());
    y1 = *std::max_element(values.begin(), values.end());
  }
  if (x1 - x0 < 1e-12) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 - y0 < 1e-9) {
    y0 -= 0.05;
    y1 += 0.05;
  } else {
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
  }
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (W - left - right); };
  auto py = [&](double y) { return H - bottom - (y - y0) / (y1 - y0) * (H - top - bottom); };

  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"22\" font-family=\"sans-serif\" font-size=\"14\" "
      "text-anchor=\"middle\">{3}</text>\n",
      W, H, W / 2, title);
  s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" "
                   "stroke=\"#444\"/>\n",
                   left, top, W - left - right, H - top - bottom);
  const char *label = "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" "
                      "font-size=\"11\" text-anchor=\"{}\">{}</text>\n";
  s += fmt::format(fmt::runtime(label), left - 6, py(y1) + 4, "end", fmt::format("{:.4g}", y1));
  s += fmt::format(fmt::runtime(label), left - 6, py(y0) + 4, "end", fmt::format("{:.4g}", y0));
  s += fmt::format(fmt::runtime(label), px(x0), H - bottom + 16, "start", fmt::format("{:g}", x0));
  s += fmt::format(fmt::runtime(label), px(x1), H - bottom + 16, "end", fmt::format("{:g}", x1));
  s += fmt::format(fmt::runtime(label), W / 2, H - 8, "middle", "iteration");

  if (values.size() == 1) {
    s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"#1f77b4\"/>\n",
                     px(iterations[0]), py(values[0]));
  } else if (!values.empty()) {
    s += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < values.size(); ++k)
      s += fmt::format("{}{:.2f},{:.2f}", k ? " " : "", px(iterations[k]), py(values[k]));
    s += "\"/>\n";
  }
  s += "</svg>\n";
  return s;
}

void write_report(const fs::path &run_dir) {
  const MetricsTable metrics = read_metrics(run_dir / "metrics.csv");
  const auto iterations = metrics.column("iter");
  fs::create_directories(run_dir / "plots");
  for (const char *panel : kPanels)
    write_file(run_dir / "plots" / (std::string(panel) + ".svg"),
               render_svg(panel, iterations, metrics.column(panel)));

  std::string summary = fmt::format("rows {}\n", metrics.rows.size());
  summary += fmt::format("{:<14}{:>12}{:>12}{:>12}{:>12}{:>16}\n", "metric", "initial", "final",
                         "min", "max", "final_smoothed");
  for (const auto &name : metrics.columns) {
    if (name == "iter")
      continue;
    const auto v = metrics.column(name);
    if (v.empty()) {
      summary += fmt::format("{:<14}{:>12}\n", name, "-");
      continue;
    }
    const auto smooth = moving_average(v, 25);
    summary += fmt::format("{:<14}{:>12.6f}{:>12.6f}{:>12.6f}{:>12.6f}{:>16.6f}\n", name,
                           v.front(), v.back(), *std::min_element(v.begin(), v.end()),
                           *std::max_element(v.begin(), v.end()), smooth.back());
  }
  write_file(run_dir / "summary.txt", summary);
}

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"pdforge: constrained KL-regularized policy optimization on tabular text-to-SQL "
               "suites"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "Run configuration (JSON)");
  auto *seed_opt = app.add_option("--seed", g.seed, "Override the RNG seed");
  app.add_option("--out", g.out, "Output path (suite file, run root, CSV or run directory)");
  app.add_option("--run-id", g.run_id, "Name of the run directory");
  app.add_flag("--deterministic", g.deterministic, "Disable scoring parallelism");

  std::string gen_spec, gen_out;
  auto *gen = app.add_subcommand("generate", "Generate a task suite from a generator spec");
  gen->add_option("spec", gen_spec, "Generator spec (JSON)");
  gen->add_option("output", gen_out, "Suite file to write");
  auto *trn = app.add_subcommand("train", "Run the primal-dual trainer");
  auto *cert = app.add_subcommand("certify", "Certify strong duality on the suite");
  std::string score_suite, score_responses;
  auto *scr = app.add_subcommand("score", "Score external responses (JSONL) against a suite");
  scr->add_option("suite", score_suite, "Suite file")->required();
  scr->add_option("responses", score_responses, "Responses, one JSON object per line")->required();
  std::string report_dir;
  auto *rep = app.add_subcommand("report", "Plot training curves and summarize a run");
  rep->add_option("run_dir", report_dir, "Run directory");
  for (auto *sub : {gen, trn, cert, scr, rep})
    sub->fallthrough();

  std::vector<std::string> storage{"pdforge"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char *> argv;
  for (auto &s : storage)
    argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError &e) {
    app.exit(e, out, err);
    return kValidation;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    if (*gen)
      return cmd_generate(g, gen_spec, gen_out, out);
    if (*trn)
      return cmd_train(g, out, err);
    if (*cert)
      return cmd_certify(g, out, err);
    if (*scr)
      return cmd_score(g, score_suite, score_responses, out);
    if (*rep)
      return cmd_report(g, report_dir, out);
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kInternal;
}

} // namespace pdforge::cli
