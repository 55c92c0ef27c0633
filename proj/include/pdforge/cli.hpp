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

#ifndef PDFORGE_CLI_HPP
#define PDFORGE_CLI_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdforge/objective.hpp"
#include "pdforge/oracle.hpp"
#include "pdforge/scoring.hpp"
#include "pdforge/tasks.hpp"
#include "pdforge/trainer.hpp"

namespace pdforge::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kValidation = 2,
  kInfeasible = 3,
  kConvergence = 4,
};

inline constexpr int kSchemaVersion = 1;

struct RunConfig {
  // Exactly one of these is set.
  std::optional<std::filesystem::path> suite_path;
  std::optional<GeneratorSpec> generator;

  // Unset means the uniform reference policy.
  std::optional<std::filesystem::path> reference_path;
  ObjectiveConfig objective;
  TrainerConfig trainer;
  ScoringConfig scoring;
  CertifyOptions oracle;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> run_id;

  // Verbatim file contents, kept for the run snapshot.
  std::string raw;

  // Relative paths resolve against `base_dir`. Throws ConfigError.
  static RunConfig parse(const std::string &text, const std::filesystem::path &base_dir);
  static RunConfig load(const std::filesystem::path &path);

  TaskSuite materialize_suite() const;
  ReferencePolicy materialize_reference(const SpacePtr &space) const;
};

struct RunManifest {
  std::string run_id;
  std::string command;
  std::uint64_t seed = 0;
  std::string config_path;
  std::map<std::string, std::string> checksums;
  std::string started_at;
  std::string finished_at;
  std::string status;
  std::string message;

  nlohmann::json to_json() const;
};

struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(const std::string &name) const;
};

MetricsTable read_metrics(const std::filesystem::path &path);

// Trailing moving average; early entries average what is available.
std::vector<double> moving_average(const std::vector<double> &series, std::size_t window);

// Line chart of one series against the iteration column.
std::string render_svg(const std::string &title, const std::vector<double> &iterations,
                       const std::vector<double> &values);

// Writes plots/<metric>.svg for reward and the five constraints, plus
// summary.txt, into `run_dir`.
void write_report(const std::filesystem::path &run_dir);

// Full command-line entry point. Never throws.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace pdforge::cli

#endif // PDFORGE_CLI_HPP
