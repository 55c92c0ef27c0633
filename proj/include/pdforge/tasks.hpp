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

#ifndef PDFORGE_TASKS_HPP
#define PDFORGE_TASKS_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdforge/policy.hpp"
#include "pdforge/scoring.hpp"

namespace pdforge {

struct Task {
  std::string task_id;
  std::string prompt_text;
  std::string fixture_id;
  std::string gt_sql;
  std::vector<std::string> responses;

  bool operator==(const Task &) const = default;
};

struct TaskSuite {
  std::vector<Task> tasks;
  PromptDistribution prompt_dist{std::vector<double>{}};
  std::map<std::string, DbFixture> fixtures;

  // Prompts are task ids; catalogs are response indices "0".."n-1".
  SpacePtr space() const;
  const DbFixture &fixture_for(const Task &task) const;

  bool operator==(const TaskSuite &other) const;
};

// Response shapes, one per reward/constraint signal.
enum class Archetype : std::size_t {
  correct_wellformed,
  wrong_result,
  non_executable,
  malformed_format,
  too_short,
  answer_heavy,
  sql_light,
};

inline constexpr std::size_t kNumArchetypes = 7;
inline constexpr std::array<const char *, kNumArchetypes> kArchetypeNames = {
    "correct_wellformed", "wrong_result", "non_executable", "malformed_format",
    "too_short",          "answer_heavy", "sql_light"};

// The SignalVector bits an archetype is built to produce under the default
// ScoringConfig.
SignalVector archetype_signature(Archetype a);

struct GeneratorSpec {
  std::size_t n_tasks = 4;
  std::size_t catalog_size = 8;
  std::array<double, kNumArchetypes> mix{1.0, 0, 0, 0, 0, 0, 0};
  std::uint64_t seed = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;

  nlohmann::json to_json() const;
  static GeneratorSpec from_json(const nlohmann::json &j);
};

struct GeneratedSuite {
  TaskSuite suite;
  // Intended archetype of every response, aligned with suite.tasks.
  std::vector<std::vector<Archetype>> archetypes;
};

// Per-catalog archetype counts realized from the mix (largest remainder,
// at least one correct response).
std::array<std::size_t, kNumArchetypes>
archetype_counts(const GeneratorSpec &spec);

GeneratedSuite generate_suite(const GeneratorSpec &spec,
                              const ScoringConfig &scoring = {});

// n_tasks tasks whose catalogs hold only `archetype` responses. Not a
// solvable suite in general; used to audit generator/scorer agreement.
GeneratedSuite archetype_battery(Archetype archetype, std::size_t n_tasks,
                                 std::size_t per_task, std::uint64_t seed,
                                 const ScoringConfig &scoring = {});

nlohmann::json suite_to_json(const TaskSuite &suite);
// Structural parse only; fixtures are attached by the caller.
TaskSuite suite_from_json(const nlohmann::json &j,
                          std::map<std::string, DbFixture> fixtures);

// Writes <path> and <dir(path)>/fixtures/<fixture_id>.sql.
void save_suite(const TaskSuite &suite, const std::filesystem::path &path);

// Parses, resolves fixtures and validates every task (ground truth executes,
// at least one response earns reward 1).
TaskSuite load_suite(const std::filesystem::path &path,
                     const ScoringConfig &scoring = {});

// Throws TaskError naming the first task that violates an invariant.
void validate_suite(const TaskSuite &suite, const ScoringConfig &scoring = {});

} // namespace pdforge

#endif // PDFORGE_TASKS_HPP
