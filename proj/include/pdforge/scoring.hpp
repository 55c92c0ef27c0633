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

#ifndef PDFORGE_SCORING_HPP
#define PDFORGE_SCORING_HPP

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pdforge/sql_backend.hpp"

namespace pdforge {

inline constexpr std::size_t kNumConstraints = 5;

// Constraint order used by every vector in the project.
enum class Constraint : std::size_t { format, execution, length, answer, sql };

inline constexpr std::array<const char *, kNumConstraints> kConstraintNames = {
    "format", "execution", "length", "answer", "sql"};

// Reward bit plus the five constraint indicator bits for one
// (prompt, response) pair, with the thresholds b_i they are judged against.
struct SignalVector {
  std::uint8_t reward = 0;
  std::array<std::uint8_t, kNumConstraints> constraints{};
  std::array<double, kNumConstraints> thresholds{0.95, 0.95, 0.95, 0.95, 0.95};

  std::uint8_t bit(Constraint c) const {
    return constraints[static_cast<std::size_t>(c)];
  }
  // g_i = c_i - b_i
  double slack(std::size_t i) const {
    return static_cast<double>(constraints[i]) - thresholds[i];
  }

  bool operator==(const SignalVector &) const = default;

  nlohmann::json to_json() const;
  static SignalVector from_json(const nlohmann::json &j);
};

struct ScoringConfig {
  // Measured in whitespace-delimited tokens.
  std::size_t length_threshold = 300;
  double answer_prop_min = 0.25;
  double answer_prop_max = 0.75;
  double sql_prop_min = 0.25;
  std::array<double, kNumConstraints> thresholds{0.95, 0.95, 0.95, 0.95, 0.95};
  std::chrono::milliseconds timeout{2000};
  // Compare result rows as sequences instead of multisets.
  bool order_sensitive = false;
};

struct ParsedResponse {
  std::string think;
  std::string answer;
  std::optional<std::string> sql;
  std::size_t total_len = 0;
  std::size_t answer_len = 0;
  std::size_t sql_len = 0;
};

enum class FormatFailure {
  missing_think,
  missing_answer,
  duplicate_block,
  missing_sql_fence,
  trailing_garbage,
};

const char *to_string(FormatFailure f);

using ParseResult = std::variant<ParsedResponse, FormatFailure>;

ParseResult parse_response(std::string_view text);

std::size_t count_tokens(std::string_view text);

struct DbFixture {
  std::string fixture_id;
  std::string script;

  bool operator==(const DbFixture &) const = default;
};

// Equality of result sets: unordered multisets of rows (unless
// order_sensitive), column order significant, numbers compared with
// tolerance 1e-9.
bool result_sets_equal(std::span<const SqlRow> a, std::span<const SqlRow> b,
                       bool order_sensitive = false);

// One scoring worker. Owns private sessions, one per fixture touched, and
// must not be shared between threads.
class Scorer {
public:
  explicit Scorer(std::shared_ptr<SqlBackend> backend = nullptr);

  bool check_execution(std::string_view sql, const DbFixture &fixture,
                       std::chrono::milliseconds timeout = std::chrono::milliseconds{2000});
  bool check_result_match(std::string_view sql, std::string_view gt_sql,
                          const DbFixture &fixture,
                          const ScoringConfig &config = {});
  SignalVector score(std::string_view response, std::string_view gt_sql,
                     const DbFixture &fixture, const ScoringConfig &config = {});

  // Executes gt_sql; throws TaskError on failure.
  const QueryResult &ground_truth(std::string_view gt_sql,
                                  const DbFixture &fixture,
                                  std::chrono::milliseconds timeout);

  SqlSession &session(const DbFixture &fixture);

private:
  std::shared_ptr<SqlBackend> backend_;
  std::map<std::string, std::unique_ptr<SqlSession>> sessions_;
  std::map<std::pair<std::string, std::string>, QueryResult> gt_cache_;
};

bool check_execution(std::string_view sql, const DbFixture &fixture,
                     std::chrono::milliseconds timeout = std::chrono::milliseconds{2000});
bool check_result_match(std::string_view sql, std::string_view gt_sql,
                        const DbFixture &fixture,
                        const ScoringConfig &config = {});
SignalVector score(std::string_view response, std::string_view gt_sql,
                   const DbFixture &fixture, const ScoringConfig &config = {});

struct ScoreRequest {
  std::string response;
  std::string gt_sql;
  const DbFixture *fixture = nullptr;
};

// Scores a batch with `workers` threads, each with its own Scorer. Results
// are positionally identical to sequential scoring. workers <= 1 runs
// inline.
std::vector<SignalVector> score_batch(std::span<const ScoreRequest> requests,
                                      const ScoringConfig &config,
                                      std::size_t workers,
                                      std::shared_ptr<SqlBackend> backend = nullptr);

} // namespace pdforge

#endif // PDFORGE_SCORING_HPP
