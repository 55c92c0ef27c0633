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

#include "pdforge/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <thread>

#include <fmt/format.h>

#include "pdforge/error.hpp"

namespace pdforge {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";
constexpr std::string_view kSqlFence = "```sql";
constexpr std::string_view kFence = "```";
constexpr double kNumericTolerance = 1e-9;

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size()))
    ++n;
  return n;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isspace(c) != 0;
  });
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

int kind_rank(SqlValue::Kind k) { return static_cast<int>(k); }

// Strict weak order used only to align rows before tolerant comparison.
bool value_less(const SqlValue &a, const SqlValue &b) {
  if (a.kind != b.kind)
    return kind_rank(a.kind) < kind_rank(b.kind);
  switch (a.kind) {
  case SqlValue::Kind::number:
    return a.number < b.number;
  case SqlValue::Kind::text:
  case SqlValue::Kind::blob:
    return a.bytes < b.bytes;
  default:
    return false;
  }
}

bool row_less(const SqlRow &a, const SqlRow &b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                      value_less);
}

bool value_equal(const SqlValue &a, const SqlValue &b) {
  if (a.kind != b.kind)
    return false;
  switch (a.kind) {
  case SqlValue::Kind::null:
    return true;
  case SqlValue::Kind::number:
    if (a.is_integer && b.is_integer)
      return a.integer == b.integer;
    return std::abs(a.number - b.number) <=
           kNumericTolerance *
               std::max({1.0, std::abs(a.number), std::abs(b.number)});
  default:
    return a.bytes == b.bytes;
  }
}

bool row_equal(const SqlRow &a, const SqlRow &b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), value_equal);
}

std::shared_ptr<SqlBackend> default_backend() {
  return std::make_shared<SqliteBackend>();
}

} // namespace

nlohmann::json SignalVector::to_json() const {
  return {{"reward", reward},
          {"format", constraints[0]},
          {"execution", constraints[1]},
          {"length", constraints[2]},
          {"answer_prop", constraints[3]},
          {"sql_prop", constraints[4]},
          {"thresholds", thresholds}};
}

SignalVector SignalVector::from_json(const nlohmann::json &j) {
  SignalVector s;
  s.reward = j.at("reward").get<std::uint8_t>();
  s.constraints = {j.at("format").get<std::uint8_t>(),
                   j.at("execution").get<std::uint8_t>(),
                   j.at("length").get<std::uint8_t>(),
                   j.at("answer_prop").get<std::uint8_t>(),
                   j.at("sql_prop").get<std::uint8_t>()};
  if (j.contains("thresholds"))
    s.thresholds = j.at("thresholds").get<std::array<double, kNumConstraints>>();
  return s;
}

const char *to_string(FormatFailure f) {
  switch (f) {
  case FormatFailure::missing_think:
    return "missing-think";
  case FormatFailure::missing_answer:
    return "missing-answer";
  case FormatFailure::duplicate_block:
    return "duplicate-block";
  case FormatFailure::missing_sql_fence:
    return "missing-sql-fence";
  case FormatFailure::trailing_garbage:
    return "trailing-garbage";
  }
  return "unknown";
}

std::size_t count_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_token)
      ++n;
    in_token = !space;
  }
  return n;
}

ParseResult parse_response(std::string_view text) {
  const std::size_t n_to = count_occurrences(text, kThinkOpen);
  const std::size_t n_tc = count_occurrences(text, kThinkClose);
  const std::size_t n_ao = count_occurrences(text, kAnswerOpen);
  const std::size_t n_ac = count_occurrences(text, kAnswerClose);
  if (n_to > 1 || n_tc > 1 || n_ao > 1 || n_ac > 1)
    return FormatFailure::duplicate_block;
  if (n_to == 0 || n_tc == 0)
    return FormatFailure::missing_think;
  if (n_ao == 0 || n_ac == 0)
    return FormatFailure::missing_answer;

  const auto to = text.find(kThinkOpen);
  const auto tc = text.find(kThinkClose);
  const auto ao = text.find(kAnswerOpen);
  const auto ac = text.find(kAnswerClose);
  if (tc < to)
    return FormatFailure::missing_think;
  if (ac < ao)
    return FormatFailure::missing_answer;
  if (ao < tc + kThinkClose.size())
    return FormatFailure::trailing_garbage;
  if (!is_blank(text.substr(0, to)) ||
      !is_blank(text.substr(tc + kThinkClose.size(),
                            ao - tc - kThinkClose.size())) ||
      !is_blank(text.substr(ac + kAnswerClose.size())))
    return FormatFailure::trailing_garbage;

  const auto think = text.substr(to + kThinkOpen.size(), tc - to - kThinkOpen.size());
  const auto answer =
      text.substr(ao + kAnswerOpen.size(), ac - ao - kAnswerOpen.size());

  const std::size_t fences = count_occurrences(answer, kSqlFence);
  if (fences > 1)
    return FormatFailure::duplicate_block;
  if (fences == 0)
    return FormatFailure::missing_sql_fence;
  const auto body_start = answer.find(kSqlFence) + kSqlFence.size();
  const auto body_end = answer.find(kFence, body_start);
  if (body_end == std::string_view::npos)
    return FormatFailure::missing_sql_fence;
  const auto sql = trim(answer.substr(body_start, body_end - body_start));
  if (sql.empty())
    return FormatFailure::missing_sql_fence;

  ParsedResponse parsed;
  parsed.think = std::string(think);
  parsed.answer = std::string(answer);
  parsed.sql = std::string(sql);
  parsed.total_len = count_tokens(text);
  parsed.answer_len = count_tokens(answer);
  parsed.sql_len = count_tokens(sql);
  return parsed;
}

bool result_sets_equal(std::span<const SqlRow> a, std::span<const SqlRow> b,
                       bool order_sensitive) {
  if (a.size() != b.size())
    return false;
  if (order_sensitive)
    return std::equal(a.begin(), a.end(), b.begin(), row_equal);
  std::vector<SqlRow> sa(a.begin(), a.end());
  std::vector<SqlRow> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end(), row_less);
  std::sort(sb.begin(), sb.end(), row_less);
  return std::equal(sa.begin(), sa.end(), sb.begin(), row_equal);
}

Scorer::Scorer(std::shared_ptr<SqlBackend> backend)
    : backend_(backend ? std::move(backend) : default_backend()) {}

SqlSession &Scorer::session(const DbFixture &fixture) {
  auto &slot = sessions_[fixture.fixture_id];
  if (!slot)
    slot = backend_->apply_script(fixture.script);
  return *slot;
}

bool Scorer::check_execution(std::string_view sql, const DbFixture &fixture,
                             std::chrono::milliseconds timeout) {
  return session(fixture).execute(sql, timeout).ok();
}

const QueryResult &Scorer::ground_truth(std::string_view gt_sql,
                                        const DbFixture &fixture,
                                        std::chrono::milliseconds timeout) {
  auto key = std::make_pair(fixture.fixture_id, std::string(gt_sql));
  auto it = gt_cache_.find(key);
  if (it == gt_cache_.end()) {
    auto result = session(fixture).execute(gt_sql, timeout);
    if (!result.ok())
      throw TaskError("", fmt::format("ground-truth SQL failed on fixture '{}': {}",
                                      fixture.fixture_id, result.message));
    it = gt_cache_.emplace(std::move(key), std::move(result)).first;
  }
  return it->second;
}

bool Scorer::check_result_match(std::string_view sql, std::string_view gt_sql,
                                const DbFixture &fixture,
                                const ScoringConfig &config) {
  const auto &expected = ground_truth(gt_sql, fixture, config.timeout);
  const auto got = session(fixture).execute(sql, config.timeout);
  return got.ok() &&
         result_sets_equal(got.rows, expected.rows, config.order_sensitive);
}

SignalVector Scorer::score(std::string_view response, std::string_view gt_sql,
                           const DbFixture &fixture,
                           const ScoringConfig &config) {
  SignalVector s;
  s.thresholds = config.thresholds;
  const auto &expected = ground_truth(gt_sql, fixture, config.timeout);

  const std::size_t total_len = count_tokens(response);
  auto set = [&s](Constraint c, bool v) {
    s.constraints[static_cast<std::size_t>(c)] = v ? 1 : 0;
  };
  set(Constraint::length, total_len > config.length_threshold);

  const auto parsed = parse_response(response);
  const auto *ok = std::get_if<ParsedResponse>(&parsed);
  if (ok == nullptr)
    return s;
  set(Constraint::format, true);

  const double answer_prop =
      total_len == 0 ? 0.0
                     : static_cast<double>(ok->answer_len) /
                           static_cast<double>(total_len);
  set(Constraint::answer, answer_prop >= config.answer_prop_min &&
                              answer_prop <= config.answer_prop_max);
  set(Constraint::sql, static_cast<double>(ok->sql_len) >=
                           config.sql_prop_min * static_cast<double>(ok->answer_len));

  const auto got = session(fixture).execute(*ok->sql, config.timeout);
  set(Constraint::execution, got.ok());
  s.reward = got.ok() && result_sets_equal(got.rows, expected.rows,
                                           config.order_sensitive)
                 ? 1
                 : 0;
  return s;
}

bool check_execution(std::string_view sql, const DbFixture &fixture,
                     std::chrono::milliseconds timeout) {
  Scorer scorer;
  return scorer.check_execution(sql, fixture, timeout);
}

bool check_result_match(std::string_view sql, std::string_view gt_sql,
                        const DbFixture &fixture, const ScoringConfig &config) {
  Scorer scorer;
  return scorer.check_result_match(sql, gt_sql, fixture, config);
}

SignalVector score(std::string_view response, std::string_view gt_sql,
                   const DbFixture &fixture, const ScoringConfig &config) {
  Scorer scorer;
  return scorer.score(response, gt_sql, fixture, config);
}

std::vector<SignalVector> score_batch(std::span<const ScoreRequest> requests,
                                      const ScoringConfig &config,
                                      std::size_t workers,
                                      std::shared_ptr<SqlBackend> backend) {
  if (!backend)
    backend = default_backend();
  std::vector<SignalVector> out(requests.size());
  auto run_range = [&](std::size_t begin, std::size_t stride) {
    Scorer scorer(backend);
    for (std::size_t i = begin; i < requests.size(); i += stride) {
      const auto &r = requests[i];
      out[i] = scorer.score(r.response, r.gt_sql, *r.fixture, config);
    }
  };
  if (workers <= 1 || requests.size() < 2) {
    run_range(0, 1);
    return out;
  }
  workers = std::min(workers, requests.size());
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w)
    threads.emplace_back([&, w] {
      try {
        run_range(w, workers);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto &t : threads)
    t.join();
  for (auto &e : errors)
    if (e)
      std::rethrow_exception(e);
  return out;
}

} // namespace pdforge
