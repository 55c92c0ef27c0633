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

#include <doctest.h>

#include <string>
#include <vector>

#include "pdforge/error.hpp"
#include "pdforge/scoring.hpp"
#include "pdforge/sql_backend.hpp"
#include "scoring_cases.hpp"
#include "support.hpp"

using namespace pdforge;
using namespace pdforge::testing;

TEST_CASE("the reference schools response parses to its SQL") {
  const auto text = slurp(data_dir() / "schools_response.txt");
  const auto parsed = parse_response(text);
  REQUIRE(std::holds_alternative<ParsedResponse>(parsed));
  const auto &p = std::get<ParsedResponse>(parsed);
  REQUIRE(p.sql);
  CHECK(p.sql->rfind("SELECT T2.MailStreet", 0) == 0);
  CHECK(*p.sql == "SELECT T2.MailStreet\nFROM frpm AS T1\nJOIN schools AS T2 ON T1.CDSCode = "
                  "T2.CDSCode\nORDER BY T1.`FRPM Count (K-12)` DESC\nLIMIT 1");
  CHECK(p.think.find("highest FRPM count") != std::string::npos);
}

TEST_CASE("the reference schools response scores against its fixture") {
  const auto text = slurp(data_dir() / "schools_response.txt");
  const DbFixture fx{"schools", slurp(data_dir() /
                                                       "schools_fixture.sql")};
  const auto sql = *std::get<ParsedResponse>(parse_response(text)).sql;
  const auto s = score(text, sql, fx);
  CHECK(s.bit(Constraint::format) == 1);
  CHECK(s.bit(Constraint::execution) == 1);
  CHECK(s.reward == 1);
  // The example is shorter than the 300-token length threshold.
  CHECK(s.bit(Constraint::length) == 0);

  Scorer scorer;
  const auto rows = scorer.session(fx).execute(sql, std::chrono::milliseconds(1000));
  REQUIRE(rows.ok());
  REQUIRE(rows.rows.size() == 1);
  CHECK(rows.rows[0][0].bytes == "2125 Jefferson Avenue");
}

TEST_CASE("parse failures carry reason codes") {
  auto reason = [](std::string_view t) {
    const auto r = parse_response(t);
    REQUIRE(std::holds_alternative<FormatFailure>(r));
    return std::get<FormatFailure>(r);
  };
  CHECK(reason("<answer>```sql SELECT 1```</answer>") == FormatFailure::missing_think);
  CHECK(reason("<think>a</think>") == FormatFailure::missing_answer);
  CHECK(reason("<think>a</think><think>b</think><answer>```sql SELECT 1```</answer>") ==
        FormatFailure::duplicate_block);
  CHECK(reason("<think>a</think><answer>SELECT 1</answer>") == FormatFailure::missing_sql_fence);
  CHECK(reason("<think>a</think><answer>```sql\n```</answer>") == FormatFailure::missing_sql_fence);
  CHECK(reason("<think>a</think><answer>```sql SELECT 1``` ```sql SELECT 2```</answer>") ==
        FormatFailure::duplicate_block);
  CHECK(reason("<think>a</think><answer>```sql SELECT 1```</answer> bye") ==
        FormatFailure::trailing_garbage);
  CHECK(reason("hi <think>a</think><answer>```sql SELECT 1```</answer>") ==
        FormatFailure::trailing_garbage);
  CHECK(reason("<think>a</think> x <answer>```sql SELECT 1```</answer>") ==
        FormatFailure::trailing_garbage);
  CHECK(reason("<answer>```sql SELECT 1```</answer><think>a</think>") ==
        FormatFailure::trailing_garbage);
  CHECK(std::string(to_string(FormatFailure::missing_think)) == "missing-think");
}

TEST_CASE("minimal response token counts") {
  const auto r = parse_response("<think>a</think><answer>```sql SELECT 1;```</answer>");
  REQUIRE(std::holds_alternative<ParsedResponse>(r));
  const auto &p = std::get<ParsedResponse>(r);
  CHECK(*p.sql == "SELECT 1;");
  // "<think>a</think><answer>```sql", "SELECT", "1;```</answer>"
  CHECK(p.total_len == 3);
  // "```sql", "SELECT", "1;```"
  CHECK(p.answer_len == 3);
  CHECK(p.sql_len == 2);
}

TEST_CASE("surrounding whitespace is allowed") {
  const auto r = parse_response("  \n<think> a </think>\n\n<answer> ```sql SELECT 1``` </answer>\n\t");
  CHECK(std::holds_alternative<ParsedResponse>(r));
}

TEST_CASE("check_execution") {
  CHECK(check_execution("SELECT 1", kT));
  CHECK_FALSE(check_execution("SELEC 1", kT));
  CHECK_FALSE(check_execution("SELECT missing_col FROM t", kT));
  CHECK_FALSE(check_execution("INSERT INTO t VALUES (9, 'q')", kT));
  CHECK_FALSE(check_execution("CREATE TABLE u (x)", kT));
  CHECK_FALSE(check_execution("SELECT 1; SELECT 2", kT));
  CHECK(check_execution("SELECT 1;", kT));
}

TEST_CASE("runaway queries time out") {
  const char *loop = "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) "
                     "SELECT count(*) FROM c";
  CHECK_FALSE(check_execution(loop, kT, std::chrono::milliseconds(50)));
}

TEST_CASE("broken fixtures are fixture errors") {
  const DbFixture broken{"broken", "CREATE TABLE t (a INTEGER;"};
  CHECK_THROWS_AS(check_execution("SELECT 1", broken), FixtureError);
}

TEST_CASE("check_result_match examples") {
  const DbFixture fx{"t2", "CREATE TABLE t (a INTEGER); INSERT INTO t VALUES (1), (2);"};
  CHECK(check_result_match("SELECT a FROM t WHERE a > 1", "SELECT a FROM t WHERE a > 1", fx));
  CHECK(check_result_match("SELECT a FROM t WHERE a >= 2", "SELECT a FROM t WHERE a > 1", fx));
  CHECK_FALSE(check_result_match("SELECT a FROM t", "SELECT a FROM t WHERE a > 1", fx));
  CHECK_FALSE(check_result_match("SELEC a FROM t", "SELECT a FROM t WHERE a > 1", fx));
  CHECK_THROWS_AS(check_result_match("SELECT 1", "SELECT nope FROM t", fx), TaskError);
}

TEST_CASE("result comparison canonicalizes numbers") {
  CHECK(check_result_match("SELECT 2.0", "SELECT 2", kT));
  CHECK(check_result_match("SELECT 0.1 + 0.2", "SELECT 0.3", kT));
  CHECK_FALSE(check_result_match("SELECT 2.001", "SELECT 2", kT));
  CHECK_FALSE(check_result_match("SELECT '2'", "SELECT 2", kT));
  CHECK(check_result_match("SELECT a FROM t ORDER BY a DESC", "SELECT a FROM t", kT));
  ScoringConfig ordered;
  ordered.order_sensitive = true;
  CHECK_FALSE(check_result_match("SELECT a FROM t ORDER BY a DESC", "SELECT a FROM t ORDER BY a", kT,
                                 ordered));
  CHECK(check_result_match("SELECT a, b FROM t", "SELECT a, b FROM t", kT));
  CHECK_FALSE(check_result_match("SELECT b, a FROM t", "SELECT a, b FROM t", kT));
}

TEST_CASE("result comparison is symmetric") {
  const std::vector<std::string> queries = {
      "SELECT a FROM t", "SELECT a FROM t WHERE a > 1", "SELECT a FROM t WHERE a >= 2",
      "SELECT a FROM t UNION ALL SELECT a FROM t", "SELECT 1.0 * a FROM t", "SELECT b FROM t"};
  for (const auto &x : queries)
    for (const auto &y : queries)
      CHECK(check_result_match(x, y, kT) == check_result_match(y, x, kT));
}

TEST_CASE("the constructed 400-token response") {
  const std::string sql = pad(kGt, 60);
  const std::string text = layout(196, 138, sql);
  const auto parsed = std::get<ParsedResponse>(parse_response(text));
  CHECK(parsed.total_len == 400);
  CHECK(parsed.answer_len == 200);
  CHECK(parsed.sql_len == 60);
  CHECK(score(text, kGt, kT) == bits(1, 1, 1, 1, 1, 1));
}

TEST_CASE("empty response scores all zeros") {
  CHECK(score("", kGt, kT) == bits(0, 0, 0, 0, 0, 0));
}

TEST_CASE("threshold boundaries") {
  // 301 tokens passes the length check.
  CHECK(score(layout(155, 100, pad(kGt, 40)), kGt, kT) == bits(1, 1, 1, 1, 1, 1));
  // answer exactly 25% and 75% of 400.
  CHECK(score(layout(296, 58, pad(kGt, 40)), kGt, kT) == bits(1, 1, 1, 1, 1, 1));
  CHECK(score(layout(100, 218, pad(kGt, 80)), kGt, kT) == bits(1, 1, 1, 1, 1, 1));
  // SQL exactly a quarter of the answer.
  CHECK(score(layout(196, 148, pad(kGt, 50)), kGt, kT) == bits(1, 1, 1, 1, 1, 1));
}

TEST_CASE("hand-constructed responses reproduce their signal vectors") {
  const auto cases = hand_cases();
  REQUIRE(cases.size() == 30);
  Scorer scorer;
  for (const auto &c : cases) {
    CAPTURE(c.name);
    CHECK(scorer.score(c.response, kGt, kT) == c.expected);
  }
}

TEST_CASE("scoring invariants hold on every hand case") {
  for (const auto &c : hand_cases()) {
    const auto s = score(c.response, kGt, kT);
    if (s.reward == 1)
      CHECK(s.bit(Constraint::execution) == 1);
    if (s.bit(Constraint::format) == 0) {
      CHECK(s.reward == 0);
      CHECK(s.bit(Constraint::execution) == 0);
      CHECK(s.bit(Constraint::sql) == 0);
    }
  }
}

TEST_CASE("scoring never changes the fixture") {
  Scorer scorer;
  auto &session = scorer.session(kT);
  const auto before = session.checksum();
  for (const auto &c : hand_cases())
    scorer.score(c.response, kGt, kT);
  CHECK(session.execute("DROP TABLE t", std::chrono::milliseconds(100)).status ==
        QueryResult::Status::error);
  CHECK(session.execute("UPDATE t SET a = 0", std::chrono::milliseconds(100)).status ==
        QueryResult::Status::error);
  CHECK(session.checksum() == before);
}

TEST_CASE("parallel scoring equals sequential scoring") {
  const auto cases = hand_cases();
  std::vector<ScoreRequest> requests;
  for (int rep = 0; rep < 4; ++rep)
    for (const auto &c : cases)
      requests.push_back({c.response, kGt, &kT});
  const auto seq = score_batch(requests, {}, 1);
  const auto par = score_batch(requests, {}, 8);
  REQUIRE(seq.size() == requests.size());
  CHECK(seq == par);
  for (std::size_t k = 0; k < seq.size(); ++k)
    CHECK(seq[k].to_json().dump() == par[k].to_json().dump());
}

TEST_CASE("signal vector json round trip and slack") {
  const auto v = bits(1, 1, 0, 1, 0, 1);
  CHECK(SignalVector::from_json(v.to_json()) == v);
  CHECK(v.slack(1) == doctest::Approx(-0.95));
  CHECK(v.slack(0) == doctest::Approx(0.05));
}
