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

#ifndef PDFORGE_SQL_BACKEND_HPP
#define PDFORGE_SQL_BACKEND_HPP

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace pdforge {

// A result cell after canonicalization: integers and reals share one
// numeric kind.
struct SqlValue {
  enum class Kind { null, number, text, blob };
  Kind kind = Kind::null;
  double number = 0.0;
  bool is_integer = false;
  std::int64_t integer = 0;
  std::string bytes; // text or blob payload
};

using SqlRow = std::vector<SqlValue>;

struct QueryResult {
  enum class Status { ok, error, timeout };
  Status status = Status::ok;
  std::string message;
  std::vector<SqlRow> rows;

  bool ok() const noexcept { return status == Status::ok; }
};

// A private, read-only connection to one materialized fixture.
class SqlSession {
public:
  virtual ~SqlSession() = default;
  // Runs exactly one statement. Writes, pragmas and multi-statement input
  // are rejected as errors.
  virtual QueryResult execute(std::string_view sql,
                              std::chrono::milliseconds timeout) = 0;
  // Hex digest of the database image, for immutability checks.
  virtual std::string checksum() = 0;
};

class SqlBackend {
public:
  virtual ~SqlBackend() = default;
  // Builds a fresh database from a DDL/DML script. Throws FixtureError when
  // the script fails.
  virtual std::unique_ptr<SqlSession> apply_script(std::string_view script) = 0;
};

// In-memory SQLite. This is the dialect the test suite pins.
class SqliteBackend final : public SqlBackend {
public:
  std::unique_ptr<SqlSession> apply_script(std::string_view script) override;
};

} // namespace pdforge

#endif // PDFORGE_SQL_BACKEND_HPP
