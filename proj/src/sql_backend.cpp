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

#include "pdforge/sql_backend.hpp"

#include <cctype>
#include <cstring>

#include <fmt/format.h>
#include <sqlite3.h>

#include "pdforge/error.hpp"
#include "pdforge/hash.hpp"

namespace pdforge {

namespace {

using Clock = std::chrono::steady_clock;

struct DbCloser {
  void operator()(sqlite3 *db) const { sqlite3_close(db); }
};
struct StmtFinalizer {
  void operator()(sqlite3_stmt *stmt) const { sqlite3_finalize(stmt); }
};

// Candidate SQL may read and call functions; everything else is denied.
int read_only_authorizer(void *, int action, const char *, const char *,
                         const char *, const char *) {
  switch (action) {
  case SQLITE_SELECT:
  case SQLITE_READ:
  case SQLITE_FUNCTION:
  case SQLITE_RECURSIVE:
    return SQLITE_OK;
  default:
    return SQLITE_DENY;
  }
}

int deadline_handler(void *arg) {
  const auto *deadline = static_cast<const Clock::time_point *>(arg);
  return Clock::now() > *deadline ? 1 : 0;
}

bool only_separators(const char *tail) {
  for (; *tail != '\0'; ++tail)
    if (!std::isspace(static_cast<unsigned char>(*tail)) && *tail != ';')
      return false;
  return true;
}

class SqliteSession final : public SqlSession {
public:
  explicit SqliteSession(std::unique_ptr<sqlite3, DbCloser> db)
      : db_(std::move(db)) {
    sqlite3_set_authorizer(db_.get(), read_only_authorizer, nullptr);
  }

  QueryResult execute(std::string_view sql,
                      std::chrono::milliseconds timeout) override {
    QueryResult result;
    const std::string text(sql);
    sqlite3_stmt *raw = nullptr;
    const char *tail = nullptr;
    int rc = sqlite3_prepare_v2(db_.get(), text.c_str(),
                                static_cast<int>(text.size()), &raw, &tail);
    std::unique_ptr<sqlite3_stmt, StmtFinalizer> stmt(raw);
    if (rc != SQLITE_OK || !stmt) {
      result.status = QueryResult::Status::error;
      result.message = rc != SQLITE_OK ? sqlite3_errmsg(db_.get())
                                       : "empty statement";
      return result;
    }
    if (tail != nullptr && !only_separators(tail)) {
      result.status = QueryResult::Status::error;
      result.message = "multiple statements";
      return result;
    }
    if (!sqlite3_stmt_readonly(stmt.get())) {
      result.status = QueryResult::Status::error;
      result.message = "statement is not read-only";
      return result;
    }

    deadline_ = Clock::now() + timeout;
    sqlite3_progress_handler(db_.get(), 1000, deadline_handler, &deadline_);
    const int ncol = sqlite3_column_count(stmt.get());
    while ((rc = sqlite3_step(stmt.get())) == SQLITE_ROW) {
      SqlRow row(static_cast<std::size_t>(ncol));
      for (int c = 0; c < ncol; ++c) {
        SqlValue &v = row[static_cast<std::size_t>(c)];
        switch (sqlite3_column_type(stmt.get(), c)) {
        case SQLITE_INTEGER:
          v.kind = SqlValue::Kind::number;
          v.is_integer = true;
          v.integer = sqlite3_column_int64(stmt.get(), c);
          v.number = static_cast<double>(v.integer);
          break;
        case SQLITE_FLOAT:
          v.kind = SqlValue::Kind::number;
          v.number = sqlite3_column_double(stmt.get(), c);
          break;
        case SQLITE_TEXT: {
          v.kind = SqlValue::Kind::text;
          const auto *p = sqlite3_column_text(stmt.get(), c);
          v.bytes.assign(reinterpret_cast<const char *>(p),
                         static_cast<std::size_t>(sqlite3_column_bytes(stmt.get(), c)));
          break;
        }
        case SQLITE_BLOB: {
          v.kind = SqlValue::Kind::blob;
          const auto *p = sqlite3_column_blob(stmt.get(), c);
          const int n = sqlite3_column_bytes(stmt.get(), c);
          if (p != nullptr)
            v.bytes.assign(static_cast<const char *>(p), static_cast<std::size_t>(n));
          break;
        }
        default:
          break;
        }
      }
      result.rows.push_back(std::move(row));
    }
    sqlite3_progress_handler(db_.get(), 0, nullptr, nullptr);
    if (rc == SQLITE_INTERRUPT) {
      result.status = QueryResult::Status::timeout;
      result.message = "query timed out";
      result.rows.clear();
    } else if (rc != SQLITE_DONE) {
      result.status = QueryResult::Status::error;
      result.message = sqlite3_errmsg(db_.get());
      result.rows.clear();
    }
    return result;
  }

  std::string checksum() override {
    sqlite3_int64 size = 0;
    // Serialization reads page counts through internal statements that the
    // candidate authorizer would refuse.
    sqlite3_set_authorizer(db_.get(), nullptr, nullptr);
    unsigned char *image = sqlite3_serialize(db_.get(), "main", &size, 0);
    sqlite3_set_authorizer(db_.get(), read_only_authorizer, nullptr);
    if (image == nullptr)
      return "unavailable";
    const auto h = fnv1a64(image, static_cast<std::size_t>(size));
    sqlite3_free(image);
    return fmt::format("{:016x}:{}", h, size);
  }

private:
  std::unique_ptr<sqlite3, DbCloser> db_;
  Clock::time_point deadline_{};
};

} // namespace

std::unique_ptr<SqlSession> SqliteBackend::apply_script(std::string_view script) {
  sqlite3 *raw = nullptr;
  const int rc = sqlite3_open_v2(":memory:", &raw,
                                 SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE |
                                     SQLITE_OPEN_NOMUTEX,
                                 nullptr);
  std::unique_ptr<sqlite3, DbCloser> db(raw);
  if (rc != SQLITE_OK)
    throw FixtureError("cannot open in-memory database");
  char *err = nullptr;
  const std::string text(script);
  if (sqlite3_exec(db.get(), text.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
    std::string message = err != nullptr ? err : "unknown error";
    sqlite3_free(err);
    throw FixtureError(fmt::format("fixture script failed: {}", message));
  }
  return std::make_unique<SqliteSession>(std::move(db));
}

} // namespace pdforge
