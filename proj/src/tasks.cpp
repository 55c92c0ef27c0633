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

#include "pdforge/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "pdforge/error.hpp"

namespace pdforge {

namespace {

struct EntityKind {
  const char *table;
  const char *label;
  const char *num;
  const char *fk;
  const char *parent;
  const char *parent_label;
  const char *noun;
  const char *num_noun;
};

constexpr std::array<EntityKind, 6> kEntities = {{
    {"employees", "name", "salary", "dept_id", "departments", "dept_name",
     "employee", "salary"},
    {"products", "title", "price", "category_id", "categories",
     "category_name", "product", "price"},
    {"students", "name", "score", "class_id", "classes", "class_name",
     "student", "score"},
    {"orders", "customer", "amount", "store_id", "stores", "store_name",
     "order", "amount"},
    {"books", "title", "pages", "author_id", "authors", "author_name", "book",
     "page count"},
    {"cities", "name", "population", "country_id", "countries",
     "country_name", "city", "population"},
}};

constexpr std::array<const char *, 16> kNames = {
    "alpha", "bravo", "cedar", "delta", "ember", "fjord", "garnet", "harbor",
    "iris",  "juniper", "kestrel", "lumen", "maple", "nimbus", "orchid", "pike"};

constexpr std::array<const char *, 40> kFiller = {
    "the",     "table",    "column",  "filter",   "rows",     "value",
    "we",      "check",    "each",    "record",   "and",      "keep",
    "only",    "matching", "entries", "then",     "project",  "result",
    "schema",  "shows",    "that",    "key",      "join",     "condition",
    "compare", "against",  "bound",   "so",       "query",    "returns",
    "exactly", "needed",   "fields",  "careful",  "about",    "types",
    "integer", "ordering", "does",    "matter"};

enum class Family { select_rows, count_rows, max_value, join_rows };

// Everything needed to re-render the task's query in any archetype.
struct QueryPlan {
  const EntityKind *entity = nullptr;
  Family family = Family::select_rows;
  bool has_parent = false;
  std::int64_t bound = 0;
};

struct Layout {
  std::size_t total = 0;
  std::size_t answer = 0;
  std::size_t sql_target = 0; // 0 disables padding
};

std::string join_words(const std::vector<std::string> &words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i != 0)
      out += ' ';
    out += words[i];
  }
  return out;
}

// Exactly n tokens: the lead sentence, then filler.
std::string filler_text(std::string_view lead, std::size_t n, Rng &rng) {
  std::vector<std::string> words;
  std::istringstream in{std::string(lead)};
  for (std::string w; in >> w && words.size() < n;)
    words.push_back(w);
  while (words.size() < n)
    words.emplace_back(kFiller[uniform_index(rng, kFiller.size())]);
  return join_words(words);
}

std::string column_ref(const QueryPlan &plan, const char *column) {
  return plan.family == Family::join_rows ? fmt::format("T1.{}", column)
                                          : std::string(column);
}

std::string condition(const QueryPlan &plan, bool correct, Rng &rng) {
  const auto col = column_ref(plan, plan.entity->num);
  const auto k = plan.bound;
  if (correct) {
    switch (uniform_index(rng, 4)) {
    case 0:
      return fmt::format("{} > {}", col, k);
    case 1:
      return fmt::format("{} >= {}", col, k + 1);
    case 2:
      return fmt::format("{} < {}", k, col);
    default:
      return fmt::format("NOT ({} <= {})", col, k);
    }
  }
  switch (uniform_index(rng, 3)) {
  case 0:
    return fmt::format("{} <= {}", col, k);
  case 1:
    return fmt::format("NOT ({} > {})", col, k);
  default:
    return fmt::format("{} < {}", col, k + 1);
  }
}

enum class SqlKind { correct, wrong, broken };

// SELECT ... FROM ... part of the query. breakage 0..2 injects a missing
// column, a missing table or a keyword typo; -1 leaves it intact.
std::string query_head(const QueryPlan &plan, int breakage) {
  const auto &e = *plan.entity;
  const char *suffix = breakage == 0 ? "_missing" : "";
  const std::string table =
      breakage == 1 ? fmt::format("{}_archive", e.table) : std::string(e.table);
  const char *select = breakage == 2 ? "SELEC" : "SELECT";
  switch (plan.family) {
  case Family::select_rows:
    return fmt::format("{} id, {}{} FROM {}", select, e.label, suffix, table);
  case Family::count_rows:
    return breakage == 0
               ? fmt::format("{} COUNT({}{}) FROM {}", select, e.num, suffix, table)
               : fmt::format("{} COUNT(*) FROM {}", select, table);
  case Family::max_value:
    return fmt::format("{} MAX({}{}) FROM {}", select, e.num, suffix, table);
  case Family::join_rows:
    break;
  }
  return fmt::format("{} T1.id, T2.{}{} FROM {} AS T1 JOIN {} AS T2 ON T1.{} = T2.id",
                     select, e.parent_label, suffix, table, e.parent, e.fk);
}

std::string render_sql(const QueryPlan &plan, SqlKind kind, std::size_t target,
                       Rng &rng) {
  const int breakage =
      kind == SqlKind::broken ? static_cast<int>(uniform_index(rng, 3)) : -1;
  const std::string head = query_head(plan, breakage);
  const bool correct = kind != SqlKind::wrong;
  std::string sql = fmt::format("{}\nWHERE {}", head, condition(plan, correct, rng));
  std::size_t n = count_tokens(sql);
  while (target != 0 && n + 4 <= target) {
    sql += " AND 1 = 1";
    n += 4;
  }
  if (target != 0 && n + 2 <= target)
    sql += " AND 1=1";
  return sql;
}

std::string assemble(const std::string &think, const std::string &prose,
                     const std::string &sql) {
  return fmt::format("<think>\n{}\n</think>\n<answer>\n{}\n```sql\n{}\n```\n</answer>",
                     think, prose, sql);
}

Layout layout_for(Archetype a, const ScoringConfig &cfg) {
  const std::size_t long_total = cfg.length_threshold + 40;
  const double mid = 0.5 * (cfg.answer_prop_min + cfg.answer_prop_max);
  auto sql_floor = [&](std::size_t answer) {
    return static_cast<std::size_t>(
               std::ceil(cfg.sql_prop_min * static_cast<double>(answer))) +
           5;
  };
  Layout l;
  switch (a) {
  case Archetype::too_short:
    l.total = cfg.length_threshold / 2;
    l.answer = static_cast<std::size_t>(mid * static_cast<double>(l.total));
    l.sql_target = sql_floor(l.answer);
    break;
  case Archetype::answer_heavy:
    l.total = long_total;
    l.answer = static_cast<std::size_t>(
                   std::ceil(cfg.answer_prop_max * static_cast<double>(l.total))) +
               30;
    l.sql_target = sql_floor(l.answer);
    break;
  case Archetype::sql_light:
    l.total = long_total;
    l.answer = static_cast<std::size_t>(mid * static_cast<double>(l.total));
    l.sql_target = 0;
    break;
  default:
    l.total = long_total;
    l.answer = static_cast<std::size_t>(mid * static_cast<double>(l.total));
    l.sql_target = sql_floor(l.answer);
    break;
  }
  return l;
}

// Token-level bits of a rendered response, as the scorer will see them.
std::array<std::uint8_t, 3> layout_bits(const std::string &text,
                                        const ScoringConfig &cfg) {
  std::array<std::uint8_t, 3> bits{}; // length, answer, sql
  const auto total = count_tokens(text);
  bits[0] = total > cfg.length_threshold;
  const auto parsed = parse_response(text);
  if (const auto *p = std::get_if<ParsedResponse>(&parsed)) {
    const double prop = static_cast<double>(p->answer_len) / static_cast<double>(total);
    bits[1] = prop >= cfg.answer_prop_min && prop <= cfg.answer_prop_max;
    bits[2] = static_cast<double>(p->sql_len) >=
              cfg.sql_prop_min * static_cast<double>(p->answer_len);
  }
  return bits;
}

std::string make_response(Archetype archetype, const QueryPlan &plan, Rng &rng,
                          const ScoringConfig &cfg) {
  const Layout layout = layout_for(archetype, cfg);
  const SqlKind kind = archetype == Archetype::wrong_result     ? SqlKind::wrong
                       : archetype == Archetype::non_executable ? SqlKind::broken
                                                                : SqlKind::correct;
  const std::string sql = render_sql(plan, kind, layout.sql_target, rng);
  const std::size_t sql_len = count_tokens(sql);
  // answer = prose + "```sql" + sql + "```"; total adds four tag tokens.
  if (layout.answer < sql_len + 2 || layout.total < layout.answer + 4)
    throw ConfigError(fmt::format("scoring config leaves no room for a {} response",
                                  kArchetypeNames[static_cast<std::size_t>(archetype)]));
  const std::size_t prose_len = layout.answer - sql_len - 2;
  const std::size_t think_len = layout.total - layout.answer - 4;
  const auto &e = *plan.entity;
  const std::string think = filler_text(
      fmt::format("To answer this we read the {} table and compare {} with {} .",
                  e.table, e.num, plan.bound),
      think_len, rng);
  const std::string prose = filler_text(
      fmt::format("The query below filters {} on {} .", e.table, e.num),
      prose_len, rng);

  std::string text = assemble(think, prose, sql);
  if (archetype == Archetype::malformed_format) {
    switch (uniform_index(rng, 4)) {
    case 0: // no reasoning block
      text = fmt::format("{}\n<answer>\n{}\n```sql\n{}\n```\n</answer>", think,
                         prose, sql);
      break;
    case 1: // SQL outside any fence
      text = fmt::format("<think>\n{}\n</think>\n<answer>\n{}\n{}\n</answer>",
                         think, prose, sql);
      break;
    case 2: // text after the answer
      text += "\nHope this helps.";
      break;
    default: // second answer block
      text += fmt::format("\n<answer>\n```sql\n{}\n```\n</answer>", sql);
      break;
    }
  }

  const auto bits = layout_bits(text, cfg);
  const auto want = archetype_signature(archetype);
  if (bits[0] != want.bit(Constraint::length) ||
      bits[1] != want.bit(Constraint::answer) ||
      bits[2] != want.bit(Constraint::sql))
    throw ConfigError(fmt::format(
        "scoring config does not admit the {} archetype layout",
        kArchetypeNames[static_cast<std::size_t>(archetype)]));
  return text;
}

struct TaskDraft {
  Task task;
  DbFixture fixture;
  QueryPlan plan;
};

std::int64_t draw_distinct(Rng &rng, std::set<std::int64_t> &used) {
  for (;;) {
    const auto v = static_cast<std::int64_t>(10 + uniform_index(rng, 990));
    if (used.insert(v).second)
      return v;
  }
}

TaskDraft draft_task(std::size_t index, Rng &rng) {
  TaskDraft d;
  QueryPlan &plan = d.plan;
  plan.entity = &kEntities[uniform_index(rng, kEntities.size())];
  const auto &e = *plan.entity;
  const std::size_t n_tables = 1 + uniform_index(rng, 3);
  plan.has_parent = n_tables >= 2;

  const std::size_t n_rows = 5 + uniform_index(rng, 16);
  const std::size_t n_parent = 3 + uniform_index(rng, 4);
  std::set<std::int64_t> used;
  std::vector<std::int64_t> nums(n_rows);
  for (auto &v : nums)
    v = draw_distinct(rng, used);

  std::string script;
  std::string schema;
  if (plan.has_parent) {
    const auto ddl = fmt::format(
        "CREATE TABLE {} (id INTEGER PRIMARY KEY, {} TEXT NOT NULL);", e.parent,
        e.parent_label);
    schema += ddl + "\n";
    script += ddl + "\n";
    for (std::size_t p = 1; p <= n_parent; ++p)
      script += fmt::format("INSERT INTO {} VALUES ({}, '{}_{}');\n", e.parent, p,
                            kNames[uniform_index(rng, kNames.size())], p);
  }
  const auto ddl =
      plan.has_parent
          ? fmt::format("CREATE TABLE {} (id INTEGER PRIMARY KEY, {} TEXT NOT "
                        "NULL, {} INTEGER NOT NULL, {} INTEGER NOT NULL);",
                        e.table, e.label, e.num, e.fk)
          : fmt::format("CREATE TABLE {} (id INTEGER PRIMARY KEY, {} TEXT NOT "
                        "NULL, {} INTEGER NOT NULL);",
                        e.table, e.label, e.num);
  schema += ddl + "\n";
  script += ddl + "\n";
  for (std::size_t r = 0; r < n_rows; ++r) {
    const auto label = fmt::format("{}_{}", kNames[uniform_index(rng, kNames.size())], r + 1);
    if (plan.has_parent)
      script += fmt::format("INSERT INTO {} VALUES ({}, '{}', {}, {});\n", e.table,
                            r + 1, label, nums[r], 1 + uniform_index(rng, n_parent));
    else
      script += fmt::format("INSERT INTO {} VALUES ({}, '{}', {});\n", e.table,
                            r + 1, label, nums[r]);
  }
  if (n_tables == 3) {
    const auto noise = "CREATE TABLE audit_log (id INTEGER PRIMARY KEY, note TEXT NOT NULL);";
    schema += std::string(noise) + "\n";
    script += std::string(noise) + "\n";
    const std::size_t n_noise = 2 + uniform_index(rng, 4);
    for (std::size_t r = 1; r <= n_noise; ++r)
      script += fmt::format("INSERT INTO audit_log VALUES ({}, 'entry {}');\n", r, r);
  }

  const std::size_t n_families = plan.has_parent ? 4 : 3;
  plan.family = static_cast<Family>(uniform_index(rng, n_families));

  // Bound is a data value below the maximum, so both the matching set and
  // its complement are nonempty and a negated filter changes the result.
  auto sorted = nums;
  std::sort(sorted.begin(), sorted.end());
  for (;;) {
    const std::size_t j = uniform_index(rng, n_rows - 1);
    const std::size_t above = n_rows - 1 - j;
    if (plan.family == Family::count_rows && 2 * above == n_rows)
      continue;
    plan.bound = sorted[j];
    break;
  }

  std::string question;
  switch (plan.family) {
  case Family::select_rows:
    question = fmt::format("List the id and {} of every {} whose {} is greater than {}.",
                           e.label, e.noun, e.num_noun, plan.bound);
    break;
  case Family::count_rows:
    question = fmt::format("How many {} records have a {} greater than {}?", e.noun,
                           e.num_noun, plan.bound);
    break;
  case Family::max_value:
    question = fmt::format("What is the largest {} among {} records whose {} exceeds {}?",
                           e.num_noun, e.noun, e.num_noun, plan.bound);
    break;
  case Family::join_rows:
    question = fmt::format(
        "For each {} with {} above {}, list its id and the {} it belongs to.",
        e.noun, e.num_noun, plan.bound, e.parent_label);
    break;
  }

  d.fixture.fixture_id = fmt::format("fx_{:04d}", index);
  d.fixture.script = std::move(script);
  d.task.task_id = fmt::format("task_{:04d}", index);
  d.task.fixture_id = d.fixture.fixture_id;
  d.task.prompt_text = fmt::format(
      "Write one SQL query that answers the question. Reason inside "
      "<think></think>, then put the final query in a ```sql fenced block "
      "inside <answer></answer>.\n\nSchema:\n{}\nQuestion: {}",
      schema, question);
  d.task.gt_sql = fmt::format("{} WHERE {} > {}", query_head(plan, -1),
                              column_ref(plan, e.num), plan.bound);
  return d;
}

std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ValidationError(fmt::format("cannot read '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path &path, const std::string &bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error(fmt::format("cannot write '{}'", path.string()));
  out << bytes;
  if (!out)
    throw Error(fmt::format("write to '{}' failed", path.string()));
}

} // namespace

SpacePtr TaskSuite::space() const {
  std::vector<std::string> prompts;
  std::vector<std::size_t> sizes;
  for (const auto &t : tasks) {
    prompts.push_back(t.task_id);
    sizes.push_back(t.responses.size());
  }
  return std::make_shared<const PromptSpace>(
      PromptSpace::with_indexed_catalogs(std::move(prompts), sizes));
}

const DbFixture &TaskSuite::fixture_for(const Task &task) const {
  auto it = fixtures.find(task.fixture_id);
  if (it == fixtures.end())
    throw LookupError(fmt::format("task '{}' references unknown fixture_id '{}'",
                                  task.task_id, task.fixture_id));
  return it->second;
}

bool TaskSuite::operator==(const TaskSuite &other) const {
  return tasks == other.tasks && fixtures == other.fixtures &&
         std::equal(prompt_dist.weights().begin(), prompt_dist.weights().end(),
                    other.prompt_dist.weights().begin(),
                    other.prompt_dist.weights().end());
}

SignalVector archetype_signature(Archetype a) {
  SignalVector s;
  s.reward = 1;
  s.constraints = {1, 1, 1, 1, 1};
  switch (a) {
  case Archetype::correct_wellformed:
    break;
  case Archetype::wrong_result:
    s.reward = 0;
    break;
  case Archetype::non_executable:
    s.reward = 0;
    s.constraints[1] = 0;
    break;
  case Archetype::malformed_format:
    s.reward = 0;
    s.constraints = {0, 0, 1, 0, 0};
    break;
  case Archetype::too_short:
    s.constraints[2] = 0;
    break;
  case Archetype::answer_heavy:
    s.constraints[3] = 0;
    break;
  case Archetype::sql_light:
    s.constraints[4] = 0;
    break;
  }
  return s;
}

void GeneratorSpec::validate() const {
  if (catalog_size < 2)
    throw ConfigError(fmt::format(
        "catalog_size must be at least 2 (got {})", catalog_size));
  double sum = 0.0;
  for (std::size_t a = 0; a < kNumArchetypes; ++a) {
    if (!(mix[a] >= 0.0) || !std::isfinite(mix[a]))
      throw ConfigError(fmt::format("mix.{} must be nonnegative", kArchetypeNames[a]));
    sum += mix[a];
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError(fmt::format("mix fractions sum to {:.12g}, expected 1", sum));
  if (!(mix[0] > 0.0))
    throw ConfigError("mix.correct_wellformed must be positive");
}

nlohmann::json GeneratorSpec::to_json() const {
  nlohmann::json m = nlohmann::json::object();
  for (std::size_t a = 0; a < kNumArchetypes; ++a)
    m[kArchetypeNames[a]] = mix[a];
  return {{"n_tasks", n_tasks}, {"catalog_size", catalog_size}, {"mix", m},
          {"seed", seed}};
}

GeneratorSpec GeneratorSpec::from_json(const nlohmann::json &j) {
  GeneratorSpec spec;
  try {
    spec.n_tasks = j.at("n_tasks").get<std::size_t>();
    spec.catalog_size = j.at("catalog_size").get<std::size_t>();
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.mix.fill(0.0);
    for (const auto &[key, value] : j.at("mix").items()) {
      const auto it = std::find(kArchetypeNames.begin(), kArchetypeNames.end(), key);
      if (it == kArchetypeNames.end())
        throw ConfigError(fmt::format("mix.{} is not a known archetype", key));
      spec.mix[static_cast<std::size_t>(it - kArchetypeNames.begin())] =
          value.get<double>();
    }
  } catch (const nlohmann::json::exception &ex) {
    throw ConfigError(fmt::format("generator spec: {}", ex.what()));
  }
  return spec;
}

std::array<std::size_t, kNumArchetypes> archetype_counts(const GeneratorSpec &spec) {
  spec.validate();
  const auto n = static_cast<double>(spec.catalog_size);
  std::array<std::size_t, kNumArchetypes> counts{};
  std::array<double, kNumArchetypes> rem{};
  std::size_t assigned = 0;
  for (std::size_t a = 0; a < kNumArchetypes; ++a) {
    const double exact = spec.mix[a] * n;
    counts[a] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[a] = exact - static_cast<double>(counts[a]);
    assigned += counts[a];
  }
  std::array<std::size_t, kNumArchetypes> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < spec.catalog_size; ++i, ++assigned)
    ++counts[order[i % kNumArchetypes]];
  while (assigned > spec.catalog_size) {
    auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --assigned;
  }
  if (counts[0] == 0) {
    auto donor = std::max_element(counts.begin() + 1, counts.end());
    --*donor;
    counts[0] = 1;
  }
  return counts;
}

GeneratedSuite generate_suite(const GeneratorSpec &spec, const ScoringConfig &scoring) {
  const auto counts = archetype_counts(spec);
  Rng rng(spec.seed);
  GeneratedSuite out;
  for (std::size_t i = 0; i < spec.n_tasks; ++i) {
    auto draft = draft_task(i, rng);
    std::vector<Archetype> slots;
    for (std::size_t a = 0; a < kNumArchetypes; ++a)
      slots.insert(slots.end(), counts[a], static_cast<Archetype>(a));
    for (std::size_t k = slots.size(); k > 1; --k)
      std::swap(slots[k - 1], slots[uniform_index(rng, k)]);
    for (auto a : slots)
      draft.task.responses.push_back(make_response(a, draft.plan, rng, scoring));
    out.suite.fixtures.emplace(draft.fixture.fixture_id, std::move(draft.fixture));
    out.suite.tasks.push_back(std::move(draft.task));
    out.archetypes.push_back(std::move(slots));
  }
  out.suite.prompt_dist = PromptDistribution::uniform(spec.n_tasks);
  return out;
}

GeneratedSuite archetype_battery(Archetype archetype, std::size_t n_tasks,
                                 std::size_t per_task, std::uint64_t seed,
                                 const ScoringConfig &scoring) {
  Rng rng(seed);
  GeneratedSuite out;
  for (std::size_t i = 0; i < n_tasks; ++i) {
    auto draft = draft_task(i, rng);
    for (std::size_t k = 0; k < per_task; ++k)
      draft.task.responses.push_back(make_response(archetype, draft.plan, rng, scoring));
    out.suite.fixtures.emplace(draft.fixture.fixture_id, std::move(draft.fixture));
    out.suite.tasks.push_back(std::move(draft.task));
    out.archetypes.emplace_back(per_task, archetype);
  }
  out.suite.prompt_dist = PromptDistribution::uniform(n_tasks);
  return out;
}

nlohmann::json suite_to_json(const TaskSuite &suite) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto &t : suite.tasks)
    tasks.push_back({{"task_id", t.task_id},
                     {"prompt_text", t.prompt_text},
                     {"fixture_id", t.fixture_id},
                     {"gt_sql", t.gt_sql},
                     {"responses", t.responses}});
  const auto w = suite.prompt_dist.weights();
  return {{"tasks", std::move(tasks)},
          {"prompt_dist", std::vector<double>(w.begin(), w.end())}};
}

TaskSuite suite_from_json(const nlohmann::json &j,
                          std::map<std::string, DbFixture> fixtures) {
  TaskSuite suite;
  try {
    for (const auto &jt : j.at("tasks")) {
      Task t;
      t.task_id = jt.at("task_id").get<std::string>();
      t.prompt_text = jt.at("prompt_text").get<std::string>();
      t.fixture_id = jt.at("fixture_id").get<std::string>();
      t.gt_sql = jt.at("gt_sql").get<std::string>();
      t.responses = jt.at("responses").get<std::vector<std::string>>();
      suite.tasks.push_back(std::move(t));
    }
    suite.prompt_dist =
        PromptDistribution(j.at("prompt_dist").get<std::vector<double>>());
  } catch (const nlohmann::json::exception &ex) {
    throw ValidationError(fmt::format("suite JSON: {}", ex.what()));
  } catch (const ConfigError &ex) {
    throw ValidationError(fmt::format("suite JSON: {}", ex.what()));
  }
  suite.fixtures = std::move(fixtures);
  return suite;
}

void save_suite(const TaskSuite &suite, const std::filesystem::path &path) {
  namespace fs = std::filesystem;
  const auto dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  fs::create_directories(dir / "fixtures");
  for (const auto &[id, fixture] : suite.fixtures)
    write_file(dir / "fixtures" / (id + ".sql"), fixture.script);
  write_file(path, suite_to_json(suite).dump(2) + "\n");
}

TaskSuite load_suite(const std::filesystem::path &path, const ScoringConfig &scoring) {
  namespace fs = std::filesystem;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error &ex) {
    throw ValidationError(fmt::format("cannot parse '{}': {}", path.string(), ex.what()));
  }
  auto suite = suite_from_json(j, {});
  const auto dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  for (const auto &t : suite.tasks) {
    if (suite.fixtures.count(t.fixture_id) != 0)
      continue;
    const auto file = dir / "fixtures" / (t.fixture_id + ".sql");
    if (!fs::exists(file))
      throw LookupError(fmt::format("task '{}' references unknown fixture_id '{}'",
                                    t.task_id, t.fixture_id));
    suite.fixtures.emplace(t.fixture_id, DbFixture{t.fixture_id, read_file(file)});
  }
  validate_suite(suite, scoring);
  return suite;
}

void validate_suite(const TaskSuite &suite, const ScoringConfig &scoring) {
  if (suite.prompt_dist.size() != suite.tasks.size())
    throw ValidationError(fmt::format("prompt_dist has {} weights for {} tasks",
                                      suite.prompt_dist.size(), suite.tasks.size()));
  std::set<std::string> ids;
  Scorer scorer;
  for (const auto &t : suite.tasks) {
    if (!ids.insert(t.task_id).second)
      throw TaskError(t.task_id, fmt::format("duplicate task_id '{}'", t.task_id));
    if (t.responses.size() < 2)
      throw TaskError(t.task_id, fmt::format("task '{}' needs at least two responses",
                                             t.task_id));
    const auto &fixture = suite.fixture_for(t);
    try {
      scorer.ground_truth(t.gt_sql, fixture, scoring.timeout);
    } catch (const TaskError &ex) {
      throw TaskError(t.task_id, fmt::format("task '{}': {}", t.task_id, ex.what()));
    }
    const bool solvable =
        std::any_of(t.responses.begin(), t.responses.end(), [&](const std::string &r) {
          return scorer.score(r, t.gt_sql, fixture, scoring).reward == 1;
        });
    if (!solvable)
      throw TaskError(t.task_id,
                      fmt::format("task '{}' has no response earning reward 1", t.task_id));
  }
}

} // namespace pdforge
