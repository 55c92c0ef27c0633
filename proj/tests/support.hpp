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

#ifndef PDFORGE_TESTS_SUPPORT_HPP
#define PDFORGE_TESTS_SUPPORT_HPP

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "pdforge/objective.hpp"
#include "pdforge/policy.hpp"
#include "pdforge/rng.hpp"
#include "pdforge/tasks.hpp"

namespace pdforge::testing {

inline std::filesystem::path data_dir() { return PDFORGE_TEST_DATA_DIR; }

inline std::string slurp(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / ("pdforge_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline SpacePtr indexed_space(const std::vector<std::size_t> &sizes) {
  std::vector<std::string> prompts;
  for (std::size_t i = 0; i < sizes.size(); ++i)
    prompts.push_back("p" + std::to_string(i));
  return std::make_shared<const PromptSpace>(PromptSpace::with_indexed_catalogs(prompts, sizes));
}

// reward[x][y] and constraints[x][y][i], with explicit prompt weights and
// reference table.
inline Problem hand_problem(std::vector<std::vector<double>> reward,
                            std::vector<std::vector<std::vector<double>>> constraints,
                            std::vector<double> weights, Distributions ref,
                            ObjectiveConfig config) {
  std::vector<std::size_t> sizes;
  for (const auto &row : reward)
    sizes.push_back(row.size());
  auto space = indexed_space(sizes);
  return Problem(space, PromptDistribution(std::move(weights)),
                 ReferencePolicy(space, std::move(ref)),
                 SignalTable(std::move(reward), std::move(constraints)), std::move(config));
}

inline Distributions uniform_table(const std::vector<std::size_t> &sizes) {
  Distributions d;
  for (auto n : sizes)
    d.emplace_back(n, 1.0 / static_cast<double>(n));
  return d;
}

inline std::vector<double> random_simplex(Rng &rng, std::size_t n, double floor = 0.0) {
  std::vector<double> w(n);
  double s = 0.0;
  for (auto &v : w) {
    v = -std::log(1.0 - uniform01(rng)) + floor;
    s += v;
  }
  for (auto &v : w)
    v /= s;
  return w;
}

// Random instance with 0/1 signals. Every prompt's response 0 has all
// constraint bits set, so thresholds below 1 are strictly feasible.
inline Problem random_problem(Rng &rng, std::size_t prompts, std::size_t max_catalog,
                              double beta, std::size_t m = 5, bool random_reference = true) {
  std::vector<std::vector<double>> reward(prompts);
  std::vector<std::vector<std::vector<double>>> cons(prompts);
  Distributions ref(prompts);
  for (std::size_t x = 0; x < prompts; ++x) {
    const std::size_t n = 2 + uniform_index(rng, max_catalog - 1);
    for (std::size_t y = 0; y < n; ++y) {
      reward[x].push_back(static_cast<double>(uniform_index(rng, 2)));
      std::vector<double> c(m);
      for (auto &v : c)
        v = y == 0 ? 1.0 : static_cast<double>(uniform_index(rng, 2));
      cons[x].push_back(c);
    }
    ref[x] = random_reference ? random_simplex(rng, n, 0.05)
                              : std::vector<double>(n, 1.0 / static_cast<double>(n));
  }
  ObjectiveConfig config;
  config.beta = beta;
  config.thresholds.assign(m, 0.95);
  return hand_problem(std::move(reward), std::move(cons), random_simplex(rng, prompts, 0.1),
                      std::move(ref), config);
}

inline Distributions random_distributions(Rng &rng, const Problem &problem) {
  Distributions d;
  for (std::size_t x = 0; x < problem.num_prompts(); ++x)
    d.push_back(random_simplex(rng, problem.table.catalog_size(x)));
  return d;
}

inline TabularPolicy random_policy(Rng &rng, const SpacePtr &space, double scale = 2.0) {
  std::vector<std::vector<double>> logits;
  for (std::size_t x = 0; x < space->size(); ++x) {
    std::vector<double> row;
    for (std::size_t y = 0; y < space->catalog_size(x); ++y)
      row.push_back(scale * (2.0 * uniform01(rng) - 1.0));
    logits.push_back(row);
  }
  return TabularPolicy(space, logits);
}

inline MultiplierVector random_lambdas(Rng &rng, std::size_t m, double scale = 3.0) {
  std::vector<double> v(m);
  for (auto &x : v)
    x = scale * uniform01(rng);
  return MultiplierVector(v);
}

// Four tasks whose catalogs starve format, execution, reward and length.
inline GeneratorSpec starved_spec() {
  GeneratorSpec spec;
  spec.n_tasks = 4;
  spec.catalog_size = 8;
  spec.seed = 7;
  spec.mix = {0.25, 0.125, 0, 0.375, 0.25, 0, 0};
  return spec;
}

inline Problem suite_problem(const TaskSuite &suite, ObjectiveConfig config = {}) {
  return make_problem(suite, SignalTable::build(suite), ReferencePolicy::uniform(suite.space()),
                      std::move(config));
}

} // namespace pdforge::testing

#endif // PDFORGE_TESTS_SUPPORT_HPP
