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

#ifndef PDFORGE_OBJECTIVE_HPP
#define PDFORGE_OBJECTIVE_HPP

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pdforge/policy.hpp"
#include "pdforge/scoring.hpp"
#include "pdforge/tasks.hpp"

namespace pdforge {

// Nonnegative Lagrange multipliers, one per constraint.
class MultiplierVector {
public:
  MultiplierVector() = default;
  // Throws ConfigError on negative or non-finite components.
  explicit MultiplierVector(std::vector<double> values);
  static MultiplierVector zeros(std::size_t m) {
    return MultiplierVector(std::vector<double>(m, 0.0));
  }

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  double l1_norm() const noexcept;

  bool operator==(const MultiplierVector &) const = default;

private:
  std::vector<double> values_;
};

struct ObjectiveConfig {
  double beta = 0.05;
  std::vector<double> thresholds = std::vector<double>(kNumConstraints, 0.95);

  // beta > 0 and finite thresholds.
  void validate() const;
};

// Reward and constraint indicator values for every (prompt, response).
// Values are stored as reals so hand-built instances can use any bounded
// signal; scored suites only ever contain 0/1.
class SignalTable {
public:
  SignalTable(std::vector<std::vector<double>> reward,
              std::vector<std::vector<std::vector<double>>> constraints);

  // Scores every response of every task. workers <= 1 runs sequentially.
  static SignalTable build(const TaskSuite &suite, const ScoringConfig &scoring = {},
                           std::size_t workers = 1);
  static SignalTable from_signals(const std::vector<std::vector<SignalVector>> &signals);

  std::size_t num_prompts() const noexcept { return reward_.size(); }
  std::size_t num_constraints() const noexcept { return m_; }
  std::size_t catalog_size(std::size_t x) const { return reward_.at(x).size(); }

  double reward(std::size_t x, std::size_t y) const { return reward_[x][y]; }
  // c_i(x, y)
  double constraint(std::size_t x, std::size_t y, std::size_t i) const {
    return constraints_[x][y][i];
  }
  // Largest |r| and |c_i - b_i| over the table; 1 for indicator signals
  // with b in (0, 1).
  double bound(std::span<const double> thresholds) const;

  // Columns: task_id,response_idx,r,c_format,c_execution,c_length,c_answer,c_sql
  void write_csv(std::ostream &out, const std::vector<std::string> &task_ids) const;

private:
  std::vector<std::vector<double>> reward_;
  std::vector<std::vector<std::vector<double>>> constraints_;
  std::size_t m_ = 0;
};

// Everything that defines one constrained KL-regularized problem over a
// finite space.
struct Problem {
  SpacePtr space;
  PromptDistribution dist{std::vector<double>{}};
  ReferencePolicy reference;
  SignalTable table;
  ObjectiveConfig config;

  // Validates shapes and the objective config.
  Problem(SpacePtr space, PromptDistribution dist, ReferencePolicy reference,
          SignalTable table, ObjectiveConfig config);

  std::size_t num_prompts() const { return space->size(); }
  std::size_t num_constraints() const { return table.num_constraints(); }
  // r + lambda^T g for one response.
  double combined_score(std::size_t x, std::size_t y,
                        const MultiplierVector &lambdas) const;
  double slack(std::size_t x, std::size_t y, std::size_t i) const {
    return table.constraint(x, y, i) - config.thresholds[i];
  }
};

Problem make_problem(const TaskSuite &suite, SignalTable table,
                     ReferencePolicy reference, ObjectiveConfig config);

double expected_reward(const Distributions &pi, const Problem &problem);
double expected_reward(const TabularPolicy &policy, const Problem &problem);

// E_x E_y[c_i], each in [0, 1] for indicator signals.
std::vector<double> constraint_expectations(const Distributions &pi,
                                            const Problem &problem);
std::vector<double> constraint_expectations(const TabularPolicy &policy,
                                            const Problem &problem);

// E_x E_y[g_i] = constraint_expectations - thresholds.
std::vector<double> slack_expectations(const Distributions &pi, const Problem &problem);

// E_x KL(pi(.|x) || pi_ref(.|x)).
double mean_kl(const Distributions &pi, const Problem &problem);

// E[r] - beta E_x KL: the constrained problem's objective.
double objective_value(const Distributions &pi, const Problem &problem);

// E_x[E_y[r + lambda^T g] - beta KL].
double lagrangian_value(const Distributions &pi, const MultiplierVector &lambdas,
                        const Problem &problem);
double lagrangian_value(const TabularPolicy &policy, const MultiplierVector &lambdas,
                        const Problem &problem);

// dL/dtheta for the softmax parameterization, same shape as the logits.
std::vector<std::vector<double>>
exact_lagrangian_gradient(const TabularPolicy &policy, const MultiplierVector &lambdas,
                          const Problem &problem);

// True when every E[g_i] >= -tol.
bool is_feasible(const Distributions &pi, const Problem &problem, double tol = 0.0);

} // namespace pdforge

#endif // PDFORGE_OBJECTIVE_HPP
