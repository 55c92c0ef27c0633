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

#include "pdforge/objective.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pdforge/error.hpp"

namespace pdforge {

MultiplierVector::MultiplierVector(std::vector<double> values)
    : values_(std::move(values)) {
  for (double v : values_)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ConfigError("multipliers must be finite and nonnegative");
}

double MultiplierVector::l1_norm() const noexcept {
  double s = 0.0;
  for (double v : values_)
    s += v;
  return s;
}

void ObjectiveConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw ConfigError(fmt::format("beta must be positive (got {})", beta));
  for (double b : thresholds)
    if (!std::isfinite(b))
      throw ConfigError("thresholds must be finite");
}

SignalTable::SignalTable(std::vector<std::vector<double>> reward,
                         std::vector<std::vector<std::vector<double>>> constraints)
    : reward_(std::move(reward)), constraints_(std::move(constraints)) {
  if (reward_.size() != constraints_.size())
    throw ConfigError("reward and constraint tables disagree on prompt count");
  bool first = true;
  for (std::size_t x = 0; x < reward_.size(); ++x) {
    if (reward_[x].size() != constraints_[x].size())
      throw ConfigError("reward and constraint tables disagree on catalog size");
    for (const auto &c : constraints_[x]) {
      if (first) {
        m_ = c.size();
        first = false;
      } else if (c.size() != m_) {
        throw ConfigError("ragged constraint table");
      }
    }
  }
}

SignalTable SignalTable::from_signals(
    const std::vector<std::vector<SignalVector>> &signals) {
  std::vector<std::vector<double>> reward;
  std::vector<std::vector<std::vector<double>>> constraints;
  for (const auto &row : signals) {
    auto &r = reward.emplace_back();
    auto &c = constraints.emplace_back();
    for (const auto &s : row) {
      r.push_back(s.reward);
      c.emplace_back(s.constraints.begin(), s.constraints.end());
    }
  }
  return SignalTable(std::move(reward), std::move(constraints));
}

SignalTable SignalTable::build(const TaskSuite &suite, const ScoringConfig &scoring,
                               std::size_t workers) {
  std::vector<ScoreRequest> requests;
  for (const auto &t : suite.tasks) {
    const auto &fixture = suite.fixture_for(t);
    for (const auto &r : t.responses)
      requests.push_back({r, t.gt_sql, &fixture});
  }
  const auto flat = score_batch(requests, scoring, workers);
  std::vector<std::vector<SignalVector>> signals;
  std::size_t k = 0;
  for (const auto &t : suite.tasks) {
    auto &row = signals.emplace_back();
    for (std::size_t j = 0; j < t.responses.size(); ++j)
      row.push_back(flat[k++]);
  }
  auto table = from_signals(signals);
  if (suite.tasks.empty())
    table.m_ = kNumConstraints;
  return table;
}

double SignalTable::bound(std::span<const double> thresholds) const {
  double b = 0.0;
  for (std::size_t x = 0; x < reward_.size(); ++x)
    for (std::size_t y = 0; y < reward_[x].size(); ++y) {
      b = std::max(b, std::abs(reward_[x][y]));
      for (std::size_t i = 0; i < m_; ++i)
        b = std::max(b, std::abs(constraints_[x][y][i] - thresholds[i]));
    }
  return b;
}

void SignalTable::write_csv(std::ostream &out,
                            const std::vector<std::string> &task_ids) const {
  out << "task_id,response_idx,r,c_format,c_execution,c_length,c_answer,c_sql\n";
  for (std::size_t x = 0; x < reward_.size(); ++x)
    for (std::size_t y = 0; y < reward_[x].size(); ++y) {
      out << task_ids.at(x) << ',' << y << ',' << fmt::format("{}", reward_[x][y]);
      for (double c : constraints_[x][y])
        out << ',' << fmt::format("{}", c);
      out << '\n';
    }
}

Problem::Problem(SpacePtr space_, PromptDistribution dist_, ReferencePolicy reference_,
                 SignalTable table_, ObjectiveConfig config_)
    : space(std::move(space_)), dist(std::move(dist_)),
      reference(std::move(reference_)), table(std::move(table_)),
      config(std::move(config_)) {
  config.validate();
  if (dist.size() != space->size() || table.num_prompts() != space->size())
    throw ConfigError("problem components disagree on prompt count");
  for (std::size_t x = 0; x < space->size(); ++x)
    if (table.catalog_size(x) != space->catalog_size(x))
      throw ConfigError(fmt::format("signal table row {} has wrong catalog size", x));
  if (*reference.space() != *space)
    throw ConfigError("reference policy is defined on a different prompt space");
  if (config.thresholds.size() != table.num_constraints())
    throw ConfigError(fmt::format("{} thresholds for {} constraints",
                                  config.thresholds.size(), table.num_constraints()));
}

double Problem::combined_score(std::size_t x, std::size_t y,
                               const MultiplierVector &lambdas) const {
  double f = table.reward(x, y);
  for (std::size_t i = 0; i < lambdas.size(); ++i)
    f += lambdas[i] * slack(x, y, i);
  return f;
}

Problem make_problem(const TaskSuite &suite, SignalTable table,
                     ReferencePolicy reference, ObjectiveConfig config) {
  return Problem(suite.space(), suite.prompt_dist, std::move(reference),
                 std::move(table), std::move(config));
}

namespace {

void check_shape(const Distributions &pi, const Problem &problem) {
  if (pi.size() != problem.num_prompts())
    throw ConfigError("policy does not cover the problem's prompts");
  for (std::size_t x = 0; x < pi.size(); ++x)
    if (pi[x].size() != problem.table.catalog_size(x))
      throw ConfigError("policy row does not match catalog size");
}

void check_lambdas(const MultiplierVector &lambdas, const Problem &problem) {
  if (lambdas.size() != problem.num_constraints())
    throw ConfigError(fmt::format("{} multipliers for {} constraints", lambdas.size(),
                                  problem.num_constraints()));
}

} // namespace

double expected_reward(const Distributions &pi, const Problem &problem) {
  check_shape(pi, problem);
  double total = 0.0;
  for (std::size_t x = 0; x < pi.size(); ++x) {
    double inner = 0.0;
    for (std::size_t y = 0; y < pi[x].size(); ++y)
      inner += pi[x][y] * problem.table.reward(x, y);
    total += problem.dist[x] * inner;
  }
  return total;
}

double expected_reward(const TabularPolicy &policy, const Problem &problem) {
  return expected_reward(policy.distributions(), problem);
}

std::vector<double> constraint_expectations(const Distributions &pi,
                                            const Problem &problem) {
  check_shape(pi, problem);
  const std::size_t m = problem.num_constraints();
  std::vector<double> c(m, 0.0);
  for (std::size_t x = 0; x < pi.size(); ++x)
    for (std::size_t i = 0; i < m; ++i) {
      double inner = 0.0;
      for (std::size_t y = 0; y < pi[x].size(); ++y)
        inner += pi[x][y] * problem.table.constraint(x, y, i);
      c[i] += problem.dist[x] * inner;
    }
  return c;
}

std::vector<double> constraint_expectations(const TabularPolicy &policy,
                                            const Problem &problem) {
  return constraint_expectations(policy.distributions(), problem);
}

std::vector<double> slack_expectations(const Distributions &pi, const Problem &problem) {
  auto c = constraint_expectations(pi, problem);
  for (std::size_t i = 0; i < c.size(); ++i)
    c[i] -= problem.config.thresholds[i];
  return c;
}

double mean_kl(const Distributions &pi, const Problem &problem) {
  check_shape(pi, problem);
  double total = 0.0;
  for (std::size_t x = 0; x < pi.size(); ++x)
    total += problem.dist[x] * kl(pi[x], problem.reference.probs(x));
  return total;
}

double objective_value(const Distributions &pi, const Problem &problem) {
  return expected_reward(pi, problem) - problem.config.beta * mean_kl(pi, problem);
}

double lagrangian_value(const Distributions &pi, const MultiplierVector &lambdas,
                        const Problem &problem) {
  check_shape(pi, problem);
  check_lambdas(lambdas, problem);
  double total = 0.0;
  for (std::size_t x = 0; x < pi.size(); ++x) {
    double inner = 0.0;
    for (std::size_t y = 0; y < pi[x].size(); ++y)
      inner += pi[x][y] * problem.combined_score(x, y, lambdas);
    inner -= problem.config.beta * kl(pi[x], problem.reference.probs(x));
    total += problem.dist[x] * inner;
  }
  return total;
}

double lagrangian_value(const TabularPolicy &policy, const MultiplierVector &lambdas,
                        const Problem &problem) {
  return lagrangian_value(policy.distributions(), lambdas, problem);
}

// For pi = softmax(theta):
//   d/dtheta_y E_pi[f]  = pi_y (f_y - E_pi[f])
//   d/dtheta_y KL       = pi_y (log(pi_y / ref_y) - KL)
std::vector<std::vector<double>>
exact_lagrangian_gradient(const TabularPolicy &policy, const MultiplierVector &lambdas,
                          const Problem &problem) {
  check_lambdas(lambdas, problem);
  const auto pi = policy.distributions();
  check_shape(pi, problem);
  const double beta = problem.config.beta;
  std::vector<std::vector<double>> grad(pi.size());
  for (std::size_t x = 0; x < pi.size(); ++x) {
    const auto &p = pi[x];
    const auto ref = problem.reference.probs(x);
    const auto logits = policy.logits(x);
    const double top = *std::max_element(logits.begin(), logits.end());
    double log_z = 0.0;
    for (double l : logits)
      log_z += std::exp(l - top);
    log_z = top + std::log(log_z);

    std::vector<double> f(p.size()), log_ratio(p.size());
    double mean_f = 0.0, kl_x = 0.0;
    for (std::size_t y = 0; y < p.size(); ++y) {
      f[y] = problem.combined_score(x, y, lambdas);
      // log pi_y computed from logits stays finite even when pi_y underflows.
      log_ratio[y] = (logits[y] - log_z) - std::log(ref[y]);
      mean_f += p[y] * f[y];
      kl_x += p[y] * log_ratio[y];
    }
    grad[x].resize(p.size());
    for (std::size_t y = 0; y < p.size(); ++y)
      grad[x][y] = problem.dist[x] * p[y] *
                   ((f[y] - mean_f) - beta * (log_ratio[y] - kl_x));
  }
  return grad;
}

bool is_feasible(const Distributions &pi, const Problem &problem, double tol) {
  const auto g = slack_expectations(pi, problem);
  return std::all_of(g.begin(), g.end(), [tol](double v) { return v >= -tol; });
}

} // namespace pdforge
