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

#include "pdforge/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "pdforge/error.hpp"

namespace pdforge {

namespace {

constexpr const char *kTrainerKeys[] = {
    "eta_theta", "eta_lambda", "group_size", "prompts_per_step",   "iterations",
    "clip_eps",  "std_floor",  "seed",       "use_exact_gradient", "sampled_constraints"};

bool all_finite(const TrainingRecord &r) {
  auto ok = [](double v) { return std::isfinite(v); };
  return ok(r.expected_reward) && ok(r.kl) && ok(r.lagrangian) &&
         std::all_of(r.constraints.begin(), r.constraints.end(), ok) &&
         std::all_of(r.lambdas.begin(), r.lambdas.end(), ok);
}

TrainingRecord evaluate(std::size_t iteration, const TabularPolicy &policy,
                        const MultiplierVector &lambdas, const Problem &problem) {
  const auto pi = policy.distributions();
  TrainingRecord r;
  r.iteration = iteration;
  r.expected_reward = expected_reward(pi, problem);
  r.constraints = constraint_expectations(pi, problem);
  r.lambdas.assign(lambdas.values().begin(), lambdas.values().end());
  r.kl = mean_kl(pi, problem);
  r.lagrangian = lagrangian_value(pi, lambdas, problem);
  return r;
}

// Gradient of KL(pi_x || ref_x) with respect to the logits of prompt x.
std::vector<double> kl_logit_gradient(const TabularPolicy &policy, std::size_t x,
                                      const std::vector<double> &p, const Problem &problem) {
  const auto logits = policy.logits(x);
  const auto ref = problem.reference.probs(x);
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits)
    z += std::exp(l - top);
  const double log_z = top + std::log(z);
  std::vector<double> log_ratio(p.size());
  double kl_x = 0.0;
  for (std::size_t y = 0; y < p.size(); ++y) {
    log_ratio[y] = logits[y] - log_z - std::log(ref[y]);
    kl_x += p[y] * log_ratio[y];
  }
  std::vector<double> g(p.size());
  for (std::size_t y = 0; y < p.size(); ++y)
    g[y] = p[y] * (log_ratio[y] - kl_x);
  return g;
}

} // namespace

void TrainerConfig::validate() const {
  if (!(eta_theta >= 0.0) || !std::isfinite(eta_theta))
    throw ConfigError("eta_theta must be a finite nonnegative number");
  if (!(eta_lambda >= 0.0) || !std::isfinite(eta_lambda))
    throw ConfigError("eta_lambda must be a finite nonnegative number");
  if (group_size < 2)
    throw ConfigError("group_size must be at least 2");
  if (prompts_per_step < 1)
    throw ConfigError("prompts_per_step must be at least 1");
  if (!(clip_eps > 0.0))
    throw ConfigError("clip_eps must be positive");
  if (!(std_floor > 0.0))
    throw ConfigError("std_floor must be positive");
}

nlohmann::json TrainerConfig::to_json() const {
  return {{"eta_theta", eta_theta},
          {"eta_lambda", eta_lambda},
          {"group_size", group_size},
          {"prompts_per_step", prompts_per_step},
          {"iterations", iterations},
          {"clip_eps", clip_eps},
          {"std_floor", std_floor},
          {"use_exact_gradient", use_exact_gradient},
          {"sampled_constraints", sampled_constraints},
          {"seed", seed}};
}

TrainerConfig TrainerConfig::from_json(const nlohmann::json &j) {
  if (!j.is_object())
    throw ConfigError("trainer: expected an object");
  for (const auto &[key, value] : j.items())
    if (std::find(std::begin(kTrainerKeys), std::end(kTrainerKeys), key) ==
        std::end(kTrainerKeys))
      throw ConfigError(fmt::format("trainer: unknown field '{}'", key));
  TrainerConfig c;
  try {
    c.eta_theta = j.value("eta_theta", c.eta_theta);
    c.eta_lambda = j.value("eta_lambda", c.eta_lambda);
    c.group_size = j.value("group_size", c.group_size);
    c.prompts_per_step = j.value("prompts_per_step", c.prompts_per_step);
    c.iterations = j.value("iterations", c.iterations);
    c.clip_eps = j.value("clip_eps", c.clip_eps);
    c.std_floor = j.value("std_floor", c.std_floor);
    c.use_exact_gradient = j.value("use_exact_gradient", c.use_exact_gradient);
    c.sampled_constraints = j.value("sampled_constraints", c.sampled_constraints);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(fmt::format("trainer: {}", e.what()));
  }
  c.validate();
  return c;
}

void TrainingLog::write_header(std::ostream &out) {
  out << "iter,reward";
  for (const auto &name : kConstraintNames)
    out << ",c_" << name;
  for (const auto &name : kConstraintNames)
    out << ",l_" << name;
  out << ",kl,lagrangian\n";
}

void TrainingLog::write_row(std::ostream &out, const TrainingRecord &r) {
  std::string line = fmt::format("{},{}", r.iteration, r.expected_reward);
  for (double c : r.constraints)
    line += fmt::format(",{}", c);
  for (double l : r.lambdas)
    line += fmt::format(",{}", l);
  line += fmt::format(",{},{}\n", r.kl, r.lagrangian);
  out << line;
}

void TrainingLog::write_csv(std::ostream &out) const {
  write_header(out);
  for (const auto &r : records)
    write_row(out, r);
}

std::vector<double> grpo_advantages(std::span<const double> scores, double std_floor) {
  if (scores.size() < 2)
    throw ConfigError("a GRPO group needs at least two samples");
  if (!(std_floor > 0.0))
    throw ConfigError("std_floor must be positive");
  const double n = static_cast<double>(scores.size());
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
  double var = 0.0;
  for (double s : scores)
    var += (s - mean) * (s - mean);
  const double denom = std::sqrt(var / n) + std_floor;
  std::vector<double> out(scores.size());
  bool all_equal = true;
  for (double s : scores)
    all_equal = all_equal && s == scores[0];
  if (all_equal)
    return std::vector<double>(scores.size(), 0.0);
  for (std::size_t j = 0; j < scores.size(); ++j)
    out[j] = (scores[j] - mean) / denom;
  return out;
}

TabularPolicy primal_step(const TabularPolicy &policy, const MultiplierVector &lambdas,
                          const Problem &problem, const TrainerConfig &config, Rng &rng,
                          std::vector<GroupSample> *groups) {
  config.validate();
  if (config.use_exact_gradient)
    return policy.stepped(exact_lagrangian_gradient(policy, lambdas, problem),
                          config.eta_theta);

  const double beta = problem.config.beta;
  std::vector<std::vector<double>> direction(policy.logit_table().size());
  for (std::size_t x = 0; x < direction.size(); ++x)
    direction[x].assign(policy.logits(x).size(), 0.0);

  // Each batch slot gets its own stream so the result does not depend on
  // how slots are scheduled.
  const std::uint64_t step_seed = rng();
  const double batch = static_cast<double>(config.prompts_per_step);
  for (std::size_t b = 0; b < config.prompts_per_step; ++b) {
    Rng slot(mix_seed(step_seed, b));
    GroupSample group;
    group.prompt = problem.dist.sample(slot);
    const std::size_t x = group.prompt;
    group.responses = sample_group(policy, x, config.group_size, slot);
    for (std::size_t y : group.responses)
      group.scores.push_back(problem.combined_score(x, y, lambdas));
    group.advantages = grpo_advantages(group.scores, config.std_floor);

    // Single update per batch: the behaviour policy is the current one, so
    // every ratio is 1 and the clip only masks when it would be active.
    const auto p = policy.distribution(x);
    const double G = static_cast<double>(config.group_size);
    for (std::size_t j = 0; j < group.responses.size(); ++j) {
      const double ratio = 1.0;
      const double a = group.advantages[j];
      const bool clipped = (a > 0.0 && ratio > 1.0 + config.clip_eps) ||
                           (a < 0.0 && ratio < 1.0 - config.clip_eps);
      if (clipped)
        continue;
      const std::size_t yj = group.responses[j];
      for (std::size_t y = 0; y < p.size(); ++y)
        direction[x][y] += ratio * a * ((y == yj ? 1.0 : 0.0) - p[y]) / (G * batch);
    }
    const auto kl_grad = kl_logit_gradient(policy, x, p, problem);
    for (std::size_t y = 0; y < p.size(); ++y)
      direction[x][y] -= beta * kl_grad[y] / batch;
    if (groups)
      groups->push_back(std::move(group));
  }
  return policy.stepped(direction, config.eta_theta);
}

MultiplierVector dual_step(const MultiplierVector &lambdas, std::span<const double> c_pi,
                           std::span<const double> thresholds, double eta_lambda) {
  if (c_pi.size() != lambdas.size() || thresholds.size() != lambdas.size())
    throw ConfigError(fmt::format("dual_step: {} multipliers, {} expectations, {} thresholds",
                                  lambdas.size(), c_pi.size(), thresholds.size()));
  std::vector<double> next(lambdas.size());
  for (std::size_t i = 0; i < next.size(); ++i)
    next[i] = std::max(0.0, lambdas[i] - eta_lambda * (c_pi[i] - thresholds[i]));
  return MultiplierVector(std::move(next));
}

nlohmann::json TrainResult::checkpoint_json() const {
  return {{"iterations", log.records.empty() ? 0 : log.records.back().iteration},
          {"lambdas", std::vector<double>(lambdas.values().begin(), lambdas.values().end())},
          {"policy", policy.to_json()}};
}

TrainResult train(const Problem &problem, const TrainerConfig &config,
                  const RecordCallback &on_record) {
  config.validate();
  problem.config.validate();
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();

  TrainResult result{problem.reference.as_policy(),
                     MultiplierVector::zeros(problem.num_constraints()), {}};
  Rng rng(config.seed);

  auto push = [&](TrainingRecord record) {
    record.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    if (!all_finite(record))
      throw NumericalError(fmt::format(
          "non-finite training state at iteration {} (reward {}, kl {}, lagrangian {})",
          record.iteration, record.expected_reward, record.kl, record.lagrangian));
    result.log.records.push_back(record);
    if (on_record)
      on_record(result.log.records.back());
  };

  push(evaluate(0, result.policy, result.lambdas, problem));
  for (std::size_t k = 1; k <= config.iterations; ++k) {
    std::vector<GroupSample> groups;
    result.policy = primal_step(result.policy, result.lambdas, problem, config, rng,
                                config.sampled_constraints ? &groups : nullptr);
    std::vector<double> c_pi;
    if (config.sampled_constraints && !config.use_exact_gradient) {
      c_pi.assign(problem.num_constraints(), 0.0);
      double n = 0.0;
      for (const auto &g : groups)
        for (std::size_t y : g.responses) {
          for (std::size_t i = 0; i < c_pi.size(); ++i)
            c_pi[i] += problem.table.constraint(g.prompt, y, i);
          n += 1.0;
        }
      for (double &c : c_pi)
        c /= n;
    } else {
      c_pi = constraint_expectations(result.policy, problem);
    }
    result.lambdas =
        dual_step(result.lambdas, c_pi, problem.config.thresholds, config.eta_lambda);
    push(evaluate(k, result.policy, result.lambdas, problem));
  }
  return result;
}

} // namespace pdforge
