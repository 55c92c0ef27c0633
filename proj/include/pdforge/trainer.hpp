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

#ifndef PDFORGE_TRAINER_HPP
#define PDFORGE_TRAINER_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdforge/objective.hpp"
#include "pdforge/policy.hpp"
#include "pdforge/rng.hpp"

namespace pdforge {

struct TrainerConfig {
  double eta_theta = 0.5;
  double eta_lambda = 0.5;
  std::size_t group_size = 8;
  std::size_t prompts_per_step = 8;
  std::size_t iterations = 500;
  double clip_eps = 0.2;
  double std_floor = 1e-6;
  bool use_exact_gradient = false;
  // Estimate c_pi from the sampled groups instead of enumerating it.
  bool sampled_constraints = false;
  std::uint64_t seed = 0;

  void validate() const;

  nlohmann::json to_json() const;
  static TrainerConfig from_json(const nlohmann::json &j);
};

struct TrainingRecord {
  std::size_t iteration = 0;
  double expected_reward = 0.0;
  std::vector<double> constraints;
  std::vector<double> lambdas;
  double kl = 0.0;
  double lagrangian = 0.0;
  double wall_seconds = 0.0;
};

struct TrainingLog {
  std::vector<TrainingRecord> records;

  // Wall time is left out so the file is reproducible.
  static void write_header(std::ostream &out);
  static void write_row(std::ostream &out, const TrainingRecord &record);
  void write_csv(std::ostream &out) const;
};

struct GroupSample {
  std::size_t prompt = 0;
  std::vector<std::size_t> responses;
  std::vector<double> scores;
  std::vector<double> advantages;
};

// (R - mean R) / (std R + std_floor) with the population standard deviation.
std::vector<double> grpo_advantages(std::span<const double> scores, double std_floor);

// One clipped-ratio policy-gradient ascent step on the Lagrangian, with the
// KL penalty differentiated exactly. Sampled groups are appended to
// `groups` when it is non-null.
TabularPolicy primal_step(const TabularPolicy &policy, const MultiplierVector &lambdas,
                          const Problem &problem, const TrainerConfig &config, Rng &rng,
                          std::vector<GroupSample> *groups = nullptr);

// [lambda - eta (c - b)]_+
MultiplierVector dual_step(const MultiplierVector &lambdas, std::span<const double> c_pi,
                           std::span<const double> thresholds, double eta_lambda);

struct TrainResult {
  TabularPolicy policy;
  MultiplierVector lambdas;
  TrainingLog log;

  nlohmann::json checkpoint_json() const;
};

// Called after each record is appended (including the initial one).
using RecordCallback = std::function<void(const TrainingRecord &)>;

// Alternates primal and dual steps from pi_theta0 = pi_ref. Throws
// NumericalError if any logged quantity becomes non-finite.
TrainResult train(const Problem &problem, const TrainerConfig &config,
                  const RecordCallback &on_record = {});

} // namespace pdforge

#endif // PDFORGE_TRAINER_HPP
