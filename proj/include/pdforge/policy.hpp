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

#ifndef PDFORGE_POLICY_HPP
#define PDFORGE_POLICY_HPP

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "pdforge/rng.hpp"

namespace pdforge {

// One probability vector per prompt, indexed like PromptSpace::prompts().
using Distributions = std::vector<std::vector<double>>;

// Finite prompt set with an ordered response catalog per prompt.
class PromptSpace {
public:
  // Throws ConfigError on duplicate ids or catalogs with fewer than two
  // responses.
  PromptSpace(std::vector<std::string> prompts,
              std::vector<std::vector<std::string>> catalogs);

  // Catalog responses named "0", "1", ... for each prompt.
  static PromptSpace with_indexed_catalogs(std::vector<std::string> prompts,
                                           std::span<const std::size_t> sizes);

  std::size_t size() const noexcept { return prompts_.size(); }
  const std::vector<std::string> &prompts() const noexcept { return prompts_; }
  const std::vector<std::string> &catalog(std::size_t prompt) const {
    return catalogs_.at(prompt);
  }
  std::size_t catalog_size(std::size_t prompt) const {
    return catalogs_.at(prompt).size();
  }
  // Sum of catalog sizes.
  std::size_t total_responses() const noexcept;

  // Throws LookupError for unknown ids.
  std::size_t index_of(std::string_view prompt_id) const;
  bool contains(std::string_view prompt_id) const;

  bool operator==(const PromptSpace &other) const {
    return prompts_ == other.prompts_ && catalogs_ == other.catalogs_;
  }

private:
  std::vector<std::string> prompts_;
  std::vector<std::vector<std::string>> catalogs_;
  std::unordered_map<std::string, std::size_t> index_;
};

using SpacePtr = std::shared_ptr<const PromptSpace>;

// Sampling weights over prompts.
class PromptDistribution {
public:
  // Throws ConfigError unless weights are nonnegative and sum to 1 within
  // 1e-12.
  explicit PromptDistribution(std::vector<double> weights);
  static PromptDistribution uniform(std::size_t n);

  std::size_t size() const noexcept { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }
  std::span<const double> weights() const noexcept { return weights_; }
  std::size_t sample(Rng &rng) const;

private:
  std::vector<double> weights_;
};

// pi_theta(y|x) = softmax(logits[x])[y].
class TabularPolicy {
public:
  TabularPolicy(SpacePtr space, std::vector<std::vector<double>> logits);

  static TabularPolicy uniform(SpacePtr space);

  const SpacePtr &space() const noexcept { return space_; }
  std::span<const double> logits(std::size_t prompt) const {
    return logits_.at(prompt);
  }
  const std::vector<std::vector<double>> &logit_table() const noexcept {
    return logits_;
  }

  std::vector<double> distribution(std::size_t prompt) const;
  Distributions distributions() const;

  // theta + step * direction, direction shaped like the logit table.
  TabularPolicy stepped(const std::vector<std::vector<double>> &direction,
                        double step) const;

  nlohmann::json to_json() const;
  static TabularPolicy from_json(const nlohmann::json &j);

private:
  SpacePtr space_;
  std::vector<std::vector<double>> logits_;
};

// Explicit, strictly positive probability table.
class ReferencePolicy {
public:
  ReferencePolicy(SpacePtr space, Distributions probs);

  static ReferencePolicy uniform(SpacePtr space);

  const SpacePtr &space() const noexcept { return space_; }
  std::span<const double> probs(std::size_t prompt) const {
    return probs_.at(prompt);
  }
  const Distributions &table() const noexcept { return probs_; }

  // Logits log(pi_ref), so that softmax reproduces pi_ref.
  TabularPolicy as_policy() const;

  nlohmann::json to_json() const;
  static ReferencePolicy from_json(const nlohmann::json &j);

private:
  SpacePtr space_;
  Distributions probs_;
};

// Numerically stable softmax (max-subtracted).
std::vector<double> softmax(std::span<const double> logits);

// KL(p || q) with 0 ln 0 = 0. q must be positive wherever p is.
double kl(std::span<const double> p, std::span<const double> q);

std::vector<double> policy_distribution(const TabularPolicy &policy,
                                        std::string_view prompt_id);

// i.i.d. draws of response indices. Throws ConfigError when group_size < 2.
std::vector<std::size_t> sample_group(const TabularPolicy &policy,
                                      std::size_t prompt,
                                      std::size_t group_size, Rng &rng);
std::vector<std::size_t> sample_group(const TabularPolicy &policy,
                                      std::string_view prompt_id,
                                      std::size_t group_size, Rng &rng);

double kl_divergence(const TabularPolicy &policy,
                     const ReferencePolicy &reference, std::size_t prompt);
double kl_divergence(const TabularPolicy &policy,
                     const ReferencePolicy &reference,
                     std::string_view prompt_id);

} // namespace pdforge

#endif // PDFORGE_POLICY_HPP
