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

#include "pdforge/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "pdforge/error.hpp"

namespace pdforge {

namespace {

constexpr double kSumTolerance = 1e-12;

void check_shape(const PromptSpace &space,
                 const std::vector<std::vector<double>> &table,
                 const char *what) {
  if (table.size() != space.size())
    throw ConfigError(fmt::format("{} has {} rows for {} prompts", what,
                                  table.size(), space.size()));
  for (std::size_t i = 0; i < table.size(); ++i)
    if (table[i].size() != space.catalog_size(i))
      throw ConfigError(fmt::format(
          "{} row for prompt '{}' has {} entries, catalog has {}", what,
          space.prompts()[i], table[i].size(), space.catalog_size(i)));
}

nlohmann::json catalog_json(const PromptSpace &space) {
  nlohmann::json catalog = nlohmann::json::object();
  for (std::size_t i = 0; i < space.size(); ++i)
    catalog[space.prompts()[i]] = space.catalog(i);
  return catalog;
}

// Reads {prompts, <field>: {id: [...]}, catalog?} into a space and table.
std::pair<SpacePtr, std::vector<std::vector<double>>>
table_from_json(const nlohmann::json &j, const char *field) {
  if (!j.is_object() || !j.contains("prompts") || !j.contains(field))
    throw ValidationError(
        fmt::format("policy JSON needs 'prompts' and '{}'", field));
  auto prompts = j.at("prompts").get<std::vector<std::string>>();
  std::vector<std::vector<double>> table;
  std::vector<std::vector<std::string>> catalogs;
  for (const auto &id : prompts) {
    if (!j.at(field).contains(id))
      throw ValidationError(fmt::format("'{}' has no row for prompt '{}'",
                                        field, id));
    table.push_back(j.at(field).at(id).get<std::vector<double>>());
    if (j.contains("catalog") && j.at("catalog").contains(id)) {
      catalogs.push_back(j.at("catalog").at(id).get<std::vector<std::string>>());
    } else {
      std::vector<std::string> names;
      for (std::size_t k = 0; k < table.back().size(); ++k)
        names.push_back(std::to_string(k));
      catalogs.push_back(std::move(names));
    }
  }
  auto space =
      std::make_shared<const PromptSpace>(std::move(prompts), std::move(catalogs));
  return {std::move(space), std::move(table)};
}

} // namespace

PromptSpace::PromptSpace(std::vector<std::string> prompts,
                         std::vector<std::vector<std::string>> catalogs)
    : prompts_(std::move(prompts)), catalogs_(std::move(catalogs)) {
  if (prompts_.size() != catalogs_.size())
    throw ConfigError("prompt count does not match catalog count");
  for (std::size_t i = 0; i < prompts_.size(); ++i) {
    if (!index_.emplace(prompts_[i], i).second)
      throw ConfigError(fmt::format("duplicate prompt id '{}'", prompts_[i]));
    const auto &cat = catalogs_[i];
    if (cat.size() < 2)
      throw ConfigError(fmt::format(
          "prompt '{}' needs at least two responses, has {}", prompts_[i],
          cat.size()));
    auto sorted = cat;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ConfigError(
          fmt::format("duplicate response id in catalog of '{}'", prompts_[i]));
  }
}

PromptSpace PromptSpace::with_indexed_catalogs(std::vector<std::string> prompts,
                                               std::span<const std::size_t> sizes) {
  std::vector<std::vector<std::string>> catalogs;
  for (std::size_t n : sizes) {
    std::vector<std::string> names;
    for (std::size_t k = 0; k < n; ++k)
      names.push_back(std::to_string(k));
    catalogs.push_back(std::move(names));
  }
  return PromptSpace(std::move(prompts), std::move(catalogs));
}

std::size_t PromptSpace::total_responses() const noexcept {
  std::size_t n = 0;
  for (const auto &c : catalogs_)
    n += c.size();
  return n;
}

std::size_t PromptSpace::index_of(std::string_view prompt_id) const {
  auto it = index_.find(std::string(prompt_id));
  if (it == index_.end())
    throw LookupError(fmt::format("unknown prompt id '{}'", prompt_id));
  return it->second;
}

bool PromptSpace::contains(std::string_view prompt_id) const {
  return index_.count(std::string(prompt_id)) > 0;
}

PromptDistribution::PromptDistribution(std::vector<double> weights)
    : weights_(std::move(weights)) {
  double sum = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ConfigError("prompt weights must be finite and nonnegative");
    sum += w;
  }
  // An empty distribution belongs to an empty suite.
  if (!weights_.empty() && std::abs(sum - 1.0) > kSumTolerance)
    throw ConfigError(fmt::format("prompt weights sum to {:.17g}, not 1", sum));
}

PromptDistribution PromptDistribution::uniform(std::size_t n) {
  if (n == 0)
    return PromptDistribution({});
  return PromptDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

std::size_t PromptDistribution::sample(Rng &rng) const {
  return sample_categorical(rng, weights_);
}

TabularPolicy::TabularPolicy(SpacePtr space,
                             std::vector<std::vector<double>> logits)
    : space_(std::move(space)), logits_(std::move(logits)) {
  check_shape(*space_, logits_, "logit table");
  for (const auto &row : logits_)
    for (double v : row)
      if (!std::isfinite(v))
        throw NumericalError("logit table contains a non-finite value");
}

TabularPolicy TabularPolicy::uniform(SpacePtr space) {
  std::vector<std::vector<double>> logits;
  for (std::size_t i = 0; i < space->size(); ++i)
    logits.emplace_back(space->catalog_size(i), 0.0);
  return TabularPolicy(std::move(space), std::move(logits));
}

std::vector<double> TabularPolicy::distribution(std::size_t prompt) const {
  return softmax(logits_.at(prompt));
}

Distributions TabularPolicy::distributions() const {
  Distributions out;
  out.reserve(logits_.size());
  for (const auto &row : logits_)
    out.push_back(softmax(row));
  return out;
}

TabularPolicy
TabularPolicy::stepped(const std::vector<std::vector<double>> &direction,
                       double step) const {
  check_shape(*space_, direction, "step direction");
  auto next = logits_;
  for (std::size_t i = 0; i < next.size(); ++i)
    for (std::size_t k = 0; k < next[i].size(); ++k)
      next[i][k] += step * direction[i][k];
  return TabularPolicy(space_, std::move(next));
}

nlohmann::json TabularPolicy::to_json() const {
  nlohmann::json logits = nlohmann::json::object();
  for (std::size_t i = 0; i < space_->size(); ++i)
    logits[space_->prompts()[i]] = logits_[i];
  return {{"prompts", space_->prompts()},
          {"logits", std::move(logits)},
          {"catalog", catalog_json(*space_)}};
}

TabularPolicy TabularPolicy::from_json(const nlohmann::json &j) {
  auto [space, table] = table_from_json(j, "logits");
  return TabularPolicy(std::move(space), std::move(table));
}

ReferencePolicy::ReferencePolicy(SpacePtr space, Distributions probs)
    : space_(std::move(space)), probs_(std::move(probs)) {
  check_shape(*space_, probs_, "reference table");
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    double sum = 0.0;
    for (double p : probs_[i]) {
      if (!(p > 0.0) || !std::isfinite(p))
        throw ConfigError(fmt::format(
            "reference policy must be strictly positive (prompt '{}')",
            space_->prompts()[i]));
      sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance)
      throw ConfigError(fmt::format(
          "reference row for prompt '{}' sums to {:.17g}", space_->prompts()[i],
          sum));
  }
}

ReferencePolicy ReferencePolicy::uniform(SpacePtr space) {
  Distributions probs;
  for (std::size_t i = 0; i < space->size(); ++i) {
    const auto n = space->catalog_size(i);
    probs.emplace_back(n, 1.0 / static_cast<double>(n));
  }
  return ReferencePolicy(std::move(space), std::move(probs));
}

TabularPolicy ReferencePolicy::as_policy() const {
  std::vector<std::vector<double>> logits;
  for (const auto &row : probs_) {
    std::vector<double> l(row.size());
    std::transform(row.begin(), row.end(), l.begin(),
                   [](double p) { return std::log(p); });
    logits.push_back(std::move(l));
  }
  return TabularPolicy(space_, std::move(logits));
}

nlohmann::json ReferencePolicy::to_json() const {
  nlohmann::json probs = nlohmann::json::object();
  for (std::size_t i = 0; i < space_->size(); ++i)
    probs[space_->prompts()[i]] = probs_[i];
  return {{"prompts", space_->prompts()},
          {"probs", std::move(probs)},
          {"catalog", catalog_json(*space_)}};
}

ReferencePolicy ReferencePolicy::from_json(const nlohmann::json &j) {
  auto [space, table] = table_from_json(j, "probs");
  return ReferencePolicy(std::move(space), std::move(table));
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty())
    return out;
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - top);
    z += out[k];
  }
  for (double &p : out)
    p /= z;
  return out;
}

double kl(std::span<const double> p, std::span<const double> q) {
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k)
    if (p[k] > 0.0)
      sum += p[k] * (std::log(p[k]) - std::log(q[k]));
  // Rounding can produce -1e-17 for identical inputs.
  return std::max(sum, 0.0);
}

std::vector<double> policy_distribution(const TabularPolicy &policy,
                                        std::string_view prompt_id) {
  return policy.distribution(policy.space()->index_of(prompt_id));
}

std::vector<std::size_t> sample_group(const TabularPolicy &policy,
                                      std::size_t prompt,
                                      std::size_t group_size, Rng &rng) {
  if (group_size < 2)
    throw ConfigError("group_size must be at least 2");
  const auto probs = policy.distribution(prompt);
  std::vector<std::size_t> out(group_size);
  for (auto &y : out)
    y = sample_categorical(rng, probs);
  return out;
}

std::vector<std::size_t> sample_group(const TabularPolicy &policy,
                                      std::string_view prompt_id,
                                      std::size_t group_size, Rng &rng) {
  return sample_group(policy, policy.space()->index_of(prompt_id), group_size,
                      rng);
}

double kl_divergence(const TabularPolicy &policy,
                     const ReferencePolicy &reference, std::size_t prompt) {
  return kl(policy.distribution(prompt), reference.probs(prompt));
}

double kl_divergence(const TabularPolicy &policy,
                     const ReferencePolicy &reference,
                     std::string_view prompt_id) {
  return kl_divergence(policy, reference, policy.space()->index_of(prompt_id));
}

} // namespace pdforge
