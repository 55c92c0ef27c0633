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

#include <doctest.h>

#include <cmath>
#include <sstream>

#include "pdforge/error.hpp"
#include "pdforge/oracle.hpp"
#include "pdforge/trainer.hpp"
#include "support.hpp"

using namespace pdforge;
using namespace pdforge::testing;

namespace {

double max_abs_diff(const TabularPolicy &a, const TabularPolicy &b) {
  double d = 0.0;
  for (std::size_t x = 0; x < a.logit_table().size(); ++x)
    for (std::size_t y = 0; y < a.logit_table()[x].size(); ++y)
      d = std::max(d, std::abs(a.logit_table()[x][y] - b.logit_table()[x][y]));
  return d;
}

std::string csv(const TrainingLog &log) {
  std::ostringstream out;
  log.write_csv(out);
  return out.str();
}

} // namespace

TEST_CASE("advantage examples") {
  const auto a = grpo_advantages(std::vector<double>{1, 0, 1, 0}, 1e-6);
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(a[j] == doctest::Approx(j % 2 ? -1.0 : 1.0).epsilon(1e-5));
  for (double v : grpo_advantages(std::vector<double>{1, 1, 1, 1}, 1e-6))
    CHECK(v == 0.0);

  const std::vector<double> r = {0.3, 0.7, 0.7, 0.3, 0.5, 0.5};
  const double mean = 0.5;
  const double sd = std::sqrt((4 * 0.04) / 6.0);
  const auto b = grpo_advantages(r, 1e-6);
  for (std::size_t j = 0; j < r.size(); ++j)
    CHECK(b[j] == doctest::Approx((r[j] - mean) / (sd + 1e-6)).epsilon(1e-12));
  CHECK_THROWS_AS(grpo_advantages(std::vector<double>{1.0}, 1e-6), ConfigError);
}

TEST_CASE("advantages always sum to zero") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t g = 2 + uniform_index(rng, 30);
    std::vector<double> s(g);
    for (auto &v : s)
      v = uniform_index(rng, 3) == 0 ? 0.25 : 10.0 * uniform01(rng) - 5.0;
    double sum = 0.0;
    for (double v : grpo_advantages(s, 1e-6))
      sum += v;
    CHECK(std::abs(sum) <= 1e-9 * static_cast<double>(g));
  }
}

TEST_CASE("dual step examples") {
  const auto next = dual_step(MultiplierVector({0.5, 0.5}), std::vector<double>{0.90, 0.97},
                              std::vector<double>{0.95, 0.95}, 0.1);
  CHECK(next[0] == doctest::Approx(0.505).epsilon(1e-14));
  CHECK(next[1] == doctest::Approx(0.498).epsilon(1e-14));
  CHECK(dual_step(MultiplierVector({0.0}), std::vector<double>{0.99}, std::vector<double>{0.95}, 0.1)[0] ==
        0.0);
  CHECK(dual_step(MultiplierVector({0.7}), std::vector<double>{0.95}, std::vector<double>{0.95}, 0.1)[0] ==
        0.7);
}

TEST_CASE("dual step projection and direction") {
  Rng rng(2);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto lam = random_lambdas(rng, 5, 1.0);
    std::vector<double> c(5), b(5);
    for (std::size_t i = 0; i < 5; ++i) {
      c[i] = uniform01(rng);
      b[i] = uniform01(rng);
    }
    const auto next = dual_step(lam, c, b, 2.0 * uniform01(rng));
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(next[i] >= 0.0);
      if (lam[i] > 0 && next[i] > 0) {
        const double moved = next[i] - lam[i];
        CHECK((moved > 0) == (b[i] > c[i]));
      }
      if (b[i] > c[i])
        CHECK(next[i] > lam[i]);
    }
  }
}

TEST_CASE("zero primal rate leaves the policy unchanged") {
  Rng rng(3);
  auto p = random_problem(rng, 3, 5, 0.05);
  const auto policy = random_policy(rng, p.space);
  TrainerConfig cfg;
  cfg.eta_theta = 0.0;
  CHECK_NOTHROW(cfg.validate());
  for (bool exact : {false, true}) {
    cfg.use_exact_gradient = exact;
    const auto next = primal_step(policy, random_lambdas(rng, 5), p, cfg, rng);
    CHECK(next.logit_table() == policy.logit_table());
  }
}

TEST_CASE("zero multipliers ignore the constraints") {
  auto with = hand_problem({{1, 0, 0.5}, {0, 1, 0}}, {{{1}, {0}, {1}}, {{0}, {1}, {0}}}, {0.5, 0.5},
                           {{0.2, 0.3, 0.5}, {0.4, 0.4, 0.2}}, {0.1, {0.9}});
  auto without = hand_problem({{1, 0, 0.5}, {0, 1, 0}}, {{{0}, {0}, {0}}, {{0}, {0}, {0}}}, {0.5, 0.5},
                              {{0.2, 0.3, 0.5}, {0.4, 0.4, 0.2}}, {0.1, {0.0}});
  TrainerConfig cfg;
  auto policy = with.reference.as_policy();
  for (bool exact : {false, true}) {
    cfg.use_exact_gradient = exact;
    Rng a(42), b(42);
    const auto s1 = primal_step(policy, MultiplierVector::zeros(1), with, cfg, a);
    const auto s2 = primal_step(policy, MultiplierVector::zeros(1), without, cfg, b);
    CHECK(max_abs_diff(s1, s2) == 0.0);
  }
}

TEST_CASE("exact ascent raises the best response monotonically") {
  auto p = hand_problem({{1, 0, 0.2}, {0.1, 0.9, 0.0}}, {{{1}, {1}, {1}}, {{1}, {1}, {1}}},
                        {0.5, 0.5}, uniform_table({3, 3}), {0.1, {0.5}});
  TrainerConfig cfg;
  cfg.use_exact_gradient = true;
  cfg.eta_theta = 0.1;
  Rng rng(4);
  auto policy = p.reference.as_policy();
  const auto lam = MultiplierVector::zeros(1);
  const std::size_t best[2] = {0, 1};
  double prev[2] = {policy.distribution(0)[0], policy.distribution(1)[1]};
  for (int step = 0; step < 100; ++step) {
    policy = primal_step(policy, lam, p, cfg, rng);
    for (std::size_t x = 0; x < 2; ++x) {
      const double now = policy.distribution(x)[best[x]];
      CHECK(now > prev[x]);
      prev[x] = now;
    }
  }
}

TEST_CASE("primal steps keep valid rows and small exact steps never lower the lagrangian") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_problem(rng, 3, 6, 0.05 + 0.2 * uniform01(rng));
    const auto lam = random_lambdas(rng, 5);
    TrainerConfig cfg;
    cfg.eta_theta = 1e-2;
    cfg.use_exact_gradient = true;
    auto policy = random_policy(rng, p.space);
    for (int step = 0; step < 20; ++step) {
      const auto next = primal_step(policy, lam, p, cfg, rng);
      CHECK(lagrangian_value(next, lam, p) >= lagrangian_value(policy, lam, p) - 1e-9);
      policy = next;
    }
    cfg.use_exact_gradient = false;
    cfg.eta_theta = 5.0;
    std::vector<GroupSample> groups;
    const auto sampled = primal_step(policy, lam, p, cfg, rng, &groups);
    CHECK(groups.size() == cfg.prompts_per_step);
    for (const auto &g : groups) {
      CHECK(g.responses.size() == cfg.group_size);
      double sum = 0.0;
      for (double a : g.advantages)
        sum += a;
      CHECK(std::abs(sum) <= 1e-9 * static_cast<double>(cfg.group_size));
    }
    for (const auto &row : sampled.distributions()) {
      double s = 0.0;
      for (double v : row) {
        CHECK(std::isfinite(v));
        s += v;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("a satisfied reward-optimal reference is a fixed point") {
  GeneratorSpec spec;
  spec.n_tasks = 3;
  spec.catalog_size = 5;
  spec.seed = 8;
  const auto p = suite_problem(generate_suite(spec).suite);
  TrainerConfig cfg;
  cfg.iterations = 200;
  const auto res = train(p, cfg);
  CHECK(res.log.records.size() == 201);
  for (const auto &r : res.log.records) {
    for (double l : r.lambdas)
      CHECK(l == 0.0);
    CHECK(r.kl <= 1e-3);
  }
}

TEST_CASE("training starts at the reference") {
  Rng rng(6);
  auto p = random_problem(rng, 3, 5, 0.1);
  TrainerConfig cfg;
  cfg.iterations = 3;
  const auto res = train(p, cfg);
  const auto &first = res.log.records.front();
  CHECK(first.iteration == 0);
  CHECK(first.kl <= 1e-15);
  CHECK(first.expected_reward == doctest::Approx(expected_reward(p.reference.as_policy(), p)));
  for (double l : first.lambdas)
    CHECK(l == 0.0);
  CHECK(res.log.records.back().iteration == 3);
}

TEST_CASE("a starved format constraint is driven past its threshold") {
  const auto p = suite_problem(generate_suite(starved_spec()).suite);
  const auto fmt = static_cast<std::size_t>(Constraint::format);
  const auto c0 = constraint_expectations(p.reference.as_policy(), p);
  REQUIRE(c0[fmt] < 0.95);
  const auto res = train(p, TrainerConfig{});
  const auto &recs = res.log.records;
  CHECK(recs[1].lambdas[fmt] > 0.0);
  double peak = 0.0;
  std::size_t crossed = 0;
  for (const auto &r : recs) {
    peak = std::max(peak, r.lambdas[fmt]);
    if (!crossed && r.constraints[fmt] >= 0.95)
      crossed = r.iteration;
  }
  CHECK(peak > 0.0);
  CHECK(crossed > 0);
  CHECK(recs.back().constraints[fmt] >= 0.95);
}

TEST_CASE("exact-gradient training reaches the oracle optimum") {
  auto spec = starved_spec();
  spec.n_tasks = 3;
  const auto p = suite_problem(generate_suite(spec).suite);
  const auto cert = minimize_dual(p);
  const auto star = tilted_policy(cert.lambda_star, p);
  TrainerConfig cfg;
  cfg.use_exact_gradient = true;
  cfg.eta_theta = 30.0;
  const auto res = train(p, cfg);
  const auto &last = res.log.records.back();
  CHECK(std::abs(last.expected_reward - expected_reward(star, p)) <= 0.01);
  const auto c_star = constraint_expectations(star, p);
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(std::abs(last.constraints[i] - c_star[i]) <= 0.01);
}

TEST_CASE("training is reproducible") {
  const auto p = suite_problem(generate_suite(starved_spec()).suite);
  TrainerConfig cfg;
  cfg.iterations = 100;
  cfg.seed = 17;
  const auto a = train(p, cfg), b = train(p, cfg);
  CHECK(csv(a.log) == csv(b.log));
  CHECK(a.checkpoint_json() == b.checkpoint_json());
  cfg.seed = 18;
  CHECK(csv(train(p, cfg).log) != csv(a.log));
  cfg.sampled_constraints = true;
  CHECK(csv(train(p, cfg).log) == csv(train(p, cfg).log));
}

TEST_CASE("records stream through the callback") {
  const auto p = suite_problem(generate_suite(starved_spec()).suite);
  TrainerConfig cfg;
  cfg.iterations = 10;
  std::size_t seen = 0;
  const auto res = train(p, cfg, [&](const TrainingRecord &r) { CHECK(r.iteration == seen++); });
  CHECK(seen == 11);
  std::istringstream in(csv(res.log));
  std::string header;
  std::getline(in, header);
  CHECK(header == "iter,reward,c_format,c_execution,c_length,c_answer,c_sql,l_format,"
                  "l_execution,l_length,l_answer,l_sql,kl,lagrangian");
  const auto ck = res.checkpoint_json();
  CHECK(ck.at("iterations") == 10);
  CHECK(TabularPolicy::from_json(ck.at("policy")).logit_table() == res.policy.logit_table());
}

TEST_CASE("trainer config validation") {
  TrainerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto bad = cfg;
  bad.group_size = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.eta_lambda = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.std_floor = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.eta_theta = NAN;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(TrainerConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
  auto j = cfg.to_json();
  j["learning_rate"] = 1.0;
  CHECK_THROWS_AS(TrainerConfig::from_json(j), ConfigError);
}

TEST_CASE("overflowing scores abort with a numerical error") {
  auto p = hand_problem({{1e308, 1e308, -1e308}}, {{{1}, {1}, {0}}}, {1.0}, uniform_table({3}),
                        {0.1, {0.5}});
  TrainerConfig cfg;
  cfg.iterations = 5;
  CHECK_THROWS_AS(train(p, cfg), NumericalError);
}
