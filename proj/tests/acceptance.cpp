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

// Acceptance battery: one pass/fail line per criterion, exit status 1 if
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "pdforge/cli.hpp"
#include "pdforge/oracle.hpp"
#include "pdforge/trainer.hpp"
#include "scoring_cases.hpp"
#include "support.hpp"

using namespace pdforge;
using namespace pdforge::testing;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

// Generated instance with random archetype mix; every catalog keeps a
// correct response, so thresholds below 1 are strictly feasible.
Problem generated_problem(Rng &rng, std::uint64_t seed, double beta, std::size_t max_tasks = 5) {
  GeneratorSpec spec;
  spec.n_tasks = 1 + uniform_index(rng, max_tasks);
  spec.catalog_size = 2 + uniform_index(rng, 7);
  const auto w = random_simplex(rng, kNumArchetypes, 0.05);
  std::copy(w.begin(), w.end(), spec.mix.begin());
  spec.seed = seed;
  ObjectiveConfig config;
  config.beta = beta;
  return suite_problem(generate_suite(spec).suite, config);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Verdict duality_battery() {
  Rng rng(1001);
  const double betas[] = {0.02, 0.05, 0.2};
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  int failed = 0;
  for (int k = 0; k < 50; ++k) {
    const auto p = generated_problem(rng, 5000 + k, betas[k % 3]);
    const auto cert = certify_theorem(p);
    worst = std::max(worst, std::abs(cert.gap));
    failed += !cert.passed || std::abs(cert.gap) > 1e-4;
  }
  const double t = seconds_since(t0);
  return {failed == 0 && t <= 60.0,
          fmt::format("50 instances, {} failed, max |D*-P*| = {:.2e}, {:.1f} s", failed, worst, t)};
}

Verdict perturbation_battery() {
  Rng rng(1002);
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t trials = 0, violations = 0;
  double worst_ratio = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto p = generated_problem(rng, 6000 + k, 0.05);
    const double nu = 2.0 * uniform01(rng);
    const auto rep = verify_lemma1(random_distributions(rng, p), nu, p, 500, rng);
    trials += rep.trials;
    violations += rep.violations;
    if (nu > 0)
      worst_ratio = std::max(worst_ratio,
                             std::max(rep.max_reward_deviation, rep.max_constraint_deviation) / nu);
  }
  const double t = seconds_since(t0);
  return {violations == 0 && trials >= 10000 && t <= 30.0,
          fmt::format("{} perturbations, {} violations, max deviation/nu = {:.4f}, {:.1f} s", trials,
                      violations, worst_ratio, t)};
}

Verdict cross_path() {
  Rng rng(1003);
  double worst = 0.0;
  std::size_t points = 0;
  for (int k = 0; k < 10; ++k) {
    const auto p = generated_problem(rng, 7000 + k, k % 2 ? 0.02 : 0.2);
    for (int j = 0; j < 1000; ++j, ++points) {
      const auto lam = random_lambdas(rng, 5, 10.0);
      worst = std::max(worst,
                       std::abs(dual_function(lam, p) - lagrangian_value(tilted_policy(lam, p), lam, p)));
    }
  }
  return {worst <= 1e-9, fmt::format("{} points over 10 suites, max difference {:.2e}", points, worst)};
}

Verdict gradient_fidelity() {
  Rng rng(1004);
  const double h = 1e-5;
  double worst_l = 0.0, worst_d = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto p = generated_problem(rng, 8000 + k, 0.05 + 0.2 * uniform01(rng), 3);
    const auto policy = random_policy(rng, p.space);
    const auto lam = random_lambdas(rng, 5);
    const auto grad = exact_lagrangian_gradient(policy, lam, p);
    double scale = 1e-3;
    for (const auto &row : grad)
      for (double v : row)
        scale = std::max(scale, std::abs(v));
    for (std::size_t x = 0; x < grad.size(); ++x)
      for (std::size_t y = 0; y < grad[x].size(); ++y) {
        auto up = policy.logit_table(), dn = up;
        up[x][y] += h;
        dn[x][y] -= h;
        const double fd = (lagrangian_value(TabularPolicy(p.space, up), lam, p) -
                           lagrangian_value(TabularPolicy(p.space, dn), lam, p)) /
                          (2 * h);
        worst_l = std::max(worst_l, std::abs(fd - grad[x][y]) / scale);
      }
  }
  const auto p = generated_problem(rng, 8999, 0.1);
  for (int k = 0; k < 20; ++k) {
    const auto lam = random_lambdas(rng, 5);
    const auto g = dual_gradient(lam, p);
    double scale = 1e-3;
    for (double v : g)
      scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < 5; ++i) {
      std::vector<double> up(lam.values().begin(), lam.values().end()), dn = up;
      up[i] += h;
      dn[i] -= h;
      const double fd =
          (dual_function(MultiplierVector(up), p) - dual_function(MultiplierVector(dn), p)) / (2 * h);
      worst_d = std::max(worst_d, std::abs(fd - g[i]) / scale);
    }
  }
  return {worst_l <= 1e-5 && worst_d <= 1e-5,
          fmt::format("lagrangian max rel. error {:.2e} (100 points), dual {:.2e} (20 points)", worst_l,
                      worst_d)};
}

Verdict end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto p = suite_problem(generate_suite(starved_spec()).suite);
  const auto ref = p.reference.as_policy();
  const double r_ref = expected_reward(ref, p);
  const auto c_ref = constraint_expectations(ref, p);
  const auto fmt_i = static_cast<std::size_t>(Constraint::format);
  const auto len_i = static_cast<std::size_t>(Constraint::length);
  bool ok = c_ref[fmt_i] < 0.95 && c_ref[len_i] < 0.95;

  const auto grpo = train(p, TrainerConfig{});
  const auto &last = grpo.log.records.back();
  double c_min = 1.0;
  for (double c : last.constraints)
    c_min = std::min(c_min, c);
  ok = ok && c_min >= 0.93 && last.expected_reward >= r_ref + 0.1;

  const auto cert = minimize_dual(p);
  const auto star = tilted_policy(cert.lambda_star, p);
  TrainerConfig exact;
  exact.use_exact_gradient = true;
  exact.eta_theta = 30.0;
  const auto ex = train(p, exact).log.records.back();
  double dev = std::abs(ex.expected_reward - expected_reward(star, p));
  const auto c_star = constraint_expectations(star, p);
  for (std::size_t i = 0; i < 5; ++i)
    dev = std::max(dev, std::abs(ex.constraints[i] - c_star[i]));
  const double t = seconds_since(t0);
  ok = ok && dev <= 0.01 && t <= 300.0;
  return {ok, fmt::format("GRPO: min c = {:.4f}, reward {:.4f} vs reference {:.4f}; exact mode "
                          "max deviation from oracle {:.2e}; {:.1f} s",
                          c_min, last.expected_reward, r_ref, dev, t)};
}

Verdict curve_shape() {
  const auto p = suite_problem(generate_suite(starved_spec()).suite);
  std::size_t violations = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    TrainerConfig cfg;
    cfg.seed = seed;
    const auto log = train(p, cfg).log;
    for (int series = 0; series < 6; ++series) {
      std::vector<double> v;
      for (const auto &r : log.records)
        v.push_back(series == 0 ? r.expected_reward : r.constraints[series - 1]);
      const auto sm = cli::moving_average(v, 25);
      for (std::size_t k = 51; k < sm.size(); ++k)
        violations += sm[k] < sm[k - 1];
    }
  }
  const auto dir = scratch_dir("acceptance_report");
  std::ostringstream out, err;
  const int gen = cli::run({"generate", "--out", (dir / "suite" / "suite.json").string(),
                            (data_dir() / "starved_spec.json").string()},
                           out, err);
  std::ofstream(dir / "c.json") << R"({"schema_version": 1, "suite": "suite/suite.json", "out": "runs", "run_id": "r"})";
  const int trained = cli::run({"--config", (dir / "c.json").string(), "train"}, out, err);
  const int reported = cli::run({"report", (dir / "runs" / "r").string()}, out, err);
  std::size_t panels = 0;
  if (fs::exists(dir / "runs" / "r" / "plots"))
    for (const auto &entry : fs::directory_iterator(dir / "runs" / "r" / "plots"))
      panels += entry.path().extension() == ".svg";
  return {violations == 0 && gen == 0 && trained == 0 && reported == 0 && panels == 6,
          fmt::format("10 seeds, {} smoothed decreases after iteration 50; report wrote {} panels",
                      violations, panels)};
}

Verdict scoring_golden() {
  const auto text = slurp(data_dir() / "schools_response.txt");
  const auto parsed = parse_response(text);
  bool extracted = false;
  if (const auto *p = std::get_if<ParsedResponse>(&parsed))
    extracted = p->sql && *p->sql == "SELECT T2.MailStreet\nFROM frpm AS T1\nJOIN schools AS T2 ON "
                                "T1.CDSCode = T2.CDSCode\nORDER BY T1.`FRPM Count (K-12)` DESC\nLIMIT 1";
  const auto cases = hand_cases();
  std::size_t matched = 0;
  std::vector<ScoreRequest> requests;
  for (const auto &c : cases) {
    matched += score(c.response, kGt, kT) == c.expected;
    for (int rep = 0; rep < 4; ++rep)
      requests.push_back({c.response, kGt, &kT});
  }
  const auto seq = score_batch(requests, {}, 1);
  const auto par = score_batch(requests, {}, 8);
  bool identical = seq.size() == par.size();
  for (std::size_t k = 0; identical && k < seq.size(); ++k)
    identical = seq[k].to_json().dump() == par[k].to_json().dump();
  return {extracted && matched == 30 && cases.size() == 30 && identical,
          fmt::format("reference extraction {}; {}/{} hand cases exact; 8-way {} sequential",
                      extracted ? "ok" : "wrong", matched, cases.size(), identical ? "==" : "!=")};
}

Verdict dual_update() {
  const auto worked = dual_step(MultiplierVector({0.5}), std::vector<double>{0.90},
                                std::vector<double>{0.95}, 0.1)[0];
  Rng rng(1008);
  std::size_t negative = 0, wrong_sign = 0;
  for (int k = 0; k < 100000; ++k) {
    const auto lam = random_lambdas(rng, 5, uniform_index(rng, 2) ? 1.0 : 0.01);
    std::vector<double> c(5), b(5);
    for (std::size_t i = 0; i < 5; ++i) {
      c[i] = uniform01(rng);
      b[i] = uniform01(rng);
    }
    const auto next = dual_step(lam, c, b, uniform01(rng));
    for (std::size_t i = 0; i < 5; ++i) {
      negative += next[i] < 0.0;
      if (lam[i] > 0 && next[i] > 0 && c[i] != b[i])
        wrong_sign += (next[i] > lam[i]) != (b[i] > c[i]);
    }
  }
  return {std::abs(worked - 0.505) <= 1e-12 && negative == 0 && wrong_sign == 0,
          fmt::format("worked update -> {:.6f}; {} negative, {} wrong-direction over 1e5 steps", worked,
                      negative, wrong_sign)};
}

Verdict determinism() {
  const auto dir = scratch_dir("acceptance_determinism");
  std::ostringstream out, err;
  const int gen = cli::run({"generate", (data_dir() / "starved_spec.json").string(),
                            (dir / "suite" / "suite.json").string()},
                           out, err);
  std::ofstream(dir / "c.json") << R"({"schema_version": 1, "suite": "suite/suite.json", "out": "runs"})";
  int codes = gen;
  for (const char *id : {"a", "b"})
    codes += cli::run({"--config", (dir / "c.json").string(), "--deterministic", "--seed", "3",
                       "--run-id", id, "train"},
                      out, err);
  bool same = codes == 0;
  for (const char *f : {"metrics.csv", "checkpoint.json"})
    same = same && fs::exists(dir / "runs" / "a" / f) &&
           slurp(dir / "runs" / "a" / f) == slurp(dir / "runs" / "b" / f);
  return {same, fmt::format("two seeded runs: metrics.csv and checkpoint.json {}",
                            same ? "byte-identical" : "differ")};
}

} // namespace

int main() {
  const std::pair<const char *, std::function<Verdict()>> criteria[] = {
      {"duality certification battery", duality_battery},
      {"perturbation bound battery", perturbation_battery},
      {"cross-path dual identity", cross_path},
      {"gradient fidelity", gradient_fidelity},
      {"primal-dual training end to end", end_to_end},
      {"training curve shape", curve_shape},
      {"scoring golden suite", scoring_golden},
      {"dual update", dual_update},
      {"determinism", determinism},
  };
  int failures = 0, n = 0;
  for (const auto &[name, check] : criteria) {
    ++n;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception &e) {
      v = {false, fmt::format("threw: {}", e.what())};
    }
    failures += !v.pass;
    fmt::print("criterion {} {}: {} ({})\n", n, v.pass ? "PASS" : "FAIL", name, v.detail);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", n - failures, n);
  return failures == 0 ? 0 : 1;
}
