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

#include "pdforge/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "pdforge/error.hpp"

namespace pdforge {

namespace {

constexpr double kArmijo = 1e-4;

double log_sum_exp(std::span<const double> v) {
  const double top = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v)
    s += std::exp(x - top);
  return top + std::log(s);
}

// log pi_ref + f / beta for one prompt.
std::vector<double> tilted_log_weights(std::size_t x, const MultiplierVector &lambdas,
                                       const Problem &problem) {
  const auto ref = problem.reference.probs(x);
  std::vector<double> w(ref.size());
  for (std::size_t y = 0; y < ref.size(); ++y)
    w[y] = std::log(ref[y]) + problem.combined_score(x, y, lambdas) / problem.config.beta;
  return w;
}

void check_lambdas(const MultiplierVector &lambdas, const Problem &problem) {
  if (lambdas.size() != problem.num_constraints())
    throw ConfigError(fmt::format("{} multipliers for {} constraints", lambdas.size(),
                                  problem.num_constraints()));
}

double projected_residual(std::span<const double> lam, std::span<const double> grad) {
  double r = 0.0;
  for (std::size_t i = 0; i < lam.size(); ++i)
    r = std::max(r, std::abs(lam[i] - std::max(0.0, lam[i] - grad[i])));
  return r;
}

// Constraints that no policy can violate (g_i >= 0 on every response).
std::vector<std::size_t> nontrivial_constraints(const Problem &problem) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < problem.num_constraints(); ++i) {
    bool trivial = true;
    for (std::size_t x = 0; x < problem.num_prompts() && trivial; ++x)
      for (std::size_t y = 0; y < problem.table.catalog_size(x); ++y)
        if (problem.slack(x, y, i) < 0.0) {
          trivial = false;
          break;
        }
    if (!trivial)
      out.push_back(i);
  }
  return out;
}

Distributions mix(const Distributions &a, const Distributions &b, double tau) {
  Distributions out = a;
  for (std::size_t x = 0; x < a.size(); ++x)
    for (std::size_t y = 0; y < a[x].size(); ++y)
      out[x][y] = (1.0 - tau) * a[x][y] + tau * b[x][y];
  return out;
}

// Smallest convex move toward a Slater point that satisfies every
// constraint exactly.
Distributions repair_feasibility(const Distributions &pi, const Distributions &slater,
                                 const Problem &problem) {
  const auto h = slack_expectations(pi, problem);
  const auto hs = slack_expectations(slater, problem);
  double tau = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (h[i] < 0.0)
      tau = std::max(tau, -h[i] / (hs[i] - h[i]));
  if (tau == 0.0)
    return pi;
  for (int attempt = 0; attempt < 60; ++attempt) {
    auto candidate = mix(pi, slater, std::min(1.0, tau));
    if (is_feasible(candidate, problem) || tau >= 1.0)
      return candidate;
    tau = tau * (1.0 + 1e-9) + 1e-15;
  }
  return slater;
}

// Flattened view of the problem for the interior-point solver. Prompts with
// zero weight are fixed at pi_ref and excluded.
struct FlatProblem {
  std::vector<std::size_t> prompt;      // prompt of each variable
  std::vector<std::size_t> response;    // response of each variable
  std::vector<std::size_t> first;       // first variable of each kept prompt
  std::vector<std::size_t> kept;        // kept prompt ids
  std::vector<double> weight, reward, log_ref;
  std::vector<std::vector<double>> a;   // a_i[k] = D_x g_i(x, y), nontrivial i only
  double beta = 0.0;

  std::size_t n() const { return prompt.size(); }
  std::size_t m() const { return a.size(); }
};

FlatProblem flatten(const Problem &problem, const std::vector<std::size_t> &constraints) {
  FlatProblem fp;
  fp.beta = problem.config.beta;
  fp.a.resize(constraints.size());
  for (std::size_t x = 0; x < problem.num_prompts(); ++x) {
    if (!(problem.dist[x] > 0.0))
      continue;
    fp.kept.push_back(x);
    fp.first.push_back(fp.prompt.size());
    for (std::size_t y = 0; y < problem.table.catalog_size(x); ++y) {
      fp.prompt.push_back(x);
      fp.response.push_back(y);
      fp.weight.push_back(problem.dist[x]);
      fp.reward.push_back(problem.table.reward(x, y));
      fp.log_ref.push_back(std::log(problem.reference.probs(x)[y]));
      for (std::size_t j = 0; j < constraints.size(); ++j)
        fp.a[j].push_back(problem.dist[x] * problem.slack(x, y, constraints[j]));
    }
  }
  fp.first.push_back(fp.prompt.size());
  return fp;
}

std::vector<double> flat_slacks(const FlatProblem &fp, const std::vector<double> &pi) {
  std::vector<double> h(fp.m(), 0.0);
  for (std::size_t j = 0; j < fp.m(); ++j)
    for (std::size_t k = 0; k < fp.n(); ++k)
      h[j] += fp.a[j][k] * pi[k];
  return h;
}

// f(pi) + (1/t) (sum log h + sum log pi); -inf outside the domain.
double barrier_value(const FlatProblem &fp, const std::vector<double> &pi, double t) {
  double f = 0.0;
  for (std::size_t k = 0; k < fp.n(); ++k) {
    if (!(pi[k] > 0.0))
      return -std::numeric_limits<double>::infinity();
    f += fp.weight[k] * (pi[k] * fp.reward[k] -
                         fp.beta * pi[k] * (std::log(pi[k]) - fp.log_ref[k])) +
         std::log(pi[k]) / t;
  }
  for (double h : flat_slacks(fp, pi)) {
    if (!(h > 0.0))
      return -std::numeric_limits<double>::infinity();
    f += std::log(h) / t;
  }
  return f;
}

struct NewtonResult {
  std::vector<double> direction;
  double decrement = 0.0; // grad . direction
};

// Equality-constrained Newton step for the barrier objective. The negated
// Hessian is diag(beta D / pi + 1 / (t pi^2)) + U U^T; its inverse is applied
// through the Woodbury identity so tiny probabilities never produce huge
// pivots.
NewtonResult newton_step(const FlatProblem &fp, const std::vector<double> &pi, double t) {
  const std::size_t n = fp.n(), m = fp.m(), p = fp.kept.size();
  const auto h = flat_slacks(fp, pi);

  Eigen::VectorXd grad(n), lam_inv(n);
  for (std::size_t k = 0; k < n; ++k) {
    grad[k] = fp.weight[k] *
                  (fp.reward[k] - fp.beta * (std::log(pi[k]) - fp.log_ref[k] + 1.0)) +
              1.0 / (t * pi[k]);
    for (std::size_t j = 0; j < m; ++j)
      grad[k] += fp.a[j][k] / (h[j] * t);
    lam_inv[k] = 1.0 / (fp.beta * fp.weight[k] / pi[k] + 1.0 / (t * pi[k] * pi[k]));
  }
  Eigen::MatrixXd U(n, m);
  for (std::size_t j = 0; j < m; ++j) {
    const double scale = 1.0 / (h[j] * std::sqrt(t));
    for (std::size_t k = 0; k < n; ++k)
      U(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = fp.a[j][k] * scale;
  }
  Eigen::MatrixXd LU = lam_inv.asDiagonal() * U;
  Eigen::MatrixXd W = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(m),
                                                static_cast<Eigen::Index>(m)) +
                      U.transpose() * LU;
  Eigen::LDLT<Eigen::MatrixXd> wsolve(W);
  auto apply_inverse = [&](const Eigen::VectorXd &v) -> Eigen::VectorXd {
    Eigen::VectorXd out = lam_inv.cwiseProduct(v);
    if (m > 0)
      out -= LU * wsolve.solve(LU.transpose() * v);
    return out;
  };

  const Eigen::VectorXd mg = apply_inverse(grad);
  Eigen::MatrixXd me(n, p);
  for (std::size_t x = 0; x < p; ++x) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t k = fp.first[x]; k < fp.first[x + 1]; ++k)
      e[static_cast<Eigen::Index>(k)] = 1.0;
    me.col(static_cast<Eigen::Index>(x)) = apply_inverse(e);
  }
  Eigen::MatrixXd S(p, p);
  Eigen::VectorXd rhs(p);
  for (std::size_t x = 0; x < p; ++x) {
    const auto rows = static_cast<Eigen::Index>(fp.first[x]);
    const auto len = static_cast<Eigen::Index>(fp.first[x + 1] - fp.first[x]);
    rhs[static_cast<Eigen::Index>(x)] = mg.segment(rows, len).sum();
    for (std::size_t x2 = 0; x2 < p; ++x2)
      S(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(x2)) =
          me.col(static_cast<Eigen::Index>(x2)).segment(rows, len).sum();
  }
  const Eigen::VectorXd w = S.ldlt().solve(rhs);
  const Eigen::VectorXd d = mg - me * w;

  NewtonResult out;
  out.direction.assign(d.data(), d.data() + n);
  out.decrement = grad.dot(d);
  return out;
}

// Maximizes the barrier objective at fixed t from a strictly feasible pi.
int center(const FlatProblem &fp, std::vector<double> &pi, double t, int budget) {
  int iterations = 0;
  for (; iterations < budget; ++iterations) {
    const auto step = newton_step(fp, pi, t);
    if (!(step.decrement > 2e-14))
      break;
    const auto &d = step.direction;
    double alpha = 1.0;
    for (std::size_t k = 0; k < fp.n(); ++k)
      if (d[k] < 0.0)
        alpha = std::min(alpha, -0.99 * pi[k] / d[k]);
    const auto h = flat_slacks(fp, pi);
    for (std::size_t j = 0; j < fp.m(); ++j) {
      double ad = 0.0;
      for (std::size_t k = 0; k < fp.n(); ++k)
        ad += fp.a[j][k] * d[k];
      if (ad < 0.0)
        alpha = std::min(alpha, -0.99 * h[j] / ad);
    }
    const double f0 = barrier_value(fp, pi, t);
    std::vector<double> trial(fp.n());
    bool accepted = false;
    for (int ls = 0; ls < 80; ++ls, alpha *= 0.5) {
      for (std::size_t k = 0; k < fp.n(); ++k)
        trial[k] = pi[k] + alpha * d[k];
      const double f1 = barrier_value(fp, trial, t);
      if (f1 >= f0 + 0.25 * alpha * step.decrement) {
        accepted = true;
        break;
      }
    }
    if (!accepted)
      break;
    // Keep each row on the simplex despite rounding.
    for (std::size_t x = 0; x + 1 < fp.first.size(); ++x) {
      double s = 0.0;
      for (std::size_t k = fp.first[x]; k < fp.first[x + 1]; ++k)
        s += trial[k];
      for (std::size_t k = fp.first[x]; k < fp.first[x + 1]; ++k)
        trial[k] /= s;
    }
    if (!(barrier_value(fp, trial, t) > -std::numeric_limits<double>::infinity()))
      break;
    pi = std::move(trial);
  }
  return iterations;
}

PrimalSolution solve_barrier(const Problem &problem, const PrimalOptions &options) {
  const auto constraints = nontrivial_constraints(problem);
  const auto slater = find_strictly_feasible(problem);
  const FlatProblem fp = flatten(problem, constraints);

  // Pull the Slater point toward pi_ref so every coordinate starts well
  // inside the simplex while keeping at least half of each slack.
  const auto hs = slack_expectations(slater, problem);
  const auto href = slack_expectations(problem.reference.table(), problem);
  double eps = 0.5;
  for (std::size_t i : constraints)
    if (href[i] < hs[i])
      eps = std::min(eps, 0.5 * hs[i] / (hs[i] - href[i]));
  const auto start = mix(slater, problem.reference.table(), eps);

  std::vector<double> pi(fp.n());
  for (std::size_t k = 0; k < fp.n(); ++k)
    pi[k] = start[fp.prompt[k]][fp.response[k]];

  PrimalSolution sol;
  sol.method = PrimalMethod::barrier;
  double t = 1.0;
  // Suboptimality at the center of parameter t is at most (#barriers) / t.
  const double m = static_cast<double>(fp.m() + fp.n());
  for (;;) {
    sol.iterations += center(fp, pi, t, options.max_newton_iterations - sol.iterations);
    if (m / t < options.gap_tol || sol.iterations >= options.max_newton_iterations)
      break;
    t *= 10.0;
  }
  if (m / t >= options.gap_tol)
    throw ConvergenceError("barrier method exhausted its Newton budget", m / t,
                           sol.iterations);

  sol.policy = problem.reference.table();
  for (std::size_t k = 0; k < fp.n(); ++k)
    sol.policy[fp.prompt[k]][fp.response[k]] = pi[k];
  // Interior iterates are feasible up to rounding; make it exact.
  sol.policy = repair_feasibility(sol.policy, slater, problem);
  sol.value = objective_value(sol.policy, problem);
  return sol;
}

// Lattice {k / N : sum k = N} on each simplex, product over prompts.
PrimalSolution solve_grid(const Problem &problem, const PrimalOptions &options) {
  const auto N = static_cast<std::size_t>(std::llround(1.0 / options.grid_resolution));
  const std::size_t P = problem.num_prompts();
  const std::size_t m = problem.num_constraints();
  const double beta = problem.config.beta;

  // Per-prompt lattice points with their objective and slack contributions.
  struct Point {
    std::vector<double> probs;
    double value;
    std::vector<double> slack;
  };
  std::vector<std::vector<Point>> points(P);
  for (std::size_t x = 0; x < P; ++x) {
    const std::size_t n = problem.table.catalog_size(x);
    std::vector<std::size_t> counts(n, 0);
    auto emit = [&]() {
      Point pt;
      pt.probs.resize(n);
      for (std::size_t y = 0; y < n; ++y)
        pt.probs[y] = static_cast<double>(counts[y]) / static_cast<double>(N);
      double r = 0.0;
      pt.slack.assign(m, 0.0);
      for (std::size_t y = 0; y < n; ++y) {
        r += pt.probs[y] * problem.table.reward(x, y);
        for (std::size_t i = 0; i < m; ++i)
          pt.slack[i] += problem.dist[x] * pt.probs[y] * problem.slack(x, y, i);
      }
      pt.value = problem.dist[x] * (r - beta * kl(pt.probs, problem.reference.probs(x)));
      points[x].push_back(std::move(pt));
    };
    // Compositions of N into n parts; the last part takes the remainder.
    auto fill = [&](auto &self, std::size_t y, std::size_t left) -> void {
      if (y + 1 == n) {
        counts[y] = left;
        emit();
        return;
      }
      for (std::size_t c = 0; c <= left; ++c) {
        counts[y] = c;
        self(self, y + 1, left - c);
      }
    };
    fill(fill, 0, N);
  }

  PrimalSolution best;
  best.method = PrimalMethod::grid;
  best.value = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> choice(P, 0);
  std::vector<double> slack(m);
  std::size_t visited = 0;
  for (;;) {
    ++visited;
    double value = 0.0;
    std::fill(slack.begin(), slack.end(), 0.0);
    for (std::size_t x = 0; x < P; ++x) {
      const auto &pt = points[x][choice[x]];
      value += pt.value;
      for (std::size_t i = 0; i < m; ++i)
        slack[i] += pt.slack[i];
    }
    const bool feasible =
        std::all_of(slack.begin(), slack.end(), [](double s) { return s >= -1e-12; });
    if (feasible && value > best.value) {
      best.value = value;
      best.policy.assign(P, {});
      for (std::size_t x = 0; x < P; ++x)
        best.policy[x] = points[x][choice[x]].probs;
    }
    std::size_t x = 0;
    while (x < P && ++choice[x] == points[x].size())
      choice[x++] = 0;
    if (x == P)
      break;
  }
  if (best.policy.empty())
    throw InfeasibleError("no lattice point satisfies the constraints");
  best.iterations = static_cast<int>(std::min<std::size_t>(visited, INT32_MAX));
  return best;
}

std::size_t binomial_saturating(std::size_t n, std::size_t k) {
  long double c = 1.0L;
  for (std::size_t i = 1; i <= k; ++i)
    c = c * static_cast<long double>(n - k + i) / static_cast<long double>(i);
  return c > static_cast<long double>(SIZE_MAX / 2) ? SIZE_MAX
                                                    : static_cast<std::size_t>(std::llround(c));
}

} // namespace

Distributions tilted_policy(const MultiplierVector &lambdas, const Problem &problem) {
  check_lambdas(lambdas, problem);
  Distributions out(problem.num_prompts());
  for (std::size_t x = 0; x < problem.num_prompts(); ++x)
    out[x] = softmax(tilted_log_weights(x, lambdas, problem));
  return out;
}

double dual_function(const MultiplierVector &lambdas, const Problem &problem) {
  check_lambdas(lambdas, problem);
  double total = 0.0;
  for (std::size_t x = 0; x < problem.num_prompts(); ++x)
    total += problem.dist[x] * log_sum_exp(tilted_log_weights(x, lambdas, problem));
  return problem.config.beta * total;
}

std::vector<double> dual_gradient(const MultiplierVector &lambdas, const Problem &problem) {
  return slack_expectations(tilted_policy(lambdas, problem), problem);
}

std::vector<double> dual_hessian(const MultiplierVector &lambdas, const Problem &problem) {
  const auto pi = tilted_policy(lambdas, problem);
  const std::size_t m = problem.num_constraints();
  std::vector<double> H(m * m, 0.0);
  for (std::size_t x = 0; x < pi.size(); ++x) {
    std::vector<double> mean(m, 0.0);
    for (std::size_t y = 0; y < pi[x].size(); ++y)
      for (std::size_t i = 0; i < m; ++i)
        mean[i] += pi[x][y] * problem.slack(x, y, i);
    for (std::size_t y = 0; y < pi[x].size(); ++y)
      for (std::size_t i = 0; i < m; ++i) {
        const double di = problem.slack(x, y, i) - mean[i];
        for (std::size_t j = 0; j < m; ++j)
          H[i * m + j] += problem.dist[x] * pi[x][y] * di *
                          (problem.slack(x, y, j) - mean[j]);
      }
  }
  for (double &v : H)
    v /= problem.config.beta;
  return H;
}

nlohmann::json DualCertificate::to_json() const {
  return {{"lambda_star", std::vector<double>(lambda_star.values().begin(),
                                              lambda_star.values().end())},
          {"dual_value", dual_value},
          {"primal_value", primal_value},
          {"gap", gap},
          {"bound", bound},
          {"complementary_slackness_residual", complementary_slackness_residual},
          {"dual_residual", dual_residual},
          {"dual_iterations", dual_iterations},
          {"primal_iterations", primal_iterations},
          {"passed", passed}};
}

DualCertificate minimize_dual(const Problem &problem, const DualOptions &options) {
  const std::size_t m = problem.num_constraints();
  std::vector<double> lam(m, 0.0);
  auto value_at = [&](const std::vector<double> &l) {
    return dual_function(MultiplierVector(l), problem);
  };
  auto project = [](double v) { return std::max(0.0, v); };

  double f = value_at(lam);
  double residual = 0.0;
  int it = 0;
  for (;; ++it) {
    const auto grad = dual_gradient(MultiplierVector(lam), problem);
    residual = projected_residual(lam, grad);
    if (residual <= options.tol)
      break;
    if (it >= options.max_iterations)
      throw ConvergenceError(
          fmt::format("dual solver reached {} iterations with residual {:.3e}", it,
                      residual),
          residual, it);

    // Bound-active set: at (or numerically at) zero and pushing outward.
    const double eps = std::min(1e-3, residual);
    std::vector<bool> active(m);
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < m; ++i) {
      active[i] = lam[i] <= eps && grad[i] > 0.0;
      if (!active[i])
        free.push_back(i);
    }
    const auto H = dual_hessian(MultiplierVector(lam), problem);
    std::vector<double> d(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      if (active[i])
        d[i] = -grad[i];
    if (!free.empty()) {
      const auto nf = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd Hf(nf, nf);
      Eigen::VectorXd gf(nf);
      double scale = 1.0;
      for (Eigen::Index a = 0; a < nf; ++a) {
        gf[a] = grad[free[static_cast<std::size_t>(a)]];
        for (Eigen::Index b = 0; b < nf; ++b)
          Hf(a, b) = H[free[static_cast<std::size_t>(a)] * m + free[static_cast<std::size_t>(b)]];
        scale = std::max(scale, Hf(a, a));
      }
      Hf.diagonal().array() += 1e-10 * scale;
      const Eigen::VectorXd df = Hf.ldlt().solve(-gf);
      for (Eigen::Index a = 0; a < nf; ++a)
        d[free[static_cast<std::size_t>(a)]] = df[a];
    }

    auto arc_search = [&](const std::vector<double> &dir, bool newton,
                          std::vector<double> &out, double &f_out) {
      double alpha = 1.0;
      for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
        std::vector<double> trial(m);
        double required = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          trial[i] = project(lam[i] + alpha * dir[i]);
          if (newton && !active[i])
            required += alpha * -grad[i] * dir[i];
          else
            required += grad[i] * (lam[i] - trial[i]);
        }
        const double f1 = value_at(trial);
        // Once the predicted decrease drops below the rounding noise of D,
        // values can no longer rank steps; accept any step that does not
        // visibly increase D.
        const double noise = 1e-13 * std::max(1.0, std::abs(f));
        const bool resolvable = kArmijo * required > noise;
        if (resolvable ? (f - f1 >= kArmijo * required && f1 <= f) : f1 <= f + noise) {
          out = std::move(trial);
          f_out = f1;
          return true;
        }
      }
      return false;
    };

    std::vector<double> next;
    double f_next = f;
    if (!arc_search(d, true, next, f_next)) {
      std::vector<double> steepest(m);
      for (std::size_t i = 0; i < m; ++i)
        steepest[i] = -grad[i];
      if (!arc_search(steepest, false, next, f_next))
        throw ConvergenceError(
            fmt::format("dual line search stalled with residual {:.3e}", residual),
            residual, it);
    }
    lam = std::move(next);
    f = f_next;
    if (std::accumulate(lam.begin(), lam.end(), 0.0) > options.lambda_cap)
      throw InfeasibleError(fmt::format(
          "multiplier norm exceeded {} after {} iterations; constraints cannot be met",
          options.lambda_cap, it + 1));
  }

  DualCertificate cert;
  cert.lambda_star = MultiplierVector(lam);
  cert.dual_value = f;
  cert.dual_residual = residual;
  cert.dual_iterations = it;
  const auto pi = tilted_policy(cert.lambda_star, problem);
  const auto h = slack_expectations(pi, problem);
  for (std::size_t i = 0; i < m; ++i)
    cert.complementary_slackness_residual += lam[i] * std::abs(h[i]);
  const auto repaired = repair_feasibility(pi, find_strictly_feasible(problem), problem);
  cert.primal_value = objective_value(repaired, problem);
  cert.gap = cert.dual_value - cert.primal_value;
  cert.bound = gap_bound(problem.config.beta, 1.0, 0.0, cert.lambda_star);
  cert.passed = cert.gap >= -1e-8 && cert.gap <= cert.bound + 1e-4;
  return cert;
}

Distributions find_strictly_feasible(const Problem &problem) {
  const auto active = nontrivial_constraints(problem);
  Distributions pi = problem.reference.table();
  if (active.empty())
    return pi;

  auto min_slack = [&](const Distributions &d) {
    const auto h = slack_expectations(d, problem);
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t i : active)
      lo = std::min(lo, h[i]);
    return lo;
  };

  std::vector<std::vector<double>> logits(pi.size());
  for (std::size_t x = 0; x < pi.size(); ++x)
    for (double p : pi[x])
      logits[x].push_back(std::log(p));

  Distributions best = pi;
  double best_slack = min_slack(pi);
  constexpr double kStep = 0.5;
  for (double kappa : {5.0, 50.0, 500.0, 5000.0}) {
    for (int it = 0; it < 400; ++it) {
      for (std::size_t x = 0; x < pi.size(); ++x)
        pi[x] = softmax(logits[x]);
      const auto h = slack_expectations(pi, problem);
      double lo = std::numeric_limits<double>::infinity();
      for (std::size_t i : active)
        lo = std::min(lo, h[i]);
      if (lo > best_slack) {
        best_slack = lo;
        best = pi;
      }
      // Soft-min weights over the slacks.
      std::vector<double> w;
      for (std::size_t i : active)
        w.push_back(-kappa * h[i]);
      w = softmax(w);
      for (std::size_t x = 0; x < pi.size(); ++x)
        for (std::size_t y = 0; y < pi[x].size(); ++y) {
          double step = 0.0;
          for (std::size_t j = 0; j < active.size(); ++j)
            step += w[j] * problem.slack(x, y, active[j]);
          logits[x][y] += kStep * step;
        }
    }
  }
  if (!(best_slack > 0.0))
    throw InfeasibleError(fmt::format(
        "no strictly feasible policy found (best minimum slack {:.3e})", best_slack));
  return best;
}

std::size_t grid_point_count(const Problem &problem, double resolution) {
  const auto N = static_cast<std::size_t>(std::llround(1.0 / resolution));
  std::size_t total = 1;
  for (std::size_t x = 0; x < problem.num_prompts(); ++x) {
    const std::size_t n = problem.table.catalog_size(x);
    const std::size_t c = binomial_saturating(N + n - 1, n - 1);
    if (c == SIZE_MAX || total > SIZE_MAX / std::max<std::size_t>(c, 1))
      return SIZE_MAX;
    total *= c;
  }
  return total;
}

PrimalSolution primal_bruteforce(const Problem &problem, const PrimalOptions &options) {
  constexpr std::size_t kGridCap = 20'000'000;
  PrimalMethod method = options.method;
  if (method == PrimalMethod::automatic) {
    std::size_t dim = 0;
    for (std::size_t x = 0; x < problem.num_prompts(); ++x)
      dim += problem.table.catalog_size(x) - 1;
    method = dim <= 4 && grid_point_count(problem, options.grid_resolution) <= kGridCap
                 ? PrimalMethod::grid
                 : PrimalMethod::barrier;
  }
  if (method == PrimalMethod::grid) {
    if (!(options.grid_resolution > 0.0) || options.grid_resolution > 1.0)
      throw ConfigError("grid resolution must lie in (0, 1]");
    if (grid_point_count(problem, options.grid_resolution) > kGridCap)
      throw ConfigError("grid too large; use the barrier method");
    return solve_grid(problem, options);
  }
  return solve_barrier(problem, options);
}

double gap_bound(double beta, double B, double nu, const MultiplierVector &lambda_nu_star) {
  if (!(beta > 0.0) || B < 0.0 || nu < 0.0)
    throw ConfigError("gap_bound needs beta > 0 and nonnegative B, nu");
  return (beta + B + B * lambda_nu_star.l1_norm()) * nu;
}

PerturbationReport verify_lemma1(const Distributions &pi, double nu, const Problem &problem,
                                 std::size_t trials, Rng &rng, double B) {
  if (nu < 0.0 || nu > 2.0)
    throw ConfigError("perturbation radius must lie in [0, 2]");
  const std::size_t m = problem.num_constraints();
  const double base_r = expected_reward(pi, problem);
  const auto base_c = constraint_expectations(pi, problem);

  PerturbationReport report;
  report.nu = nu;
  report.bound = B * nu;

  auto record = [&](const Distributions &q) {
    const double dr = std::abs(expected_reward(q, problem) - base_r);
    const auto c = constraint_expectations(q, problem);
    double dc = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      dc = std::max(dc, std::abs(c[i] - base_c[i]));
    report.max_reward_deviation = std::max(report.max_reward_deviation, dr);
    report.max_constraint_deviation = std::max(report.max_constraint_deviation, dc);
    if (dr > report.bound + 1e-10 || dc > report.bound + 1e-10)
      ++report.violations;
    ++report.trials;
  };

  // Move up to nu/2 of mass onto the response with the largest signal
  // (or smallest, when toward_max is false), taking from the others in
  // order of how far their signal is from it.
  auto extremal = [&](auto signal, bool toward_max) {
    Distributions q = pi;
    for (std::size_t x = 0; x < q.size(); ++x) {
      const std::size_t n = q[x].size();
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return toward_max ? signal(x, a) < signal(x, b) : signal(x, a) > signal(x, b);
      });
      const std::size_t target = order.back();
      double budget = 0.5 * nu;
      for (std::size_t k = 0; k + 1 < n && budget > 0.0; ++k) {
        const double moved = std::min(budget, q[x][order[k]]);
        q[x][order[k]] -= moved;
        q[x][target] += moved;
        budget -= moved;
      }
    }
    return q;
  };

  record(extremal([&](std::size_t x, std::size_t y) { return problem.table.reward(x, y); }, true));
  record(extremal([&](std::size_t x, std::size_t y) { return problem.table.reward(x, y); }, false));
  for (std::size_t i = 0; i < m; ++i) {
    auto sig = [&, i](std::size_t x, std::size_t y) { return problem.table.constraint(x, y, i); };
    record(extremal(sig, true));
    record(extremal(sig, false));
  }

  for (std::size_t t = 0; t < trials; ++t) {
    Distributions q = pi;
    for (std::size_t x = 0; x < q.size(); ++x) {
      const std::size_t n = q[x].size();
      if (t % 2 == 0) {
        // Convex move toward a random distribution, L1 length <= nu.
        std::vector<double> w(n);
        double s = 0.0;
        for (double &v : w) {
          v = -std::log(1.0 - uniform01(rng));
          s += v;
        }
        double dist = 0.0;
        for (std::size_t y = 0; y < n; ++y) {
          w[y] /= s;
          dist += std::abs(w[y] - q[x][y]);
        }
        const double tau = dist > 0.0 ? std::min(1.0, nu * uniform01(rng) / dist) : 0.0;
        for (std::size_t y = 0; y < n; ++y)
          q[x][y] += tau * (w[y] - q[x][y]);
      } else {
        // Signed transfer between two responses, L1 length 2 * moved.
        const auto from = static_cast<std::size_t>(uniform_index(rng, n));
        auto to = static_cast<std::size_t>(uniform_index(rng, n - 1));
        if (to >= from)
          ++to;
        const double moved = std::min(q[x][from], 0.5 * nu * uniform01(rng));
        q[x][from] -= moved;
        q[x][to] += moved;
      }
    }
    record(q);
  }
  return report;
}

DualCertificate certify_theorem(const Problem &problem, const CertifyOptions &options) {
  DualCertificate cert = minimize_dual(problem, options.dual);
  const auto primal = primal_bruteforce(problem, options.primal);
  cert.primal_value = primal.value;
  cert.primal_iterations = primal.iterations;
  cert.gap = cert.dual_value - cert.primal_value;
  cert.bound = gap_bound(problem.config.beta, 1.0, 0.0, cert.lambda_star);
  cert.passed = cert.gap >= -1e-8 && cert.gap <= cert.bound + options.gap_tolerance;
  return cert;
}

} // namespace pdforge
