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

#ifndef PDFORGE_ORACLE_HPP
#define PDFORGE_ORACLE_HPP

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdforge/objective.hpp"

namespace pdforge {

// Exact maximizer of L(., lambda) over the full simplex per prompt:
//   pi_lambda(y|x) ∝ pi_ref(y|x) exp((r + lambda^T g) / beta)
Distributions tilted_policy(const MultiplierVector &lambdas, const Problem &problem);

// D(lambda) = beta E_x log sum_y pi_ref(y|x) exp((r + lambda^T g) / beta)
double dual_function(const MultiplierVector &lambdas, const Problem &problem);

// Envelope gradient E_x E_{y~pi_lambda}[g].
std::vector<double> dual_gradient(const MultiplierVector &lambdas, const Problem &problem);

// (1/beta) E_x Cov_{pi_lambda}(g), row-major m x m.
std::vector<double> dual_hessian(const MultiplierVector &lambdas, const Problem &problem);

struct DualOptions {
  // Projected-gradient residual ||lambda - [lambda - grad]_+||_inf.
  double tol = 1e-9;
  int max_iterations = 200;
  // ||lambda||_1 beyond this is reported as infeasibility.
  double lambda_cap = 1e3;
};

struct DualCertificate {
  MultiplierVector lambda_star;
  double dual_value = 0.0;
  double primal_value = 0.0;
  double gap = 0.0;
  double bound = 0.0;
  double complementary_slackness_residual = 0.0;
  double dual_residual = 0.0;
  int dual_iterations = 0;
  int primal_iterations = 0;
  bool passed = false;

  nlohmann::json to_json() const;
};

// Projected Newton with Armijo backtracking along the projection arc on
// the dual over lambda >= 0. P* in the returned certificate comes from
// pi_{lambda*} mixed with a strictly feasible policy just enough to satisfy
// every constraint. Throws InfeasibleError past lambda_cap and
// ConvergenceError at the iteration cap.
DualCertificate minimize_dual(const Problem &problem, const DualOptions &options = {});

enum class PrimalMethod { automatic, grid, barrier };

struct PrimalOptions {
  PrimalMethod method = PrimalMethod::automatic;
  // Grid step on each simplex (grid mode).
  double grid_resolution = 1e-3;
  // Barrier mode stops when (#constraints)/t falls below this.
  double gap_tol = 1e-10;
  int max_newton_iterations = 2000;
};

struct PrimalSolution {
  double value = 0.0;
  Distributions policy;
  int iterations = 0;
  PrimalMethod method = PrimalMethod::barrier;
};

// Number of points the grid method would visit, saturating at SIZE_MAX.
std::size_t grid_point_count(const Problem &problem, double resolution);

// Solves max E[r] - beta E KL s.t. E[g_i] >= 0 directly over the product of
// simplices, never touching the closed-form tilted policy. Grid mode
// enumerates a lattice (automatic picks it when total simplex dimension is
// at most 4 and the lattice is small); barrier mode runs a log-barrier
// interior-point method with equality-constrained Newton steps. Throws
// InfeasibleError when no strictly feasible policy exists.
PrimalSolution primal_bruteforce(const Problem &problem, const PrimalOptions &options = {});

// A policy with every non-trivial E[g_i] > 0 (Slater point), found by
// exponentiated-gradient ascent on a soft minimum of the slacks. Throws
// InfeasibleError when the best slack found is not positive.
Distributions find_strictly_feasible(const Problem &problem);

// (beta + B + B ||lambda||_1) nu
double gap_bound(double beta, double B, double nu, const MultiplierVector &lambda_nu_star);

struct PerturbationReport {
  double nu = 0.0;
  double max_reward_deviation = 0.0;
  double max_constraint_deviation = 0.0;
  double bound = 0.0;
  std::size_t trials = 0;
  std::size_t violations = 0;
};

// Perturbs every prompt's distribution within L1 radius nu (random
// convex moves, pairwise mass transfers, and the extremal transfer for
// each signal) and records the largest change in E[r] and E[g_i].
PerturbationReport verify_lemma1(const Distributions &pi, double nu,
                                 const Problem &problem, std::size_t trials, Rng &rng,
                                 double B = 1.0);

struct CertifyOptions {
  DualOptions dual;
  PrimalOptions primal{PrimalMethod::barrier};
  // Upper tolerance added to the nu = 0 bound.
  double gap_tolerance = 1e-4;
};

// Runs both solvers on the full tabular class (nu = 0) and checks
// -1e-8 <= D* - P* <= gap_bound(beta, 1, 0, lambda*) + gap_tolerance.
DualCertificate certify_theorem(const Problem &problem, const CertifyOptions &options = {});

} // namespace pdforge

#endif // PDFORGE_ORACLE_HPP
