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

#ifndef PDFORGE_ERROR_HPP
#define PDFORGE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace pdforge {

// Base of every library error. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Unknown prompt / task / fixture identifier.
class LookupError : public Error {
public:
  using Error::Error;
};

// Invalid configuration or argument values.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Input file failed to parse or violated a documented invariant.
class ValidationError : public Error {
public:
  using Error::Error;
};

// A database fixture script did not apply cleanly.
class FixtureError : public Error {
public:
  using Error::Error;
};

// A task is malformed (e.g. its ground-truth SQL does not execute).
class TaskError : public Error {
public:
  TaskError(std::string task_id, const std::string &what)
      : Error(what), task_id_(std::move(task_id)) {}
  const std::string &task_id() const noexcept { return task_id_; }

private:
  std::string task_id_;
};

// No policy satisfies the constraints (or the dual diverged past its cap).
class InfeasibleError : public Error {
public:
  using Error::Error;
};

// An iterative solver hit its iteration cap before reaching tolerance.
class ConvergenceError : public Error {
public:
  ConvergenceError(const std::string &what, double residual, int iterations)
      : Error(what), residual_(residual), iterations_(iterations) {}
  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

private:
  double residual_;
  int iterations_;
};

// Training produced a non-finite quantity.
class NumericalError : public Error {
public:
  using Error::Error;
};

} // namespace pdforge

#endif // PDFORGE_ERROR_HPP
