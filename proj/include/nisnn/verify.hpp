#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nisnn/tensor.hpp"

namespace nisnn {

/// Central finite-difference check of every requires_grad input of `f`.
/// The scalar probe is sum(r * f(inputs)) for a fixed random r; the error is
/// max|analytic - numeric| / max(max|analytic|, max|numeric|).
double fd_relative_error(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
                         std::uint64_t seed, double h = 1e-3);

struct SuiteResult {
  std::string suite;
  bool passed = true;
  std::size_t checks = 0;
  std::string detail;
  nlohmann::json counterexample;  // first failing case, null when passed
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  /// Builds the propositions' kernels with a corrupted output leaky matrix
  /// (v_th * l_in, nonzero diagonal) to demonstrate that the suite bites.
  bool inject_wrong_l_out = false;
  std::filesystem::path dataset;  // data suite target; empty: a generated set
};

/// Suite names: props1, nofire, gradients, attention, fd, profiler, data.
const std::vector<std::string>& verify_suite_names();
/// Throws ConfigError for an unknown suite.
SuiteResult run_verify_suite(const std::string& name, const VerifyOptions& options);
std::string render_verify_table(const std::vector<SuiteResult>& results);

}  // namespace nisnn
