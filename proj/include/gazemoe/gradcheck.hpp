#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gazemoe/tensor.hpp"

namespace gazemoe {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::map<std::string, double> per_parameter_errors;
  double epsilon = 0.0;
  std::string worst_parameter;
  std::size_t elements_checked = 0;
  /// Elements whose ±ε evaluations fell in a different piecewise regime.
  std::size_t elements_skipped = 0;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct GradCheckOptions {
  double epsilon = 1e-5;
  /// Elements probed per parameter; 0 probes all of them. Subsets are chosen
  /// with a fixed stride so runs are reproducible.
  std::size_t max_elements_per_param = 0;
  /// Optional fingerprint of the discrete choices made by the last loss_fn
  /// call (e.g. expert routing). An element whose perturbed evaluations
  /// change the fingerprint straddles a kink; it is skipped and counted.
  std::function<std::uint64_t()> regime;
};

/// |a − n| / max(|a|, |n|, 1e−8)
double relative_error(double analytic, double numeric);

/// Compares autodiff gradients of the scalar `loss_fn` against central
/// differences (f(θ+ε) − f(θ−ε)) / 2ε for every element of every parameter.
/// `loss_fn` must be deterministic. Parameter values are restored afterwards.
GradCheckReport finite_difference_check(const std::function<Tensor()>& loss_fn, NamedTensors params,
                                        const GradCheckOptions& options = {});

}  // namespace gazemoe
