#include "gazemoe/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace gazemoe {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport finite_difference_check(const std::function<Tensor()>& loss_fn, NamedTensors params,
                                        const GradCheckOptions& options) {
  if (!(options.epsilon > 0.0)) throw ConfigError("finite_difference_check: epsilon must be positive");

  for (auto& [name, t] : params) t.zero_grad();
  const Tensor loss = loss_fn();
  if (!std::isfinite(loss.item())) throw NumericError("finite_difference_check: non-finite loss");
  loss.backward();
  const std::uint64_t base_regime = options.regime ? options.regime() : 0;

  auto eval = [&]() {
    NoGradGuard guard;
    const double v = loss_fn().item();
    if (!std::isfinite(v)) throw NumericError("finite_difference_check: non-finite perturbed loss");
    return v;
  };

  GradCheckReport report;
  report.epsilon = options.epsilon;
  for (auto& [name, t] : params) {
    const std::size_t n = t.size();
    std::vector<double> analytic(n, 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    std::size_t stride = 1;
    if (options.max_elements_per_param > 0 && n > options.max_elements_per_param) {
      stride = (n + options.max_elements_per_param - 1) / options.max_elements_per_param;
    }
    double worst = 0.0;
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = data[i];
      data[i] = saved + options.epsilon;
      const double up = eval();
      const bool up_same = !options.regime || options.regime() == base_regime;
      data[i] = saved - options.epsilon;
      const double down = eval();
      const bool down_same = !options.regime || options.regime() == base_regime;
      data[i] = saved;
      if (!up_same || !down_same) {
        ++report.elements_skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * options.epsilon);
      worst = std::max(worst, relative_error(analytic[i], numeric));
      ++report.elements_checked;
    }
    report.per_parameter_errors[name] = worst;
    if (worst >= report.max_relative_error) {
      report.max_relative_error = worst;
      report.worst_parameter = name;
    }
  }
  return report;
}

}  // namespace gazemoe
