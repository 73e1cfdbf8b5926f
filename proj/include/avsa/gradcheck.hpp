#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "avsa/autodiff.hpp"
#include "avsa/error.hpp"

namespace avsa {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;

  bool pass(double tol) const { return max_rel_err <= tol; }
};

// Compares analytic gradients of a scalar-valued graph builder against
// central finite differences. When max_entries_per_param > 0, entries are
// subsampled with an even stride. The relative step defaults to 1e-4; deep
// relu networks need a smaller step so the perturbation cannot flip
// activations whose pre-image sits near the kink.
template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& f,
                           const std::vector<std::pair<std::string, Tensor<T>>>& params,
                           int max_entries_per_param = 0, double rel_step = 1e-4) {
  GradCheckReport report;
  for (auto& [name, p] : params)
    const_cast<Tensor<T>&>(p).node()->grad.assign(p.numel(), T(0));
  Tensor<T> loss = f();
  if (!std::isfinite(static_cast<double>(loss.item())))
    throw NumericError("grad_check: non-finite loss");
  loss.backward();
  std::vector<std::vector<T>> analytic;
  for (auto& [name, p] : params)
    analytic.push_back(const_cast<Tensor<T>&>(p).grad());

  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& tensor = const_cast<Tensor<T>&>(params[pi].second);
    GradCheckEntry entry;
    entry.name = params[pi].first;
    const size_t n = tensor.numel();
    size_t stride = 1;
    if (max_entries_per_param > 0 && n > static_cast<size_t>(max_entries_per_param))
      stride = n / static_cast<size_t>(max_entries_per_param);
    for (size_t i = 0; i < n; i += stride) {
      const T orig = tensor.value()[i];
      const double h = rel_step * (1.0 + std::abs(static_cast<double>(orig)));
      tensor.value()[i] = orig + static_cast<T>(h);
      const double lp = static_cast<double>(f().item());
      tensor.value()[i] = orig - static_cast<T>(h);
      const double lm = static_cast<double>(f().item());
      tensor.value()[i] = orig;
      if (!std::isfinite(lp) || !std::isfinite(lm))
        throw NumericError("grad_check: non-finite perturbed loss at " + entry.name);
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = static_cast<double>(analytic[pi][i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      entry.max_rel_err = std::max(entry.max_rel_err, std::abs(a - numeric) / denom);
      ++entry.checked;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace avsa
