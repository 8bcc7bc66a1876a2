#pragma once

#include <functional>
#include <set>
#include <string>

#include "synadapt/encoder.hpp"

namespace synadapt::fd {

struct FdReport {
  double max_rel_err = 0.0;
  std::string worst_name;
  Eigen::Index worst_index = -1;  // flat row-major index within the tensor
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
  bool pass = false;
};

using LossFn = std::function<double(const nn::ParamTree<double>&)>;
using GradFn = std::function<nn::ParamTree<double>(const nn::ParamTree<double>&)>;

// Fourth-order central finite differences against analytic gradients, in
// 64-bit mode. For every parameter group in `mask`, checks
// min(coords_per_group, numel) distinct coordinates chosen deterministically
// from rng. Relative error is |a-n| / max(1e-8, |a|+|n|).
inline FdReport finite_difference_check(const LossFn& loss_fn, const GradFn& grad_fn,
                                        nn::ParamTree<double> params,
                                        const std::set<std::string>& mask, double epsilon,
                                        double tolerance, std::size_t coords_per_group, Rng& rng) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-2)) {
    throw InvalidArgument("finite_difference_check: epsilon must be in [1e-6, 1e-2]");
  }
  {
    const double a = loss_fn(params);
    const double b = loss_fn(params);
    if (a != b) {
      throw InvalidArgument(
          "finite_difference_check: loss is not deterministic (dropout must be disabled or "
          "seed-pinned)");
    }
  }
  const auto grads = grad_fn(params);

  FdReport report;
  for (const auto& name : mask) {
    const auto pit = params.find(name);
    if (pit == params.end()) throw InvalidArgument("finite_difference_check: unknown group " + name);
    const auto git = grads.find(name);
    if (git == grads.end()) {
      throw InvalidArgument("finite_difference_check: analytic gradients missing group " + name);
    }
    auto& tensor = pit->second;
    const auto numel = tensor.size();

    std::vector<Eigen::Index> coords;
    if (static_cast<std::size_t>(numel) <= coords_per_group) {
      coords.resize(static_cast<std::size_t>(numel));
      for (Eigen::Index i = 0; i < numel; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      std::vector<Eigen::Index> all(static_cast<std::size_t>(numel));
      for (Eigen::Index i = 0; i < numel; ++i) all[static_cast<std::size_t>(i)] = i;
      rng.shuffle(all);
      coords.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(coords_per_group));
    }

    for (const auto idx : coords) {
      double* slot = tensor.data() + idx;
      const double original = *slot;
      *slot = original + 2.0 * epsilon;
      const double up2 = loss_fn(params);
      *slot = original + epsilon;
      const double up1 = loss_fn(params);
      *slot = original - epsilon;
      const double down1 = loss_fn(params);
      *slot = original - 2.0 * epsilon;
      const double down2 = loss_fn(params);
      *slot = original;
      const double numeric = (-up2 + 8.0 * up1 - 8.0 * down1 + down2) / (12.0 * epsilon);
      const double analytic = *(git->second.data() + idx);
      const double rel =
          std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_name = name;
        report.worst_index = idx;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  report.pass = report.max_rel_err < tolerance;
  return report;
}

}  // namespace synadapt::fd
