#include "comg/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "comg/rng.hpp"

namespace comg {

GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           GradCheckOptions opts) {
  for (const auto& [name, t] : params) {
    if (!t.requires_grad()) throw std::invalid_argument("grad_check: parameter " + name + " has no grad tracking");
    Tensor copy = t;
    copy.zero_grad();
  }

  Tensor loss = f();
  if (loss.numel() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
  if (!std::isfinite(loss.item())) throw std::runtime_error("grad_check: non-finite loss value");
  loss.backward();

  std::vector<std::vector<double>> ad_grads;
  ad_grads.reserve(params.size());
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) {
      ad_grads.emplace_back(static_cast<size_t>(t.numel()), 0.0);
      continue;
    }
    for (double g : t.grad())
      if (!std::isfinite(g)) throw std::runtime_error("grad_check: non-finite gradient in parameter " + name);
    ad_grads.push_back(t.grad());
  }

  auto eval = [&]() {
    NoGradGuard ng;
    const double v = f().item();
    return v;
  };

  GradCheckReport report;
  Rng subset_rng(opts.subset_seed);
  const double h = opts.step;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    const auto& name = params[pi].first;
    Tensor t = params[pi].second;
    auto& values = t.data();
    const int n = t.numel();

    std::vector<int> coords;
    if (opts.max_coords_per_param > 0 && n > opts.max_coords_per_param) {
      std::vector<int> all(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
      subset_rng.shuffle(all);
      coords.assign(all.begin(), all.begin() + opts.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    } else {
      coords.resize(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    }

    auto central_diff = [&](int c, double step) {
      const double saved = values[static_cast<size_t>(c)];
      values[static_cast<size_t>(c)] = saved + step;
      const double fp = eval();
      values[static_cast<size_t>(c)] = saved - step;
      const double fm = eval();
      values[static_cast<size_t>(c)] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("grad_check: non-finite evaluation while perturbing parameter " + name);
      return (fp - fm) / (2.0 * step);
    };

    for (int c : coords) {
      double fd = central_diff(c, h);
      if (opts.filter_nonsmooth) {
        const double fd_small = central_diff(c, h / 8.0);
        if (std::fabs(fd - fd_small) > 1e-3 * std::max(1.0, std::fabs(fd_small))) {
          ++report.coords_skipped_nonsmooth;
          continue;
        }
        fd = fd_small;
      }
      const double ad = ad_grads[pi][static_cast<size_t>(c)];
      const double rel = std::fabs(ad - fd) / std::max(1.0, std::fabs(fd));
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name;
      }
    }
  }
  return report;
}

}  // namespace comg
