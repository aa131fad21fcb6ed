#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "comg/tensor.hpp"

namespace comg {

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every coordinate; otherwise a seeded random subset per tensor
  int max_coords_per_param = 0;
  uint64_t subset_seed = 1;
  // Re-estimates each difference with step/8 and drops coordinates where the
  // two estimates disagree: a central stencil that straddles a relu kink
  // measures the average of two slopes, not the derivative, so those points
  // say nothing about the reverse-mode gradient. Off by default.
  bool filter_nonsmooth = false;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int coords_checked = 0;
  int coords_skipped_nonsmooth = 0;
};

// Compares reverse-mode gradients of the scalar f() against central finite
// differences. f must be a pure function of the given leaf parameters.
// Relative error per coordinate: |g_ad - g_fd| / max(1, |g_fd|).
// Throws on non-finite values, naming the offending parameter.
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           GradCheckOptions opts = {});

}  // namespace comg
