#pragma once

#include <functional>
#include <string>
#include <vector>

#include "spgraph/nn/tensor.hpp"

namespace spgraph::nn {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  long checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool pass = false;
};

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  // Elementwise error is |analytic - numeric| / max(|analytic|, |numeric|, f)
  // with f = max(floor, relative_floor * largest |analytic| of the parameter),
  // so components far below the parameter's gradient scale are compared in
  // absolute terms rather than amplifying difference roundoff.
  double floor = 1e-6;
  double relative_floor = 1e-3;
  // Check at most this many elements per parameter (evenly strided); 0 = all.
  long max_elements = 0;
};

// Compares reverse-mode gradients of a scalar function against central
// differences. `fn` must rebuild its graph from the current parameter values
// on every call. Throws NumericError on a non-finite loss.
GradCheckReport grad_check(const std::function<Tensor<double>()>& fn,
                           const std::vector<NamedTensor<double>>& params,
                           const GradCheckOptions& options = {});

}  // namespace spgraph::nn
