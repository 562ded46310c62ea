#include "spgraph/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "spgraph/errors.hpp"

namespace spgraph::nn {

namespace {

double eval_loss(const std::function<Tensor<double>()>& fn) {
  const double v = fn().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor<double>()>& fn,
                           const std::vector<NamedTensor<double>>& params,
                           const GradCheckOptions& options) {
  for (const auto& p : params) {
    p.tensor.node()->grad.clear();
    p.tensor.node()->requires_grad = true;
  }
  Tensor<double> loss = fn();
  if (!std::isfinite(loss.item())) throw NumericError("grad_check: non-finite loss");
  loss.backward();

  GradCheckReport report;
  for (const auto& p : params) {
    GradCheckEntry entry{p.name, 0.0, 0};
    const std::vector<double> analytic = p.tensor.node()->grad.empty()
                                             ? std::vector<double>(static_cast<size_t>(p.tensor.numel()), 0.0)
                                             : p.tensor.node()->grad;
    auto values = p.tensor.node()->value.data();
    const long n = static_cast<long>(p.tensor.numel());
    const long stride = (options.max_elements > 0 && n > options.max_elements)
                            ? (n + options.max_elements - 1) / options.max_elements
                            : 1;
    double scale = 0.0;
    for (double a : analytic) scale = std::max(scale, std::abs(a));
    const double floor = std::max(options.floor, options.relative_floor * scale);
    for (long i = 0; i < n; i += stride) {
      const double orig = values[i];
      values[i] = orig + options.eps;
      const double up = eval_loss(fn);
      values[i] = orig - options.eps;
      const double down = eval_loss(fn);
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = analytic[static_cast<size_t>(i)];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(a - numeric) / denom);
      ++entry.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.pass = report.max_rel_error <= options.tol;
  return report;
}

}  // namespace spgraph::nn
