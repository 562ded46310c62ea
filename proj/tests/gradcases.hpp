#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spgraph/nn/gradcheck.hpp"

namespace testutil {

struct GradCase {
  std::string name;
  std::function<spgraph::nn::GradCheckReport(uint64_t seed)> run;
};

// Every differentiable op on small random shapes.
std::vector<GradCase> op_grad_cases();
// L_sp, L_se and L_G on the small configurations used for acceptance.
std::vector<GradCase> loss_grad_cases();

}  // namespace testutil
