// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "dncr/dnc.hpp"

namespace dncr {

struct GradCheckResult {
  double max_rel_err = 0.0;
  bool pass = false;
};

DncConfig tiny_grad_check_config();

// Central finite differences over every parameter and every input value of
// a random 6-step episode on the tiny config. corrupt_gradient perturbs one
// analytic entry first (test hook for the failure path).
GradCheckResult grad_check_tiny(uint64_t seed, double h = 1e-5, double tol = 1e-4,
                                bool corrupt_gradient = false);

}  // namespace dncr
