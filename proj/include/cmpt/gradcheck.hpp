#pragma once

#include <functional>
#include <vector>

#include "cmpt/tensor.hpp"

namespace cmpt {

// The loss callable evaluated twice at the same point returned different values.
struct NondeterministicFunctionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    int worst_param = -1;   // index into params
    int worst_coord = -1;   // flat coordinate within that tensor
    double analytic = 0.0;
    double numeric = 0.0;
};

// Central-difference check of analytic gradients.
//
// loss(false) evaluates the objective at the current parameter values;
// loss(true) additionally accumulates gradients into each parameter's grad.
// Returns max over all coordinates of |analytic - numeric| / max(1, |numeric|).
GradCheckReport finite_difference_check(const std::function<double(bool)>& loss,
                                        const std::vector<Tensor2D*>& params,
                                        double eps);

} // namespace cmpt
