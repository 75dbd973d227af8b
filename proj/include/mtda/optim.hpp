#pragma once

#include <cstdint>
#include <vector>

#include "mtda/autodiff.hpp"

namespace mtda {

// Plain gradient descent on one parameter group: p <- p - eta * g.
// Every tensor must carry a gradient.
void sgd_step(const std::vector<Tensor>& params, double eta);

// Adam moments for one parameter group. Defaults follow the training setup:
// beta1 = 0.5, beta2 = 0.999, eps = 1e-8.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t t = 0;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_group(const std::vector<Tensor>& params,
                               double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8);
};

// Bias-corrected Adam update; increments state.t once per call.
void adam_step(const std::vector<Tensor>& params, AdamState& state, double eta);

}  // namespace mtda
