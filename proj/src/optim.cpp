#include "mtda/optim.hpp"

#include <cmath>

namespace mtda {

namespace {

std::span<const double> required_grad(const Tensor& t) {
    if (!t.has_grad()) throw ContractError("optimizer step on a parameter with no gradient");
    return t.grad();
}

}  // namespace

void sgd_step(const std::vector<Tensor>& params, double eta) {
    for (const Tensor& p : params) {
        auto g = required_grad(p);
        auto vals = const_cast<Tensor&>(p).values_mut();
        for (std::size_t i = 0; i < vals.size(); ++i) vals[i] -= eta * g[i];
    }
}

AdamState AdamState::for_group(const std::vector<Tensor>& params,
                               double beta1, double beta2, double eps) {
    AdamState s;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    for (const Tensor& p : params) {
        s.m.emplace_back(p.size(), 0.0);
        s.v.emplace_back(p.size(), 0.0);
    }
    return s;
}

void adam_step(const std::vector<Tensor>& params, AdamState& state, double eta) {
    if (state.m.size() != params.size()) {
        throw ContractError("optimizer state covers " + std::to_string(state.m.size()) +
                            " tensors, group has " + std::to_string(params.size()));
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto g = required_grad(params[k]);
        auto& m = state.m[k];
        auto& v = state.v[k];
        if (m.size() != g.size()) throw ContractError("optimizer state shape drifted from its parameter");
        auto vals = const_cast<Tensor&>(params[k]).values_mut();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            vals[i] -= eta * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace mtda
