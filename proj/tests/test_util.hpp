#pragma once

#include <random>
#include <vector>

#include "mtda/autodiff.hpp"

namespace testutil {

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64{seed}; }

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& eng,
                                         double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(eng);
    return v;
}

inline mtda::Tensor random_tensor(mtda::Shape shape, std::mt19937_64& eng,
                                  double lo = -1.0, double hi = 1.0) {
    const std::size_t n = mtda::shape_numel(shape);
    return mtda::Tensor::from_values(std::move(shape), random_values(n, eng, lo, hi));
}

}  // namespace testutil
