#pragma once

#include <algorithm>
#include <cmath>

#include "tse/rng.hpp"
#include "tse/tensor.hpp"

namespace tse::testing {

inline Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(s);
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace tse::testing
