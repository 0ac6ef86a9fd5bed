#pragma once

#include <algorithm>
#include <functional>
#include <random>

#include "attnrec/tensor.hpp"

namespace attnrec {

// Central-difference check of an analytic gradient map against a scalar loss.
// Samples up to max_coords_per_tensor coordinates of each tensor (all of them
// when the tensor is small) and returns the worst relative error
// |a - n| / max(|a|, |n|, 1e-8).
inline double finite_diff_check(const std::function<double(const ParamMap&)>& loss_fn,
                                ParamMap params, const ParamMap& analytic, double epsilon,
                                int max_coords_per_tensor = 16, std::uint64_t seed = 0) {
    double worst = 0.0;
    std::mt19937_64 rng(seed);
    for (auto& [name, param] : params) {
        auto ait = analytic.find(name);
        if (ait == analytic.end()) continue;
        const Tensor& a = ait->second;
        std::size_t n = param.data.size();
        std::vector<std::size_t> coords(n);
        for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        if (static_cast<int>(n) > max_coords_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(static_cast<std::size_t>(max_coords_per_tensor));
        }
        for (std::size_t idx : coords) {
            float orig = param.data[idx];
            float hi = orig + static_cast<float>(epsilon);
            float lo = orig - static_cast<float>(epsilon);
            param.data[idx] = hi;
            double fp = loss_fn(params);
            param.data[idx] = lo;
            double fm = loss_fn(params);
            param.data[idx] = orig;
            // divide by the perturbation the float32 parameter actually took
            double numeric = (fp - fm) / (static_cast<double>(hi) - lo);
            double analytic_v = a.data[idx];
            double rel = std::abs(analytic_v - numeric) /
                         std::max({std::abs(analytic_v), std::abs(numeric), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace attnrec
