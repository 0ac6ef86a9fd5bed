#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "attnrec/error.hpp"

namespace attnrec {

// Dense row-major float32 tensor. Dot products accumulate in double.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {}

    static std::int64_t count(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<int> shape) {
        auto n = count(shape);
        return Tensor(std::move(shape), std::vector<float>(static_cast<std::size_t>(n), 0.0f));
    }

    static Tensor full(std::vector<int> shape, float v) {
        auto n = count(shape);
        return Tensor(std::move(shape), std::vector<float>(static_cast<std::size_t>(n), v));
    }

    static Tensor vec(std::vector<float> d) {
        int n = static_cast<int>(d.size());
        return Tensor({n}, std::move(d));
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    float& operator[](std::size_t i) { return data[i]; }
    float operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << "]";
        return os.str();
    }
};

using ParamMap = std::map<std::string, Tensor>;

inline bool all_finite(const Tensor& t) {
    for (float v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
}

// y = W x + b, W is m x n. Row dot products accumulate in double, bias added last.
inline Tensor affine(const Tensor& W, const Tensor& b, const Tensor& x) {
    if (W.shape.size() != 2 || x.shape.size() != 1 || b.shape.size() != 1)
        throw DimensionError("affine: expected W[mxn], b[m], x[n], got " + W.shape_str() + ", " +
                             b.shape_str() + ", " + x.shape_str());
    int m = W.dim(0), n = W.dim(1);
    if (x.dim(0) != n || b.dim(0) != m)
        throw DimensionError("affine: W " + W.shape_str() + " incompatible with x " +
                             x.shape_str() + " / b " + b.shape_str());
    Tensor y = Tensor::zeros({m});
    for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        const float* row = W.data.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += static_cast<double>(row[j]) * x.data[static_cast<std::size_t>(j)];
        y.data[static_cast<std::size_t>(i)] = static_cast<float>(acc) + b.data[static_cast<std::size_t>(i)];
    }
    return y;
}

// Max-subtracted temperature softmax: gamma_i = exp((s_i - max s)/tau) / sum.
inline Tensor softmax_temp(const Tensor& scores, float tau) {
    if (scores.numel() == 0) throw ValidationError("softmax_temp: empty input");
    if (!(tau > 0.0f)) throw ConfigError("softmax_temp: tau must be positive");
    float mx = *std::max_element(scores.data.begin(), scores.data.end());
    Tensor out = Tensor::zeros(scores.shape);
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.data.size(); ++i) {
        double e = std::exp((static_cast<double>(scores.data[i]) - mx) / tau);
        out.data[i] = static_cast<float>(e);
        sum += e;
    }
    for (auto& v : out.data) v = static_cast<float>(v / sum);
    return out;
}

inline double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        acc += static_cast<double>(a.data[i]) * b.data[i];
    return acc;
}

inline double global_norm(const ParamMap& grads) {
    double sq = 0.0;
    for (const auto& [name, g] : grads)
        for (float v : g.data) sq += static_cast<double>(v) * v;
    return std::sqrt(sq);
}

inline void scale_all(ParamMap& grads, float s) {
    for (auto& [name, g] : grads)
        for (auto& v : g.data) v *= s;
}

// Scales gradients in place so the global L2 norm does not exceed max_norm.
inline double clip_global_norm(ParamMap& grads, double max_norm) {
    double norm = global_norm(grads);
    if (norm > max_norm && norm > 0.0) scale_all(grads, static_cast<float>(max_norm / norm));
    return norm;
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline void fill_uniform(Tensor& t, float lo, float hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> d(lo, hi);
    for (auto& v : t.data) v = d(rng);
}

inline void fill_gaussian(Tensor& t, float mean, float sigma, std::mt19937_64& rng) {
    std::normal_distribution<float> d(mean, sigma);
    for (auto& v : t.data) v = d(rng);
}

}  // namespace attnrec
