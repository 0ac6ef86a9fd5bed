#pragma once

#include <cassert>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "attnrec/tensor.hpp"

namespace attnrec {

// Reverse-mode accumulation over an explicitly recorded op sequence. Nodes
// and adjoints are held in double so finite-difference oracles stay stable;
// leaves widen from float32 parameters and results narrow back on the way
// out. Single-use: record forward, call backward once, read gradients.
class Tape {
public:
    using Id = int;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = delete;
    Tape& operator=(Tape&&) = delete;

    Id leaf(const Tensor& value) {
        std::vector<double> v(value.data.begin(), value.data.end());
        return push(value.shape, std::move(v));
    }

    Tensor value(Id id) const { return narrow(node(id).value, node(id).shape); }
    Tensor grad(Id id) const { return narrow(node(id).grad, node(id).shape); }
    double scalar(Id id) const { return node(id).value[0]; }
    int length(Id id) const { return node(id).shape[0]; }

    // y = W x
    Id matvec(Id w, Id x) {
        const Node& W = node(w);
        const Node& X = node(x);
        if (W.shape.size() != 2 || X.shape.size() != 1 || W.shape[1] != X.shape[0])
            throw DimensionError("matvec: incompatible shapes");
        int m = W.shape[0], n = W.shape[1];
        std::vector<double> y(static_cast<std::size_t>(m), 0.0);
        for (int i = 0; i < m; ++i) {
            double acc = 0.0;
            const double* row = W.value.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) acc += row[j] * X.value[static_cast<std::size_t>(j)];
            y[static_cast<std::size_t>(i)] = acc;
        }
        Id out = push({m}, std::move(y));
        record([this, w, x, out, m, n] {
            const std::vector<double>& gy = node(out).grad;
            const std::vector<double>& Wv = node(w).value;
            const std::vector<double>& Xv = node(x).value;
            std::vector<double>& gW = node(w).grad;
            std::vector<double>& gX = node(x).grad;
            for (int i = 0; i < m; ++i) {
                double gyi = gy[static_cast<std::size_t>(i)];
                if (gyi == 0.0) continue;
                double* gWrow = gW.data() + static_cast<std::size_t>(i) * n;
                const double* Wrow = Wv.data() + static_cast<std::size_t>(i) * n;
                for (int j = 0; j < n; ++j) {
                    gWrow[j] += gyi * Xv[static_cast<std::size_t>(j)];
                    gX[static_cast<std::size_t>(j)] += gyi * Wrow[j];
                }
            }
        });
        return out;
    }

    Id add(Id a, Id b) {
        if (node(a).shape != node(b).shape) throw DimensionError("tape add: shape mismatch");
        std::vector<double> y = node(a).value;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += node(b).value[i];
        Id out = push(node(a).shape, std::move(y));
        record([this, a, b, out] {
            const std::vector<double>& gy = node(out).grad;
            std::vector<double>& ga = node(a).grad;
            std::vector<double>& gb = node(b).grad;
            for (std::size_t i = 0; i < gy.size(); ++i) {
                ga[i] += gy[i];
                gb[i] += gy[i];
            }
        });
        return out;
    }

    Id concat(const std::vector<Id>& parts) {
        if (parts.empty()) throw ValidationError("tape concat: empty part list");
        std::size_t total = 0;
        for (Id p : parts) total += node(p).value.size();
        std::vector<double> y;
        y.reserve(total);
        for (Id p : parts) y.insert(y.end(), node(p).value.begin(), node(p).value.end());
        Id out = push({static_cast<int>(total)}, std::move(y));
        record([this, parts, out] {
            const std::vector<double>& gy = node(out).grad;
            std::size_t off = 0;
            for (Id p : parts) {
                std::vector<double>& gp = node(p).grad;
                for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += gy[off + i];
                off += gp.size();
            }
        });
        return out;
    }

    Id slice(Id src, int offset, int len) {
        const Node& s = node(src);
        if (offset < 0 || static_cast<std::size_t>(offset + len) > s.value.size())
            throw DimensionError("tape slice: out of range");
        std::vector<double> y(s.value.begin() + offset, s.value.begin() + offset + len);
        Id out = push({len}, std::move(y));
        record([this, src, offset, len, out] {
            const std::vector<double>& gy = node(out).grad;
            std::vector<double>& gs = node(src).grad;
            for (int i = 0; i < len; ++i) gs[static_cast<std::size_t>(offset + i)] += gy[static_cast<std::size_t>(i)];
        });
        return out;
    }

    Id sigmoid(Id x) {
        std::vector<double> y = node(x).value;
        for (auto& v : y) v = 1.0 / (1.0 + std::exp(-v));
        Id out = push(node(x).shape, std::move(y));
        record([this, x, out] {
            const Node& o = node(out);
            std::vector<double>& gx = node(x).grad;
            for (std::size_t i = 0; i < gx.size(); ++i)
                gx[i] += o.grad[i] * o.value[i] * (1.0 - o.value[i]);
        });
        return out;
    }

    Id tanh_op(Id x) {
        std::vector<double> y = node(x).value;
        for (auto& v : y) v = std::tanh(v);
        Id out = push(node(x).shape, std::move(y));
        record([this, x, out] {
            const Node& o = node(out);
            std::vector<double>& gx = node(x).grad;
            for (std::size_t i = 0; i < gx.size(); ++i)
                gx[i] += o.grad[i] * (1.0 - o.value[i] * o.value[i]);
        });
        return out;
    }

    Id relu(Id x) {
        std::vector<double> y = node(x).value;
        for (auto& v : y) v = std::max(v, 0.0);
        Id out = push(node(x).shape, std::move(y));
        record([this, x, out] {
            const std::vector<double>& gy = node(out).grad;
            const std::vector<double>& xv = node(x).value;
            std::vector<double>& gx = node(x).grad;
            for (std::size_t i = 0; i < gx.size(); ++i)
                if (xv[i] > 0.0) gx[i] += gy[i];
        });
        return out;
    }

    Id mul(Id a, Id b) {
        if (node(a).shape != node(b).shape) throw DimensionError("tape mul: shape mismatch");
        std::vector<double> y = node(a).value;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] *= node(b).value[i];
        Id out = push(node(a).shape, std::move(y));
        record([this, a, b, out] {
            const std::vector<double>& gy = node(out).grad;
            const std::vector<double>& av = node(a).value;
            const std::vector<double>& bv = node(b).value;
            std::vector<double>& ga = node(a).grad;
            std::vector<double>& gb = node(b).grad;
            for (std::size_t i = 0; i < gy.size(); ++i) {
                ga[i] += gy[i] * bv[i];
                gb[i] += gy[i] * av[i];
            }
        });
        return out;
    }

    // Gathers n scalar nodes into one length-n vector (attention logits).
    Id stack_scalars(const std::vector<Id>& scalars) {
        std::vector<double> y(scalars.size());
        for (std::size_t i = 0; i < scalars.size(); ++i) y[i] = node(scalars[i]).value[0];
        Id out = push({static_cast<int>(scalars.size())}, std::move(y));
        record([this, scalars, out] {
            const std::vector<double>& gy = node(out).grad;
            for (std::size_t i = 0; i < scalars.size(); ++i) node(scalars[i]).grad[0] += gy[i];
        });
        return out;
    }

    // Max-subtracted temperature softmax; backward applies the full Jacobian:
    // ds = (diag(y) - y y^T) gy / tau.
    Id softmax(Id scores, double tau) {
        const Node& s = node(scores);
        if (s.value.empty()) throw ValidationError("softmax: empty input");
        if (!(tau > 0.0)) throw ConfigError("softmax: tau must be positive");
        double mx = *std::max_element(s.value.begin(), s.value.end());
        std::vector<double> y(s.value.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            y[i] = std::exp((s.value[i] - mx) / tau);
            sum += y[i];
        }
        for (auto& v : y) v /= sum;
        Id out = push(s.shape, std::move(y));
        record([this, scores, out, tau] {
            const Node& o = node(out);
            std::vector<double>& gs = node(scores).grad;
            double dotyg = 0.0;
            for (std::size_t i = 0; i < o.value.size(); ++i) dotyg += o.value[i] * o.grad[i];
            for (std::size_t i = 0; i < o.value.size(); ++i)
                gs[i] += o.value[i] * (o.grad[i] - dotyg) / tau;
        });
        return out;
    }

    // a = sum_i gamma_i * repr_i; gamma is a length-N vector node.
    Id convex_combine(Id gamma, const std::vector<Id>& reprs) {
        const Node& g = node(gamma);
        if (g.value.size() != reprs.size())
            throw DimensionError("convex_combine: weight/repr count mismatch");
        if (reprs.empty()) throw ValidationError("convex_combine: empty repr list");
        std::vector<double> y(node(reprs[0]).value.size(), 0.0);
        for (std::size_t i = 0; i < reprs.size(); ++i) {
            const std::vector<double>& r = node(reprs[i]).value;
            for (std::size_t j = 0; j < y.size(); ++j) y[j] += g.value[i] * r[j];
        }
        Id out = push(node(reprs[0]).shape, std::move(y));
        record([this, gamma, reprs, out] {
            const std::vector<double>& gy = node(out).grad;
            const std::vector<double>& gv = node(gamma).value;
            std::vector<double>& gg = node(gamma).grad;
            for (std::size_t i = 0; i < reprs.size(); ++i) {
                const std::vector<double>& r = node(reprs[i]).value;
                std::vector<double>& gr = node(reprs[i]).grad;
                double acc = 0.0;
                for (std::size_t j = 0; j < gy.size(); ++j) {
                    acc += gy[j] * r[j];
                    gr[j] += gv[i] * gy[j];
                }
                gg[i] += acc;
            }
        });
        return out;
    }

    // Unweighted mean of same-shape vectors.
    Id mean_of(const std::vector<Id>& xs) {
        if (xs.empty()) throw ValidationError("mean_of: empty list");
        std::vector<double> y(node(xs[0]).value.size(), 0.0);
        double inv = 1.0 / static_cast<double>(xs.size());
        for (Id x : xs)
            for (std::size_t j = 0; j < y.size(); ++j) y[j] += node(x).value[j];
        for (auto& v : y) v *= inv;
        Id out = push(node(xs[0]).shape, std::move(y));
        record([this, xs, out, inv] {
            const std::vector<double>& gy = node(out).grad;
            for (Id x : xs) {
                std::vector<double>& gx = node(x).grad;
                for (std::size_t j = 0; j < gy.size(); ++j) gx[j] += inv * gy[j];
            }
        });
        return out;
    }

    // Squared hinge against a one-hot +/-1 target: 1/2 sum_k max(0, 1 - y_k s_k)^2.
    Id squared_hinge(Id scores, int label) {
        const Node& s = node(scores);
        if (label < 0 || static_cast<std::size_t>(label) >= s.value.size())
            throw ValidationError("squared_hinge: label out of range");
        double loss = 0.0;
        for (std::size_t k = 0; k < s.value.size(); ++k) {
            double yk = (static_cast<int>(k) == label) ? 1.0 : -1.0;
            double m = 1.0 - yk * s.value[k];
            if (m > 0.0) loss += 0.5 * m * m;
        }
        Id out = push({1}, {loss});
        record([this, scores, label, out] {
            double gy = node(out).grad[0];
            const std::vector<double>& sv = node(scores).value;
            std::vector<double>& gs = node(scores).grad;
            for (std::size_t k = 0; k < sv.size(); ++k) {
                double yk = (static_cast<int>(k) == label) ? 1.0 : -1.0;
                double m = 1.0 - yk * sv[k];
                if (m > 0.0) gs[k] += gy * (-yk * m);
            }
        });
        return out;
    }

    Id sum_scalars(const std::vector<Id>& xs) {
        double acc = 0.0;
        for (Id x : xs) acc += node(x).value[0];
        Id out = push({1}, {acc});
        record([this, xs, out] {
            double gy = node(out).grad[0];
            for (Id x : xs) node(x).grad[0] += gy;
        });
        return out;
    }

    void backward(Id loss) {
        if (node(loss).value.size() != 1) throw ValidationError("backward: loss must be scalar");
        node(loss).grad[0] = 1.0;
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        std::vector<int> shape;
        std::vector<double> value;
        std::vector<double> grad;
    };

    static Tensor narrow(const std::vector<double>& v, const std::vector<int>& shape) {
        Tensor t = Tensor::zeros(shape);
        for (std::size_t i = 0; i < v.size(); ++i) t.data[i] = static_cast<float>(v[i]);
        return t;
    }

    Id push(std::vector<int> shape, std::vector<double> v) {
        Node n;
        n.shape = std::move(shape);
        n.grad.assign(v.size(), 0.0);
        n.value = std::move(v);
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size() - 1);
    }

    Node& node(Id id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(Id id) const { return nodes_[static_cast<std::size_t>(id)]; }

    void record(std::function<void()> op) { ops_.push_back(std::move(op)); }

    std::vector<Node> nodes_;
    std::vector<std::function<void()>> ops_;
};

}  // namespace attnrec
