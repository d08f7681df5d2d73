#pragma once

#include <map>
#include <string>

#include "aunerf/graph.hpp"

namespace aunerf {

// Adam over a named parameter subset of a graph. State is serialized into
// checkpoints tensor-by-tensor.
class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(Graph& g, const std::map<std::string, Tensor>& grads) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, (double)t_);
        const double bc2 = 1.0 - std::pow(beta2_, (double)t_);
        for (const auto& [name, grad] : grads) {
            Tensor& p = g.param_value(name);
            Tensor& m = state(m_, name, p.shape);
            Tensor& v = state(v_, name, p.shape);
            for (int64_t i = 0; i < p.numel(); ++i) {
                const double gi = grad.data[(size_t)i];
                m.data[(size_t)i] = beta1_ * m.data[(size_t)i] + (1.0 - beta1_) * gi;
                v.data[(size_t)i] = beta2_ * v.data[(size_t)i] + (1.0 - beta2_) * gi * gi;
                const double mhat = m.data[(size_t)i] / bc1;
                const double vhat = v.data[(size_t)i] / bc2;
                p.data[(size_t)i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    int64_t steps() const { return t_; }
    void set_steps(int64_t t) { t_ = t; }
    std::map<std::string, Tensor>& first_moments() { return m_; }
    std::map<std::string, Tensor>& second_moments() { return v_; }

private:
    Tensor& state(std::map<std::string, Tensor>& store, const std::string& name,
                  const Shape& shape) {
        auto it = store.find(name);
        if (it == store.end()) it = store.emplace(name, Tensor::zeros(shape)).first;
        return it->second;
    }

    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

}  // namespace aunerf
