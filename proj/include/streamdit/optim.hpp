#pragma once

#include <cmath>

#include "streamdit/tensor.hpp"

namespace streamdit {

/// AdamW with decoupled weight decay; moments keyed by parameter name.
struct AdamW {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    long t = 0;
    ParamStore m, v;

    void step(ParamStore& params, const ParamStore& grads) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (auto& [name, p] : params) {
            const Tensor& g = grads.at(name);
            Tensor& mm = m.try_emplace(name, Tensor::zeros(p.shape)).first->second;
            Tensor& vv = v.try_emplace(name, Tensor::zeros(p.shape)).first->second;
            for (long i = 0; i < p.numel(); ++i) {
                mm.at(i) = beta1 * mm.at(i) + (1.0 - beta1) * g.at(i);
                vv.at(i) = beta2 * vv.at(i) + (1.0 - beta2) * g.at(i) * g.at(i);
                const double mhat = mm.at(i) / bc1;
                const double vhat = vv.at(i) / bc2;
                p.at(i) -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p.at(i));
            }
        }
    }
};

}  // namespace streamdit
