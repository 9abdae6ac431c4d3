#pragma once

// Central finite-difference oracle for gradient tests. Lives in test code and
// never touches the reverse-mode path it checks.

#include <cmath>
#include <functional>
#include <vector>

#include "gfk/ops.hpp"
#include "gfk/tensor.hpp"

namespace gfktest {

using LossFn = std::function<gfk::Tensor(const std::vector<gfk::Tensor>&)>;

inline double loss_value(const LossFn& f, const std::vector<gfk::Tensor>& inputs) {
    gfk::NoGradGuard ng;
    return f(inputs).item();
}

// Runs backward once, then probes every element of every input with a central
// difference. Returns the max relative error, with a unit floor so that
// near-zero gradient pairs compare absolutely.
inline double fd_max_rel_error(const LossFn& f, std::vector<gfk::Tensor>& inputs, double h = 1e-5) {
    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    gfk::Tensor loss = f(inputs);
    gfk::backward(loss);

    double worst = 0.0;
    for (auto& t : inputs) {
        auto vals = t.mutable_data();
        auto grads = t.grad();
        for (size_t i = 0; i < vals.size(); ++i) {
            const double keep = vals[i];
            vals[i] = keep + h;
            const double up = loss_value(f, inputs);
            vals[i] = keep - h;
            const double down = loss_value(f, inputs);
            vals[i] = keep;
            const double fd = (up - down) / (2.0 * h);
            const double ad = grads.empty() ? 0.0 : grads[i];
            const double err = std::fabs(fd - ad) / std::max(1.0, std::fabs(fd) + std::fabs(ad));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace gfktest
