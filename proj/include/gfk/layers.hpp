#pragma once

// Small parameterized building blocks shared by the temporal connections and
// the segmentation network.

#include <string>
#include <vector>

#include "gfk/checkpoint.hpp"
#include "gfk/ops.hpp"
#include "gfk/rng.hpp"
#include "gfk/tensor.hpp"

namespace gfk {

inline void append_param(std::vector<NamedParam>& out, const std::string& name, const Tensor& t) {
    out.push_back({name, t});
}

struct Linear {
    Tensor w, b;

    Linear() = default;
    Linear(int64_t in, int64_t out, Rng& rng, double stddev = 0.02, bool zero_init = false) {
        w = zero_init ? Tensor::zeros({in, out}, true) : Tensor::randn({in, out}, rng, stddev, true);
        b = Tensor::zeros({out}, true);
    }

    Tensor forward(const Tensor& x) const {
        const int64_t in = w.dim(0);
        const int64_t rows = x.numel() / in;
        Tensor h = matmul(reshape(x, {rows, in}), w);
        h = add_bias(h, b);
        Shape out_shape = x.shape();
        out_shape.back() = w.dim(1);
        return reshape(h, std::move(out_shape));
    }

    void append_params(const std::string& prefix, std::vector<NamedParam>& out) const {
        append_param(out, prefix + ".w", w);
        append_param(out, prefix + ".b", b);
    }
};

struct LayerNormP {
    Tensor gamma, beta;

    LayerNormP() = default;
    explicit LayerNormP(int64_t width) {
        gamma = Tensor::full({width}, 1.0, true);
        beta = Tensor::zeros({width}, true);
    }

    Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }

    void append_params(const std::string& prefix, std::vector<NamedParam>& out) const {
        append_param(out, prefix + ".gamma", gamma);
        append_param(out, prefix + ".beta", beta);
    }
};

struct GroupNormP {
    Tensor gamma, beta;
    int groups = 1;

    GroupNormP() = default;
    GroupNormP(int64_t channels, int groups_) : groups(groups_) {
        gamma = Tensor::full({channels}, 1.0, true);
        beta = Tensor::zeros({channels}, true);
    }

    Tensor forward(const Tensor& x) const { return group_norm(x, gamma, beta, groups); }

    void append_params(const std::string& prefix, std::vector<NamedParam>& out) const {
        append_param(out, prefix + ".gamma", gamma);
        append_param(out, prefix + ".beta", beta);
    }
};

struct Conv2dP {
    Tensor w, b;
    int stride = 1, padding = 0;

    Conv2dP() = default;
    Conv2dP(int64_t in_ch, int64_t out_ch, int64_t kernel, int stride_, int padding_, Rng& rng,
            bool zero_init = false)
        : stride(stride_), padding(padding_) {
        const double stddev = std::sqrt(2.0 / static_cast<double>(in_ch * kernel * kernel));
        w = zero_init ? Tensor::zeros({out_ch, in_ch, kernel, kernel}, true)
                      : Tensor::randn({out_ch, in_ch, kernel, kernel}, rng, stddev, true);
        b = Tensor::zeros({out_ch}, true);
    }

    Tensor forward(const Tensor& x) const { return conv2d(x, w, b, stride, padding); }

    void append_params(const std::string& prefix, std::vector<NamedParam>& out) const {
        append_param(out, prefix + ".w", w);
        append_param(out, prefix + ".b", b);
    }
};

struct Conv1dP {
    Tensor w, b;
    int padding = 0;

    Conv1dP() = default;
    Conv1dP(int64_t in_ch, int64_t out_ch, int64_t kernel, int padding_, Rng& rng, bool zero_init = false)
        : padding(padding_) {
        const double stddev = std::sqrt(2.0 / static_cast<double>(in_ch * kernel));
        w = zero_init ? Tensor::zeros({out_ch, in_ch, kernel}, true)
                      : Tensor::randn({out_ch, in_ch, kernel}, rng, stddev, true);
        b = Tensor::zeros({out_ch}, true);
    }

    Tensor forward(const Tensor& x) const { return conv1d(x, w, b, padding); }

    void append_params(const std::string& prefix, std::vector<NamedParam>& out) const {
        append_param(out, prefix + ".w", w);
        append_param(out, prefix + ".b", b);
    }
};

}  // namespace gfk
