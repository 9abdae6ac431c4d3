#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <vector>

#include "doctest.h"
#include "fd_check.hpp"
#include "gfk/checkpoint.hpp"
#include "gfk/ops.hpp"
#include "gfk/rng.hpp"
#include "gfk/tensor.hpp"

using namespace gfk;
using gfktest::fd_max_rel_error;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::from_vector(std::move(shape), std::move(v));
}

// Weighted-sum scalarization so every output element carries a distinct grad.
Tensor weighted(const Tensor& out, const Tensor& w) { return sum_all(mul(out, w)); }

constexpr double kGradTol = 1e-4;

}  // namespace

TEST_CASE("elementwise binary ops: values and gradients") {
    Rng rng(42);
    std::vector<Tensor> inputs = {random_tensor({3, 5}, rng), random_tensor({3, 5}, rng, 0.5, 2.0)};
    Tensor w = random_tensor({3, 5}, rng);

    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(add(in[0], in[1]), w); }, inputs) < kGradTol);
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(sub(in[0], in[1]), w); }, inputs) < kGradTol);
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(mul(in[0], in[1]), w); }, inputs) < kGradTol);
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(divide(in[0], in[1]), w); }, inputs) < kGradTol);

    Tensor a = Tensor::from_vector({2}, {1.0, 2.0});
    Tensor b = Tensor::from_vector({2}, {3.0, 5.0});
    Tensor s = add(a, b);
    CHECK(s.data()[0] == 4.0);
    CHECK(s.data()[1] == 7.0);
}

TEST_CASE("shape mismatch is rejected with both shapes named") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({3, 2});
    try {
        add(a, b);
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(2,3)") != std::string::npos);
        CHECK(msg.find("(3,2)") != std::string::npos);
    }
}

TEST_CASE("unary ops gradients") {
    Rng rng(7);
    Tensor w = random_tensor({4, 4}, rng);
    std::vector<Tensor> in_pos = {random_tensor({4, 4}, rng, 0.2, 2.0)};
    std::vector<Tensor> in_any = {random_tensor({4, 4}, rng)};

    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(gfk::exp(in[0]), w); }, in_any) < kGradTol);
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(gfk::log(in[0]), w); }, in_pos) < kGradTol);
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(gfk::tanh(in[0]), w); }, in_any) < kGradTol);
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(sigmoid(in[0]), w); }, in_any) < kGradTol);
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(gelu(in[0]), w); }, in_any) < kGradTol);
    // relu probed away from the kink
    std::vector<Tensor> in_off = {random_tensor({4, 4}, rng, 0.1, 1.0)};
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(relu(in[0]), w); }, in_off) < kGradTol);
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(add_scalar(in[0], 1.7), w); }, in_any) < kGradTol);
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(mul_scalar(in[0], -2.5), w); }, in_any) < kGradTol);
}

TEST_CASE("softmax: uniform logits, normalization, gradient") {
    Tensor x = Tensor::zeros({3});
    Tensor y = softmax(x, 0);
    for (double v : y.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    Rng rng(11);
    Tensor r = random_tensor({4, 6, 3}, rng, -5.0, 5.0);
    for (int axis = 0; axis < 3; ++axis) {
        Tensor sm = softmax(r, axis);
        Tensor sums = sum_axis(sm, axis);
        for (double v : sums.data()) CHECK(std::fabs(v - 1.0) <= 1e-12);
    }

    Tensor w = random_tensor({2, 5}, rng);
    std::vector<Tensor> inputs = {random_tensor({2, 5}, rng, -2.0, 2.0)};
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(softmax(in[0], 1), w); }, inputs) < kGradTol);
}

TEST_CASE("scale_by and add_bias gradients") {
    Rng rng(12);
    Tensor w = random_tensor({3, 4}, rng);
    std::vector<Tensor> inputs = {random_tensor({3, 4}, rng), Tensor::from_vector({1}, {0.37})};
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(scale_by(in[0], in[1]), w); }, inputs) < kGradTol);

    std::vector<Tensor> inputs2 = {random_tensor({3, 4}, rng), random_tensor({4}, rng)};
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(add_bias(in[0], in[1]), w); }, inputs2) < kGradTol);
}

TEST_CASE("matmul: 2-D and batched, values and gradients") {
    Tensor a = Tensor::from_vector({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_vector({2, 2}, {5, 6, 7, 8});
    Tensor c = matmul(a, b);
    CHECK(c.data()[0] == 19);
    CHECK(c.data()[1] == 22);
    CHECK(c.data()[2] == 43);
    CHECK(c.data()[3] == 50);

    Rng rng(13);
    {
        Tensor w = random_tensor({3, 4}, rng);
        std::vector<Tensor> inputs = {random_tensor({3, 5}, rng), random_tensor({5, 4}, rng)};
        CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(matmul(in[0], in[1]), w); }, inputs) < kGradTol);
    }
    {
        Tensor w = random_tensor({2, 2, 3, 3}, rng);
        std::vector<Tensor> inputs = {random_tensor({2, 2, 3, 2}, rng), random_tensor({2, 2, 2, 3}, rng)};
        CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(matmul(in[0], in[1]), w); }, inputs) < kGradTol);
    }
    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), std::invalid_argument);
}

TEST_CASE("conv2d matches a direct-summation oracle") {
    // all-ones 3x3 input, single all-ones 3x3 kernel, padding 1
    Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor y = conv2d(x, k, Tensor(), 1, 1);
    CHECK(y.shape() == Shape{1, 1, 3, 3});
    CHECK(y.data()[4] == 9.0);  // center
    CHECK(y.data()[0] == 4.0);  // corner
    CHECK(y.data()[1] == 6.0);  // edge

    // random case cross-checked against an independent direct summation
    Rng rng(17);
    Tensor xr = random_tensor({2, 3, 5, 4}, rng);
    Tensor wr = random_tensor({4, 3, 3, 3}, rng);
    Tensor br = random_tensor({4}, rng);
    const int stride = 2, pad = 1;
    Tensor yr = conv2d(xr, wr, br, stride, pad);
    const int64_t Ho = (5 + 2 * pad - 3) / stride + 1;
    const int64_t Wo = (4 + 2 * pad - 3) / stride + 1;
    CHECK(yr.shape() == Shape{2, 4, Ho, Wo});
    auto xv = xr.data();
    auto wv = wr.data();
    auto bv = br.data();
    auto yv = yr.data();
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t co = 0; co < 4; ++co)
            for (int64_t oy = 0; oy < Ho; ++oy)
                for (int64_t ox = 0; ox < Wo; ++ox) {
                    double acc = bv[co];
                    for (int64_t ci = 0; ci < 3; ++ci)
                        for (int64_t ky = 0; ky < 3; ++ky)
                            for (int64_t kx = 0; kx < 3; ++kx) {
                                const int64_t iy = oy * stride - pad + ky;
                                const int64_t ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= 5 || ix < 0 || ix >= 4) continue;
                                acc += xv[((n * 3 + ci) * 5 + iy) * 4 + ix] * wv[((co * 3 + ci) * 3 + ky) * 3 + kx];
                            }
                    CHECK(yv[((n * 4 + co) * Ho + oy) * Wo + ox] == doctest::Approx(acc).epsilon(1e-12));
                }
}

TEST_CASE("conv2d and conv1d gradients") {
    Rng rng(19);
    {
        Tensor w = random_tensor({1, 2, 4, 4}, rng);
        std::vector<Tensor> inputs = {random_tensor({1, 2, 4, 4}, rng), random_tensor({2, 2, 3, 3}, rng),
                                      random_tensor({2}, rng)};
        CHECK(fd_max_rel_error(
                  [&](const std::vector<Tensor>& in) { return weighted(conv2d(in[0], in[1], in[2], 1, 1), w); },
                  inputs) < kGradTol);
    }
    {
        // strided, no padding
        Tensor w = random_tensor({1, 2, 2, 2}, rng);
        std::vector<Tensor> inputs = {random_tensor({1, 1, 4, 4}, rng), random_tensor({2, 1, 2, 2}, rng),
                                      random_tensor({2}, rng)};
        CHECK(fd_max_rel_error(
                  [&](const std::vector<Tensor>& in) { return weighted(conv2d(in[0], in[1], in[2], 2, 0), w); },
                  inputs) < kGradTol);
    }
    {
        Tensor w = random_tensor({2, 3, 5}, rng);
        std::vector<Tensor> inputs = {random_tensor({2, 2, 5}, rng), random_tensor({3, 2, 3}, rng),
                                      random_tensor({3}, rng)};
        CHECK(fd_max_rel_error(
                  [&](const std::vector<Tensor>& in) { return weighted(conv1d(in[0], in[1], in[2], 1), w); },
                  inputs) < kGradTol);
    }
    {
        // conv1d over the T axis of (N,T,P,C)
        Tensor w = random_tensor({2, 3, 2, 4}, rng);
        std::vector<Tensor> inputs = {random_tensor({2, 3, 2, 4}, rng), random_tensor({4, 4, 3}, rng),
                                      random_tensor({4}, rng)};
        CHECK(fd_max_rel_error(
                  [&](const std::vector<Tensor>& in) { return weighted(conv1d_over_axis(in[0], in[1], in[2], 1, 1), w); },
                  inputs) < kGradTol);
    }
}

TEST_CASE("layer_norm and group_norm: statistics and gradients") {
    Rng rng(23);
    // pre-affine statistics: gamma=1, beta=0
    {
        Tensor x = random_tensor({4, 6}, rng, -3.0, 3.0);
        Tensor y = layer_norm(x, Tensor::full({6}, 1.0), Tensor::zeros({6}));
        auto yv = y.data();
        for (int64_t r = 0; r < 4; ++r) {
            double m = 0.0, var = 0.0;
            for (int64_t j = 0; j < 6; ++j) m += yv[r * 6 + j];
            m /= 6.0;
            for (int64_t j = 0; j < 6; ++j) var += (yv[r * 6 + j] - m) * (yv[r * 6 + j] - m);
            var /= 6.0;
            CHECK(std::fabs(m) <= 1e-9);
            CHECK(std::fabs(var - 1.0) <= 1e-6);
        }
    }
    {
        Tensor x = random_tensor({2, 6, 4}, rng, -2.0, 2.0);
        Tensor y = group_norm(x, Tensor::full({6}, 1.0), Tensor::zeros({6}), 3);
        auto yv = y.data();
        for (int64_t n = 0; n < 2; ++n)
            for (int64_t g = 0; g < 3; ++g) {
                double m = 0.0, var = 0.0;
                for (int64_t c = g * 2; c < g * 2 + 2; ++c)
                    for (int64_t s = 0; s < 4; ++s) m += yv[(n * 6 + c) * 4 + s];
                m /= 8.0;
                for (int64_t c = g * 2; c < g * 2 + 2; ++c)
                    for (int64_t s = 0; s < 4; ++s) {
                        const double d = yv[(n * 6 + c) * 4 + s] - m;
                        var += d * d;
                    }
                var /= 8.0;
                CHECK(std::fabs(m) <= 1e-9);
                CHECK(std::fabs(var - 1.0) <= 1e-6);
            }
    }
    {
        Tensor w = random_tensor({3, 5}, rng);
        std::vector<Tensor> inputs = {random_tensor({3, 5}, rng), random_tensor({5}, rng, 0.5, 1.5),
                                      random_tensor({5}, rng)};
        CHECK(fd_max_rel_error(
                  [&](const std::vector<Tensor>& in) { return weighted(layer_norm(in[0], in[1], in[2]), w); },
                  inputs) < kGradTol);
    }
    {
        Tensor w = random_tensor({2, 4, 3}, rng);
        std::vector<Tensor> inputs = {random_tensor({2, 4, 3}, rng), random_tensor({4}, rng, 0.5, 1.5),
                                      random_tensor({4}, rng)};
        CHECK(fd_max_rel_error(
                  [&](const std::vector<Tensor>& in) { return weighted(group_norm(in[0], in[1], in[2], 2), w); },
                  inputs) < kGradTol);
    }
    CHECK_THROWS_AS(group_norm(Tensor::zeros({1, 5, 2}), Tensor::full({5}, 1.0), Tensor::zeros({5}), 2),
                    std::invalid_argument);
}

TEST_CASE("permute round trip and reshape/slice/concat gradients") {
    Rng rng(29);
    Tensor x = random_tensor({2, 3, 4}, rng);
    Tensor y = permute(permute(x, {2, 0, 1}), {1, 2, 0});
    CHECK(y.shape() == x.shape());
    for (size_t i = 0; i < x.data().size(); ++i) CHECK(x.data()[i] == y.data()[i]);

    Tensor w = random_tensor({4, 3, 2}, rng);
    std::vector<Tensor> inputs = {random_tensor({2, 3, 4}, rng)};
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(permute(in[0], {2, 1, 0}), w); }, inputs) < kGradTol);

    Tensor w2 = random_tensor({12, 2}, rng);
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(reshape(in[0], {12, 2}), w2); }, inputs) < kGradTol);

    Tensor w3 = random_tensor({2, 2, 2}, rng);
    CHECK(fd_max_rel_error(
              [&](const std::vector<Tensor>& in) { return weighted(slice(in[0], {0, 1, 1}, {2, 2, 2}), w3); },
              inputs) < kGradTol);

    Tensor w4 = random_tensor({2, 5, 4}, rng);
    std::vector<Tensor> two = {random_tensor({2, 3, 4}, rng), random_tensor({2, 2, 4}, rng)};
    CHECK(fd_max_rel_error(
              [&](const std::vector<Tensor>& in) { return weighted(concat({in[0], in[1]}, 1), w4); }, two) < kGradTol);

    // roll is concat+slice; check value semantics
    Tensor v = Tensor::from_vector({4}, {0, 1, 2, 3});
    Tensor rolled = roll_axis(v, 0, 1);
    CHECK(rolled.data()[0] == 3);
    CHECK(rolled.data()[1] == 0);
    Tensor back = roll_axis(rolled, 0, -1);
    for (int i = 0; i < 4; ++i) CHECK(back.data()[i] == v.data()[i]);
}

TEST_CASE("upsample and reductions") {
    Rng rng(31);
    Tensor x = Tensor::from_vector({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor up = upsample_nearest2x(x);
    CHECK(up.shape() == Shape{1, 1, 4, 4});
    CHECK(up.data()[0] == 1);
    CHECK(up.data()[1] == 1);
    CHECK(up.data()[5] == 1);
    CHECK(up.data()[10] == 4);

    Tensor w = random_tensor({1, 2, 4, 4}, rng);
    std::vector<Tensor> inputs = {random_tensor({1, 2, 2, 2}, rng)};
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(upsample_nearest2x(in[0]), w); }, inputs) < kGradTol);

    std::vector<Tensor> in2 = {random_tensor({3, 4}, rng)};
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return sum_all(in[0]); }, in2) < kGradTol);
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return mean_all(in[0]); }, in2) < kGradTol);
    Tensor w5 = random_tensor({4}, rng);
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(sum_axis(in[0], 0), w5); }, in2) < kGradTol);
    Tensor w6 = random_tensor({3}, rng);
    CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return weighted(mean_axis(in[0], 1), w6); }, in2) < kGradTol);
}

TEST_CASE("backward: analytic examples and rules") {
    // loss = sum(x*x), x=[1,2] -> grad [2,4]
    Tensor x = Tensor::from_vector({2}, {1.0, 2.0}, true);
    Tensor loss = sum_all(mul(x, x));
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));

    // non-scalar loss rejected
    Tensor y = Tensor::zeros({3}, true);
    CHECK_THROWS_AS(backward(mul(y, y)), std::invalid_argument);

    // detached branch contributes zero grad
    Tensor z = Tensor::from_vector({2}, {3.0, 4.0}, true);
    Tensor d = z.detach();
    Tensor l2 = sum_all(mul(d, d));
    CHECK_FALSE(l2.requires_grad());
    Tensor l3 = add(sum_all(z), l2);
    backward(l3);
    CHECK(z.grad()[0] == doctest::Approx(1.0));
    CHECK(z.grad()[1] == doctest::Approx(1.0));
}

TEST_CASE("backward linearity") {
    Rng rng(37);
    auto build = [&](Tensor& x) {
        Tensor h = gfk::tanh(x);
        Tensor l1 = sum_all(mul(h, h));
        Tensor l2 = sum_all(gfk::exp(mul_scalar(x, 0.3)));
        return std::make_pair(l1, l2);
    };
    const double a = 1.7, b = -0.6;

    Tensor x1 = random_tensor({3, 3}, rng);
    x1.set_requires_grad(true);
    auto [l1a, l2a] = build(x1);
    backward(add(mul_scalar(l1a, a), mul_scalar(l2a, b)));
    std::vector<double> combined(x1.grad().begin(), x1.grad().end());

    Tensor x2 = Tensor::from_vector({3, 3}, std::vector<double>(x1.data().begin(), x1.data().end()), true);
    auto [l1b, l2b] = build(x2);
    backward(l1b);
    std::vector<double> g1(x2.grad().begin(), x2.grad().end());
    x2.zero_grad();
    auto [l1c, l2c] = build(x2);
    backward(l2c);
    std::vector<double> g2(x2.grad().begin(), x2.grad().end());

    for (size_t i = 0; i < combined.size(); ++i)
        CHECK(std::fabs(combined[i] - (a * g1[i] + b * g2[i])) <= 1e-10);
}

TEST_CASE("forward outputs stay finite on finite inputs") {
    Rng rng(41);
    Tensor x = random_tensor({2, 4, 4, 4}, rng, -3.0, 3.0);
    Tensor w = random_tensor({4, 4, 3, 3}, rng);
    Tensor y = conv2d(x, w, Tensor(), 1, 1);
    y = gelu(group_norm(y, Tensor::full({4}, 1.0), Tensor::zeros({4}), 2));
    y = softmax(y, 1);
    for (double v : y.data()) CHECK(std::isfinite(v));
}

TEST_CASE("checkpoint round trip") {
    Rng rng(43);
    std::vector<NamedParam> params = {{"layer0.w", random_tensor({3, 4}, rng)},
                                      {"layer0.b", random_tensor({4}, rng)},
                                      {"alpha", Tensor::scalar(0.0)}};
    const std::string path = "test_ckpt.gfk";
    save_checkpoint(path, params);

    auto raw = read_checkpoint(path);
    REQUIRE(raw.size() == 3);
    CHECK(raw[0].name == "layer0.w");
    CHECK(raw[0].tensor.shape() == Shape{3, 4});

    std::vector<NamedParam> target = {{"layer0.w", Tensor::zeros({3, 4})},
                                      {"layer0.b", Tensor::zeros({4})},
                                      {"alpha", Tensor::scalar(1.0)}};
    load_checkpoint(path, target);
    for (size_t i = 0; i < params.size(); ++i) {
        auto a = params[i].tensor.data();
        auto b = target[i].tensor.data();
        REQUIRE(a.size() == b.size());
        for (size_t j = 0; j < a.size(); ++j) CHECK(a[j] == b[j]);
    }

    // shape mismatch rejected
    std::vector<NamedParam> bad = {{"layer0.w", Tensor::zeros({4, 3})}};
    CHECK_THROWS_AS(load_checkpoint(path, bad), std::runtime_error);

    // bad magic rejected
    {
        FILE* f = std::fopen("test_ckpt_bad.gfk", "wb");
        std::fwrite("XXXX0000", 1, 8, f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(read_checkpoint("test_ckpt_bad.gfk"), std::runtime_error);
    std::remove(path.c_str());
    std::remove("test_ckpt_bad.gfk");
}

TEST_CASE("randomized gradient sweep over the full op set") {
    // Every op on randomized small tensors (<= 64 elements).
    Rng rng(53);
    for (int rep = 0; rep < 3; ++rep) {
        Tensor w = random_tensor({2, 2, 4}, rng);
        std::vector<Tensor> inputs = {random_tensor({2, 2, 4}, rng, 0.3, 1.5), random_tensor({2, 2, 4}, rng, 0.4, 1.2)};
        auto f = [&](const std::vector<Tensor>& in) {
            Tensor h = mul(in[0], in[1]);
            h = add(h, gfk::exp(mul_scalar(in[0], 0.2)));
            h = divide(h, add_scalar(sigmoid(in[1]), 1.0));
            h = gfk::log(add_scalar(mul(h, h), 1.0));
            h = softmax(h, 2);
            return weighted(h, w);
        };
        CHECK(fd_max_rel_error(f, inputs) < kGradTol);
    }
}
