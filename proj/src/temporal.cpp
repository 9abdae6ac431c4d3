#include "gfk/temporal.hpp"

#include <cmath>
#include <stdexcept>

namespace gfk {
namespace {

void check_map_shape(const Tensor& x, const DateMatrix& dates, const char* op) {
    if (x.rank() != 4)
        throw std::invalid_argument(std::string(op) + ": expected (N,T,P,C), got " + shape_str(x.shape()));
    if (static_cast<int64_t>(dates.size()) != x.dim(0))
        throw std::invalid_argument(std::string(op) + ": date rows " + std::to_string(dates.size()) +
                                    " do not match batch " + std::to_string(x.dim(0)));
    for (const auto& row : dates) {
        if (static_cast<int64_t>(row.size()) != x.dim(1))
            throw std::invalid_argument(std::string(op) + ": date count does not match T=" + std::to_string(x.dim(1)));
        for (size_t t = 1; t < row.size(); ++t)
            if (row[t] < row[t - 1]) throw std::invalid_argument(std::string(op) + ": dates must be non-decreasing");
    }
}

}  // namespace

const char* temporal_kind_name(TemporalKind kind) {
    switch (kind) {
        case TemporalKind::Conv: return "conv";
        case TemporalKind::Ltae: return "ltae";
        case TemporalKind::Gru: return "gru";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Conv

TemporalConv::TemporalConv(int64_t channels, const TemporalConnConfig& cfg, Rng& rng) {
    if (cfg.kernel_size < 1 || cfg.kernel_size % 2 == 0)
        throw std::invalid_argument("temporal conv: kernel_size must be odd, got " + std::to_string(cfg.kernel_size));
    if (cfg.groups < 1 || channels % cfg.groups != 0)
        throw std::invalid_argument("temporal conv: channels " + std::to_string(channels) +
                                    " not divisible by groups " + std::to_string(cfg.groups));
    conv = Conv1dP(channels, channels, cfg.kernel_size, cfg.kernel_size / 2, rng, /*zero_init=*/true);
    norm = GroupNormP(channels, cfg.groups);
}

Tensor TemporalConv::forward(const Tensor& x, const DateMatrix& dates) {
    check_map_shape(x, dates, "temporal conv");
    const int64_t N = x.dim(0), T = x.dim(1), P = x.dim(2), C = x.dim(3);
    Tensor h = reshape(permute(x, {0, 2, 3, 1}), {N * P, C, T});
    h = gelu(norm.forward(conv.forward(h)));
    h = permute(reshape(h, {N, P, C, T}), {0, 3, 1, 2});
    return add(x, h);
}

void TemporalConv::append_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    conv.append_params(prefix + ".conv", out);
    norm.append_params(prefix + ".norm", out);
}

// ---------------------------------------------------------------------------
// LTAE

TemporalLtae::TemporalLtae(int64_t channels, const TemporalConnConfig& cfg, Rng& rng) {
    if (cfg.heads < 1 || channels % cfg.heads != 0)
        throw std::invalid_argument("temporal ltae: channels " + std::to_string(channels) +
                                    " not divisible by heads " + std::to_string(cfg.heads));
    heads = cfg.heads;
    group_dim = channels / cfg.heads;
    pe_dim = cfg.pe_dim > 0 ? static_cast<int>(std::min<int64_t>(cfg.pe_dim, group_dim)) : static_cast<int>(group_dim);
    for (int h = 0; h < heads; ++h) {
        q_proj.emplace_back(group_dim, group_dim, rng, 0.02);
        k_proj.emplace_back(group_dim, group_dim, rng, 0.02);
        v_proj.emplace_back(group_dim, group_dim, rng, 0.02);
    }
    out_proj = Linear(channels, channels, rng, 0.02);
    alpha = Tensor::scalar(0.0, true);
}

Tensor TemporalLtae::forward(const Tensor& x, const DateMatrix& dates) {
    check_map_shape(x, dates, "temporal ltae");
    const int64_t N = x.dim(0), T = x.dim(1), P = x.dim(2);
    const double scale = 1.0 / std::sqrt(static_cast<double>(group_dim));

    // Sinusoidal encoding of day offsets from each series' first frame,
    // materialized to (N,P,T,d) so it adds directly per channel group.
    std::vector<double> pe(static_cast<size_t>(N * P * T * group_dim), 0.0);
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t t = 0; t < T; ++t) {
            const double pos = dates[static_cast<size_t>(n)][static_cast<size_t>(t)] -
                               dates[static_cast<size_t>(n)][0];
            for (int64_t j = 0; j < pe_dim; ++j) {
                const double freq = std::pow(10000.0, -2.0 * static_cast<double>(j / 2) / static_cast<double>(pe_dim));
                const double v = (j % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
                for (int64_t p = 0; p < P; ++p)
                    pe[static_cast<size_t>(((n * P + p) * T + t) * group_dim + j)] = v;
            }
        }
    }
    Tensor pe_t = Tensor::from_vector({N, P, T, group_dim}, std::move(pe));

    if (capture_attention_) last_attention_.clear();
    std::vector<Tensor> head_outputs;
    for (int h = 0; h < heads; ++h) {
        Tensor xg = slice_axis(x, 3, h * group_dim, group_dim);       // (N,T,P,d)
        xg = add(permute(xg, {0, 2, 1, 3}), pe_t);                    // (N,P,T,d)
        Tensor q = q_proj[static_cast<size_t>(h)].forward(xg);
        Tensor k = k_proj[static_cast<size_t>(h)].forward(xg);
        Tensor v = v_proj[static_cast<size_t>(h)].forward(xg);
        Tensor scores = mul_scalar(matmul(q, permute(k, {0, 1, 3, 2})), scale);  // (N,P,T,T)
        Tensor attn = softmax(scores, 3);
        if (capture_attention_) last_attention_.push_back(attn.detach());
        Tensor ctx = matmul(attn, v);                                 // (N,P,T,d)
        head_outputs.push_back(permute(ctx, {0, 2, 1, 3}));           // (N,T,P,d)
    }
    Tensor merged = heads == 1 ? head_outputs[0] : concat(head_outputs, 3);
    Tensor branch = scale_by(out_proj.forward(merged), alpha);
    return add(x, branch);
}

void TemporalLtae::append_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    for (int h = 0; h < heads; ++h) {
        const std::string hp = prefix + ".head" + std::to_string(h);
        q_proj[static_cast<size_t>(h)].append_params(hp + ".q", out);
        k_proj[static_cast<size_t>(h)].append_params(hp + ".k", out);
        v_proj[static_cast<size_t>(h)].append_params(hp + ".v", out);
    }
    out_proj.append_params(prefix + ".out", out);
    append_param(out, prefix + ".alpha", alpha);
}

// ---------------------------------------------------------------------------
// GRU

TemporalGru::TemporalGru(int64_t channels, const TemporalConnConfig& cfg, Rng& rng) {
    (void)cfg;
    if (channels % 2 != 0)
        throw std::invalid_argument("temporal gru: channels must be even, got " + std::to_string(channels));
    hidden = channels / 2;
    const double stddev = 1.0 / std::sqrt(static_cast<double>(hidden));
    compress = Linear(channels, hidden, rng, stddev);
    w_x = Tensor::randn({hidden, 3 * hidden}, rng, stddev, true);
    w_h_zr = Tensor::randn({hidden, 2 * hidden}, rng, stddev, true);
    w_h_n = Tensor::randn({hidden, hidden}, rng, stddev, true);
    bias = Tensor::zeros({3 * hidden}, true);
    out_hidden = Linear(channels, channels, rng, 0.02);
    out_final = Linear(channels, channels, rng, 0.0, /*zero_init=*/true);
}

Tensor TemporalGru::cell_step(const Tensor& input, const Tensor& hprev) const {
    // z = sig(Wxz x + Whz h + bz); r = sig(Wxr x + Whr h + br);
    // n = tanh(Wxn x + Whn (r*h) + bn); h' = z*h + (1-z)*n
    Tensor gates_x = add_bias(matmul(input, w_x), bias);              // (B,3h)
    Tensor gates_h = matmul(hprev, w_h_zr);                           // (B,2h)
    Tensor z = sigmoid(add(slice_axis(gates_x, 1, 0, hidden), slice_axis(gates_h, 1, 0, hidden)));
    Tensor r = sigmoid(add(slice_axis(gates_x, 1, hidden, hidden), slice_axis(gates_h, 1, hidden, hidden)));
    Tensor n = gfk::tanh(add(slice_axis(gates_x, 1, 2 * hidden, hidden), matmul(mul(r, hprev), w_h_n)));
    Tensor keep = mul(z, hprev);
    Tensor take = mul(add_scalar(mul_scalar(z, -1.0), 1.0), n);
    return add(keep, take);
}

Tensor TemporalGru::forward(const Tensor& x, const DateMatrix& dates) {
    check_map_shape(x, dates, "temporal gru");
    const int64_t N = x.dim(0), T = x.dim(1), P = x.dim(2), C = x.dim(3);
    Tensor u = compress.forward(x);  // (N,T,P,h)

    std::vector<Tensor> step_inputs;
    step_inputs.reserve(static_cast<size_t>(T));
    for (int64_t t = 0; t < T; ++t)
        step_inputs.push_back(reshape(slice_axis(u, 1, t, 1), {N * P, hidden}));

    std::vector<Tensor> fwd(static_cast<size_t>(T)), bwd(static_cast<size_t>(T));
    Tensor state = Tensor::zeros({N * P, hidden});
    for (int64_t t = 0; t < T; ++t) {
        state = cell_step(step_inputs[static_cast<size_t>(t)], state);
        fwd[static_cast<size_t>(t)] = state;
    }
    state = Tensor::zeros({N * P, hidden});
    for (int64_t t = T - 1; t >= 0; --t) {
        state = cell_step(step_inputs[static_cast<size_t>(t)], state);
        bwd[static_cast<size_t>(t)] = state;
    }

    std::vector<Tensor> frames;
    frames.reserve(static_cast<size_t>(T));
    for (int64_t t = 0; t < T; ++t) {
        Tensor both = concat({fwd[static_cast<size_t>(t)], bwd[static_cast<size_t>(t)]}, 1);  // (N*P, C)
        frames.push_back(reshape(both, {N, 1, P, C}));
    }
    Tensor seq = T == 1 ? frames[0] : concat(frames, 1);  // (N,T,P,C)
    Tensor branch = out_final.forward(gelu(out_hidden.forward(seq)));
    return add(x, branch);
}

void TemporalGru::append_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    compress.append_params(prefix + ".compress", out);
    append_param(out, prefix + ".cell.w_x", w_x);
    append_param(out, prefix + ".cell.w_h_zr", w_h_zr);
    append_param(out, prefix + ".cell.w_h_n", w_h_n);
    append_param(out, prefix + ".cell.bias", bias);
    out_hidden.append_params(prefix + ".out_hidden", out);
    out_final.append_params(prefix + ".out_final", out);
}

std::unique_ptr<TemporalModule> make_temporal_module(TemporalKind kind, int64_t channels,
                                                     const TemporalConnConfig& cfg, Rng& rng) {
    switch (kind) {
        case TemporalKind::Conv: return std::make_unique<TemporalConv>(channels, cfg, rng);
        case TemporalKind::Ltae: return std::make_unique<TemporalLtae>(channels, cfg, rng);
        case TemporalKind::Gru: return std::make_unique<TemporalGru>(channels, cfg, rng);
    }
    throw std::invalid_argument("temporal: unknown kind");
}

}  // namespace gfk
