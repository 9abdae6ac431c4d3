#include "gfk/network.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gfk {
namespace {

int gcd_int(int a, int b) { return b == 0 ? a : gcd_int(b, a % b); }

int norm_groups_for(int64_t channels) { return gcd_int(8, static_cast<int>(channels)); }

Tensor tokens_to_nchw(const Tensor& x) { return permute(x, {0, 3, 1, 2}); }
Tensor nchw_to_tokens(const Tensor& x) { return permute(x, {0, 2, 3, 1}); }

}  // namespace

int ModelConfig::stage_heads(int s) const {
    const int64_t c = stage_channels(s);
    int heads = static_cast<int>(std::max<int64_t>(1, c / 32));
    while (heads > 1 && c % heads != 0) --heads;
    return heads;
}

int64_t ModelConfig::decoder_channels(int s) const {
    const int64_t c = stage_channels(s);
    const int64_t third = (c + 2) / 3;
    return std::max<int64_t>(8, (third + 7) / 8 * 8);
}

void ModelConfig::validate() const {
    if (base_channels < 1) throw std::invalid_argument("config: base_channels must be positive");
    if (channel_mult.empty() || channel_mult.size() != depths.size())
        throw std::invalid_argument("config: channel_mult and depths must be non-empty and equal length");
    for (int m : channel_mult)
        if (m < 1) throw std::invalid_argument("config: channel multipliers must be positive");
    for (int d : depths)
        if (d < 1) throw std::invalid_argument("config: stage depths must be positive");
    const int s = stages();
    const int64_t tile = int64_t{4} << (s - 1);
    if (context < tile || context % tile != 0)
        throw std::invalid_argument("config: context " + std::to_string(context) + " must be a multiple of " +
                                    std::to_string(tile) + " for " + std::to_string(s) + " stages");
    if (window_size < 1) throw std::invalid_argument("config: window_size must be positive");
    for (int i = 0; i < s; ++i) {
        if (stage_resolution(i) % window_size != 0)
            throw std::invalid_argument("config: window_size " + std::to_string(window_size) +
                                        " does not tile stage resolution " + std::to_string(stage_resolution(i)));
    }
    if (eval_crop > context || eval_crop < 1 || context % 2 != 0 || eval_crop % 2 != 0)
        throw std::invalid_argument("config: eval_crop must be even and no larger than the even context");
    if (num_classes < 2) throw std::invalid_argument("config: num_classes must be at least 2");
    if (in_channels < 1) throw std::invalid_argument("config: in_channels must be positive");
    if (frames < 1) throw std::invalid_argument("config: frames must be positive");
    if (!temporal && frames != 1)
        throw std::invalid_argument("config: frames must be 1 when no temporal connection is configured");
    for (int st : temporal_stages)
        if (st < 0 || st >= s) throw std::invalid_argument("config: temporal stage index out of range");
}

bool ModelConfig::operator==(const ModelConfig& other) const {
    auto t_eq = [&] {
        if (temporal.has_value() != other.temporal.has_value()) return false;
        if (!temporal) return true;
        return temporal->kind == other.temporal->kind && temporal->heads == other.temporal->heads &&
               temporal->kernel_size == other.temporal->kernel_size && temporal->groups == other.temporal->groups &&
               temporal->pe_dim == other.temporal->pe_dim;
    };
    return base_channels == other.base_channels && channel_mult == other.channel_mult && depths == other.depths &&
           window_size == other.window_size && num_classes == other.num_classes && in_channels == other.in_channels &&
           temporal_stages == other.temporal_stages && context == other.context && eval_crop == other.eval_crop &&
           frames == other.frames && t_eq();
}

// ---------------------------------------------------------------------------
// Blocks

SwinBlock::SwinBlock(int64_t channels, int heads_, int window_, bool shifted_, Rng& rng)
    : norm1(channels),
      norm2(channels),
      qkv(channels, 3 * channels, rng, 0.02),
      proj(channels, channels, rng, 0.02),
      fc1(channels, 4 * channels, rng, 0.02),
      fc2(4 * channels, channels, rng, 0.02),
      heads(heads_),
      window(window_),
      shifted(shifted_) {}

Tensor SwinBlock::forward(const Tensor& x) const {
    const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const int64_t w = window;
    const int64_t nh = H / w, nw = W / w;
    const int64_t L = w * w;
    const int64_t d = C / heads;
    const int64_t shift = shifted ? w / 2 : 0;

    Tensor h = norm1.forward(x);
    if (shift > 0) h = roll_axis(roll_axis(h, 1, -shift), 2, -shift);
    h = reshape(h, {B, nh, w, nw, w, C});
    h = permute(h, {0, 1, 3, 2, 4, 5});
    h = reshape(h, {B * nh * nw, L, C});

    Tensor qkv_out = qkv.forward(h);
    auto heads_view = [&](Tensor t) {
        return permute(reshape(t, {B * nh * nw, L, static_cast<int64_t>(heads), d}), {0, 2, 1, 3});
    };
    Tensor q = heads_view(slice_axis(qkv_out, 2, 0, C));
    Tensor k = heads_view(slice_axis(qkv_out, 2, C, C));
    Tensor v = heads_view(slice_axis(qkv_out, 2, 2 * C, C));
    Tensor scores = mul_scalar(matmul(q, permute(k, {0, 1, 3, 2})), 1.0 / std::sqrt(static_cast<double>(d)));
    Tensor ctx = matmul(softmax(scores, 3), v);                    // (Bw, heads, L, d)
    ctx = reshape(permute(ctx, {0, 2, 1, 3}), {B * nh * nw, L, C});
    ctx = proj.forward(ctx);

    ctx = reshape(ctx, {B, nh, nw, w, w, C});
    ctx = permute(ctx, {0, 1, 3, 2, 4, 5});
    ctx = reshape(ctx, {B, H, W, C});
    if (shift > 0) ctx = roll_axis(roll_axis(ctx, 1, shift), 2, shift);

    Tensor y = add(x, ctx);
    Tensor m = fc2.forward(gelu(fc1.forward(norm2.forward(y))));
    return add(y, m);
}

void SwinBlock::append_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    norm1.append_params(prefix + ".norm1", out);
    qkv.append_params(prefix + ".qkv", out);
    proj.append_params(prefix + ".proj", out);
    norm2.append_params(prefix + ".norm2", out);
    fc1.append_params(prefix + ".mlp.fc1", out);
    fc2.append_params(prefix + ".mlp.fc2", out);
}

PatchMerge::PatchMerge(int64_t channels, Rng& rng)
    : norm(4 * channels), reduce(4 * channels, 2 * channels, rng, 0.02) {}

Tensor PatchMerge::forward(const Tensor& x) const {
    const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    Tensor h = reshape(x, {B, H / 2, 2, W / 2, 2, C});
    h = permute(h, {0, 1, 3, 2, 4, 5});
    h = reshape(h, {B, H / 2, W / 2, 4 * C});
    return reduce.forward(norm.forward(h));
}

void PatchMerge::append_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    norm.append_params(prefix + ".norm", out);
    reduce.append_params(prefix + ".reduce", out);
}

ResBlock::ResBlock(int64_t in_ch, int64_t out_ch, Rng& rng)
    : n1(in_ch, norm_groups_for(in_ch)),
      n2(out_ch, norm_groups_for(out_ch)),
      c1(in_ch, out_ch, 3, 1, 1, rng),
      c2(out_ch, out_ch, 3, 1, 1, rng) {
    if (in_ch != out_ch) skip = Conv2dP(in_ch, out_ch, 1, 1, 0, rng);
}

Tensor ResBlock::forward(const Tensor& x) const {
    Tensor h = c1.forward(gelu(n1.forward(x)));
    h = c2.forward(gelu(n2.forward(h)));
    Tensor s = skip ? skip->forward(x) : x;
    return add(s, h);
}

void ResBlock::append_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    n1.append_params(prefix + ".n1", out);
    c1.append_params(prefix + ".c1", out);
    n2.append_params(prefix + ".n2", out);
    c2.append_params(prefix + ".c2", out);
    if (skip) skip->append_params(prefix + ".skip", out);
}

UpsampleBlock::UpsampleBlock(int64_t channels, Rng& rng) : conv(channels, channels, 3, 1, 1, rng) {}

Tensor UpsampleBlock::forward(const Tensor& x) const { return conv.forward(upsample_nearest2x(x)); }

void UpsampleBlock::append_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    conv.append_params(prefix + ".conv", out);
}

// ---------------------------------------------------------------------------
// Model

Model::Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(mix_seed(seed, 0x6d6f64656cULL));
    const int S = cfg_.stages();

    patch_embed_ = Conv2dP(cfg_.in_channels, cfg_.stage_channels(0), 4, 4, 0, rng);
    embed_norm_ = LayerNormP(cfg_.stage_channels(0));

    stages_.resize(static_cast<size_t>(S));
    encoder_temporal_.resize(static_cast<size_t>(S));
    for (int s = 0; s < S; ++s) {
        const int64_t c = cfg_.stage_channels(s);
        for (int b = 0; b < cfg_.depths[static_cast<size_t>(s)]; ++b) {
            stages_[static_cast<size_t>(s)].emplace_back(c, cfg_.stage_heads(s), cfg_.window_size, b % 2 == 1, rng);
            if (cfg_.temporal_at(s))
                encoder_temporal_[static_cast<size_t>(s)].push_back(
                    make_temporal_module(cfg_.temporal->kind, c, *cfg_.temporal, rng));
        }
        if (s + 1 < S) merges_.emplace_back(c, rng);
    }

    const int64_t bottleneck_in = cfg_.stage_channels(S - 1);
    const int64_t bottleneck_out = cfg_.decoder_channels(S - 1);
    bottleneck_ = ResBlock(bottleneck_in, bottleneck_out, rng);
    if (cfg_.decoder_temporal_at(S - 1))
        bottleneck_temporal_ = make_temporal_module(TemporalKind::Conv, bottleneck_out, *cfg_.temporal, rng);

    for (int s = S - 2; s >= 0; --s) {
        const int64_t carried = cfg_.decoder_channels(s + 1);
        dec_ups_.emplace_back(carried, rng);
        dec_blocks_.emplace_back(carried + cfg_.stage_channels(s), cfg_.decoder_channels(s), rng);
        if (cfg_.decoder_temporal_at(s))
            decoder_temporal_.push_back(
                make_temporal_module(TemporalKind::Conv, cfg_.decoder_channels(s), *cfg_.temporal, rng));
        else
            decoder_temporal_.push_back(nullptr);
    }

    final_up1_ = UpsampleBlock(cfg_.decoder_channels(0), rng);
    final_up2_ = UpsampleBlock(cfg_.decoder_channels(0), rng);
    head_ = Conv2dP(cfg_.decoder_channels(0), cfg_.num_classes, 3, 1, 1, rng);
}

namespace {

// (N*T, H, W, C) tokens -> temporal exchange -> same layout.
Tensor run_temporal_tokens(TemporalModule& module, const Tensor& x, int64_t n, int64_t t, const DateMatrix& dates) {
    const int64_t h = x.dim(1), w = x.dim(2), c = x.dim(3);
    Tensor flat = reshape(x, {n, t, h * w, c});
    flat = module.forward(flat, dates);
    return reshape(flat, {n * t, h, w, c});
}

Tensor run_temporal_nchw(TemporalModule& module, const Tensor& x, int64_t n, int64_t t, const DateMatrix& dates) {
    Tensor tokens = nchw_to_tokens(x);
    tokens = run_temporal_tokens(module, tokens, n, t, dates);
    return tokens_to_nchw(tokens);
}

}  // namespace

Tensor Model::forward(const Tensor& sits, const DateMatrix& dates) {
    if (sits.rank() != 5)
        throw std::invalid_argument("model: expected (N,T,C,H,W), got " + shape_str(sits.shape()));
    const int64_t N = sits.dim(0), T = sits.dim(1);
    if (sits.dim(2) != cfg_.in_channels || sits.dim(3) != cfg_.context || sits.dim(4) != cfg_.context)
        throw std::invalid_argument("model: input " + shape_str(sits.shape()) + " does not match context " +
                                    std::to_string(cfg_.context) + " with " + std::to_string(cfg_.in_channels) +
                                    " channels");
    if (T < 1) throw std::invalid_argument("model: T must be >= 1");
    if (!cfg_.temporal && T != 1)
        throw std::invalid_argument("model: T must be 1 without a temporal connection, got T=" + std::to_string(T));
    if (static_cast<int64_t>(dates.size()) != N)
        throw std::invalid_argument("model: dates rows must match batch");
    for (const auto& row : dates)
        if (static_cast<int64_t>(row.size()) != T)
            throw std::invalid_argument("model: dates per series must match T");

    const int S = cfg_.stages();
    Tensor x = reshape(sits, {N * T, cfg_.in_channels, cfg_.context, cfg_.context});
    x = patch_embed_.forward(x);
    x = nchw_to_tokens(x);
    x = embed_norm_.forward(x);

    std::vector<Tensor> feats(static_cast<size_t>(S));
    for (int s = 0; s < S; ++s) {
        const auto& blocks = stages_[static_cast<size_t>(s)];
        for (size_t b = 0; b < blocks.size(); ++b) {
            x = blocks[b].forward(x);
            if (!encoder_temporal_[static_cast<size_t>(s)].empty())
                x = run_temporal_tokens(*encoder_temporal_[static_cast<size_t>(s)][b], x, N, T, dates);
        }
        feats[static_cast<size_t>(s)] = tokens_to_nchw(x);
        if (s + 1 < S) x = merges_[static_cast<size_t>(s)].forward(x);
    }

    Tensor d = bottleneck_.forward(feats[static_cast<size_t>(S - 1)]);
    if (bottleneck_temporal_) d = run_temporal_nchw(*bottleneck_temporal_, d, N, T, dates);
    for (int s = S - 2, i = 0; s >= 0; --s, ++i) {
        d = dec_ups_[static_cast<size_t>(i)].forward(d);
        d = concat({d, feats[static_cast<size_t>(s)]}, 1);
        d = dec_blocks_[static_cast<size_t>(i)].forward(d);
        if (decoder_temporal_[static_cast<size_t>(i)])
            d = run_temporal_nchw(*decoder_temporal_[static_cast<size_t>(i)], d, N, T, dates);
    }
    d = final_up1_.forward(d);
    d = final_up2_.forward(d);
    d = head_.forward(d);
    return reshape(d, {N, T, cfg_.num_classes, cfg_.context, cfg_.context});
}

std::vector<NamedParam> Model::named_params() const {
    std::vector<NamedParam> out;
    patch_embed_.append_params("embed.conv", out);
    embed_norm_.append_params("embed.norm", out);
    const int S = cfg_.stages();
    for (int s = 0; s < S; ++s) {
        for (size_t b = 0; b < stages_[static_cast<size_t>(s)].size(); ++b) {
            const std::string prefix = "enc.stage" + std::to_string(s) + ".block" + std::to_string(b);
            stages_[static_cast<size_t>(s)][b].append_params(prefix, out);
            if (!encoder_temporal_[static_cast<size_t>(s)].empty())
                encoder_temporal_[static_cast<size_t>(s)][b]->append_params(prefix + ".temporal", out);
        }
        if (s + 1 < S) merges_[static_cast<size_t>(s)].append_params("enc.merge" + std::to_string(s), out);
    }
    bottleneck_.append_params("dec.bottleneck", out);
    if (bottleneck_temporal_) bottleneck_temporal_->append_params("dec.bottleneck.temporal", out);
    for (int s = S - 2, i = 0; s >= 0; --s, ++i) {
        const std::string prefix = "dec.stage" + std::to_string(s);
        dec_ups_[static_cast<size_t>(i)].append_params(prefix + ".up", out);
        dec_blocks_[static_cast<size_t>(i)].append_params(prefix + ".res", out);
        if (decoder_temporal_[static_cast<size_t>(i)])
            decoder_temporal_[static_cast<size_t>(i)]->append_params(prefix + ".temporal", out);
    }
    final_up1_.append_params("dec.final_up1", out);
    final_up2_.append_params("dec.final_up2", out);
    head_.append_params("dec.head", out);
    return out;
}

std::vector<Tensor> Model::parameters() const {
    std::vector<Tensor> out;
    for (auto& p : named_params()) out.push_back(p.tensor);
    return out;
}

void Model::zero_grad() {
    for (auto& p : parameters()) p.zero_grad();
}

std::map<std::string, std::vector<double>> Model::state() const {
    std::map<std::string, std::vector<double>> out;
    for (const auto& p : named_params())
        out.emplace(p.name, std::vector<double>(p.tensor.data().begin(), p.tensor.data().end()));
    return out;
}

void Model::load_state(const std::map<std::string, std::vector<double>>& state) {
    for (auto& p : named_params()) {
        auto it = state.find(p.name);
        if (it == state.end()) throw std::runtime_error("model: state missing parameter " + p.name);
        if (it->second.size() != p.tensor.data().size())
            throw std::runtime_error("model: state size mismatch for " + p.name);
        std::copy(it->second.begin(), it->second.end(), p.tensor.mutable_data().begin());
    }
}

void Model::save(const std::string& path) const { save_checkpoint(path, named_params()); }

void Model::load(const std::string& path) {
    auto params = named_params();
    load_checkpoint(path, params);
}

// ---------------------------------------------------------------------------
// Accounting

int64_t param_count(const ModelConfig& cfg) {
    Model model(cfg, 0);
    int64_t total = 0;
    for (const auto& p : model.named_params()) total += p.tensor.numel();
    return total;
}

int64_t added_temporal_params(const ModelConfig& cfg) {
    if (!cfg.temporal) return 0;
    ModelConfig plain = cfg;
    plain.temporal.reset();
    plain.frames = 1;
    return param_count(cfg) - param_count(plain);
}

namespace {

double resblock_macs(int64_t in_ch, int64_t out_ch, int64_t res) {
    double macs = static_cast<double>(res * res) * static_cast<double>(in_ch * out_ch * 9 + out_ch * out_ch * 9);
    if (in_ch != out_ch) macs += static_cast<double>(res * res) * static_cast<double>(in_ch * out_ch);
    return macs;
}

double temporal_macs_per_frame(const ModelConfig& cfg, int64_t channels, int64_t positions) {
    const double c = static_cast<double>(channels);
    const double p = static_cast<double>(positions);
    const double t = static_cast<double>(cfg.frames);
    switch (cfg.temporal->kind) {
        case TemporalKind::Conv:
            return p * c * c * static_cast<double>(cfg.temporal->kernel_size);
        case TemporalKind::Ltae: {
            const double d = c / static_cast<double>(cfg.temporal->heads);
            return p * (3.0 * d * c + 2.0 * t * c + c * c);
        }
        case TemporalKind::Gru: {
            const double h = c / 2.0;
            return p * (c * h + 2.0 * 6.0 * h * h + 2.0 * c * c);
        }
    }
    return 0.0;
}

}  // namespace

double flops_estimate(const ModelConfig& cfg) {
    cfg.validate();
    const int S = cfg.stages();
    double total = 0.0;

    const double r0 = static_cast<double>(cfg.stage_resolution(0));
    total += r0 * r0 * static_cast<double>(cfg.stage_channels(0)) * 16.0 * static_cast<double>(cfg.in_channels);

    const double L = static_cast<double>(cfg.window_size) * static_cast<double>(cfg.window_size);
    for (int s = 0; s < S; ++s) {
        const double n = static_cast<double>(cfg.stage_resolution(s) * cfg.stage_resolution(s));
        const double c = static_cast<double>(cfg.stage_channels(s));
        const double per_block = 12.0 * n * c * c + 2.0 * n * L * c;
        total += per_block * static_cast<double>(cfg.depths[static_cast<size_t>(s)]);
        if (cfg.temporal_at(s))
            total += temporal_macs_per_frame(cfg, cfg.stage_channels(s),
                                             cfg.stage_resolution(s) * cfg.stage_resolution(s)) *
                     static_cast<double>(cfg.depths[static_cast<size_t>(s)]);
        if (s + 1 < S) {
            const double n_out = static_cast<double>(cfg.stage_resolution(s + 1) * cfg.stage_resolution(s + 1));
            total += n_out * (4.0 * c) * (2.0 * c);
        }
    }

    total += resblock_macs(cfg.stage_channels(S - 1), cfg.decoder_channels(S - 1), cfg.stage_resolution(S - 1));
    if (cfg.decoder_temporal_at(S - 1))
        total += temporal_macs_per_frame(cfg, cfg.decoder_channels(S - 1),
                                         cfg.stage_resolution(S - 1) * cfg.stage_resolution(S - 1));
    for (int s = S - 2; s >= 0; --s) {
        const int64_t res = cfg.stage_resolution(s);
        const int64_t carried = cfg.decoder_channels(s + 1);
        total += static_cast<double>(res * res) * static_cast<double>(carried * carried * 9);
        total += resblock_macs(carried + cfg.stage_channels(s), cfg.decoder_channels(s), res);
        if (cfg.decoder_temporal_at(s)) total += temporal_macs_per_frame(cfg, cfg.decoder_channels(s), res * res);
    }
    const double d0 = static_cast<double>(cfg.decoder_channels(0));
    const double half = static_cast<double>(cfg.context / 2);
    const double full = static_cast<double>(cfg.context);
    total += half * half * d0 * d0 * 9.0;
    total += full * full * d0 * d0 * 9.0;
    total += full * full * d0 * static_cast<double>(cfg.num_classes) * 9.0;
    return total;
}

Tensor crop_for_eval(const Tensor& logits, int eval_crop) {
    if (logits.rank() != 5)
        throw std::invalid_argument("crop_for_eval: expected (N,T,K,H,W), got " + shape_str(logits.shape()));
    const int64_t H = logits.dim(3), W = logits.dim(4);
    if (eval_crop > H || eval_crop > W) throw std::invalid_argument("crop_for_eval: crop larger than logits");
    if ((H - eval_crop) % 2 != 0 || (W - eval_crop) % 2 != 0)
        throw std::invalid_argument("crop_for_eval: margin must be even, got H=" + std::to_string(H) +
                                    " crop=" + std::to_string(eval_crop));
    if (eval_crop == H && eval_crop == W) return logits;
    const int64_t my = (H - eval_crop) / 2, mx = (W - eval_crop) / 2;
    return slice(logits, {0, 0, 0, my, mx}, {logits.dim(0), logits.dim(1), logits.dim(2), eval_crop, eval_crop});
}

Shape logits_shape(const ModelConfig& cfg, int64_t batch, int64_t frames) {
    return {batch, frames, cfg.num_classes, cfg.context, cfg.context};
}

}  // namespace gfk
