#pragma once

// Hierarchical windowed-attention encoder with a lightweight convolutional
// decoder and skip connections. Frames of a series share spatial weights;
// temporal connections inserted in the coarsest stages are the only
// cross-frame information paths.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gfk/layers.hpp"
#include "gfk/temporal.hpp"

namespace gfk {

struct ModelConfig {
    int base_channels = 96;
    std::vector<int> channel_mult = {1, 2, 4, 8};
    std::vector<int> depths = {2, 2, 6, 2};
    int window_size = 8;
    int num_classes = 4;
    int in_channels = 1;
    std::optional<TemporalConnConfig> temporal;
    std::set<int> temporal_stages = {1, 2, 3};
    int context = 512;
    int eval_crop = 256;
    int frames = 1;  // 8 for the multi-temporal setups

    int stages() const { return static_cast<int>(channel_mult.size()); }
    int64_t stage_channels(int s) const { return static_cast<int64_t>(base_channels) * channel_mult[static_cast<size_t>(s)]; }
    int64_t stage_resolution(int s) const { return static_cast<int64_t>(context) / 4 / (int64_t{1} << s); }
    int stage_heads(int s) const;
    // Decoder width at stage resolution s: a third of the encoder width,
    // rounded up to a multiple of 8.
    int64_t decoder_channels(int s) const;
    bool temporal_at(int stage) const { return temporal.has_value() && temporal_stages.count(stage) > 0; }
    // The attention and recurrence connections stay in the encoder; only the
    // convolutional kind also follows the decoder blocks.
    bool decoder_temporal_at(int stage) const {
        return temporal_at(stage) && temporal->kind == TemporalKind::Conv;
    }

    void validate() const;
    bool operator==(const ModelConfig& other) const;
};

struct SwinBlock {
    LayerNormP norm1, norm2;
    Linear qkv, proj, fc1, fc2;
    int heads = 1;
    int window = 1;
    bool shifted = false;

    SwinBlock() = default;
    SwinBlock(int64_t channels, int heads_, int window_, bool shifted_, Rng& rng);
    Tensor forward(const Tensor& x) const;  // (B,H,W,C) token layout
    void append_params(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct PatchMerge {
    LayerNormP norm;   // over 4C
    Linear reduce;     // 4C -> 2C

    PatchMerge() = default;
    PatchMerge(int64_t channels, Rng& rng);
    Tensor forward(const Tensor& x) const;  // (B,H,W,C) -> (B,H/2,W/2,2C)
    void append_params(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct ResBlock {
    GroupNormP n1, n2;
    Conv2dP c1, c2;
    std::optional<Conv2dP> skip;  // 1x1 when channel counts differ

    ResBlock() = default;
    ResBlock(int64_t in_ch, int64_t out_ch, Rng& rng);
    Tensor forward(const Tensor& x) const;  // (B,C,H,W)
    void append_params(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct UpsampleBlock {
    Conv2dP conv;

    UpsampleBlock() = default;
    UpsampleBlock(int64_t channels, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void append_params(const std::string& prefix, std::vector<NamedParam>& out) const;
};

class Model {
public:
    Model(const ModelConfig& cfg, uint64_t seed);

    // sits (N,T,in_channels,context,context) -> logits (N,T,classes,context,context)
    Tensor forward(const Tensor& sits, const DateMatrix& dates);

    const ModelConfig& config() const { return cfg_; }
    std::vector<NamedParam> named_params() const;
    std::vector<Tensor> parameters() const;
    void zero_grad();

    std::map<std::string, std::vector<double>> state() const;
    void load_state(const std::map<std::string, std::vector<double>>& state);
    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    ModelConfig cfg_;
    Conv2dP patch_embed_;
    LayerNormP embed_norm_;
    std::vector<std::vector<SwinBlock>> stages_;
    std::vector<std::vector<std::unique_ptr<TemporalModule>>> encoder_temporal_;
    std::vector<PatchMerge> merges_;
    ResBlock bottleneck_;
    std::unique_ptr<TemporalModule> bottleneck_temporal_;
    std::vector<UpsampleBlock> dec_ups_;        // one per skip stage, coarse to fine
    std::vector<ResBlock> dec_blocks_;
    std::vector<std::unique_ptr<TemporalModule>> decoder_temporal_;
    UpsampleBlock final_up1_, final_up2_;
    Conv2dP head_;
};

// Learnable scalar count for a configuration; equals the serialized
// checkpoint payload exactly.
int64_t param_count(const ModelConfig& cfg);
// param_count(cfg) - param_count(cfg without temporal connections)
int64_t added_temporal_params(const ModelConfig& cfg);
// Analytic multiply-accumulate count per frame (series cost divided by T).
double flops_estimate(const ModelConfig& cfg);

// Centered spatial crop of (N,T,K,H,W) logits to eval_crop.
Tensor crop_for_eval(const Tensor& logits, int eval_crop);

Shape logits_shape(const ModelConfig& cfg, int64_t batch, int64_t frames);

}  // namespace gfk
