#pragma once

// Temporal connections: residual blocks that exchange information along the
// time axis of an (N,T,P,C) feature map, independently at every spatial
// position. All three kinds are exact identities at initialization.

#include <memory>
#include <string>
#include <vector>

#include "gfk/layers.hpp"

namespace gfk {

enum class TemporalKind { Conv, Ltae, Gru };

struct TemporalConnConfig {
    TemporalKind kind = TemporalKind::Conv;
    int heads = 4;        // LTAE channel groups
    int kernel_size = 3;  // Conv; odd so T is preserved under symmetric padding
    int groups = 8;       // Conv group norm
    int pe_dim = 0;       // LTAE positional encoding length; 0 means C/heads
};

// Day offsets per (series, frame).
using DateMatrix = std::vector<std::vector<double>>;

class TemporalModule {
public:
    virtual ~TemporalModule() = default;
    virtual Tensor forward(const Tensor& x, const DateMatrix& dates) = 0;
    virtual void append_params(const std::string& prefix, std::vector<NamedParam>& out) const = 0;
};

// 1-D convolution over T, group-normed and activated, on a residual path.
// Zero-filled conv weights make the block an exact identity at init.
class TemporalConv : public TemporalModule {
public:
    TemporalConv(int64_t channels, const TemporalConnConfig& cfg, Rng& rng);
    Tensor forward(const Tensor& x, const DateMatrix& dates) override;
    void append_params(const std::string& prefix, std::vector<NamedParam>& out) const override;

    Conv1dP conv;
    GroupNormP norm;
};

// Channel-grouped multi-head attention over T with date-based positional
// encoding; the residual branch is scaled by a learned alpha initialized to 0.
class TemporalLtae : public TemporalModule {
public:
    TemporalLtae(int64_t channels, const TemporalConnConfig& cfg, Rng& rng);
    Tensor forward(const Tensor& x, const DateMatrix& dates) override;
    void append_params(const std::string& prefix, std::vector<NamedParam>& out) const override;

    void set_capture_attention(bool on) { capture_attention_ = on; }
    // Per-head (N,P,T,T) attention maps from the last forward, if captured.
    const std::vector<Tensor>& last_attention() const { return last_attention_; }

    int heads = 0;
    int64_t group_dim = 0;
    int pe_dim = 0;
    std::vector<Linear> q_proj, k_proj, v_proj;
    Linear out_proj;
    Tensor alpha;

private:
    bool capture_attention_ = false;
    std::vector<Tensor> last_attention_;
};

// Channel-compressing projection, bidirectional gated recurrence with a cell
// shared by both directions, and an output MLP whose final projection is
// zero-initialized.
class TemporalGru : public TemporalModule {
public:
    TemporalGru(int64_t channels, const TemporalConnConfig& cfg, Rng& rng);
    Tensor forward(const Tensor& x, const DateMatrix& dates) override;
    void append_params(const std::string& prefix, std::vector<NamedParam>& out) const override;

    // One recurrence step; exposed so tests can drive single steps directly.
    Tensor cell_step(const Tensor& input, const Tensor& hidden) const;

    int64_t hidden = 0;
    Linear compress;          // C -> C/2
    Tensor w_x;               // (h, 3h): update, reset, candidate
    Tensor w_h_zr;            // (h, 2h)
    Tensor w_h_n;             // (h, h)
    Tensor bias;              // (3h)
    Linear out_hidden;        // C -> C
    Linear out_final;         // C -> C, zero-initialized
};

std::unique_ptr<TemporalModule> make_temporal_module(TemporalKind kind, int64_t channels,
                                                     const TemporalConnConfig& cfg, Rng& rng);

const char* temporal_kind_name(TemporalKind kind);

}  // namespace gfk
