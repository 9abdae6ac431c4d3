#pragma once

// Loss, optimizer, plateau scheduler, training loop with checkpoint
// selection on validation front distance, and softmax-probability ensembling.

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfk/augment.hpp"
#include "gfk/metrics.hpp"
#include "gfk/network.hpp"
#include "gfk/synth.hpp"

namespace gfk {

struct TrainConfig {
    double lr = 0.01;
    double plateau_factor = 0.66;
    int plateau_patience = 10;
    int epochs = 80;
    int series_per_epoch = 5000;
    int batch_series = 32;
    double label_smoothing = 0.1;
    AugmentConfig augment;
    uint64_t seed = 0;

    void validate() const {
        if (lr <= 0.0) throw std::invalid_argument("train config: lr must be positive");
        if (plateau_factor <= 0.0 || plateau_factor > 1.0)
            throw std::invalid_argument("train config: plateau factor must lie in (0,1]");
        if (epochs < 1 || series_per_epoch < 1 || batch_series < 1)
            throw std::invalid_argument("train config: epochs, series_per_epoch, batch_series must be positive");
        if (label_smoothing < 0.0 || label_smoothing >= 1.0)
            throw std::invalid_argument("train config: label smoothing must lie in [0,1)");
    }
};

// Smoothed cross-entropy plus soft dice over the full-context logits.
// logits (N,T,K,H,W); targets row-major over (series, frame).
Tensor segmentation_loss(const Tensor& logits, const std::vector<const ZoneMask*>& targets, double label_smoothing);

class PlateauScheduler {
public:
    PlateauScheduler(double lr0, double factor, int patience)
        : lr0_(lr0), factor_(factor), patience_(patience) {}

    double lr() const { return lr0_ * std::pow(factor_, static_cast<double>(reductions_)); }
    int reductions() const { return reductions_; }

    // Lower is better; `patience` consecutive non-improving epochs reduce.
    void observe(double monitored) {
        if (monitored < best_) {
            best_ = monitored;
            wait_ = 0;
            return;
        }
        if (++wait_ >= patience_) {
            ++reductions_;
            wait_ = 0;
        }
    }

private:
    double lr0_;
    double factor_;
    int patience_;
    int wait_ = 0;
    int reductions_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

struct SgdOptimizer {
    std::vector<Tensor> params;
    void step(double lr) {
        for (auto& p : params) {
            if (!p.has_grad()) continue;
            auto data = p.mutable_data();
            auto grad = p.grad();
            for (size_t i = 0; i < data.size(); ++i) data[i] -= lr * grad[i];
        }
    }
};

struct TrainDivergence : std::runtime_error {
    explicit TrainDivergence(const std::string& msg) : std::runtime_error(msg) {}
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_mde_m = 0.0;  // monitored score: empty fronts carry a diagonal penalty
    double val_miou = 0.0;
    double lr = 0.0;
};

struct RunResult {
    std::vector<EpochStats> curves;
    int best_epoch = -1;
    double best_val_mde = std::numeric_limits<double>::infinity();
    std::map<std::string, std::vector<double>> best_state;
    std::map<std::string, std::vector<double>> final_state;
};

struct ValScore {
    double mde_monitored = 0.0;
    double miou = 0.0;
};

ValScore validate_model(Model& model, const std::vector<SitsSample>& val_set);

// Writes config-independent run artifacts (curves.csv, best.ckpt, final.ckpt)
// into run_dir when it is non-empty.
RunResult train_model(Model& model, const std::vector<SitsSample>& train_set,
                      const std::vector<SitsSample>& val_set, const TrainConfig& cfg,
                      const std::string& run_dir = "");

// Test-time reporting through crop, front extraction, and pooled metrics.
// Rock masks for the MA variant come from each series' ground truth.
DatasetReport evaluate_model(Model& model, const std::vector<SitsSample>& test_set);
DatasetReport evaluate_ensemble(std::vector<Model*> models, const std::vector<SitsSample>& test_set);

// Mean of member softmax probabilities, re-expressed as log-probabilities.
Tensor ensemble_logits(const std::vector<Model*>& models, const Tensor& sits, const DateMatrix& dates);

// Frame logits (K,H,W) -> hard labels.
ZoneMask mask_from_logits(std::span<const double> frame_logits, int classes, int height, int width, double resolution);
ZoneMask crop_mask(const ZoneMask& mask, int crop);

std::string curves_csv(const std::vector<EpochStats>& curves);

// Splits every T-frame series into T single-frame series (mono-temporal sets).
std::vector<SitsSample> explode_frames(const std::vector<SitsSample>& series_set);

}  // namespace gfk
