#include "gfk/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gfk {
namespace {

// Applies an output<-input coordinate map to one frame (image and mask).
template <typename MapFn>
void remap_frame(SitsFrame& frame, int side, MapFn&& src_of) {
    std::vector<double> image(frame.image.size());
    std::vector<uint8_t> labels(frame.mask.labels.size());
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            auto [sx, sy] = src_of(x, y);
            image[static_cast<size_t>(y) * side + x] = frame.image[static_cast<size_t>(sy) * side + sx];
            labels[static_cast<size_t>(y) * side + x] = frame.mask.labels[static_cast<size_t>(sy) * side + sx];
        }
    }
    frame.image = std::move(image);
    frame.mask.labels = std::move(labels);
}

double beta_draw(double alpha, Rng& rng) {
    const double a = rng.gamma(alpha, 1.0);
    const double b = rng.gamma(alpha, 1.0);
    return a / (a + b);
}

}  // namespace

SitsSample augment(const SitsSample& series, const SitsSample* donor, const AugmentConfig& cfg, Rng& rng) {
    if (series.frames.empty()) throw std::invalid_argument("augment: empty series");
    const int side = series.side;
    SitsSample out = series;

    // ---- series-consistent geometry ------------------------------------
    const bool hflip = rng.bernoulli(cfg.flip_prob);
    const bool vflip = rng.bernoulli(cfg.flip_prob);
    const int rot_quarters = rng.bernoulli(cfg.rot_prob) ? 1 + static_cast<int>(rng.uniform_int(3)) : 0;
    const bool zoom = rng.bernoulli(cfg.zoom_prob);
    double zoom_scale = 1.0;
    int zoom_x0 = 0, zoom_y0 = 0, zoom_side = side;
    if (zoom) {
        zoom_scale = rng.uniform(cfg.zoom_min, 1.0);
        zoom_side = std::max(8, static_cast<int>(std::lround(side * zoom_scale)));
        zoom_x0 = static_cast<int>(rng.uniform_int(side - zoom_side + 1));
        zoom_y0 = static_cast<int>(rng.uniform_int(side - zoom_side + 1));
    }

    for (auto& frame : out.frames) {
        if (hflip) remap_frame(frame, side, [side](int x, int y) { return std::pair{side - 1 - x, y}; });
        if (vflip) remap_frame(frame, side, [side](int x, int y) { return std::pair{x, side - 1 - y}; });
        for (int r = 0; r < rot_quarters; ++r)
            remap_frame(frame, side, [side](int x, int y) { return std::pair{y, side - 1 - x}; });
        if (zoom) {
            remap_frame(frame, side, [&](int x, int y) {
                const int sx = zoom_x0 + std::min<int>(zoom_side - 1, static_cast<int>(x * zoom_side / side));
                const int sy = zoom_y0 + std::min<int>(zoom_side - 1, static_cast<int>(y * zoom_side / side));
                return std::pair{sx, sy};
            });
        }
    }
    if (zoom) {
        const double ratio = static_cast<double>(zoom_side) / static_cast<double>(side);
        out.resolution_m_per_px = series.resolution_m_per_px * ratio;
        for (auto& frame : out.frames) frame.mask.resolution_m_per_px = out.resolution_m_per_px;
    }

    // ---- pairwise blends ------------------------------------------------
    if (donor != nullptr && donor->side == side && donor->frames.size() == out.frames.size()) {
        if (rng.bernoulli(cfg.mixup_prob)) {
            const double lambda = beta_draw(cfg.mixup_beta, rng);
            for (size_t t = 0; t < out.frames.size(); ++t) {
                auto& img = out.frames[t].image;
                const auto& other = donor->frames[t].image;
                for (size_t i = 0; i < img.size(); ++i) img[i] = lambda * img[i] + (1.0 - lambda) * other[i];
                // hard labels follow the dominant blend side
                if (lambda < 0.5) out.frames[t].mask.labels = donor->frames[t].mask.labels;
            }
        }
        if (rng.bernoulli(cfg.cutmix_prob)) {
            const int bw = static_cast<int>(std::lround(side * rng.uniform(0.2, 0.6)));
            const int bh = static_cast<int>(std::lround(side * rng.uniform(0.2, 0.6)));
            const int bx = static_cast<int>(rng.uniform_int(side - bw + 1));
            const int by = static_cast<int>(rng.uniform_int(side - bh + 1));
            for (size_t t = 0; t < out.frames.size(); ++t) {
                for (int y = by; y < by + bh; ++y) {
                    for (int x = bx; x < bx + bw; ++x) {
                        const size_t i = static_cast<size_t>(y) * side + x;
                        out.frames[t].image[i] = donor->frames[t].image[i];
                        out.frames[t].mask.labels[i] = donor->frames[t].mask.labels[i];
                    }
                }
            }
        }
    }

    // ---- per-frame image-only transforms --------------------------------
    for (auto& frame : out.frames) {
        if (rng.bernoulli(cfg.photometric_prob)) {
            const double delta = rng.uniform(-0.2, 0.2);
            for (auto& v : frame.image) v = std::clamp(v + delta, 0.0, 1.0);
        }
        if (rng.bernoulli(cfg.photometric_prob)) {
            const double factor = rng.uniform(0.8, 1.25);
            double mean = 0.0;
            for (double v : frame.image) mean += v;
            mean /= static_cast<double>(frame.image.size());
            for (auto& v : frame.image) v = std::clamp(mean + (v - mean) * factor, 0.0, 1.0);
        }
        if (rng.bernoulli(cfg.photometric_prob)) {
            const double gamma = rng.uniform(0.8, 1.25);
            for (auto& v : frame.image) v = std::pow(std::clamp(v, 0.0, 1.0), gamma);
        }
        if (rng.bernoulli(cfg.erase_prob)) {
            const int bw = std::max(1, static_cast<int>(std::lround(side * rng.uniform(0.05, 0.25))));
            const int bh = std::max(1, static_cast<int>(std::lround(side * rng.uniform(0.05, 0.25))));
            const int bx = static_cast<int>(rng.uniform_int(side - bw + 1));
            const int by = static_cast<int>(rng.uniform_int(side - bh + 1));
            for (int y = by; y < by + bh; ++y)
                for (int x = bx; x < bx + bw; ++x) frame.image[static_cast<size_t>(y) * side + x] = 0.5;
        }
        if (rng.bernoulli(cfg.noise_prob)) {
            for (auto& v : frame.image) v = std::clamp(v + rng.normal(0.0, cfg.noise_sigma), 0.0, 1.0);
        }
    }
    return out;
}

}  // namespace gfk
