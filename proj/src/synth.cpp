#include "gfk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gfk {
namespace {

struct FrontCurve {
    // piecewise-linear front: row of the glacier/ocean transition per column
    std::vector<double> row_at;
};

FrontCurve build_front(const SceneParams& p, double base_row, double phase) {
    FrontCurve curve;
    curve.row_at.resize(static_cast<size_t>(p.side));
    const int step = std::max(1, p.front_control_step_px);
    std::vector<double> control;
    for (int x = 0; x <= p.side; x += step)
        control.push_back(base_row + p.wiggle_amp_px * std::sin(2.0 * M_PI * x / p.wiggle_period_px + phase));
    for (int x = 0; x < p.side; ++x) {
        const int seg = x / step;
        const double frac = static_cast<double>(x % step) / static_cast<double>(step);
        const double lo = control[static_cast<size_t>(seg)];
        const double hi = control[static_cast<size_t>(std::min(seg + 1, static_cast<int>(control.size()) - 1))];
        curve.row_at[static_cast<size_t>(x)] = lo + (hi - lo) * frac;
    }
    return curve;
}

}  // namespace

double speckle_multiplier(double looks, Rng& rng) {
    return rng.gamma(looks, 1.0 / looks);
}

void speckle(std::vector<double>& image, double looks, Rng& rng) {
    if (looks <= 0.0) throw std::invalid_argument("speckle: looks must be positive");
    for (auto& v : image) v *= speckle_multiplier(looks, rng);
}

SitsSample generate(const SceneParams& p, int frames) {
    if (frames < 1) throw std::invalid_argument("generate: frames must be >= 1");
    if (p.side < 16) throw std::invalid_argument("generate: side too small");
    if (p.resolution_m_per_px <= 0.0) throw std::invalid_argument("generate: resolution must be positive");
    for (double prob : {p.melange_prob, p.snow_prob, p.calving_prob})
        if (prob < 0.0 || prob > 1.0) throw std::invalid_argument("generate: probabilities must lie in [0,1]");
    if (p.speckle_looks <= 0.0) throw std::invalid_argument("generate: speckle_looks must be positive");

    // independent streams so confounder settings never move the geometry
    Rng geometry_rng(mix_seed(p.seed, 0x67656f6dULL));
    Rng appearance_rng(mix_seed(p.seed, 0x61707065ULL));

    SitsSample sample;
    sample.side = p.side;
    sample.resolution_m_per_px = p.resolution_m_per_px;
    sample.glacier_id = "synth-" + std::to_string(p.seed);

    const int band = p.na_band_px;
    const int rock_left = p.rock_margin_min_px +
                          static_cast<int>(geometry_rng.uniform_int(p.rock_margin_max_px - p.rock_margin_min_px + 1));
    const int rock_right = p.rock_margin_min_px +
                           static_cast<int>(geometry_rng.uniform_int(p.rock_margin_max_px - p.rock_margin_min_px + 1));
    const double base_row0 = p.side * geometry_rng.uniform(p.front_start_frac_min, p.front_start_frac_max);
    const double phase = geometry_rng.uniform(0.0, 2.0 * M_PI);

    std::vector<double> dates(static_cast<size_t>(frames));
    if (!p.dates.empty()) {
        if (static_cast<int>(p.dates.size()) < frames)
            throw std::invalid_argument("generate: explicit date schedule shorter than the series");
        for (int t = 0; t < frames; ++t) dates[static_cast<size_t>(t)] = p.dates[static_cast<size_t>(t)];
        for (int t = 1; t < frames; ++t)
            if (dates[static_cast<size_t>(t)] <= dates[static_cast<size_t>(t - 1)])
                throw std::invalid_argument("generate: dates must be strictly increasing");
    } else {
        dates[0] = 0.0;
        for (int t = 1; t < frames; ++t)
            dates[static_cast<size_t>(t)] = dates[static_cast<size_t>(t - 1)] + 6.0 + static_cast<double>(geometry_rng.uniform_int(25));
    }

    const double retreat_px = p.retreat_m_per_frame / p.resolution_m_per_px;
    double base_row = base_row0;
    for (int t = 0; t < frames; ++t) {
        if (t > 0) {
            base_row -= retreat_px;
            if (geometry_rng.bernoulli(p.calving_prob))
                base_row -= p.calving_magnitude_m / p.resolution_m_per_px * geometry_rng.uniform(0.5, 1.0);
        }
        const FrontCurve curve = build_front(p, base_row, phase);
        for (double row : curve.row_at)
            if (row < band + 2 || row > p.side - band - 2)
                throw std::invalid_argument("generate: front left the usable image area; shorten the series or slow the trajectory");

        SitsFrame frame;
        frame.date = dates[static_cast<size_t>(t)];
        frame.mask = ZoneMask(p.side, p.side, p.resolution_m_per_px);
        frame.image.assign(static_cast<size_t>(p.side) * p.side, 0.0);
        const bool melange = appearance_rng.bernoulli(p.melange_prob);
        const double melange_extent_px =
            (p.melange_extent_m / p.resolution_m_per_px) * appearance_rng.uniform(0.5, 1.0);
        const bool snow = appearance_rng.bernoulli(p.snow_prob);

        for (int y = 0; y < p.side; ++y) {
            for (int x = 0; x < p.side; ++x) {
                uint8_t cls;
                if (y < band || y >= p.side - band || x < band || x >= p.side - band) {
                    cls = kZoneNa;
                } else if (x < band + rock_left || x >= p.side - band - rock_right) {
                    cls = kZoneRock;
                } else if (static_cast<double>(y) < curve.row_at[static_cast<size_t>(x)]) {
                    cls = kZoneGlacier;
                } else {
                    cls = kZoneOim;
                }
                frame.mask.at(y, x) = cls;

                double v = 0.0;
                switch (cls) {
                    case kZoneNa: v = p.mean_na; break;
                    case kZoneRock: v = snow ? p.mean_rock + (p.mean_glacier - p.mean_rock) * p.snow_intensity : p.mean_rock; break;
                    case kZoneGlacier: v = p.mean_glacier; break;
                    default: {
                        v = p.mean_ocean;
                        if (melange && static_cast<double>(y) < curve.row_at[static_cast<size_t>(x)] + melange_extent_px)
                            v = p.mean_ocean + (p.mean_glacier - p.mean_ocean) * p.melange_intensity;
                        break;
                    }
                }
                frame.image[static_cast<size_t>(y) * p.side + x] = v;
            }
        }
        speckle(frame.image, p.speckle_looks, appearance_rng);
        for (auto& v : frame.image) v = std::clamp(v, 0.0, 1.0);
        sample.frames.push_back(std::move(frame));
    }
    return sample;
}

}  // namespace gfk
