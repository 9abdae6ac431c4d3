#pragma once

// Procedural glacier scenes: an NA border band, rock flanks, a glacier tongue
// over ocean, and a piecewise-linear front that drifts and calves between
// frames. Ice-melange and snow confounders change only the appearance; the
// ground-truth masks depend on geometry alone.

#include <string>
#include <vector>

#include "gfk/frontline.hpp"
#include "gfk/rng.hpp"

namespace gfk {

struct SceneParams {
    int side = 128;
    double resolution_m_per_px = 100.0;

    // geometry
    int na_band_px = 4;
    int rock_margin_min_px = 8;
    int rock_margin_max_px = 16;
    double front_start_frac_min = 0.45;  // fraction of the side where the front begins
    double front_start_frac_max = 0.60;
    double wiggle_amp_px = 3.0;
    double wiggle_period_px = 48.0;
    int front_control_step_px = 16;      // control-point spacing of the piecewise-linear front

    // trajectory (positive retreat moves the front toward the glacier)
    double retreat_m_per_frame = 120.0;
    double calving_prob = 0.1;
    double calving_magnitude_m = 500.0;

    // appearance confounders
    double melange_prob = 0.0;
    double melange_intensity = 1.0;
    double melange_extent_m = 2500.0;
    double snow_prob = 0.0;
    double snow_intensity = 1.0;

    // class intensities and speckle
    double mean_na = 0.02;
    double mean_rock = 0.35;
    double mean_glacier = 0.68;
    double mean_ocean = 0.15;
    double speckle_looks = 4.0;

    std::vector<double> dates;  // day offsets; empty draws gaps of 6..30 days
    uint64_t seed = 0;
};

struct SitsFrame {
    std::vector<double> image;  // row-major, [0,1]
    ZoneMask mask;
    double date = 0.0;  // day offset from the first frame of the series
};

struct SitsSample {
    int side = 0;
    double resolution_m_per_px = 1.0;
    std::string glacier_id;
    std::vector<SitsFrame> frames;
};

// Deterministic in (params, params.seed).
SitsSample generate(const SceneParams& params, int frames);

// Multiplicative speckle: unit-mean gamma with variance 1/looks.
void speckle(std::vector<double>& image, double looks, Rng& rng);
double speckle_multiplier(double looks, Rng& rng);

}  // namespace gfk
