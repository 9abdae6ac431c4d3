#pragma once

// Series-consistent geometric transforms, per-frame photometric jitter, and
// pairwise blends. Geometry moves images and masks together; photometric
// changes, erasure, and noise touch images only.

#include "gfk/rng.hpp"
#include "gfk/synth.hpp"

namespace gfk {

struct AugmentConfig {
    double flip_prob = 0.5;        // horizontal and vertical, drawn separately
    double rot_prob = 0.5;         // multiples of 90 degrees
    double zoom_prob = 0.3;        // random crop + nearest resize (resolution change)
    double photometric_prob = 0.2; // brightness / contrast / gamma, each per frame
    double mixup_prob = 0.1;
    double cutmix_prob = 0.1;
    double erase_prob = 0.1;
    double noise_prob = 0.2;

    double zoom_min = 0.7;
    double noise_sigma = 0.05;
    double mixup_beta = 0.2;

    static AugmentConfig disabled() {
        AugmentConfig c;
        c.flip_prob = c.rot_prob = c.zoom_prob = c.photometric_prob = 0.0;
        c.mixup_prob = c.cutmix_prob = c.erase_prob = c.noise_prob = 0.0;
        return c;
    }
};

// `donor` feeds mixup/cutmix; pass nullptr to disable both for this call.
SitsSample augment(const SitsSample& series, const SitsSample* donor, const AugmentConfig& cfg, Rng& rng);

}  // namespace gfk
