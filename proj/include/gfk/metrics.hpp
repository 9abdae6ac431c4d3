#pragma once

// Benchmark metrics: intersection-over-union on zone masks and the symmetric
// mean distance error between front polylines, plus the missing-front tally.

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gfk/frontline.hpp"

namespace gfk {

struct ConfusionCounts {
    std::array<int64_t, kZoneClasses> tp{}, fp{}, fn{};
    int64_t total = 0;

    void add(const ZoneMask& gt, const ZoneMask& pred);
    // A class absent from both sides counts as IoU 1.
    double iou(int cls) const;
};

double miou(const ZoneMask& gt, const ZoneMask& pred, const std::set<int>& classes = {0, 1, 2, 3});

// Symmetric mean nearest-point distance in meters; points pool across all
// polylines of each set. Both sets must be non-empty and share a resolution.
double mde_m(const FrontSet& gt, const FrontSet& pred);

struct EvalPair {
    const ZoneMask* gt_mask = nullptr;
    const ZoneMask* pred_mask = nullptr;
    const FrontSet* gt_front = nullptr;
    const ZoneMask* rock_mask = nullptr;  // optional; enables the rock-masked variant
};

struct DatasetReport {
    double mde = 0.0;          // meters, averaged over images with a detected front
    double mde_ma = 0.0;       // same, with the static rock mask applied before extraction
    int empty_count = 0;       // images whose prediction yields no front
    std::array<double, kZoneClasses> iou{};
    double iou_all = 0.0;
    int images = 0;
    int mde_images = 0;
    int mde_ma_images = 0;
};

DatasetReport dataset_report(const std::vector<EvalPair>& pairs);

// CSV with the fixed column set; one row per labeled report.
std::string report_csv(const std::vector<std::pair<std::string, DatasetReport>>& rows);

}  // namespace gfk
