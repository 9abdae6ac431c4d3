#include "gfk/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "gfk/log.hpp"

namespace gfk {

void ConfusionCounts::add(const ZoneMask& gt, const ZoneMask& pred) {
    if (gt.width != pred.width || gt.height != pred.height)
        throw std::invalid_argument("confusion: dimension mismatch, gt " + std::to_string(gt.width) + "x" +
                                    std::to_string(gt.height) + " vs pred " + std::to_string(pred.width) + "x" +
                                    std::to_string(pred.height));
    for (int64_t i = 0; i < gt.pixels(); ++i) {
        const uint8_t g = gt.labels[static_cast<size_t>(i)];
        const uint8_t p = pred.labels[static_cast<size_t>(i)];
        if (g >= kZoneClasses || p >= kZoneClasses) throw std::invalid_argument("confusion: label out of range");
        if (g == p) {
            tp[g] += 1;
        } else {
            fn[g] += 1;
            fp[p] += 1;
        }
    }
    total += gt.pixels();
}

double ConfusionCounts::iou(int cls) const {
    const int64_t denom = tp[static_cast<size_t>(cls)] + fn[static_cast<size_t>(cls)] + fp[static_cast<size_t>(cls)];
    if (denom == 0) return 1.0;
    return static_cast<double>(tp[static_cast<size_t>(cls)]) / static_cast<double>(denom);
}

double miou(const ZoneMask& gt, const ZoneMask& pred, const std::set<int>& classes) {
    if (classes.empty()) throw std::invalid_argument("miou: empty class set");
    ConfusionCounts counts;
    counts.add(gt, pred);
    double acc = 0.0;
    for (int cls : classes) {
        if (cls < 0 || cls >= kZoneClasses) throw std::invalid_argument("miou: class out of range");
        acc += counts.iou(cls);
    }
    return acc / static_cast<double>(classes.size());
}

namespace {

std::vector<FrontPoint> pooled_points(const FrontSet& fronts) {
    std::vector<FrontPoint> pts;
    for (const auto& line : fronts.polylines) pts.insert(pts.end(), line.begin(), line.end());
    return pts;
}

double sum_min_distances(const std::vector<FrontPoint>& from, const std::vector<FrontPoint>& to) {
    double acc = 0.0;
    for (const auto& p : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : to) {
            const double dx = static_cast<double>(p[0] - q[0]);
            const double dy = static_cast<double>(p[1] - q[1]);
            best = std::min(best, dx * dx + dy * dy);
        }
        acc += std::sqrt(best);
    }
    return acc;
}

}  // namespace

double mde_m(const FrontSet& gt, const FrontSet& pred) {
    if (gt.empty() || pred.empty())
        throw std::invalid_argument("mde: both front sets must be non-empty; empty predictions are tallied separately");
    if (std::fabs(gt.resolution_m_per_px - pred.resolution_m_per_px) > 1e-9)
        throw std::invalid_argument("mde: front sets must share a resolution");
    const auto p = pooled_points(gt);
    const auto q = pooled_points(pred);
    const double sum = sum_min_distances(p, q) + sum_min_distances(q, p);
    return sum / static_cast<double>(p.size() + q.size()) * gt.resolution_m_per_px;
}

DatasetReport dataset_report(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("dataset_report: no images");
    DatasetReport report;
    ConfusionCounts counts;
    double mde_sum = 0.0, mde_ma_sum = 0.0;
    for (const auto& pair : pairs) {
        if (pair.gt_mask == nullptr || pair.pred_mask == nullptr || pair.gt_front == nullptr)
            throw std::invalid_argument("dataset_report: incomplete pair");
        counts.add(*pair.gt_mask, *pair.pred_mask);
        report.images += 1;

        FrontSet pred_front = extract_front(*pair.pred_mask);
        if (pred_front.empty()) {
            report.empty_count += 1;
        } else if (pair.gt_front->empty()) {
            report.empty_count += 1;
            log_line(LogLevel::Info, "dataset_report: prediction has a front but the ground truth does not");
        } else {
            mde_sum += mde_m(*pair.gt_front, pred_front);
            report.mde_images += 1;
        }

        FrontSet pred_ma = extract_front(*pair.pred_mask, pair.rock_mask);
        if (!pred_ma.empty() && !pair.gt_front->empty()) {
            mde_ma_sum += mde_m(*pair.gt_front, pred_ma);
            report.mde_ma_images += 1;
        }
    }
    for (int c = 0; c < kZoneClasses; ++c) {
        report.iou[static_cast<size_t>(c)] = counts.iou(c);
        report.iou_all += counts.iou(c);
    }
    report.iou_all /= static_cast<double>(kZoneClasses);
    report.mde = report.mde_images > 0 ? mde_sum / report.mde_images : 0.0;
    report.mde_ma = report.mde_ma_images > 0 ? mde_ma_sum / report.mde_ma_images : 0.0;
    return report;
}

std::string report_csv(const std::vector<std::pair<std::string, DatasetReport>>& rows) {
    std::string out = "run,mde_m,mde_ma_m,empty_count,iou_all,iou_na,iou_rock,iou_glacier,iou_oim\n";
    char line[512];
    for (const auto& [name, r] : rows) {
        std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", name.c_str(), r.mde, r.mde_ma,
                      r.empty_count, r.iou_all, r.iou[0], r.iou[1], r.iou[2], r.iou[3]);
        out += line;
    }
    return out;
}

}  // namespace gfk
