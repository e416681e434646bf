#pragma once

#include <optional>
#include <string>
#include <vector>

#include "seedsr/grid.hpp"

namespace seedsr {

struct ConfusionCounts {
    int64_t tp = 0, tn = 0, fp = 0, fn = 0;
    int64_t total() const { return tp + tn + fp + fn; }
};

ConfusionCounts confusion(const ByteGrid& pred, const ByteGrid& gt);

// Per-image TP/(TP+FP+FN); both masks empty counts as 1 (correctly predicted
// "no fields").
double iou_semantic_image(const ByteGrid& pred, const ByteGrid& gt);
double iou_semantic(const std::vector<std::pair<const ByteGrid*, const ByteGrid*>>& pairs);

// Which area normalizes the "> t percent overlap" qualification.
enum class OverlapBasis { pred, gt };

// For each ground-truth instance: union the predicted instances whose overlap
// exceeds t percent of the basis area, then score IoU of that union against
// the instance; unweighted mean over all ground-truth instances in the set.
// absent when the set has no ground-truth instances.
std::optional<double> iou_instance(
    const std::vector<std::pair<const IntGrid*, const IntGrid*>>& pred_gt_pairs,
    double t_overlap_pct = 50.0, OverlapBasis basis = OverlapBasis::pred);

struct PixelMetrics {
    double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
};

// Precision with zero predicted positives is 0 for that image; recall with
// zero actual positives is 0; f1 is 0 when precision+recall is 0.
PixelMetrics pixel_metrics_image(const ByteGrid& pred, const ByteGrid& gt);
PixelMetrics pixel_metrics(const std::vector<std::pair<const ByteGrid*, const ByteGrid*>>& pairs);

struct EvalPair {
    std::string name;
    ByteGrid pred_mask, gt_mask;
    IntGrid pred_instances, gt_instances;
};

struct MetricsReport {
    std::optional<double> miou_i;
    double miou_s = 0.0;
    double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
    int n_images = 0;
    int n_skipped = 0;
    double overlap_threshold = 50.0;
    std::string overlap_basis = "pred";
    struct PerImage {
        std::string name;
        double iou_s;
        PixelMetrics px;
    };
    std::vector<PerImage> per_image;
};

MetricsReport compute_report(const std::vector<EvalPair>& pairs, double t_overlap_pct,
                             OverlapBasis basis);

// Deterministic JSON (stable key order, run id derived from the config echo).
std::string report_to_json(const MetricsReport& rep, const std::string& config_echo);

}  // namespace seedsr
