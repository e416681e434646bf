#include "seedsr/metrics.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "seedsr/errors.hpp"
#include "seedsr/rng.hpp"

using nlohmann::ordered_json;

namespace seedsr {

ConfusionCounts confusion(const ByteGrid& pred, const ByteGrid& gt) {
    if (!pred.same_shape(gt)) {
        throw ShapeError("confusion: shape mismatch " + std::to_string(pred.h) + "x" +
                         std::to_string(pred.w) + " vs " + std::to_string(gt.h) + "x" +
                         std::to_string(gt.w));
    }
    ConfusionCounts c;
    for (size_t i = 0; i < pred.v.size(); ++i) {
        const bool p = pred.v[i] != 0, g = gt.v[i] != 0;
        if (p && g) ++c.tp;
        else if (p && !g) ++c.fp;
        else if (!p && g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double iou_semantic_image(const ByteGrid& pred, const ByteGrid& gt) {
    const ConfusionCounts c = confusion(pred, gt);
    const int64_t denom = c.tp + c.fp + c.fn;
    if (denom == 0) return 1.0;
    return static_cast<double>(c.tp) / static_cast<double>(denom);
}

double iou_semantic(const std::vector<std::pair<const ByteGrid*, const ByteGrid*>>& pairs) {
    if (pairs.empty()) return 0.0;
    double s = 0.0;
    for (const auto& [p, g] : pairs) s += iou_semantic_image(*p, *g);
    return s / static_cast<double>(pairs.size());
}

std::optional<double> iou_instance(
    const std::vector<std::pair<const IntGrid*, const IntGrid*>>& pred_gt_pairs,
    double t_overlap_pct, OverlapBasis basis) {
    if (t_overlap_pct < 0.0 || t_overlap_pct >= 100.0) {
        throw ConfigError("iou_instance: overlap threshold must be in [0,100)");
    }
    double sum = 0.0;
    int64_t m_total = 0;
    for (const auto& [pred, gt] : pred_gt_pairs) {
        if (!pred->same_shape(*gt)) {
            throw ShapeError("iou_instance: instance map shape mismatch");
        }
        const int np = pred->max_id(), ng = gt->max_id();
        if (ng == 0) continue;
        // areas and pairwise intersections
        std::vector<int64_t> area_p(static_cast<size_t>(np + 1), 0);
        std::vector<int64_t> area_g(static_cast<size_t>(ng + 1), 0);
        std::map<std::pair<int, int>, int64_t> inter;
        for (size_t i = 0; i < pred->v.size(); ++i) {
            const int p = pred->v[i], g = gt->v[i];
            if (p > 0) ++area_p[static_cast<size_t>(p)];
            if (g > 0) ++area_g[static_cast<size_t>(g)];
            if (p > 0 && g > 0) ++inter[{p, g}];
        }
        for (int gi = 1; gi <= ng; ++gi) {
            ++m_total;
            // union pixels of qualifying predicted instances
            std::set<int> qual;
            for (int pi = 1; pi <= np; ++pi) {
                auto it = inter.find({pi, gi});
                if (it == inter.end()) continue;
                const int64_t base =
                    basis == OverlapBasis::pred ? area_p[static_cast<size_t>(pi)]
                                                : area_g[static_cast<size_t>(gi)];
                if (base == 0) continue;
                if (100.0 * static_cast<double>(it->second) / static_cast<double>(base) >
                    t_overlap_pct) {
                    qual.insert(pi);
                }
            }
            if (qual.empty()) continue;  // score 0 for this instance
            int64_t in = 0, un = 0;
            for (size_t i = 0; i < pred->v.size(); ++i) {
                const bool inq = pred->v[i] > 0 && qual.count(pred->v[i]) > 0;
                const bool ing = gt->v[i] == gi;
                if (inq && ing) ++in;
                if (inq || ing) ++un;
            }
            sum += static_cast<double>(in) / static_cast<double>(un);
        }
    }
    if (m_total == 0) return std::nullopt;
    return sum / static_cast<double>(m_total);
}

PixelMetrics pixel_metrics_image(const ByteGrid& pred, const ByteGrid& gt) {
    const ConfusionCounts c = confusion(pred, gt);
    PixelMetrics m;
    m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    m.precision = (c.tp + c.fp) == 0 ? 0.0
                                     : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    m.recall = (c.tp + c.fn) == 0 ? 0.0
                                  : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    m.f1 = (m.precision + m.recall) == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

PixelMetrics pixel_metrics(const std::vector<std::pair<const ByteGrid*, const ByteGrid*>>& pairs) {
    PixelMetrics acc;
    if (pairs.empty()) return acc;
    for (const auto& [p, g] : pairs) {
        const PixelMetrics m = pixel_metrics_image(*p, *g);
        acc.accuracy += m.accuracy;
        acc.precision += m.precision;
        acc.recall += m.recall;
        acc.f1 += m.f1;
    }
    const double n = static_cast<double>(pairs.size());
    acc.accuracy /= n;
    acc.precision /= n;
    acc.recall /= n;
    acc.f1 /= n;
    return acc;
}

MetricsReport compute_report(const std::vector<EvalPair>& pairs, double t_overlap_pct,
                             OverlapBasis basis) {
    MetricsReport rep;
    rep.overlap_threshold = t_overlap_pct;
    rep.overlap_basis = basis == OverlapBasis::pred ? "pred" : "gt";
    std::vector<std::pair<const ByteGrid*, const ByteGrid*>> mask_pairs;
    std::vector<std::pair<const IntGrid*, const IntGrid*>> inst_pairs;
    for (const auto& p : pairs) {
        if (!p.pred_mask.same_shape(p.gt_mask) || !p.pred_instances.same_shape(p.gt_instances)) {
            ++rep.n_skipped;
            continue;
        }
        mask_pairs.push_back({&p.pred_mask, &p.gt_mask});
        inst_pairs.push_back({&p.pred_instances, &p.gt_instances});
        MetricsReport::PerImage pi;
        pi.name = p.name;
        pi.iou_s = iou_semantic_image(p.pred_mask, p.gt_mask);
        pi.px = pixel_metrics_image(p.pred_mask, p.gt_mask);
        rep.per_image.push_back(std::move(pi));
    }
    rep.n_images = static_cast<int>(mask_pairs.size());
    if (!mask_pairs.empty()) {
        rep.miou_s = iou_semantic(mask_pairs);
        const PixelMetrics m = pixel_metrics(mask_pairs);
        rep.accuracy = m.accuracy;
        rep.precision = m.precision;
        rep.recall = m.recall;
        rep.f1 = m.f1;
        rep.miou_i = iou_instance(inst_pairs, t_overlap_pct, basis);
    }
    return rep;
}

std::string report_to_json(const MetricsReport& rep, const std::string& config_echo) {
    // run id: stable hex digest of the config echo
    uint64_t h1 = 0x5eedull, h2 = 0xd1f5ull;
    for (char c : config_echo) {
        h1 = mix64(h1 ^ static_cast<unsigned char>(c));
        h2 = mix64(h2 + static_cast<unsigned char>(c));
    }
    std::ostringstream run_id;
    run_id << std::hex << h1 << h2;

    ordered_json j;
    j["run_id"] = run_id.str();
    j["config"] = config_echo;
    j["n_images"] = rep.n_images;
    j["n_skipped"] = rep.n_skipped;
    j["overlap_threshold"] = rep.overlap_threshold;
    j["overlap_basis"] = rep.overlap_basis;
    if (rep.miou_i.has_value()) {
        j["miou_i"] = *rep.miou_i;
    } else {
        j["miou_i"] = nullptr;
    }
    j["miou_s"] = rep.miou_s;
    j["accuracy"] = rep.accuracy;
    j["precision"] = rep.precision;
    j["recall"] = rep.recall;
    j["f1"] = rep.f1;
    ordered_json per = ordered_json::array();
    for (const auto& pi : rep.per_image) {
        per.push_back({{"name", pi.name},
                       {"iou_s", pi.iou_s},
                       {"accuracy", pi.px.accuracy},
                       {"precision", pi.px.precision},
                       {"recall", pi.px.recall},
                       {"f1", pi.px.f1}});
    }
    j["per_image"] = per;
    return j.dump(2) + "\n";
}

}  // namespace seedsr
