#include "lot/metrics.hpp"

#include "lot/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>

namespace lot {

namespace {

void check_rect(const pixel_rect &r, const image_meta &image, const char *which) {
    constexpr double eps = 1e-9;
    const bool finite = std::isfinite(r.x1) && std::isfinite(r.y1) && std::isfinite(r.x2) && std::isfinite(r.y2);
    const bool inside = r.x1 >= -eps && r.y1 >= -eps && r.x2 <= static_cast<double>(image.width_px) + eps &&
                        r.y2 <= static_cast<double>(image.height_px) + eps;
    if (!finite || !inside || r.x2 < r.x1 || r.y2 < r.y1) {
        throw invariant_error(std::string("box comparison: ") + which + " box is invalid or outside the image");
    }
    if (!(r.area() > 0.0)) throw invariant_error(std::string("box comparison: zero-area ") + which + " box");
}

} // namespace

box_comparison compare(const pixel_rect &pred, const pixel_rect &gt, const image_meta &image) {
    check_rect(pred, image, "pred");
    check_rect(gt, image, "gt");
    const double iw = std::max(0.0, std::min(pred.x2, gt.x2) - std::max(pred.x1, gt.x1));
    const double ih = std::max(0.0, std::min(pred.y2, gt.y2) - std::max(pred.y1, gt.y1));
    const double inter = iw * ih;
    const double uni = pred.area() + gt.area() - inter;

    box_comparison out;
    out.pred = pred;
    out.gt = gt;
    out.iou = inter / uni;
    out.coverage = inter / gt.area();
    out.precision = inter / pred.area();
    const double dx = 0.5 * (pred.x1 + pred.x2) - 0.5 * (gt.x1 + gt.x2);
    const double dy = 0.5 * (pred.y1 + pred.y2) - 0.5 * (gt.y1 + gt.y2);
    out.center_distance = std::hypot(dx, dy) / std::hypot(static_cast<double>(image.width_px),
                                                          static_cast<double>(image.height_px));
    return out;
}

std::vector<metric_summary> summarize(std::span<const labeled_comparison> comparisons) {
    std::map<std::string, metric_summary> groups;
    for (const labeled_comparison &c : comparisons) {
        metric_summary &g = groups[c.strategy];
        g.strategy = c.strategy;
        ++g.count;
        g.iou += c.cmp.iou;
        g.coverage += c.cmp.coverage;
        g.precision += c.cmp.precision;
        g.center_distance += c.cmp.center_distance;
    }
    std::vector<metric_summary> out;
    auto emit = [&out](metric_summary g) {
        const auto n = static_cast<double>(g.count);
        g.iou /= n;
        g.coverage /= n;
        g.precision /= n;
        g.center_distance /= n;
        out.push_back(std::move(g));
    };
    constexpr std::array table_order = {"min_max", "morphological", "weighted_centroid"};
    for (const char *name : table_order) {
        if (auto it = groups.find(name); it != groups.end()) {
            emit(it->second);
            groups.erase(it);
        }
    }
    for (auto &[name, g] : groups) emit(g);
    return out;
}

std::string to_csv(std::span<const metric_summary> table) {
    std::string out = "method,count,iou,coverage,precision,center_distance\n";
    char buf[256];
    for (const metric_summary &m : table) {
        std::snprintf(buf, sizeof buf, "%s,%zu,%.9g,%.9g,%.9g,%.9g\n", m.strategy.c_str(), m.count, m.iou,
                      m.coverage, m.precision, m.center_distance);
        out += buf;
    }
    return out;
}

} // namespace lot
