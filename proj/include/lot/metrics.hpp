#pragma once

// Box-vs-reference comparison: IoU, coverage of the reference, precision of
// the prediction and center distance normalized by the image diagonal.

#include "lot/geometry.hpp"

#include <span>
#include <string>
#include <vector>

namespace lot {

struct box_comparison {
    double iou = 0.0;
    double coverage = 0.0;
    double precision = 0.0;
    double center_distance = 0.0;
    pixel_rect pred;
    pixel_rect gt;
};

box_comparison compare(const pixel_rect &pred, const pixel_rect &gt, const image_meta &image);

struct labeled_comparison {
    std::string strategy;
    box_comparison cmp;
};

struct metric_summary {
    std::string strategy;
    std::size_t count = 0;
    double iou = 0.0;
    double coverage = 0.0;
    double precision = 0.0;
    double center_distance = 0.0;
};

// Per-strategy arithmetic means. Known strategies come first in the order
// min_max, morphological, weighted_centroid; others follow by name.
std::vector<metric_summary> summarize(std::span<const labeled_comparison> comparisons);

std::string to_csv(std::span<const metric_summary> table);

} // namespace lot
