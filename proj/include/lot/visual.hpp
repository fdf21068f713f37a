#pragma once

// Object-conditioned visual relevance, attention-sink filtering and bounding
// box extraction over the visual token grid.

#include "lot/dump.hpp"
#include "lot/geometry.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lot {

// Defaults: txt = upper half [L/2, L), vis = [L/4, 3L/4) widened to at least
// one layer, sink = vis.
layer_ranges default_layer_ranges(index_t n_layers);

// One (layer, head) block of attention rows restricted to a column set.
// values is row-major [rows, cols].
struct attention_block {
    index_t layer = 0;
    index_t head = 0;
    index_t rows = 0;
    index_t cols = 0;
    std::vector<float> values;
};

// A^{l,k}[object_tokens, V] for every l in layers and every head.
std::vector<attention_block> object_to_visual(const introspection_dump &dump, std::span<const index_t> object_tokens,
                                              std::span<const index_t> layers);

// Uniform mean over every row of every block: 1 / (|T_obj| |L_vis| K) scaling.
std::vector<double> aggregate_visual(std::span<const attention_block> blocks);

// Hidden dimensions whose |H[bos, m]| / rms(H[bos, :]) exceeds kappa in a
// strict majority of `layers`. A dump-provided sink_dims list short-circuits.
std::vector<index_t> detect_sink_dims(const introspection_dump &dump, std::optional<index_t> bos_index,
                                      std::span<const index_t> layers, double kappa = 5.0);

// Per visual token: mean over layers of max_{m in sink_dims} |H[v, m]| / rms(H[v, :]).
std::vector<double> sink_scores(const introspection_dump &dump, std::span<const index_t> sink_dims,
                                std::span<const index_t> layers);

// q-th percentile, q in [0, 100], linear interpolation between order statistics.
double percentile(std::span<const double> values, double q);

struct relevance_map {
    index_t rows = 0; // grid_h
    index_t cols = 0; // grid_w
    std::vector<double> values;

    double at(index_t h, index_t w) const { return values[static_cast<std::size_t>(h * cols + w)]; }
};

struct visual_relevance {
    std::vector<double> a_vis; // after filtering
    relevance_map grid;
};

struct sink_report {
    std::vector<index_t> sink_dims;
    std::vector<double> scores;
    double tau = 0.0;
    std::vector<bool> mask; // true = filtered
};

struct sink_filter_result {
    visual_relevance relevance;
    double tau = 0.0;
    std::vector<bool> mask;
};

// Zeroes a_vis wherever s_sink > tau, tau = percentile(s_sink, q), and
// reshapes the result row-major onto the [grid_h, grid_w] grid.
sink_filter_result filter_sinks(std::span<const double> a_vis, std::span<const double> s_sink, double q,
                                index_t grid_h, index_t grid_w);

relevance_map reshape(std::span<const double> a_vis, index_t grid_h, index_t grid_w);

enum class bbox_strategy { weighted_centroid, min_max, morphological };

std::string_view to_string(bbox_strategy s);
bbox_strategy parse_bbox_strategy(std::string_view name);

// Box in grid coordinates where cell (h, w) has its center at (x=w, y=h).
struct grid_box {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    bool contains_cell(index_t h, index_t w) const {
        return x1 <= static_cast<double>(w) && static_cast<double>(w) <= x2 && y1 <= static_cast<double>(h) &&
               static_cast<double>(h) <= y2;
    }
};

struct bbox {
    grid_box grid;
    pixel_rect px;
    bbox_strategy strategy = bbox_strategy::weighted_centroid;
};

// Clamps to the cell-center range, enforces a one-cell minimum and maps to
// pixels with a half-cell margin on each side, so a one-cell box covers
// exactly that cell's pixels.
bbox finalize_box(grid_box raw, index_t grid_h, index_t grid_w, const image_meta &image, bbox_strategy strategy);

struct weighted_moments {
    double cx = 0.0;
    double cy = 0.0;
    double sx = 0.0;
    double sy = 0.0;
};

// First and second moments of the normalized map. Computed from the row and
// column marginals.
weighted_moments moments(const relevance_map &map);

bbox bbox_weighted_centroid(const relevance_map &map, const image_meta &image, double beta = 2.0);

bbox bbox_min_max(const relevance_map &map, const image_meta &image);

struct morph_options {
    double threshold = 0.1;
    index_t kernel = 3; // odd side of the square structuring element
};

// Closing (dilation then erosion) of a binary grid, evaluated as if the grid
// were embedded in an infinite zero background. Row-major uint8 0/1.
std::vector<std::uint8_t> morphological_close(std::span<const std::uint8_t> mask, index_t rows, index_t cols,
                                              index_t kernel);

// 4-connected labels, 0 = background, components numbered from 1 in
// raster order of their first cell.
std::vector<index_t> label_components(std::span<const std::uint8_t> mask, index_t rows, index_t cols);

bbox bbox_morphological(const relevance_map &map, const image_meta &image, const morph_options &opts = {});

} // namespace lot
