#pragma once

// End-to-end evidence selection over one dump: focus tokens, visual
// relevance, sink filtering, bounding box and sentence selection.

#include "lot/dump.hpp"
#include "lot/focus.hpp"
#include "lot/textual.hpp"
#include "lot/visual.hpp"

#include <optional>
#include <vector>

namespace lot {

struct selection_config {
    double q = 25.0;     // sink-score percentile for tau
    double beta = 2.0;   // weighted-centroid half-extent in standard deviations
    double kappa = 5.0;  // BOS ratio test for sink-dimension detection
    bbox_strategy strategy = bbox_strategy::weighted_centroid;
    selection_mode alpha_mode = selection_mode::argmax();
    morph_options morph;
    std::optional<std::vector<index_t>> l_vis;
    std::optional<std::vector<index_t>> l_txt;
    std::optional<std::vector<index_t>> l_sink;
    bool sink_filter = true;
};

// Rejects out-of-range parameters with input_error.
void validate(const selection_config &config);

struct evidence_report {
    layer_ranges layers;
    focus_span focus;
    std::vector<double> a_vis_raw;
    bool sink_filtered = false; // false when disabled or no sink dimension was found
    sink_report sinks;
    visual_relevance visual;
    bbox box;
    std::optional<textual_relevance> textual; // absent without retrieved context
};

// Config override, then the dump's layer_ranges, then the defaults.
layer_ranges resolve_layers(const introspection_dump &dump, const selection_config &config);

// Dump-provided object indices win; otherwise the question heuristic runs
// over the dump's text block.
focus_span resolve_focus(const introspection_dump &dump);

evidence_report select_evidence(const introspection_dump &dump, const selection_config &config = {});

bbox extract_box(const relevance_map &map, const image_meta &image, bbox_strategy strategy,
                 const selection_config &config = {});

} // namespace lot
