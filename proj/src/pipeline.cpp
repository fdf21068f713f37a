#include "lot/pipeline.hpp"

#include "lot/error.hpp"

#include <cmath>

namespace lot {

void validate(const selection_config &c) {
    if (!(c.q >= 0.0 && c.q <= 100.0)) throw input_error("config: q must lie in [0, 100]");
    if (!(c.beta >= 0.0) || !std::isfinite(c.beta)) throw input_error("config: beta must be finite and >= 0");
    if (!(c.kappa > 0.0) || !std::isfinite(c.kappa)) throw input_error("config: kappa must be finite and > 0");
    if (!(c.morph.threshold >= 0.0 && c.morph.threshold < 1.0)) {
        throw input_error("config: morphology threshold must lie in [0, 1)");
    }
    if (c.morph.kernel < 1 || c.morph.kernel % 2 == 0) throw input_error("config: kernel must be odd and >= 1");
    if (c.alpha_mode.mode == selection_mode::kind::threshold && !std::isfinite(c.alpha_mode.alpha)) {
        throw input_error("config: alpha must be finite");
    }
}

layer_ranges resolve_layers(const introspection_dump &dump, const selection_config &config) {
    layer_ranges out = dump.layers ? *dump.layers : default_layer_ranges(dump.dims.n_layers);
    if (config.l_vis) out.vis = *config.l_vis;
    if (config.l_txt) out.txt = *config.l_txt;
    if (config.l_sink) {
        out.sink = *config.l_sink;
    } else if (config.l_vis && !dump.layers) {
        out.sink = out.vis;
    }
    for (const auto *list : {&out.vis, &out.txt, &out.sink}) {
        if (list->empty()) throw invariant_error("layer range is empty");
        for (std::size_t i = 0; i < list->size(); ++i) {
            const index_t l = (*list)[i];
            if (l < 0 || l >= dump.dims.n_layers) throw invariant_error("layer " + std::to_string(l) + " out of range");
            if (i > 0 && l <= (*list)[i - 1]) throw invariant_error("layer list must be strictly increasing");
        }
    }
    return out;
}

focus_span resolve_focus(const introspection_dump &dump) {
    const token_segmentation &seg = dump.segmentation;
    if (seg.object_indices) {
        focus_span f;
        f.source = focus_source::provided;
        f.token_indices = *seg.object_indices;
        if (dump.text && !dump.text->question_token_offsets.empty()) {
            const auto &off = dump.text->question_token_offsets;
            f.char_span = {off[static_cast<std::size_t>(f.token_indices.front() - seg.question.begin)].begin,
                           off[static_cast<std::size_t>(f.token_indices.back() - seg.question.begin)].end};
        }
        return f;
    }
    if (!dump.text || dump.text->question_token_offsets.empty()) {
        throw invariant_error("dump carries neither object_indices nor question text with token offsets");
    }
    return extract_focus(dump.text->question, dump.text->question_token_offsets, seg.question.begin);
}

bbox extract_box(const relevance_map &map, const image_meta &image, bbox_strategy strategy,
                 const selection_config &config) {
    switch (strategy) {
    case bbox_strategy::weighted_centroid: return bbox_weighted_centroid(map, image, config.beta);
    case bbox_strategy::min_max: return bbox_min_max(map, image);
    case bbox_strategy::morphological: return bbox_morphological(map, image, config.morph);
    }
    throw invariant_error("unknown bbox strategy");
}

evidence_report select_evidence(const introspection_dump &dump, const selection_config &config) {
    validate(config);
    evidence_report rep;
    rep.layers = resolve_layers(dump, config);
    rep.focus = resolve_focus(dump);

    const auto blocks = object_to_visual(dump, rep.focus.token_indices, rep.layers.vis);
    rep.a_vis_raw = aggregate_visual(blocks);

    const index_t gh = dump.dims.grid_h;
    const index_t gw = dump.dims.grid_w;
    if (config.sink_filter) {
        rep.sinks.sink_dims = detect_sink_dims(dump, dump.segmentation.bos_index, rep.layers.sink, config.kappa);
    }
    if (!rep.sinks.sink_dims.empty()) {
        rep.sinks.scores = sink_scores(dump, rep.sinks.sink_dims, rep.layers.sink);
        auto filtered = filter_sinks(rep.a_vis_raw, rep.sinks.scores, config.q, gh, gw);
        rep.sinks.tau = filtered.tau;
        rep.sinks.mask = std::move(filtered.mask);
        rep.visual = std::move(filtered.relevance);
        rep.sink_filtered = true;
    } else {
        rep.sinks.mask.assign(rep.a_vis_raw.size(), false);
        rep.visual.a_vis = rep.a_vis_raw;
        rep.visual.grid = reshape(rep.a_vis_raw, gh, gw);
    }

    rep.box = extract_box(rep.visual.grid, dump.image, config.strategy, config);

    if (!dump.segmentation.context.empty()) {
        const auto rows = last_to_context(dump, dump.segmentation.last_index, rep.layers.txt);
        const auto a_txt = aggregate_textual(rows);
        const auto spans = context_relative_spans(dump.segmentation);
        rep.textual = select_sentences(a_txt, spans, config.alpha_mode);
    }
    return rep;
}

} // namespace lot
