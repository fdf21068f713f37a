#include "lot/report.hpp"

#include "json_fields.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace lot {

using detail::field;
using detail::optional_field;
using detail::require;

double round9(double v) {
    if (!std::isfinite(v)) return v;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::strtod(buf, nullptr);
}

json number(double v) {
    if (!std::isfinite(v)) return nullptr;
    const double r = round9(v);
    return r == 0.0 ? 0.0 : r; // no "-0.0"
}

std::string to_text(const json &j) { return j.dump(2) + "\n"; }

namespace {

json numbers(std::span<const double> v) {
    json out = json::array();
    for (double x : v) out.push_back(number(x));
    return out;
}

json indices(std::span<const index_t> v) { return json(std::vector<index_t>(v.begin(), v.end())); }

json bools(const std::vector<bool> &v) {
    json out = json::array();
    for (bool b : v) out.push_back(b);
    return out;
}

} // namespace

json to_json(const pixel_rect &r) {
    return {{"x1", number(r.x1)}, {"y1", number(r.y1)}, {"x2", number(r.x2)}, {"y2", number(r.y2)}};
}

json to_json(const crop_rect &r) { return {{"x1", r.x1}, {"y1", r.y1}, {"x2", r.x2}, {"y2", r.y2}}; }

json to_json(const grid_box &b) {
    return {{"x1", number(b.x1)}, {"y1", number(b.y1)}, {"x2", number(b.x2)}, {"y2", number(b.y2)}};
}

json to_json(const bbox &b) {
    return {{"strategy", std::string(to_string(b.strategy))}, {"bbox_grid", to_json(b.grid)}, {"bbox_px", to_json(b.px)}};
}

json to_json(const marker_set &m) {
    return {{"img_start", m.img_start}, {"img_end", m.img_end}, {"txt_start", m.txt_start}, {"txt_end", m.txt_end}};
}

json params_json(const evidence_report &rep, const selection_config &c) {
    return {{"q", number(c.q)},
            {"beta", number(c.beta)},
            {"kappa", number(c.kappa)},
            {"L_vis", indices(rep.layers.vis)},
            {"L_txt", indices(rep.layers.txt)},
            {"L_sink", indices(rep.layers.sink)},
            {"strategy", std::string(to_string(c.strategy))},
            {"alpha_mode", to_string(c.alpha_mode)},
            {"morph_threshold", number(c.morph.threshold)},
            {"morph_kernel", c.morph.kernel},
            {"sink_filter", c.sink_filter}};
}

json to_json(const evidence_report &rep, const selection_config &c) {
    json j;
    j["a_vis"] = numbers(rep.visual.a_vis);
    j["a_vis_raw"] = numbers(rep.a_vis_raw);
    j["grid"] = {rep.visual.grid.rows, rep.visual.grid.cols};
    j["sink_dims"] = indices(rep.sinks.sink_dims);
    j["sink_filtered"] = rep.sink_filtered;
    j["s_sink"] = rep.sink_filtered ? numbers(rep.sinks.scores) : json(nullptr);
    j["tau"] = rep.sink_filtered ? number(rep.sinks.tau) : json(nullptr);
    j["mask"] = bools(rep.sinks.mask);
    j["strategy"] = std::string(to_string(rep.box.strategy));
    j["bbox_grid"] = to_json(rep.box.grid);
    j["bbox_px"] = to_json(rep.box.px);
    j["object_tokens"] = indices(rep.focus.token_indices);
    j["focus_source"] = rep.focus.source == focus_source::provided ? "provided" : "heuristic";
    j["focus_char_span"] = detail::to_json(rep.focus.char_span);
    if (rep.textual) {
        j["a_txt"] = numbers(rep.textual->a_txt);
        j["sentence_scores"] = numbers(rep.textual->sentence_scores);
        j["selected_sentences"] = indices(rep.textual->selected);
    } else {
        j["a_txt"] = nullptr;
        j["sentence_scores"] = nullptr;
        j["selected_sentences"] = nullptr;
    }
    j["alpha_mode"] = to_string(c.alpha_mode);
    j["params"] = params_json(rep, c);
    return j;
}

json to_json(const marked_prompt &p) {
    return {{"system_text", p.system_text},
            {"user_text", p.user_text},
            {"crop_px", to_json(p.crop_px)},
            {"include_full_image", p.include_full_image},
            {"granularity", std::string(to_string(p.gran))},
            {"markers", to_json(p.markers)}};
}

marked_prompt marked_prompt_from_json(const json &j) {
    const std::string ctx = "marked prompt";
    marked_prompt p;
    p.system_text = field<std::string>(j, "system_text", ctx);
    p.user_text = field<std::string>(j, "user_text", ctx);
    const json &c = require(j, "crop_px", ctx);
    p.crop_px = {field<index_t>(c, "x1", ctx + ".crop_px"), field<index_t>(c, "y1", ctx + ".crop_px"),
                 field<index_t>(c, "x2", ctx + ".crop_px"), field<index_t>(c, "y2", ctx + ".crop_px")};
    p.include_full_image = field<bool>(j, "include_full_image", ctx);
    p.gran = parse_granularity(field<std::string>(j, "granularity", ctx));
    if (auto it = j.find("markers"); it != j.end()) {
        const std::string mc = ctx + ".markers";
        p.markers = {field<std::string>(*it, "img_start", mc), field<std::string>(*it, "img_end", mc),
                     field<std::string>(*it, "txt_start", mc), field<std::string>(*it, "txt_end", mc)};
    }
    return p;
}

json to_json(const retrieval_result &r) {
    json ranked = json::array();
    for (const retrieval_hit &h : r.ranked) ranked.push_back({{"index", h.index}, {"id", h.id}, {"score", number(h.score)}});
    return {{"n", r.n},
            {"ranked", ranked},
            {"context_text", r.context_text},
            {"passage_spans", detail::to_json(r.passage_spans)}};
}

json to_json(const box_comparison &c) {
    return {{"iou", number(c.iou)},
            {"coverage", number(c.coverage)},
            {"precision", number(c.precision)},
            {"center_distance", number(c.center_distance)},
            {"pred", to_json(c.pred)},
            {"gt", to_json(c.gt)}};
}

json to_json(std::span<const metric_summary> table) {
    json out = json::array();
    for (const metric_summary &m : table) {
        out.push_back({{"method", m.strategy},
                       {"count", m.count},
                       {"iou", number(m.iou)},
                       {"coverage", number(m.coverage)},
                       {"precision", number(m.precision)},
                       {"center_distance", number(m.center_distance)}});
    }
    return out;
}

json to_json(const token_stats &s) {
    return {{"visual_tokens_before", number(s.visual_before)},
            {"visual_tokens_after", number(s.visual_after)},
            {"reduction_pct", number(s.reduction_pct)},
            {"extra_tokens", number(s.extra_tokens)},
            {"answer_tokens", number(s.answer_tokens)},
            {"overhead_pct", number(s.overhead_pct)}};
}

synth_spec synth_spec_from_json(const json &j) {
    const std::string ctx = "synth spec";
    synth_spec s;
    const json &d = require(j, "dims", ctx);
    const std::string dc = ctx + ".dims";
    s.dims = {field<index_t>(d, "n_layers", dc), field<index_t>(d, "n_heads", dc), field<index_t>(d, "seq_len", dc),
              field<index_t>(d, "hidden", dc),   field<index_t>(d, "grid_h", dc),  field<index_t>(d, "grid_w", dc)};
    auto opt = [&](const char *key, auto &slot) {
        using T = std::decay_t<decltype(slot)>;
        if (auto v = optional_field<T>(j, key, ctx)) slot = *v;
    };
    opt("question_tokens", s.question_tokens);
    opt("object_tokens", s.object_tokens);
    opt("sentences", s.sentences);
    opt("sink_tokens", s.sink_tokens);
    opt("sink_dims", s.sink_dims);
    opt("sink_magnitude", s.sink_magnitude);
    opt("sink_attention", s.sink_attention);
    opt("evidence_sentence", s.evidence_sentence);
    opt("evidence_mass", s.evidence_mass);
    opt("embed_sink_dims", s.embed_sink_dims);
    opt("with_bos", s.with_bos);
    opt("cell_px", s.cell_px);
    opt("seed", s.seed);
    if (auto it = j.find("peak_cells"); it != j.end()) {
        if (!it->is_array()) throw input_error(ctx + ".peak_cells: expected a list");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const json &p = (*it)[i];
            const std::string pc = ctx + ".peak_cells[" + std::to_string(i) + "]";
            s.peaks.push_back({field<index_t>(p, "h", pc), field<index_t>(p, "w", pc), field<double>(p, "mass", pc)});
        }
    }
    return s;
}

json to_json(const synth_spec &s) {
    json peaks = json::array();
    for (const peak_cell &p : s.peaks) peaks.push_back({{"h", p.h}, {"w", p.w}, {"mass", number(p.mass)}});
    return {{"dims",
             {{"n_layers", s.dims.n_layers},
              {"n_heads", s.dims.n_heads},
              {"seq_len", s.dims.seq_len},
              {"hidden", s.dims.hidden},
              {"grid_h", s.dims.grid_h},
              {"grid_w", s.dims.grid_w}}},
            {"question_tokens", s.question_tokens},
            {"object_tokens", s.object_tokens},
            {"sentences", s.sentences},
            {"peak_cells", peaks},
            {"sink_tokens", s.sink_tokens},
            {"sink_dims", s.sink_dims},
            {"sink_magnitude", number(s.sink_magnitude)},
            {"sink_attention", number(s.sink_attention)},
            {"evidence_sentence", s.evidence_sentence},
            {"evidence_mass", number(s.evidence_mass)},
            {"embed_sink_dims", s.embed_sink_dims},
            {"with_bos", s.with_bos},
            {"cell_px", s.cell_px},
            {"seed", s.seed}};
}

json to_json(const ground_truth &t) {
    json peaks = json::array();
    for (const peak_cell &p : t.peaks) peaks.push_back({{"h", p.h}, {"w", p.w}, {"mass", number(p.mass)}});
    return {{"peak_cells", peaks},
            {"sink_tokens", t.sink_tokens},
            {"sink_dims", t.sink_dims},
            {"object_indices", t.object_indices},
            {"evidence_sentence", t.evidence_sentence}};
}

std::vector<labeled_box> boxes_from_json(const json &j, const std::string &ctx) {
    if (!j.is_array()) throw input_error(ctx + ": expected a list of {id, x1, y1, x2, y2}");
    std::vector<labeled_box> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const json &b = j[i];
        const std::string bc = ctx + "[" + std::to_string(i) + "]";
        const json &id = require(b, "id", bc);
        labeled_box lb;
        lb.id = id.is_string() ? id.get<std::string>() : id.dump();
        lb.box = {field<double>(b, "x1", bc), field<double>(b, "y1", bc), field<double>(b, "x2", bc),
                  field<double>(b, "y2", bc)};
        out.push_back(std::move(lb));
    }
    return out;
}

json parse_json_text(const std::string &text, const std::string &ctx) {
    try {
        return json::parse(text);
    } catch (const json::parse_error &e) {
        throw input_error(ctx + ": malformed JSON (" + e.what() + ")");
    }
}

} // namespace lot
