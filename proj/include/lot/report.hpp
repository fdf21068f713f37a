#pragma once

// Stable JSON for every artifact the tools emit. Keys are sorted and floats
// are rounded to 9 significant digits, so equal inputs give equal bytes.

#include "lot/metrics.hpp"
#include "lot/pipeline.hpp"
#include "lot/prompt.hpp"
#include "lot/retrieval.hpp"
#include "lot/synth.hpp"

#include <json.hpp>

#include <span>
#include <string>

namespace lot {

using json = nlohmann::json;

// Rounds to 9 significant digits; NaN and infinities become null.
json number(double v);
double round9(double v);

std::string to_text(const json &j); // indented, trailing newline

json to_json(const pixel_rect &r);
json to_json(const crop_rect &r);
json to_json(const grid_box &b);
json to_json(const bbox &b);
json to_json(const marker_set &m);

json params_json(const evidence_report &rep, const selection_config &config);
json to_json(const evidence_report &rep, const selection_config &config);

json to_json(const marked_prompt &p);
marked_prompt marked_prompt_from_json(const json &j);

json to_json(const retrieval_result &r);
json to_json(const box_comparison &c);
json to_json(std::span<const metric_summary> table);
json to_json(const token_stats &s);

synth_spec synth_spec_from_json(const json &j);
json to_json(const synth_spec &s);
json to_json(const ground_truth &t);

// Reference / predicted boxes: [{id, x1, y1, x2, y2}, ...].
struct labeled_box {
    std::string id;
    pixel_rect box;
};
std::vector<labeled_box> boxes_from_json(const json &j, const std::string &ctx);

json parse_json_text(const std::string &text, const std::string &ctx);

} // namespace lot
