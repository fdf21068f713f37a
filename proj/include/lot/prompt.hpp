#pragma once

// Second-pass prompt assembly: marker-wrapped context, crop rectangle and the
// fixed system / user templates.

#include "lot/geometry.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lot {

struct marker_set {
    std::string img_start = "<START_IMPORTANT_IMG>";
    std::string img_end = "<END_IMPORTANT_IMG>";
    std::string txt_start = "<START_IMPORTANT_TXT>";
    std::string txt_end = "<END_IMPORTANT_TXT>";

    friend bool operator==(const marker_set &, const marker_set &) = default;
};

enum class granularity { sentence, passage, all_context, none };

std::string_view to_string(granularity g);
granularity parse_granularity(std::string_view name);

struct prompt_options {
    granularity gran = granularity::sentence;
    bool include_full_image = false; // standard-benchmark layout: unmarked full image first
    bool highlight_image = true;     // false = plain full image, no crop block
    marker_set markers;
    std::string crop_placeholder = "[image_cropped]";
    std::string image_placeholder = "[image]";
    // passage boundaries for granularity::passage; empty = blank-line split of the context
    std::vector<interval> passage_spans;
};

struct marked_prompt {
    std::string system_text;
    std::string user_text;
    crop_rect crop_px;
    marker_set markers;
    granularity gran = granularity::sentence;
    bool include_full_image = false;
};

inline constexpr std::string_view context_connective =
    "The following paragraphs may contain useful information to help answer the question correctly:";

std::string system_prompt(const marker_set &markers = {});

// Sorts spans and merges those that overlap or are separated only by whitespace in `text`.
std::vector<interval> merge_spans(std::vector<interval> spans, std::string_view text);

// Passages of a retrieved context: maximal runs separated by blank lines.
std::vector<interval> passage_spans_of(std::string_view context);

// Wraps each span of `text` in start/end markers. Spans must be sorted and disjoint.
std::string wrap_spans(std::string_view text, std::span<const interval> spans, std::string_view start,
                       std::string_view end);

std::string strip_markers(std::string_view text, const marker_set &markers);

// sentence_spans are character intervals into `context`; `selected` indexes them.
marked_prompt build_prompt(std::string_view question, std::string_view context,
                           std::span<const interval> sentence_spans, std::span<const index_t> selected,
                           const pixel_rect &bbox_px, const image_meta &image, const prompt_options &options = {});

// Integer crop (rounded outward, clamped to the image).
crop_rect crop_of(const pixel_rect &bbox_px, const image_meta &image);

// Visual token count modelled as linear in pixel area.
struct token_area_model {
    double tokens_per_pixel = 0.0;

    static token_area_model from_image(double visual_tokens, const image_meta &image);
    double estimate(const crop_rect &crop) const { return tokens_per_pixel * static_cast<double>(crop.area()); }
};

struct crop_spec {
    crop_rect rect;
    double estimated_tokens = 0.0;
};

crop_spec make_crop_spec(const pixel_rect &bbox_px, const image_meta &image, const token_area_model &model);

struct token_stats {
    double visual_before = 0.0;
    double visual_after = 0.0;
    double reduction_pct = 0.0;
    double extra_tokens = 1.0;
    double answer_tokens = 0.0;
    double overhead_pct = 0.0;
};

// Reduction = (before - after) / before; overhead = extra generated tokens
// over the mean answer length.
token_stats compute_token_stats(double visual_before, double visual_after, double answer_tokens,
                                double extra_tokens = 1.0);

} // namespace lot
