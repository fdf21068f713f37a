#include "lot/prompt.hpp"

#include "lot/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace lot {

std::string_view to_string(granularity g) {
    switch (g) {
    case granularity::sentence: return "sentence";
    case granularity::passage: return "passage";
    case granularity::all_context: return "all_context";
    case granularity::none: return "none";
    }
    return "unknown";
}

granularity parse_granularity(std::string_view name) {
    if (name == "sentence") return granularity::sentence;
    if (name == "passage") return granularity::passage;
    if (name == "all_context") return granularity::all_context;
    if (name == "none") return granularity::none;
    throw input_error("unknown granularity '" + std::string(name) + "'");
}

std::string system_prompt(const marker_set &m) {
    std::string s;
    s += "Answer the encyclopedic question about the given image. Do not mention the visual content of image in "
         "your output. Directly output the answer of the question according to the context.\n\n";
    s += "If the paragraphs do not contain the information required to answer the question, you should answer the "
         "question using your knowledge.\n\n";
    s += m.img_start + " and " + m.img_end + " are used to mark the important visual evidence. Do not output the markers.\n\n";
    s += m.txt_start + " and " + m.txt_end + " are used to mark the important textual evidence. Do not output the markers.";
    return s;
}

namespace {

bool only_space(std::string_view text, index_t begin, index_t end) {
    for (index_t i = begin; i < end; ++i) {
        if (std::isspace(static_cast<unsigned char>(text[static_cast<std::size_t>(i)])) == 0) return false;
    }
    return true;
}

bool contains_marker(std::string_view text, const marker_set &m) {
    for (const std::string *mk : {&m.img_start, &m.img_end, &m.txt_start, &m.txt_end}) {
        if (!mk->empty() && text.find(*mk) != std::string_view::npos) return true;
    }
    return false;
}

} // namespace

std::vector<interval> merge_spans(std::vector<interval> spans, std::string_view text) {
    std::sort(spans.begin(), spans.end(), [](const interval &a, const interval &b) {
        return a.begin != b.begin ? a.begin < b.begin : a.end < b.end;
    });
    std::vector<interval> out;
    for (const interval &s : spans) {
        if (!out.empty() && (s.begin <= out.back().end || only_space(text, out.back().end, s.begin))) {
            out.back().end = std::max(out.back().end, s.end);
        } else {
            out.push_back(s);
        }
    }
    return out;
}

std::vector<interval> passage_spans_of(std::string_view context) {
    std::vector<interval> out;
    const auto n = static_cast<index_t>(context.size());
    index_t piece = 0;
    auto flush = [&](index_t end) {
        index_t b = piece;
        index_t e = end;
        while (b < e && std::isspace(static_cast<unsigned char>(context[static_cast<std::size_t>(b)])) != 0) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(context[static_cast<std::size_t>(e - 1)])) != 0) --e;
        if (e > b) out.push_back({b, e});
    };
    for (index_t i = 0; i + 1 < n; ++i) {
        if (context[static_cast<std::size_t>(i)] == '\n' && context[static_cast<std::size_t>(i + 1)] == '\n') {
            flush(i);
            piece = i + 2;
            ++i;
        }
    }
    flush(n);
    return out;
}

std::string wrap_spans(std::string_view text, std::span<const interval> spans, std::string_view start,
                       std::string_view end) {
    std::string out;
    out.reserve(text.size() + spans.size() * (start.size() + end.size()));
    index_t cursor = 0;
    for (const interval &s : spans) {
        out.append(text.substr(static_cast<std::size_t>(cursor), static_cast<std::size_t>(s.begin - cursor)));
        out.append(start);
        out.append(text.substr(static_cast<std::size_t>(s.begin), static_cast<std::size_t>(s.size())));
        out.append(end);
        cursor = s.end;
    }
    out.append(text.substr(static_cast<std::size_t>(cursor)));
    return out;
}

std::string strip_markers(std::string_view text, const marker_set &m) {
    std::string out(text);
    for (const std::string *mk : {&m.img_start, &m.img_end, &m.txt_start, &m.txt_end}) {
        if (mk->empty()) continue;
        std::string next;
        std::size_t pos = 0;
        for (std::size_t hit; (hit = out.find(*mk, pos)) != std::string::npos; pos = hit + mk->size()) {
            next.append(out, pos, hit - pos);
        }
        next.append(out, pos);
        out = std::move(next);
    }
    return out;
}

crop_rect crop_of(const pixel_rect &b, const image_meta &image) {
    const auto clamp = [](double v, index_t hi) {
        return std::clamp(static_cast<index_t>(v), index_t{0}, hi);
    };
    crop_rect c{clamp(std::floor(b.x1), image.width_px), clamp(std::floor(b.y1), image.height_px),
                clamp(std::ceil(b.x2), image.width_px), clamp(std::ceil(b.y2), image.height_px)};
    return c;
}

namespace {

void check_bbox(const pixel_rect &b, const image_meta &image) {
    constexpr double eps = 1e-9;
    const bool ok = std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) && std::isfinite(b.y2) &&
                    b.x1 >= -eps && b.y1 >= -eps && b.x1 <= b.x2 && b.y1 <= b.y2 &&
                    b.x2 <= static_cast<double>(image.width_px) + eps && b.y2 <= static_cast<double>(image.height_px) + eps;
    if (!ok) throw invariant_error("bounding box lies outside the image or is inverted");
}

} // namespace

marked_prompt build_prompt(std::string_view question, std::string_view context,
                           std::span<const interval> sentence_spans, std::span<const index_t> selected,
                           const pixel_rect &bbox_px, const image_meta &image, const prompt_options &options) {
    const marker_set &mk = options.markers;
    check_bbox(bbox_px, image);
    if (contains_marker(question, mk) || contains_marker(context, mk)) {
        throw input_error("question or context already contains a marker string");
    }
    const auto ctx_len = static_cast<index_t>(context.size());
    for (const interval &s : sentence_spans) {
        if (s.begin < 0 || s.end > ctx_len || s.end < s.begin) {
            throw invariant_error("sentence span [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
                                  ") lies outside the context text");
        }
    }
    std::vector<interval> chosen;
    for (index_t j : selected) {
        if (j < 0 || j >= static_cast<index_t>(sentence_spans.size())) {
            throw invariant_error("selected sentence " + std::to_string(j) + " has no character span");
        }
        chosen.push_back(sentence_spans[static_cast<std::size_t>(j)]);
    }

    std::vector<interval> wrap;
    switch (options.gran) {
    case granularity::sentence: wrap = merge_spans(chosen, context); break;
    case granularity::passage: {
        const std::vector<interval> passages =
            options.passage_spans.empty() ? passage_spans_of(context) : options.passage_spans;
        for (const interval &p : passages) {
            for (const interval &s : chosen) {
                if (s.begin < p.end && p.begin < s.end) {
                    wrap.push_back(p);
                    break;
                }
            }
        }
        wrap = merge_spans(wrap, context);
        break;
    }
    case granularity::all_context:
        if (ctx_len > 0) wrap.push_back({0, ctx_len});
        break;
    case granularity::none: break;
    }

    std::string user;
    if (options.include_full_image || !options.highlight_image) user += options.image_placeholder + "\n\n";
    if (options.highlight_image) user += mk.img_start + " " + options.crop_placeholder + " " + mk.img_end + "\n\n";
    user += question;
    if (ctx_len > 0) {
        user += "\n\n";
        user += context_connective;
        user += "\n\n";
        user += wrap_spans(context, wrap, mk.txt_start, mk.txt_end);
    }

    marked_prompt out;
    out.system_text = system_prompt(mk);
    out.user_text = std::move(user);
    out.crop_px = crop_of(bbox_px, image);
    out.markers = mk;
    out.gran = options.gran;
    out.include_full_image = options.include_full_image;
    return out;
}

token_area_model token_area_model::from_image(double visual_tokens, const image_meta &image) {
    return {visual_tokens / static_cast<double>(image.width_px * image.height_px)};
}

crop_spec make_crop_spec(const pixel_rect &bbox_px, const image_meta &image, const token_area_model &model) {
    check_bbox(bbox_px, image);
    crop_spec out;
    out.rect = crop_of(bbox_px, image);
    out.estimated_tokens = model.estimate(out.rect);
    return out;
}

token_stats compute_token_stats(double visual_before, double visual_after, double answer_tokens,
                                double extra_tokens) {
    if (!(visual_before > 0.0)) throw invariant_error("token stats: visual token count must be > 0");
    if (!(answer_tokens > 0.0)) throw invariant_error("token stats: answer length must be > 0");
    if (visual_after < 0.0 || extra_tokens < 0.0) throw invariant_error("token stats: counts must be >= 0");
    token_stats s;
    s.visual_before = visual_before;
    s.visual_after = visual_after;
    s.reduction_pct = 100.0 * (visual_before - visual_after) / visual_before;
    s.extra_tokens = extra_tokens;
    s.answer_tokens = answer_tokens;
    s.overhead_pct = 100.0 * extra_tokens / answer_tokens;
    return s;
}

} // namespace lot
