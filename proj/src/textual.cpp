#include "lot/textual.hpp"

#include "lot/error.hpp"

#include <algorithm>
#include <cstdio>

namespace lot {

std::vector<attention_block> last_to_context(const introspection_dump &dump, index_t last_index,
                                             std::span<const index_t> layers) {
    const interval ctx = dump.segmentation.context;
    if (ctx.empty()) throw invariant_error("no retrieved context");
    if (last_index < ctx.end - 1 || last_index >= dump.dims.seq_len) {
        throw invariant_error("last token " + std::to_string(last_index) + " cannot attend to the whole context");
    }
    if (layers.empty()) throw invariant_error("last-to-context: empty layer list");
    std::vector<attention_block> out;
    out.reserve(layers.size() * static_cast<std::size_t>(dump.dims.n_heads));
    for (index_t layer : layers) {
        for (index_t head = 0; head < dump.dims.n_heads; ++head) {
            auto row = attention_row(dump, layer, head, last_index);
            out.push_back({layer, head, 1, ctx.size(), std::vector<float>(row.begin() + ctx.begin, row.begin() + ctx.end)});
        }
    }
    return out;
}

std::vector<double> aggregate_textual(std::span<const attention_block> rows) {
    if (rows.empty()) throw invariant_error("aggregate: no last-to-context rows");
    const index_t cols = rows.front().cols;
    std::vector<double> acc(static_cast<std::size_t>(cols), 0.0);
    for (const attention_block &b : rows) {
        if (b.rows != 1 || b.cols != cols) throw invariant_error("aggregate: malformed last-to-context row");
        for (index_t c = 0; c < cols; ++c) acc[static_cast<std::size_t>(c)] += b.values[static_cast<std::size_t>(c)];
    }
    for (double &v : acc) v /= static_cast<double>(rows.size());
    return acc;
}

std::vector<double> sentence_scores(std::span<const double> a_txt, std::span<const interval> spans) {
    std::vector<double> out;
    out.reserve(spans.size());
    for (const interval &s : spans) {
        if (s.empty()) throw invariant_error("sentence span of zero length");
        if (s.begin < 0 || s.end > static_cast<index_t>(a_txt.size())) {
            throw invariant_error("sentence span outside the context");
        }
        double sum = 0.0;
        for (index_t i = s.begin; i < s.end; ++i) sum += a_txt[static_cast<std::size_t>(i)];
        out.push_back(sum / static_cast<double>(s.size()));
    }
    return out;
}

textual_relevance select_sentences(std::span<const double> a_txt, std::span<const interval> spans,
                                   selection_mode mode) {
    textual_relevance out;
    out.a_txt.assign(a_txt.begin(), a_txt.end());
    out.sentence_scores = sentence_scores(a_txt, spans);
    out.mode = mode;
    const auto &scores = out.sentence_scores;
    if (scores.empty()) return out;
    if (mode.mode == selection_mode::kind::argmax) {
        const double best = *std::max_element(scores.begin(), scores.end());
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (scores[j] == best) out.selected.push_back(static_cast<index_t>(j));
        }
    } else {
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (scores[j] > mode.alpha) out.selected.push_back(static_cast<index_t>(j));
        }
    }
    return out;
}

std::vector<interval> context_relative_spans(const token_segmentation &seg) {
    std::vector<interval> out;
    out.reserve(seg.sentence_spans.size());
    for (const interval &s : seg.sentence_spans) out.push_back({s.begin - seg.context.begin, s.end - seg.context.begin});
    return out;
}

std::string to_string(const selection_mode &mode) {
    if (mode.mode == selection_mode::kind::argmax) return "argmax";
    char buf[64];
    std::snprintf(buf, sizeof buf, "threshold(%.9g)", mode.alpha);
    return buf;
}

selection_mode parse_selection_mode(const std::string &text) {
    if (text == "argmax") return selection_mode::argmax();
    const std::string prefix = "threshold:";
    if (text.rfind(prefix, 0) == 0) {
        try {
            std::size_t used = 0;
            const double alpha = std::stod(text.substr(prefix.size()), &used);
            if (used == text.size() - prefix.size()) return selection_mode::threshold(alpha);
        } catch (const std::exception &) {
        }
    }
    throw input_error("alpha mode must be 'argmax' or 'threshold:<alpha>', got '" + text + "'");
}

} // namespace lot
