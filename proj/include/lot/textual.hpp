#pragma once

// Sentence-level evidence from the last prompt token's attention onto the
// retrieved context.

#include "lot/dump.hpp"
#include "lot/visual.hpp"

#include <span>
#include <string>
#include <vector>

namespace lot {

struct selection_mode {
    enum class kind { argmax, threshold };

    kind mode = kind::argmax;
    double alpha = 0.0; // threshold mode only

    static selection_mode argmax() { return {}; }
    static selection_mode threshold(double a) { return {kind::threshold, a}; }
};

struct textual_relevance {
    std::vector<double> a_txt;
    std::vector<double> sentence_scores;
    std::vector<index_t> selected;
    selection_mode mode;
};

// A^{l,k}[t, C] for every l in layers and every head; blocks have one row.
std::vector<attention_block> last_to_context(const introspection_dump &dump, index_t last_index,
                                             std::span<const index_t> layers);

// Mean over (layer, head): 1 / (|L_txt| K) scaling.
std::vector<double> aggregate_textual(std::span<const attention_block> rows);

// Mean of a_txt over each span. Spans index into a_txt (context-relative).
std::vector<double> sentence_scores(std::span<const double> a_txt, std::span<const interval> spans);

textual_relevance select_sentences(std::span<const double> a_txt, std::span<const interval> spans,
                                   selection_mode mode = selection_mode::argmax());

// Dump sentence spans shifted to context-relative positions.
std::vector<interval> context_relative_spans(const token_segmentation &seg);

std::string to_string(const selection_mode &mode);
selection_mode parse_selection_mode(const std::string &text);

} // namespace lot
