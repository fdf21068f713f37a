#pragma once

// Target-object span of a question, used as the attention-row set for
// object-to-visual relevance when the dump does not carry one.

#include "lot/geometry.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace lot {

enum class focus_source { provided, heuristic };

struct focus_span {
    interval char_span;
    std::vector<index_t> token_indices;
    focus_source source = focus_source::heuristic;
};

// Heuristic noun-phrase pick. Words after the first interrogative are split
// into runs of content words; a run ends at a stop-word, a determiner or
// pronoun, a possessive clitic or punctuation. The longest run wins and ties
// go to the later run, which is usually the object of "of"/"in". Without any
// run, every non-stop word of the question is kept.
//
// token_offsets gives one character interval per question token; returned
// token_indices are those tokens overlapping the chosen words, shifted by
// first_token_index so they land in the dump's question range.
focus_span extract_focus(std::string_view question, std::span<const interval> token_offsets,
                         index_t first_token_index = 0);

// Exposed for tests and docs.
bool is_focus_stop_word(std::string_view lowercase_word);

} // namespace lot
