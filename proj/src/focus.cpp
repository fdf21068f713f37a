#include "lot/focus.hpp"

#include "lot/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <string>

namespace lot {

namespace {

constexpr std::array interrogatives = {"what", "which", "who", "whom", "whose", "where", "when", "why", "how"};

// Stripped everywhere.
constexpr std::array stop_words = {
    // interrogatives and their quantifier tails
    "what", "which", "who", "whom", "whose", "where", "when", "why", "how", "many", "much",
    // articles
    "a", "an", "the",
    // auxiliaries and copulas
    "is", "are", "was", "were", "be", "been", "being", "am", "do", "does", "did", "has", "have", "had", "can",
    "could", "will", "would", "shall", "should", "may", "might", "must", "not",
    // prepositions
    "of", "in", "on", "at", "to", "from", "by", "with", "for", "about", "into", "onto", "over", "under", "above",
    "below", "between", "behind", "near", "inside", "outside", "through", "during", "after", "before", "within",
    "without", "across", "along", "around", "against", "among", "upon", "toward", "towards", "like", "as",
    // conjunctions
    "and", "or", "but", "than", "if"};

// End a run but survive the fallback: a bare "this" is still the best guess
// for "Who is this?".
constexpr std::array function_words = {"this", "that", "these", "those", "it",  "its",   "he",   "she",
                                       "they", "them", "his",   "her",   "their", "there", "here", "my",
                                       "your", "our",  "i",     "you",   "we",   "me",    "us",   "him"};

template <std::size_t N>
bool in_list(const std::array<const char *, N> &list, std::string_view w) {
    return std::any_of(list.begin(), list.end(), [&](const char *s) { return w == s; });
}

enum class lex_kind { word, clitic, punct };

struct lexeme {
    lex_kind kind;
    interval chars;
    std::string lower;
};

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

// Apostrophe at `i`: ASCII or U+2019. Returns its byte length, 0 if none.
std::size_t apostrophe_at(std::string_view s, std::size_t i) {
    if (s[i] == '\'') return 1;
    if (s.compare(i, 3, "\xE2\x80\x99") == 0) return 3;
    return 0;
}

std::vector<lexeme> lex(std::string_view q) {
    std::vector<lexeme> out;
    std::size_t i = 0;
    while (i < q.size()) {
        const auto c = static_cast<unsigned char>(q[i]);
        if (std::isspace(c) != 0) {
            ++i;
            continue;
        }
        if (std::size_t ap = apostrophe_at(q, i); ap > 0) {
            // possessive / contraction clitic: the apostrophe plus trailing letters
            std::size_t j = i + ap;
            while (j < q.size() && std::isalpha(static_cast<unsigned char>(q[j])) != 0) ++j;
            out.push_back({j > i + ap ? lex_kind::clitic : lex_kind::punct,
                           {static_cast<index_t>(i), static_cast<index_t>(j)}, std::string(q.substr(i, j - i))});
            i = j;
            continue;
        }
        if (is_word_char(c) && !(c >= 0x80 && apostrophe_at(q, i) > 0)) {
            std::size_t j = i;
            while (j < q.size()) {
                const auto cj = static_cast<unsigned char>(q[j]);
                if (cj >= 0x80 && apostrophe_at(q, j) > 0) break;
                if (is_word_char(cj)) {
                    ++j;
                } else if (cj == '-' && j + 1 < q.size() && is_word_char(static_cast<unsigned char>(q[j + 1]))) {
                    ++j;
                } else {
                    break;
                }
            }
            std::string lower(q.substr(i, j - i));
            for (char &ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            out.push_back({lex_kind::word, {static_cast<index_t>(i), static_cast<index_t>(j)}, std::move(lower)});
            i = j;
            continue;
        }
        out.push_back({lex_kind::punct, {static_cast<index_t>(i), static_cast<index_t>(i + 1)}, std::string(1, q[i])});
        ++i;
    }
    return out;
}

bool has_alpha(std::string_view w) {
    return std::any_of(w.begin(), w.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; });
}

bool is_content(const lexeme &l) {
    return l.kind == lex_kind::word && has_alpha(l.lower) && !is_focus_stop_word(l.lower) &&
           !in_list(function_words, l.lower);
}

} // namespace

bool is_focus_stop_word(std::string_view lowercase_word) { return in_list(stop_words, lowercase_word); }

focus_span extract_focus(std::string_view question, std::span<const interval> token_offsets,
                         index_t first_token_index) {
    if (std::all_of(question.begin(), question.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); })) {
        throw input_error("question focus: empty question");
    }
    const std::vector<lexeme> lexemes = lex(question);
    if (std::none_of(lexemes.begin(), lexemes.end(),
                     [](const lexeme &l) { return l.kind == lex_kind::word && has_alpha(l.lower); })) {
        throw input_error("question focus: no alphabetic tokens in question");
    }

    std::size_t start = 0;
    for (std::size_t i = 0; i < lexemes.size(); ++i) {
        if (lexemes[i].kind == lex_kind::word && in_list(interrogatives, lexemes[i].lower)) {
            start = i + 1;
            break;
        }
    }

    // [first, last] lexeme indices of the chosen run
    std::size_t best_first = 0;
    std::size_t best_len = 0;
    for (std::size_t i = start; i < lexemes.size();) {
        if (!is_content(lexemes[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < lexemes.size() && is_content(lexemes[j])) ++j;
        if (j - i >= best_len) {
            best_first = i;
            best_len = j - i;
        }
        i = j;
    }

    std::vector<interval> chosen;
    if (best_len > 0) {
        chosen.push_back({lexemes[best_first].chars.begin, lexemes[best_first + best_len - 1].chars.end});
    } else {
        for (const lexeme &l : lexemes) {
            if (l.kind == lex_kind::word && has_alpha(l.lower) && !is_focus_stop_word(l.lower)) chosen.push_back(l.chars);
        }
        if (chosen.empty()) throw input_error("question focus: every word of the question is a stop-word");
    }

    focus_span out;
    out.source = focus_source::heuristic;
    out.char_span = {chosen.front().begin, chosen.back().end};
    for (std::size_t k = 0; k < token_offsets.size(); ++k) {
        const interval &tok = token_offsets[k];
        const bool hit = std::any_of(chosen.begin(), chosen.end(),
                                     [&](const interval &w) { return tok.begin < w.end && w.begin < tok.end; });
        if (hit) out.token_indices.push_back(first_token_index + static_cast<index_t>(k));
    }
    if (out.token_indices.empty()) {
        throw invariant_error("question focus: no question token overlaps the focus span [" +
                              std::to_string(out.char_span.begin) + ", " + std::to_string(out.char_span.end) + ")");
    }
    return out;
}

} // namespace lot
