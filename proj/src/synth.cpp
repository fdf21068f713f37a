#include "lot/synth.hpp"

#include "lot/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

namespace lot {

namespace {

constexpr std::uint64_t golden_gamma = 0x9E3779B97F4A7C15ull;

std::uint64_t splitmix64_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

[[noreturn]] void bad_spec(const std::string &what) { throw invariant_error("synth spec: " + what); }

std::vector<index_t> sorted_unique(std::vector<index_t> v, index_t lo, index_t hi, const char *field) {
    std::sort(v.begin(), v.end());
    if (std::adjacent_find(v.begin(), v.end()) != v.end()) bad_spec(std::string(field) + " has duplicates");
    for (index_t x : v) {
        if (x < lo || x >= hi) bad_spec(std::string(field) + " index " + std::to_string(x) + " out of range");
    }
    return v;
}

} // namespace

std::uint64_t counter_rng::at(std::uint64_t i) const { return splitmix64_mix(seed_ + (i + 1) * golden_gamma); }

synth_output generate(const synth_spec &spec) {
    const model_dims &dims = spec.dims;
    if (dims.n_layers < 1 || dims.n_heads < 1 || dims.seq_len < 1 || dims.hidden < 1 || dims.grid_h < 1 ||
        dims.grid_w < 1) {
        bad_spec("dims must all be >= 1");
    }
    const index_t n_vis = dims.n_visual();
    const index_t n_q = spec.question_tokens;
    if (n_q < 1) bad_spec("question_tokens must be >= 1");
    if (spec.object_tokens < 1 || spec.object_tokens > n_q) bad_spec("object_tokens must lie in [1, question_tokens]");
    const index_t reserve = spec.with_bos ? 1 : 0;
    const index_t n_ctx = dims.seq_len - n_vis - n_q - reserve;
    if (n_ctx < 0) bad_spec("seq_len too small for the visual grid, question and BOS slot");
    if (n_ctx > 0 && (spec.sentences < 1 || spec.sentences > n_ctx)) bad_spec("sentences must lie in [1, context tokens]");
    if (n_ctx == 0 && spec.sentences != 0) bad_spec("no room for context tokens but sentences > 0");
    if (spec.sentences > 0 && (spec.evidence_sentence < 0 || spec.evidence_sentence >= spec.sentences)) {
        bad_spec("evidence_sentence out of range");
    }
    if (!(spec.evidence_mass >= 0.0 && spec.evidence_mass <= 1.0)) bad_spec("evidence_mass must lie in [0, 1]");
    if (!(spec.sink_attention >= 0.0 && spec.sink_attention < 1.0)) bad_spec("sink_attention must lie in [0, 1)");
    if (!(spec.sink_magnitude > 0.0)) bad_spec("sink_magnitude must be > 0");
    if (spec.cell_px < 1) bad_spec("cell_px must be >= 1");

    const auto sinks = sorted_unique(spec.sink_tokens, 0, n_vis, "sink_tokens");
    const auto sink_dims = sorted_unique(spec.sink_dims, 0, dims.hidden, "sink_dims");
    if (!sinks.empty() && sink_dims.empty()) bad_spec("sink_tokens given without sink_dims");

    std::vector<char> is_sink(static_cast<std::size_t>(n_vis), 0);
    for (index_t s : sinks) is_sink[static_cast<std::size_t>(s)] = 1;
    std::vector<double> peak_mass(static_cast<std::size_t>(n_vis), 0.0);
    double peak_total = 0.0;
    for (const peak_cell &p : spec.peaks) {
        if (p.h < 0 || p.h >= dims.grid_h || p.w < 0 || p.w >= dims.grid_w) bad_spec("peak cell outside the grid");
        if (!(p.mass >= 0.0)) bad_spec("peak mass must be >= 0");
        const auto idx = static_cast<std::size_t>(p.h * dims.grid_w + p.w);
        if (is_sink[idx] != 0) throw invariant_error("infeasible mass allocation: peak cell is a sink token");
        if (peak_mass[idx] > 0.0) bad_spec("duplicate peak cell");
        peak_mass[idx] = p.mass;
        peak_total += p.mass;
    }
    if (peak_total > 1.0 + 1e-12) throw invariant_error("infeasible mass allocation: peak masses sum above 1");
    std::vector<index_t> rest;
    for (index_t v = 0; v < n_vis; ++v) {
        if (is_sink[static_cast<std::size_t>(v)] == 0 && peak_mass[static_cast<std::size_t>(v)] == 0.0) rest.push_back(v);
    }
    if (rest.empty() && peak_total < 1.0 - 1e-12) {
        throw invariant_error("infeasible mass allocation: no free visual cell takes the leftover mass");
    }
    if (rest.empty() && spec.peaks.empty()) {
        throw invariant_error("infeasible mass allocation: every visual token is a sink");
    }

    introspection_dump dump;
    dump.dims = dims;
    token_segmentation &seg = dump.segmentation;
    seg.visual = {0, n_vis};
    seg.question = {n_vis, n_vis + n_q};
    seg.context = {n_vis + n_q, n_vis + n_q + n_ctx};
    const index_t obj_begin = seg.question.begin + (n_q - spec.object_tokens) / 2;
    std::vector<index_t> objects(static_cast<std::size_t>(spec.object_tokens));
    std::iota(objects.begin(), objects.end(), obj_begin);
    seg.object_indices = objects;
    if (n_ctx > 0) {
        index_t cursor = seg.context.begin;
        for (index_t j = 0; j < spec.sentences; ++j) {
            const index_t len = n_ctx / spec.sentences + (j < n_ctx % spec.sentences ? 1 : 0);
            seg.sentence_spans.push_back({cursor, cursor + len});
            cursor += len;
        }
    }
    seg.last_index = n_ctx > 0 ? seg.context.end - 1 : seg.question.end - 1;
    if (spec.with_bos) seg.bos_index = dims.seq_len - 1;

    dump.image = {dims.grid_w * spec.cell_px, dims.grid_h * spec.cell_px, std::nullopt};
    if (spec.embed_sink_dims && !sink_dims.empty()) dump.sink_dims = sink_dims;

    counter_rng rng(spec.seed);
    const auto S = static_cast<std::size_t>(dims.seq_len);

    std::set<index_t> row_set(objects.begin(), objects.end());
    row_set.insert(seg.last_index);
    const std::vector<index_t> rows(row_set.begin(), row_set.end());
    const std::size_t n_sinks = sinks.size();

    for (index_t layer = 0; layer < dims.n_layers; ++layer) {
        attention_slice slice{layer, rows, std::vector<float>(static_cast<std::size_t>(dims.n_heads) * rows.size() * S, 0.0f)};
        for (index_t head = 0; head < dims.n_heads; ++head) {
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const index_t tok = rows[r];
                std::vector<double> row(S, 0.0);
                const bool object_row = std::binary_search(objects.begin(), objects.end(), tok);
                if (object_row || n_ctx == 0) {
                    const double vis_share = 0.5 + 0.3 * rng.uniform();
                    const index_t n_text = tok - n_vis + 1;
                    for (index_t j = n_vis; j <= tok; ++j) {
                        row[static_cast<std::size_t>(j)] = (1.0 - vis_share) / static_cast<double>(n_text);
                    }
                    const double sink_share = n_sinks > 0 ? spec.sink_attention : 0.0;
                    for (index_t s : sinks) row[static_cast<std::size_t>(s)] = vis_share * sink_share / static_cast<double>(n_sinks);
                    const double free_mass = vis_share * (1.0 - sink_share);
                    for (index_t v = 0; v < n_vis; ++v) {
                        if (peak_mass[static_cast<std::size_t>(v)] > 0.0) {
                            row[static_cast<std::size_t>(v)] = free_mass * peak_mass[static_cast<std::size_t>(v)];
                        }
                    }
                    if (!rest.empty()) {
                        std::vector<double> jitter(rest.size());
                        for (double &j : jitter) j = 1.0 + 0.2 * (rng.uniform() - 0.5);
                        const double norm = std::accumulate(jitter.begin(), jitter.end(), 0.0);
                        const double rest_mass = free_mass * std::max(0.0, 1.0 - peak_total);
                        for (std::size_t i = 0; i < rest.size(); ++i) {
                            row[static_cast<std::size_t>(rest[i])] = rest_mass * jitter[i] / norm;
                        }
                    }
                } else {
                    const double ctx_share = 0.7;
                    const interval ev = seg.sentence_spans[static_cast<std::size_t>(spec.evidence_sentence)];
                    const index_t n_other = n_ctx - ev.size();
                    const double ev_mass = n_other > 0 ? spec.evidence_mass : 1.0;
                    for (index_t j = seg.context.begin; j < seg.context.end; ++j) {
                        row[static_cast<std::size_t>(j)] = ev.contains(j)
                                                               ? ctx_share * ev_mass / static_cast<double>(ev.size())
                                                               : ctx_share * (1.0 - ev_mass) / static_cast<double>(n_other);
                    }
                    for (index_t j = 0; j < seg.context.begin; ++j) {
                        row[static_cast<std::size_t>(j)] = (1.0 - ctx_share) / static_cast<double>(seg.context.begin);
                    }
                }
                float *dst = slice.values.data() + (static_cast<std::size_t>(head) * rows.size() + r) * S;
                for (std::size_t j = 0; j < S; ++j) dst[j] = static_cast<float>(row[j]);
            }
        }
        dump.attention.push_back(std::move(slice));
    }

    std::vector<index_t> hidden_rows(static_cast<std::size_t>(n_vis));
    std::iota(hidden_rows.begin(), hidden_rows.end(), 0);
    if (seg.bos_index) hidden_rows.push_back(*seg.bos_index);
    const auto d = static_cast<std::size_t>(dims.hidden);
    for (index_t layer = 0; layer < dims.n_layers; ++layer) {
        hidden_slice slice{layer, hidden_rows, std::vector<float>(hidden_rows.size() * d)};
        for (std::size_t r = 0; r < hidden_rows.size(); ++r) {
            const index_t tok = hidden_rows[r];
            const bool amplified = (seg.bos_index && tok == *seg.bos_index) ||
                                   (tok < n_vis && is_sink[static_cast<std::size_t>(tok)] != 0);
            for (std::size_t m = 0; m < d; ++m) {
                const double sign = (rng.next() & 1u) != 0 ? 1.0 : -1.0;
                double v = sign * (0.75 + 0.25 * rng.uniform());
                if (amplified && std::binary_search(sink_dims.begin(), sink_dims.end(), static_cast<index_t>(m))) {
                    v = sign * spec.sink_magnitude;
                }
                slice.values[r * d + m] = static_cast<float>(v);
            }
        }
        dump.hidden.push_back(std::move(slice));
    }

    text_meta text;
    for (index_t i = 0; i < n_q; ++i) {
        if (i > 0) text.question += ' ';
        const auto b = static_cast<index_t>(text.question.size());
        text.question += "q" + std::to_string(i);
        text.question_token_offsets.push_back({b, static_cast<index_t>(text.question.size())});
    }
    text.question += '?';
    for (const interval &span : seg.sentence_spans) {
        if (!text.context.empty()) text.context += ' ';
        const auto b = static_cast<index_t>(text.context.size());
        for (index_t tok = span.begin; tok < span.end; ++tok) {
            if (tok > span.begin) text.context += ' ';
            text.context += "c" + std::to_string(tok - seg.context.begin);
        }
        text.context += '.';
        text.sentence_char_spans.push_back({b, static_cast<index_t>(text.context.size())});
    }
    if (!text.context.empty()) text.passage_char_spans.push_back({0, static_cast<index_t>(text.context.size())});
    dump.text = std::move(text);

    validate(dump);

    synth_output out;
    out.dump = std::move(dump);
    out.truth.peaks = spec.peaks;
    out.truth.sink_tokens = sinks;
    out.truth.sink_dims = sink_dims;
    out.truth.object_indices = objects;
    out.truth.evidence_sentence = spec.evidence_sentence;
    return out;
}

} // namespace lot
