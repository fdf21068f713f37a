#pragma once

// Synthetic LOTD dumps with planted ground truth: a relevance peak on the
// visual grid, sink tokens with outsized activations in chosen hidden
// dimensions, and a dominant evidence sentence for the last token.

#include "lot/dump.hpp"

#include <cstdint>
#include <vector>

namespace lot {

// Counter-based generator: output i is splitmix64_mix(seed + (i + 1) * golden)
// with golden = 0x9E3779B97F4A7C15 and the mix constants 0xBF58476D1CE4E5B9 /
// 0x94D049BB133111EB (shifts 30, 27, 31). Doubles take the top 53 bits.
class counter_rng {
public:
    explicit counter_rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next() { return at(counter_++); }
    std::uint64_t at(std::uint64_t i) const;
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; } // [0, 1)
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

struct peak_cell {
    index_t h = 0;
    index_t w = 0;
    double mass = 0.0; // fraction of the non-sink visual attention mass
};

struct synth_spec {
    model_dims dims;
    index_t question_tokens = 3;
    index_t object_tokens = 2;
    index_t sentences = 3;
    std::vector<peak_cell> peaks;
    std::vector<index_t> sink_tokens; // visual token indices
    std::vector<index_t> sink_dims;
    double sink_magnitude = 50.0;
    double sink_attention = 0.3; // share of visual mass the sink tokens soak up
    index_t evidence_sentence = 0;
    double evidence_mass = 0.8; // share of context mass on the evidence sentence
    bool embed_sink_dims = true;
    bool with_bos = true; // BOS reference row at position seq_len - 1
    index_t cell_px = 28;
    std::uint64_t seed = 0;
};

struct ground_truth {
    std::vector<peak_cell> peaks;
    std::vector<index_t> sink_tokens;
    std::vector<index_t> sink_dims;
    std::vector<index_t> object_indices;
    index_t evidence_sentence = 0;
};

struct synth_output {
    introspection_dump dump;
    ground_truth truth;
};

// Throws invariant_error("infeasible mass allocation...") when the planted
// masses cannot be realized, or on any out-of-range index.
synth_output generate(const synth_spec &spec);

} // namespace lot
