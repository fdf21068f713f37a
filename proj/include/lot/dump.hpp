#pragma once

// LOTD container: everything one forward pass exposes to the evidence
// selector. Layout on disk:
//
//   "LOTD" | u32 version | u64 manifest_len | manifest (JSON) | tensor blobs
//
// Integers are little-endian. Blobs are little-endian float32, row-major,
// addressed by byte_offset relative to the first byte after the manifest.
// See docs/formats.md for the manifest schema.

#include "lot/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lot {

inline constexpr char dump_magic[4] = {'L', 'O', 'T', 'D'};
inline constexpr std::uint32_t dump_version = 1;

struct model_dims {
    index_t n_layers = 0;
    index_t n_heads = 0;
    index_t seq_len = 0;
    index_t hidden = 0;
    index_t grid_h = 0;
    index_t grid_w = 0;

    index_t n_visual() const { return grid_h * grid_w; }

    friend bool operator==(const model_dims &, const model_dims &) = default;
};

struct token_segmentation {
    interval visual;
    interval question;
    interval context;
    std::optional<std::vector<index_t>> object_indices;
    std::vector<interval> sentence_spans; // absolute token positions, partition `context`
    index_t last_index = 0;
    std::optional<index_t> bos_index;

    friend bool operator==(const token_segmentation &, const token_segmentation &) = default;
};

// Post-softmax attention rows for one layer. values has shape
// [n_heads, rows.size(), seq_len].
struct attention_slice {
    index_t layer = 0;
    std::vector<index_t> rows;
    std::vector<float> values;

    friend bool operator==(const attention_slice &, const attention_slice &) = default;
};

// Hidden states for one layer. values has shape [rows.size(), hidden].
struct hidden_slice {
    index_t layer = 0;
    std::vector<index_t> rows;
    std::vector<float> values;

    friend bool operator==(const hidden_slice &, const hidden_slice &) = default;
};

struct layer_ranges {
    std::vector<index_t> vis;
    std::vector<index_t> txt;
    std::vector<index_t> sink;

    friend bool operator==(const layer_ranges &, const layer_ranges &) = default;
};

// Optional character-level view of the prompt, written by the adapter so the
// core can run the question-focus heuristic and build the highlighted prompt.
struct text_meta {
    std::string question;
    std::vector<interval> question_token_offsets; // one per question token
    std::string context;
    std::vector<interval> sentence_char_spans; // one per sentence span
    std::vector<interval> passage_char_spans;

    friend bool operator==(const text_meta &, const text_meta &) = default;
};

struct introspection_dump {
    model_dims dims;
    token_segmentation segmentation;
    image_meta image;
    std::vector<attention_slice> attention;
    std::vector<hidden_slice> hidden;
    std::optional<std::vector<index_t>> sink_dims;
    std::optional<layer_ranges> layers;
    std::optional<text_meta> text;

    const attention_slice *find_attention(index_t layer) const;
    const hidden_slice *find_hidden(index_t layer) const;

    friend bool operator==(const introspection_dump &, const introspection_dump &) = default;
};

// Position of `token` inside a sorted row-index list.
std::optional<std::size_t> row_position(std::span<const index_t> rows, index_t token);

// Attention row A^{layer,head}[token, :] of length seq_len. Throws
// invariant_error naming layer and row when the dump does not carry it.
std::span<const float> attention_row(const introspection_dump &dump, index_t layer, index_t head,
                                     index_t token);

// Hidden state H^{layer}[token, :] of length hidden. Throws invariant_error when absent.
std::span<const float> hidden_row(const introspection_dump &dump, index_t layer, index_t token);

// Checks every type invariant; throws invariant_error naming the field.
void validate(const introspection_dump &dump);

struct tensor_entry {
    std::string name;
    std::string dtype = "f32";
    std::vector<index_t> shape;
    std::uint64_t byte_offset = 0;
    std::uint64_t byte_len = 0;
};

// Blob table checks shared by reader and writer: dtype, byte_len against
// shape, bounds against the data section and pairwise overlap.
void check_tensor_layout(std::span<const tensor_entry> entries, std::uint64_t data_len);

std::uint64_t write_dump(const introspection_dump &dump, std::ostream &sink);
introspection_dump read_dump(std::istream &source);

void save_dump(const introspection_dump &dump, const std::filesystem::path &path);
introspection_dump load_dump(const std::filesystem::path &path);

} // namespace lot
