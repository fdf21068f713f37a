#pragma once

// Exact top-n entity retrieval by raw inner product over precomputed
// summary embeddings.

#include "lot/geometry.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace lot {

struct kb_entity {
    std::string id;
    std::string title;
    std::string summary;
};

struct knowledge_base {
    std::vector<kb_entity> entities;
    index_t dim = 0;
    std::vector<float> embeddings; // row-major [entities.size(), dim]

    std::span<const float> row(std::size_t i) const {
        return std::span<const float>(embeddings).subspan(i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
    }
};

void validate(const knowledge_base &kb);

// Manifest JSON plus a little-endian float32 blob; the blob path is resolved
// relative to the manifest's directory.
knowledge_base load_kb(const std::filesystem::path &manifest);
void save_kb(const knowledge_base &kb, const std::filesystem::path &manifest, const std::string &blob_name);

struct retrieval_hit {
    index_t index = 0;
    std::string id;
    double score = 0.0;
};

struct retrieval_result {
    std::vector<retrieval_hit> ranked;
    std::string context_text;          // summaries in rank order, blank-line separated
    std::vector<interval> passage_spans; // character span of each summary in context_text
    index_t n = 0;
};

inline constexpr std::string_view passage_separator = "\n\n";

// Scores are descending; equal scores keep the lower entity index first.
retrieval_result retrieve(const knowledge_base &kb, std::span<const float> query, index_t n = 3);

// Raw little-endian float32 blob (whole stream).
std::vector<float> read_f32_blob(std::istream &in);
void write_f32_blob(std::ostream &out, std::span<const float> values);

} // namespace lot
