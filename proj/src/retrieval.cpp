#include "lot/retrieval.hpp"

#include "lot/error.hpp"

#include "json_fields.hpp"
#include "le_io.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <queue>

namespace lot {

using detail::json;

void validate(const knowledge_base &kb) {
    if (kb.entities.empty()) throw invariant_error("empty knowledge base");
    if (kb.dim < 1) throw invariant_error("knowledge base: embedding dimension must be >= 1");
    const std::size_t expect = kb.entities.size() * static_cast<std::size_t>(kb.dim);
    if (kb.embeddings.size() != expect) {
        throw invariant_error("knowledge base: embedding rows (" +
                              std::to_string(kb.embeddings.size() / static_cast<std::size_t>(kb.dim)) +
                              ") != entity count (" + std::to_string(kb.entities.size()) + ")");
    }
}

std::vector<float> read_f32_blob(std::istream &in) {
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % 4 != 0) throw input_error("float32 blob length is not a multiple of 4");
    std::vector<float> out;
    detail::get_f32(reinterpret_cast<const unsigned char *>(bytes.data()), bytes.size() / 4, out);
    return out;
}

void write_f32_blob(std::ostream &out, std::span<const float> values) {
    detail::put_f32(out, values);
    if (!out) throw input_error("cannot write float32 blob");
}

knowledge_base load_kb(const std::filesystem::path &manifest) {
    std::ifstream in(manifest);
    if (!in) throw input_error("cannot open knowledge base manifest '" + manifest.string() + "'");
    json m;
    try {
        m = json::parse(in);
    } catch (const json::parse_error &e) {
        throw input_error(manifest.string() + ": malformed JSON: " + e.what());
    }
    const std::string ctx = manifest.string();
    if (auto v = detail::optional_field<int>(m, "version", ctx); v && *v != 1) {
        throw input_error(ctx + ": unsupported knowledge base version " + std::to_string(*v));
    }
    knowledge_base kb;
    const json &ents = detail::require(m, "entities", ctx);
    if (!ents.is_array()) throw input_error(ctx + ": entities must be a list");
    for (std::size_t i = 0; i < ents.size(); ++i) {
        const std::string ectx = ctx + ": entities[" + std::to_string(i) + "]";
        kb.entities.push_back({detail::field<std::string>(ents[i], "id", ectx),
                               detail::optional_field<std::string>(ents[i], "title", ectx).value_or(""),
                               detail::field<std::string>(ents[i], "summary", ectx)});
    }
    const json &emb = detail::require(m, "embeddings", ctx);
    const auto rows = detail::field<index_t>(emb, "rows", ctx + ": embeddings");
    kb.dim = detail::field<index_t>(emb, "dim", ctx + ": embeddings");
    if (auto dt = detail::optional_field<std::string>(emb, "dtype", ctx); dt && *dt != "f32") {
        throw input_error(ctx + ": embeddings dtype must be f32");
    }
    const auto blob_path = manifest.parent_path() / detail::field<std::string>(emb, "path", ctx + ": embeddings");
    std::ifstream blob(blob_path, std::ios::binary);
    if (!blob) throw input_error("cannot open embedding blob '" + blob_path.string() + "'");
    kb.embeddings = read_f32_blob(blob);
    if (kb.entities.empty()) throw invariant_error("empty knowledge base");
    if (rows != static_cast<index_t>(kb.entities.size())) {
        throw invariant_error(ctx + ": embeddings.rows (" + std::to_string(rows) + ") != entity count (" +
                              std::to_string(kb.entities.size()) + ")");
    }
    validate(kb);
    return kb;
}

void save_kb(const knowledge_base &kb, const std::filesystem::path &manifest, const std::string &blob_name) {
    validate(kb);
    json ents = json::array();
    for (const kb_entity &e : kb.entities) ents.push_back({{"id", e.id}, {"title", e.title}, {"summary", e.summary}});
    json m = {{"version", 1},
              {"entities", ents},
              {"embeddings",
               {{"path", blob_name}, {"rows", kb.entities.size()}, {"dim", kb.dim}, {"dtype", "f32"}}}};
    std::ofstream out(manifest);
    if (!out) throw input_error("cannot write '" + manifest.string() + "'");
    out << m.dump(2) << '\n';
    std::ofstream blob(manifest.parent_path() / blob_name, std::ios::binary | std::ios::trunc);
    if (!blob) throw input_error("cannot write embedding blob");
    write_f32_blob(blob, kb.embeddings);
}

retrieval_result retrieve(const knowledge_base &kb, std::span<const float> query, index_t n) {
    validate(kb);
    if (static_cast<index_t>(query.size()) != kb.dim) {
        throw invariant_error("query dimension " + std::to_string(query.size()) + " != embedding dimension " +
                              std::to_string(kb.dim));
    }
    const auto N = static_cast<index_t>(kb.entities.size());
    if (n < 1 || n > N) throw invariant_error("n must lie in [1, " + std::to_string(N) + "]");

    struct entry {
        double score;
        index_t index;
    };
    // "better" = higher score, then lower index; the heap top is the worst kept entry
    auto better = [](const entry &a, const entry &b) {
        return a.score != b.score ? a.score > b.score : a.index < b.index;
    };
    std::priority_queue<entry, std::vector<entry>, decltype(better)> heap(better);
    for (index_t i = 0; i < N; ++i) {
        auto row = kb.row(static_cast<std::size_t>(i));
        double s = 0.0;
        for (index_t m = 0; m < kb.dim; ++m) s += static_cast<double>(row[m]) * static_cast<double>(query[m]);
        if (static_cast<index_t>(heap.size()) < n) {
            heap.push({s, i});
        } else if (better({s, i}, heap.top())) {
            heap.pop();
            heap.push({s, i});
        }
    }
    std::vector<entry> kept;
    while (!heap.empty()) {
        kept.push_back(heap.top());
        heap.pop();
    }
    std::reverse(kept.begin(), kept.end());

    retrieval_result out;
    out.n = n;
    for (const entry &e : kept) {
        const kb_entity &ent = kb.entities[static_cast<std::size_t>(e.index)];
        out.ranked.push_back({e.index, ent.id, e.score});
        if (!out.passage_spans.empty()) out.context_text += passage_separator;
        const auto begin = static_cast<index_t>(out.context_text.size());
        out.context_text += ent.summary;
        out.passage_spans.push_back({begin, static_cast<index_t>(out.context_text.size())});
    }
    return out;
}

} // namespace lot
