#include "lot/dump.hpp"

#include "lot/error.hpp"

#include "json_fields.hpp"
#include "le_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace lot {

using detail::json;

namespace {

constexpr std::size_t header_len = 16;
constexpr std::uint64_t max_manifest_len = std::uint64_t{1} << 32;

[[noreturn]] void violated(const std::string &field, const std::string &what) {
    throw invariant_error("invalid dump: " + field + ": " + what);
}

void check_sorted_unique(std::span<const index_t> xs, index_t lo, index_t hi, const std::string &field) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i] < lo || xs[i] >= hi) {
            violated(field, "index " + std::to_string(xs[i]) + " outside [" + std::to_string(lo) + ", " +
                                std::to_string(hi) + ")");
        }
        if (i > 0 && xs[i] <= xs[i - 1]) violated(field, "indices must be strictly increasing");
    }
}

void check_layer_list(std::span<const index_t> layers, index_t n_layers, const std::string &field) {
    if (layers.empty()) violated(field, "layer list is empty");
    check_sorted_unique(layers, 0, n_layers, field);
}

std::string tensor_name(const char *kind, index_t layer) { return std::string(kind) + "." + std::to_string(layer); }

} // namespace

const attention_slice *introspection_dump::find_attention(index_t layer) const {
    for (const auto &s : attention) {
        if (s.layer == layer) return &s;
    }
    return nullptr;
}

const hidden_slice *introspection_dump::find_hidden(index_t layer) const {
    for (const auto &s : hidden) {
        if (s.layer == layer) return &s;
    }
    return nullptr;
}

std::optional<std::size_t> row_position(std::span<const index_t> rows, index_t token) {
    auto it = std::lower_bound(rows.begin(), rows.end(), token);
    if (it == rows.end() || *it != token) return std::nullopt;
    return static_cast<std::size_t>(it - rows.begin());
}

std::span<const float> attention_row(const introspection_dump &dump, index_t layer, index_t head, index_t token) {
    const attention_slice *slice = dump.find_attention(layer);
    if (slice == nullptr) {
        throw invariant_error("no attention stored for layer " + std::to_string(layer));
    }
    auto pos = row_position(slice->rows, token);
    if (!pos) {
        throw invariant_error("attention row " + std::to_string(token) + " missing at layer " +
                              std::to_string(layer));
    }
    const auto s = static_cast<std::size_t>(dump.dims.seq_len);
    const std::size_t n_rows = slice->rows.size();
    const std::size_t offset = (static_cast<std::size_t>(head) * n_rows + *pos) * s;
    return std::span<const float>(slice->values).subspan(offset, s);
}

std::span<const float> hidden_row(const introspection_dump &dump, index_t layer, index_t token) {
    const hidden_slice *slice = dump.find_hidden(layer);
    if (slice == nullptr) {
        throw invariant_error("no hidden states stored for layer " + std::to_string(layer));
    }
    auto pos = row_position(slice->rows, token);
    if (!pos) {
        throw invariant_error("hidden row " + std::to_string(token) + " missing at layer " + std::to_string(layer));
    }
    const auto d = static_cast<std::size_t>(dump.dims.hidden);
    return std::span<const float>(slice->values).subspan(*pos * d, d);
}

void validate(const introspection_dump &dump) {
    const model_dims &dims = dump.dims;
    if (dims.n_layers < 1) violated("dims.n_layers", "must be >= 1");
    if (dims.n_heads < 1) violated("dims.n_heads", "must be >= 1");
    if (dims.seq_len < 1) violated("dims.seq_len", "must be >= 1");
    if (dims.hidden < 1) violated("dims.hidden", "must be >= 1");
    if (dims.grid_h < 1) violated("dims.grid_h", "must be >= 1");
    if (dims.grid_w < 1) violated("dims.grid_w", "must be >= 1");

    const token_segmentation &seg = dump.segmentation;
    if (seg.visual.begin != 0) violated("segmentation.visual", "must start at 0");
    if (seg.visual.size() != dims.n_visual()) {
        violated("segmentation.visual", "length " + std::to_string(seg.visual.size()) + " != grid_h*grid_w = " +
                                            std::to_string(dims.n_visual()));
    }
    if (seg.question.begin != seg.visual.end || seg.question.end < seg.question.begin) {
        violated("segmentation.question", "must directly follow the visual range");
    }
    if (seg.context.begin != seg.question.end || seg.context.end < seg.context.begin) {
        violated("segmentation.context", "must directly follow the question range");
    }
    if (seg.context.end > dims.seq_len) violated("segmentation.context", "extends past seq_len");

    if (seg.object_indices) {
        if (seg.object_indices->empty()) violated("segmentation.object_indices", "empty when present");
        check_sorted_unique(*seg.object_indices, seg.question.begin, seg.question.end,
                            "segmentation.object_indices");
    }

    index_t cursor = seg.context.begin;
    for (std::size_t j = 0; j < seg.sentence_spans.size(); ++j) {
        const interval &span = seg.sentence_spans[j];
        const std::string field = "segmentation.sentence_spans[" + std::to_string(j) + "]";
        if (span.empty()) violated(field, "zero-length sentence span");
        if (span.begin != cursor) violated(field, "spans must be ordered and contiguous over the context");
        cursor = span.end;
    }
    if (cursor != seg.context.end) violated("segmentation.sentence_spans", "union does not equal the context range");

    // t must see every context token; a t strictly inside the context cannot.
    if (seg.last_index < seg.context.end - 1 || seg.last_index >= dims.seq_len) {
        violated("segmentation.last_index", "must lie in [" + std::to_string(seg.context.end - 1) + ", seq_len)");
    }
    if (seg.bos_index && (*seg.bos_index < 0 || *seg.bos_index >= dims.seq_len)) {
        violated("segmentation.bos_index", "outside [0, seq_len)");
    }

    if (dump.image.width_px < 1) violated("image.width_px", "must be >= 1");
    if (dump.image.height_px < 1) violated("image.height_px", "must be >= 1");

    std::set<index_t> seen;
    const auto s = static_cast<std::size_t>(dims.seq_len);
    for (const attention_slice &a : dump.attention) {
        const std::string field = "attention[layer " + std::to_string(a.layer) + "]";
        if (a.layer < 0 || a.layer >= dims.n_layers) violated(field, "layer out of range");
        if (!seen.insert(a.layer).second) violated(field, "duplicate layer");
        check_sorted_unique(a.rows, 0, dims.seq_len, field + ".row_indices");
        const std::size_t expect = static_cast<std::size_t>(dims.n_heads) * a.rows.size() * s;
        if (a.values.size() != expect) {
            violated(field, "holds " + std::to_string(a.values.size()) + " values, shape needs " +
                                std::to_string(expect));
        }
        for (std::size_t r = 0; r * s < a.values.size(); ++r) {
            double sum = 0.0;
            for (std::size_t j = 0; j < s; ++j) {
                const float v = a.values[r * s + j];
                if (!std::isfinite(v) || v < 0.0f) violated(field, "attention weights must be finite and >= 0");
                sum += v;
            }
            if (sum > 1.0 + 1e-4) violated(field, "attention row sums to " + std::to_string(sum) + " > 1");
        }
    }

    seen.clear();
    const auto d = static_cast<std::size_t>(dims.hidden);
    for (const hidden_slice &h : dump.hidden) {
        const std::string field = "hidden[layer " + std::to_string(h.layer) + "]";
        if (h.layer < 0 || h.layer >= dims.n_layers) violated(field, "layer out of range");
        if (!seen.insert(h.layer).second) violated(field, "duplicate layer");
        check_sorted_unique(h.rows, 0, dims.seq_len, field + ".row_indices");
        if (h.values.size() != h.rows.size() * d) {
            violated(field, "holds " + std::to_string(h.values.size()) + " values, shape needs " +
                                std::to_string(h.rows.size() * d));
        }
        for (float v : h.values) {
            if (!std::isfinite(v)) violated(field, "hidden states must be finite");
        }
    }

    if (dump.sink_dims) check_sorted_unique(*dump.sink_dims, 0, dims.hidden, "sink_dims");

    if (dump.layers) {
        check_layer_list(dump.layers->vis, dims.n_layers, "layer_ranges.vis");
        check_layer_list(dump.layers->txt, dims.n_layers, "layer_ranges.txt");
        check_layer_list(dump.layers->sink, dims.n_layers, "layer_ranges.sink");
    }

    if (dump.text) {
        const text_meta &text = *dump.text;
        const auto q_len = static_cast<index_t>(text.question.size());
        const auto c_len = static_cast<index_t>(text.context.size());
        if (!text.question_token_offsets.empty()) {
            if (static_cast<index_t>(text.question_token_offsets.size()) != seg.question.size()) {
                violated("text.question_token_offsets", "count differs from the question token range");
            }
            index_t prev = 0;
            for (const interval &iv : text.question_token_offsets) {
                if (iv.begin < prev || iv.end < iv.begin || iv.end > q_len) {
                    violated("text.question_token_offsets", "offsets must be monotone and inside the question");
                }
                prev = iv.begin;
            }
        }
        if (!text.sentence_char_spans.empty() && text.sentence_char_spans.size() != seg.sentence_spans.size()) {
            violated("text.sentence_char_spans", "count differs from segmentation.sentence_spans");
        }
        auto check_char_spans = [&](const std::vector<interval> &spans, const std::string &field) {
            index_t prev_end = 0;
            for (const interval &iv : spans) {
                if (iv.begin < prev_end || iv.end < iv.begin || iv.end > c_len) {
                    violated(field, "spans must be ordered, non-overlapping and inside the context text");
                }
                prev_end = iv.end;
            }
        };
        check_char_spans(text.sentence_char_spans, "text.sentence_char_spans");
        check_char_spans(text.passage_char_spans, "text.passage_char_spans");
    }
}

void check_tensor_layout(std::span<const tensor_entry> entries, std::uint64_t data_len) {
    std::vector<const tensor_entry *> order;
    for (const tensor_entry &e : entries) {
        if (e.dtype != "f32") throw input_error("tensor '" + e.name + "': unsupported dtype '" + e.dtype + "'");
        std::uint64_t count = 1;
        for (index_t dim : e.shape) {
            if (dim < 0) throw input_error("tensor '" + e.name + "': negative dimension");
            count *= static_cast<std::uint64_t>(dim);
        }
        if (e.byte_len != 4 * count) {
            throw input_error("tensor '" + e.name + "': byte_len " + std::to_string(e.byte_len) +
                              " != 4 x product(shape) = " + std::to_string(4 * count));
        }
        if (e.byte_offset > data_len || e.byte_len > data_len - e.byte_offset) {
            throw input_error("unexpected end of stream: tensor '" + e.name + "' extends past the end of the file");
        }
        order.push_back(&e);
    }
    std::sort(order.begin(), order.end(),
              [](const tensor_entry *a, const tensor_entry *b) { return a->byte_offset < b->byte_offset; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        const tensor_entry &prev = *order[i - 1];
        const tensor_entry &cur = *order[i];
        if (prev.byte_len > 0 && cur.byte_len > 0 && cur.byte_offset < prev.byte_offset + prev.byte_len) {
            throw input_error("overlapping tensor regions: '" + prev.name + "' and '" + cur.name + "'");
        }
    }
}

namespace {

json manifest_of(const introspection_dump &dump, std::vector<std::span<const float>> &blobs) {
    const model_dims &dims = dump.dims;
    const token_segmentation &seg = dump.segmentation;

    json m;
    m["dims"] = {{"n_layers", dims.n_layers}, {"n_heads", dims.n_heads}, {"seq_len", dims.seq_len},
                 {"hidden", dims.hidden},     {"grid_h", dims.grid_h},   {"grid_w", dims.grid_w}};

    json js;
    js["visual"] = detail::to_json(seg.visual);
    js["question"] = detail::to_json(seg.question);
    js["context"] = detail::to_json(seg.context);
    js["sentence_spans"] = detail::to_json(seg.sentence_spans);
    js["last_index"] = seg.last_index;
    if (seg.object_indices) js["object_indices"] = *seg.object_indices;
    if (seg.bos_index) js["bos_index"] = *seg.bos_index;
    m["segmentation"] = js;

    json img = {{"width_px", dump.image.width_px}, {"height_px", dump.image.height_px}};
    if (dump.image.image_path) img["image_path"] = *dump.image.image_path;
    m["image"] = img;

    if (dump.sink_dims) m["sink_dims"] = *dump.sink_dims;
    if (dump.layers) m["layer_ranges"] = {{"vis", dump.layers->vis}, {"txt", dump.layers->txt}, {"sink", dump.layers->sink}};
    if (dump.text) {
        const text_meta &t = *dump.text;
        m["text"] = {{"question", t.question},
                     {"question_token_offsets", detail::to_json(t.question_token_offsets)},
                     {"context", t.context},
                     {"sentence_char_spans", detail::to_json(t.sentence_char_spans)},
                     {"passage_char_spans", detail::to_json(t.passage_char_spans)}};
    }

    json tensors = json::array();
    std::uint64_t offset = 0;
    auto add = [&](const char *kind, index_t layer, const std::vector<index_t> &rows, json shape,
                   std::span<const float> values) {
        const std::uint64_t len = values.size_bytes();
        tensors.push_back({{"name", tensor_name(kind, layer)},
                           {"kind", kind},
                           {"layer", layer},
                           {"row_indices", rows},
                           {"dtype", "f32"},
                           {"shape", std::move(shape)},
                           {"byte_offset", offset},
                           {"byte_len", len}});
        blobs.push_back(values);
        offset += len;
    };
    for (const attention_slice &a : dump.attention) {
        add("attention", a.layer, a.rows, json::array({dims.n_heads, static_cast<index_t>(a.rows.size()), dims.seq_len}),
            a.values);
    }
    for (const hidden_slice &h : dump.hidden) {
        add("hidden", h.layer, h.rows, json::array({static_cast<index_t>(h.rows.size()), dims.hidden}), h.values);
    }
    m["tensors"] = tensors;
    return m;
}

} // namespace

std::uint64_t write_dump(const introspection_dump &dump, std::ostream &sink) {
    validate(dump);
    std::vector<std::span<const float>> blobs;
    const std::string manifest = manifest_of(dump, blobs).dump();

    sink.write(dump_magic, 4);
    detail::put_u32(sink, dump_version);
    detail::put_u64(sink, manifest.size());
    sink.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    std::uint64_t total = header_len + manifest.size();
    for (auto blob : blobs) {
        detail::put_f32(sink, blob);
        total += blob.size_bytes();
    }
    sink.flush();
    if (!sink) throw input_error("cannot write dump: output stream failed");
    return total;
}

introspection_dump read_dump(std::istream &source) {
    const std::string bytes((std::istreambuf_iterator<char>(source)), std::istreambuf_iterator<char>());
    const auto *raw = reinterpret_cast<const unsigned char *>(bytes.data());

    if (bytes.size() < 4) throw input_error("unexpected end of stream: missing LOTD magic");
    if (!std::equal(dump_magic, dump_magic + 4, bytes.data())) throw input_error("bad magic: not a LOTD file");
    if (bytes.size() < header_len) throw input_error("unexpected end of stream: truncated header");
    const std::uint32_t version = detail::get_u32(raw + 4);
    if (version != dump_version) throw input_error("unsupported LOTD version " + std::to_string(version));
    const std::uint64_t manifest_len = detail::get_u64(raw + 8);
    if (manifest_len > max_manifest_len || manifest_len > bytes.size() - header_len) {
        throw input_error("unexpected end of stream: manifest truncated");
    }

    json m;
    try {
        m = json::parse(bytes.begin() + header_len, bytes.begin() + static_cast<std::ptrdiff_t>(header_len + manifest_len));
    } catch (const json::parse_error &e) {
        throw input_error(std::string("manifest JSON malformed: ") + e.what());
    }
    if (!m.is_object()) throw input_error("manifest JSON malformed: top level is not an object");

    const std::uint64_t data_begin = header_len + manifest_len;
    const std::uint64_t data_len = bytes.size() - data_begin;

    introspection_dump dump;
    {
        const json &d = detail::require(m, "dims", "manifest");
        dump.dims.n_layers = detail::field<index_t>(d, "n_layers", "dims");
        dump.dims.n_heads = detail::field<index_t>(d, "n_heads", "dims");
        dump.dims.seq_len = detail::field<index_t>(d, "seq_len", "dims");
        dump.dims.hidden = detail::field<index_t>(d, "hidden", "dims");
        dump.dims.grid_h = detail::field<index_t>(d, "grid_h", "dims");
        dump.dims.grid_w = detail::field<index_t>(d, "grid_w", "dims");
        if (dump.dims.n_layers < 1 || dump.dims.n_heads < 1 || dump.dims.seq_len < 1 || dump.dims.hidden < 1) {
            throw invariant_error("invalid dump: dims: counts must be >= 1");
        }
    }
    {
        const json &s = detail::require(m, "segmentation", "manifest");
        auto &seg = dump.segmentation;
        seg.visual = detail::interval_from(detail::require(s, "visual", "segmentation"), "segmentation.visual");
        seg.question = detail::interval_from(detail::require(s, "question", "segmentation"), "segmentation.question");
        seg.context = detail::interval_from(detail::require(s, "context", "segmentation"), "segmentation.context");
        seg.sentence_spans =
            detail::intervals_from(detail::require(s, "sentence_spans", "segmentation"), "segmentation.sentence_spans");
        seg.last_index = detail::field<index_t>(s, "last_index", "segmentation");
        seg.object_indices = detail::optional_field<std::vector<index_t>>(s, "object_indices", "segmentation");
        seg.bos_index = detail::optional_field<index_t>(s, "bos_index", "segmentation");
    }
    {
        const json &img = detail::require(m, "image", "manifest");
        dump.image.width_px = detail::field<index_t>(img, "width_px", "image");
        dump.image.height_px = detail::field<index_t>(img, "height_px", "image");
        dump.image.image_path = detail::optional_field<std::string>(img, "image_path", "image");
    }
    dump.sink_dims = detail::optional_field<std::vector<index_t>>(m, "sink_dims", "manifest");
    if (auto it = m.find("layer_ranges"); it != m.end() && !it->is_null()) {
        layer_ranges lr;
        lr.vis = detail::field<std::vector<index_t>>(*it, "vis", "layer_ranges");
        lr.txt = detail::field<std::vector<index_t>>(*it, "txt", "layer_ranges");
        lr.sink = detail::field<std::vector<index_t>>(*it, "sink", "layer_ranges");
        dump.layers = std::move(lr);
    }
    if (auto it = m.find("text"); it != m.end() && !it->is_null()) {
        const json &t = *it;
        text_meta text;
        text.question = detail::optional_field<std::string>(t, "question", "text").value_or("");
        text.context = detail::optional_field<std::string>(t, "context", "text").value_or("");
        auto spans = [&](const char *key) {
            auto f = t.find(key);
            if (f == t.end() || f->is_null()) return std::vector<interval>{};
            return detail::intervals_from(*f, std::string("text.") + key);
        };
        text.question_token_offsets = spans("question_token_offsets");
        text.sentence_char_spans = spans("sentence_char_spans");
        text.passage_char_spans = spans("passage_char_spans");
        dump.text = std::move(text);
    }

    const json &tensors = detail::require(m, "tensors", "manifest");
    if (!tensors.is_array()) throw input_error("manifest.tensors: expected a list");
    std::vector<tensor_entry> entries;
    std::vector<std::pair<std::string, index_t>> kinds;
    std::vector<std::vector<index_t>> row_lists;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const json &t = tensors[i];
        const std::string ctx = "tensors[" + std::to_string(i) + "]";
        tensor_entry e;
        e.name = detail::field<std::string>(t, "name", ctx);
        e.dtype = detail::field<std::string>(t, "dtype", ctx);
        e.shape = detail::field<std::vector<index_t>>(t, "shape", ctx);
        e.byte_offset = detail::field<std::uint64_t>(t, "byte_offset", ctx);
        e.byte_len = detail::field<std::uint64_t>(t, "byte_len", ctx);
        kinds.emplace_back(detail::field<std::string>(t, "kind", ctx), detail::field<index_t>(t, "layer", ctx));
        row_lists.push_back(detail::field<std::vector<index_t>>(t, "row_indices", ctx));
        entries.push_back(std::move(e));
    }
    check_tensor_layout(entries, data_len);

    for (std::size_t i = 0; i < entries.size(); ++i) {
        const tensor_entry &e = entries[i];
        const auto &[kind, layer] = kinds[i];
        const auto n_rows = static_cast<index_t>(row_lists[i].size());
        std::vector<index_t> expect;
        if (kind == "attention") {
            expect = {dump.dims.n_heads, n_rows, dump.dims.seq_len};
        } else if (kind == "hidden") {
            expect = {n_rows, dump.dims.hidden};
        } else {
            throw input_error("tensor '" + e.name + "': unknown kind '" + kind + "'");
        }
        if (e.shape != expect) throw input_error("tensor '" + e.name + "': shape does not match dims and row_indices");

        std::vector<float> values;
        detail::get_f32(raw + data_begin + e.byte_offset, e.byte_len / 4, values);
        if (kind == "attention") {
            dump.attention.push_back({layer, std::move(row_lists[i]), std::move(values)});
        } else {
            dump.hidden.push_back({layer, std::move(row_lists[i]), std::move(values)});
        }
    }

    validate(dump);
    return dump;
}

void save_dump(const introspection_dump &dump, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw input_error("cannot open '" + path.string() + "' for writing");
    write_dump(dump, out);
}

introspection_dump load_dump(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open '" + path.string() + "'");
    try {
        return read_dump(in);
    } catch (const input_error &e) {
        throw input_error(path.string() + ": " + e.what());
    } catch (const invariant_error &e) {
        throw invariant_error(path.string() + ": " + e.what());
    }
}

} // namespace lot
