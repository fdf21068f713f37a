#include "lot/visual.hpp"

#include "lot/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lot {

layer_ranges default_layer_ranges(index_t n_layers) {
    if (n_layers < 1) throw invariant_error("layer ranges: n_layers must be >= 1");
    layer_ranges out;
    for (index_t l = n_layers / 2; l < n_layers; ++l) out.txt.push_back(l);
    const index_t vis_begin = n_layers / 4;
    const index_t vis_end = std::max(3 * n_layers / 4, vis_begin + 1);
    for (index_t l = vis_begin; l < vis_end; ++l) out.vis.push_back(l);
    out.sink = out.vis;
    return out;
}

std::vector<attention_block> object_to_visual(const introspection_dump &dump, std::span<const index_t> object_tokens,
                                              std::span<const index_t> layers) {
    if (object_tokens.empty()) throw invariant_error("object-to-visual: empty object token set");
    if (layers.empty()) throw invariant_error("object-to-visual: empty layer list");
    const interval vis = dump.segmentation.visual;
    std::vector<attention_block> out;
    out.reserve(layers.size() * static_cast<std::size_t>(dump.dims.n_heads));
    for (index_t layer : layers) {
        for (index_t head = 0; head < dump.dims.n_heads; ++head) {
            attention_block block{layer, head, static_cast<index_t>(object_tokens.size()), vis.size(), {}};
            block.values.reserve(static_cast<std::size_t>(block.rows * block.cols));
            for (index_t tok : object_tokens) {
                auto row = attention_row(dump, layer, head, tok);
                block.values.insert(block.values.end(), row.begin() + vis.begin, row.begin() + vis.end);
            }
            out.push_back(std::move(block));
        }
    }
    return out;
}

std::vector<double> aggregate_visual(std::span<const attention_block> blocks) {
    if (blocks.empty()) throw invariant_error("aggregate: no attention blocks");
    const index_t cols = blocks.front().cols;
    std::vector<double> acc(static_cast<std::size_t>(cols), 0.0);
    std::size_t n_rows = 0;
    for (const attention_block &b : blocks) {
        if (b.cols != cols) throw invariant_error("aggregate: blocks disagree on column count");
        for (index_t r = 0; r < b.rows; ++r) {
            const float *row = b.values.data() + r * b.cols;
            for (index_t c = 0; c < cols; ++c) acc[static_cast<std::size_t>(c)] += row[c];
        }
        n_rows += static_cast<std::size_t>(b.rows);
    }
    if (n_rows == 0) throw invariant_error("aggregate: no attention rows");
    for (double &v : acc) v /= static_cast<double>(n_rows);
    return acc;
}

namespace {

double rms(std::span<const float> row) {
    double ss = 0.0;
    for (float v : row) ss += static_cast<double>(v) * v;
    return std::sqrt(ss / static_cast<double>(row.size()));
}

} // namespace

std::vector<index_t> detect_sink_dims(const introspection_dump &dump, std::optional<index_t> bos_index,
                                      std::span<const index_t> layers, double kappa) {
    if (dump.sink_dims) return *dump.sink_dims;
    if (!bos_index) throw invariant_error("sink dimensions: dump has no BOS index and no precomputed sink_dims");
    if (layers.empty()) throw invariant_error("sink dimensions: empty layer list");

    const auto d = static_cast<std::size_t>(dump.dims.hidden);
    std::vector<std::size_t> votes(d, 0);
    for (index_t layer : layers) {
        auto row = hidden_row(dump, layer, *bos_index);
        const double norm = rms(row);
        if (norm == 0.0) {
            throw invariant_error("sink dimensions: BOS hidden state is all zeros at layer " + std::to_string(layer));
        }
        for (std::size_t m = 0; m < d; ++m) {
            if (std::abs(static_cast<double>(row[m])) / norm > kappa) ++votes[m];
        }
    }
    std::vector<index_t> out;
    for (std::size_t m = 0; m < d; ++m) {
        if (2 * votes[m] > layers.size()) out.push_back(static_cast<index_t>(m));
    }
    return out;
}

std::vector<double> sink_scores(const introspection_dump &dump, std::span<const index_t> sink_dims,
                                std::span<const index_t> layers) {
    if (sink_dims.empty()) throw invariant_error("sink scores: no sink dimensions");
    if (layers.empty()) throw invariant_error("sink scores: empty layer list");
    for (index_t m : sink_dims) {
        if (m < 0 || m >= dump.dims.hidden) throw invariant_error("sink scores: sink dimension out of range");
    }
    const interval vis = dump.segmentation.visual;
    std::vector<double> out(static_cast<std::size_t>(vis.size()), 0.0);
    for (index_t layer : layers) {
        for (index_t v = vis.begin; v < vis.end; ++v) {
            auto row = hidden_row(dump, layer, v);
            const double norm = rms(row);
            if (norm == 0.0) {
                throw invariant_error("sink scores: zero-norm hidden state for token " + std::to_string(v) +
                                      " at layer " + std::to_string(layer));
            }
            double peak = 0.0;
            for (index_t m : sink_dims) peak = std::max(peak, std::abs(static_cast<double>(row[m])));
            out[static_cast<std::size_t>(v - vis.begin)] += peak / norm;
        }
    }
    for (double &s : out) s /= static_cast<double>(layers.size());
    return out;
}

double percentile(std::span<const double> values, double q) {
    if (values.empty()) throw invariant_error("percentile of an empty set");
    if (!(q >= 0.0 && q <= 100.0)) throw invariant_error("percentile q must lie in [0, 100]");
    std::vector<double> v(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
    const double lo_val = v[lo];
    if (frac == 0.0 || lo + 1 >= v.size()) return lo_val;
    const double hi_val = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
    return lo_val + frac * (hi_val - lo_val);
}

relevance_map reshape(std::span<const double> a_vis, index_t grid_h, index_t grid_w) {
    if (grid_h < 1 || grid_w < 1 || static_cast<index_t>(a_vis.size()) != grid_h * grid_w) {
        throw invariant_error("relevance map: vector length does not match the visual grid");
    }
    return {grid_h, grid_w, std::vector<double>(a_vis.begin(), a_vis.end())};
}

sink_filter_result filter_sinks(std::span<const double> a_vis, std::span<const double> s_sink, double q,
                                index_t grid_h, index_t grid_w) {
    if (a_vis.size() != s_sink.size()) throw invariant_error("sink filter: a_vis and s_sink lengths differ");
    sink_filter_result out;
    out.tau = percentile(s_sink, q);
    out.mask.resize(s_sink.size());
    std::vector<double> kept(a_vis.begin(), a_vis.end());
    for (std::size_t i = 0; i < s_sink.size(); ++i) {
        out.mask[i] = s_sink[i] > out.tau;
        if (out.mask[i]) kept[i] = 0.0;
    }
    out.relevance.grid = reshape(kept, grid_h, grid_w);
    out.relevance.a_vis = std::move(kept);
    return out;
}

std::string_view to_string(bbox_strategy s) {
    switch (s) {
    case bbox_strategy::weighted_centroid: return "weighted_centroid";
    case bbox_strategy::min_max: return "min_max";
    case bbox_strategy::morphological: return "morphological";
    }
    return "unknown";
}

bbox_strategy parse_bbox_strategy(std::string_view name) {
    if (name == "weighted_centroid") return bbox_strategy::weighted_centroid;
    if (name == "min_max") return bbox_strategy::min_max;
    if (name == "morphological") return bbox_strategy::morphological;
    throw input_error("unknown bbox strategy '" + std::string(name) + "'");
}

bbox finalize_box(grid_box raw, index_t grid_h, index_t grid_w, const image_meta &image, bbox_strategy strategy) {
    const auto gw = static_cast<double>(grid_w - 1);
    const auto gh = static_cast<double>(grid_h - 1);
    auto clamp = [](double v, double hi) { return std::clamp(std::isnan(v) ? 0.0 : v, 0.0, hi); };
    grid_box g{clamp(raw.x1, gw), clamp(raw.y1, gh), clamp(raw.x2, gw), clamp(raw.y2, gh)};
    // one-cell minimum: a collapsed or inverted extent shrinks to its midpoint cell
    if (g.x2 < g.x1) g.x1 = g.x2 = 0.5 * (g.x1 + g.x2);
    if (g.y2 < g.y1) g.y1 = g.y2 = 0.5 * (g.y1 + g.y2);

    const double cell_w = static_cast<double>(image.width_px) / static_cast<double>(grid_w);
    const double cell_h = static_cast<double>(image.height_px) / static_cast<double>(grid_h);
    const auto W = static_cast<double>(image.width_px);
    const auto H = static_cast<double>(image.height_px);
    pixel_rect px{std::clamp(g.x1 * cell_w, 0.0, W), std::clamp(g.y1 * cell_h, 0.0, H),
                  std::clamp((g.x2 + 1.0) * cell_w, 0.0, W), std::clamp((g.y2 + 1.0) * cell_h, 0.0, H)};
    return {g, px, strategy};
}

namespace {

void check_map(const relevance_map &map) {
    if (map.rows < 1 || map.cols < 1 || static_cast<index_t>(map.values.size()) != map.rows * map.cols) {
        throw invariant_error("relevance map: shape mismatch");
    }
    for (double v : map.values) {
        if (!std::isfinite(v) || v < 0.0) throw invariant_error("relevance map: entries must be finite and >= 0");
    }
}

} // namespace

weighted_moments moments(const relevance_map &map) {
    check_map(map);
    std::vector<double> col(static_cast<std::size_t>(map.cols), 0.0);
    std::vector<double> row(static_cast<std::size_t>(map.rows), 0.0);
    for (index_t h = 0; h < map.rows; ++h) {
        for (index_t w = 0; w < map.cols; ++w) {
            const double v = map.at(h, w);
            col[static_cast<std::size_t>(w)] += v;
            row[static_cast<std::size_t>(h)] += v;
        }
    }
    const double total = std::accumulate(col.begin(), col.end(), 0.0);
    if (!(total > 0.0)) throw invariant_error("no surviving relevance mass");

    auto first_two = [total](const std::vector<double> &marginal) {
        double mean = 0.0;
        for (std::size_t i = 0; i < marginal.size(); ++i) mean += static_cast<double>(i) * marginal[i] / total;
        double var = 0.0;
        for (std::size_t i = 0; i < marginal.size(); ++i) {
            const double dx = static_cast<double>(i) - mean;
            var += dx * dx * marginal[i] / total;
        }
        return std::pair{mean, std::sqrt(var)};
    };
    const auto [cx, sx] = first_two(col);
    const auto [cy, sy] = first_two(row);
    return {cx, cy, sx, sy};
}

bbox bbox_weighted_centroid(const relevance_map &map, const image_meta &image, double beta) {
    if (!(beta >= 0.0)) throw invariant_error("weighted centroid: beta must be >= 0");
    const weighted_moments m = moments(map);
    const grid_box raw{m.cx - beta * m.sx, m.cy - beta * m.sy, m.cx + beta * m.sx, m.cy + beta * m.sy};
    return finalize_box(raw, map.rows, map.cols, image, bbox_strategy::weighted_centroid);
}

bbox bbox_min_max(const relevance_map &map, const image_meta &image) {
    check_map(map);
    index_t h_lo = map.rows, h_hi = -1, w_lo = map.cols, w_hi = -1;
    for (index_t h = 0; h < map.rows; ++h) {
        for (index_t w = 0; w < map.cols; ++w) {
            if (map.at(h, w) > 0.0) {
                h_lo = std::min(h_lo, h);
                h_hi = std::max(h_hi, h);
                w_lo = std::min(w_lo, w);
                w_hi = std::max(w_hi, w);
            }
        }
    }
    if (h_hi < 0) throw invariant_error("no surviving relevance mass");
    const grid_box raw{static_cast<double>(w_lo), static_cast<double>(h_lo), static_cast<double>(w_hi),
                       static_cast<double>(h_hi)};
    return finalize_box(raw, map.rows, map.cols, image, bbox_strategy::min_max);
}

std::vector<std::uint8_t> morphological_close(std::span<const std::uint8_t> mask, index_t rows, index_t cols,
                                              index_t kernel) {
    if (kernel < 1 || kernel % 2 == 0) throw invariant_error("morphology: kernel size must be odd and >= 1");
    if (static_cast<index_t>(mask.size()) != rows * cols) throw invariant_error("morphology: mask shape mismatch");
    const index_t r = kernel / 2;
    // dilation on the grid padded by r on every side
    const index_t prow = rows + 2 * r;
    const index_t pcol = cols + 2 * r;
    std::vector<std::uint8_t> dilated(static_cast<std::size_t>(prow * pcol), 0);
    for (index_t h = 0; h < rows; ++h) {
        for (index_t w = 0; w < cols; ++w) {
            if (mask[static_cast<std::size_t>(h * cols + w)] == 0) continue;
            // cell (h, w) sits at (h + r, w + r) in padded space
            for (index_t dh = 0; dh < kernel; ++dh) {
                for (index_t dw = 0; dw < kernel; ++dw) {
                    dilated[static_cast<std::size_t>((h + dh) * pcol + (w + dw))] = 1;
                }
            }
        }
    }
    std::vector<std::uint8_t> closed(mask.size(), 0);
    for (index_t h = 0; h < rows; ++h) {
        for (index_t w = 0; w < cols; ++w) {
            bool all = true;
            for (index_t dh = 0; dh < kernel && all; ++dh) {
                for (index_t dw = 0; dw < kernel; ++dw) {
                    if (dilated[static_cast<std::size_t>((h + dh) * pcol + (w + dw))] == 0) {
                        all = false;
                        break;
                    }
                }
            }
            closed[static_cast<std::size_t>(h * cols + w)] = all ? 1 : 0;
        }
    }
    return closed;
}

std::vector<index_t> label_components(std::span<const std::uint8_t> mask, index_t rows, index_t cols) {
    if (static_cast<index_t>(mask.size()) != rows * cols) throw invariant_error("labeling: mask shape mismatch");
    // two-pass union-find
    std::vector<index_t> parent(mask.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](index_t x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    };
    auto unite = [&](index_t a, index_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    };
    for (index_t h = 0; h < rows; ++h) {
        for (index_t w = 0; w < cols; ++w) {
            const index_t i = h * cols + w;
            if (mask[static_cast<std::size_t>(i)] == 0) continue;
            if (w > 0 && mask[static_cast<std::size_t>(i - 1)] != 0) unite(i, i - 1);
            if (h > 0 && mask[static_cast<std::size_t>(i - cols)] != 0) unite(i, i - cols);
        }
    }
    std::vector<index_t> labels(mask.size(), 0);
    std::vector<index_t> root_label(mask.size(), 0);
    index_t next = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] == 0) continue;
        const auto root = static_cast<std::size_t>(find(static_cast<index_t>(i)));
        if (root_label[root] == 0) root_label[root] = ++next;
        labels[i] = root_label[root];
    }
    return labels;
}

bbox bbox_morphological(const relevance_map &map, const image_meta &image, const morph_options &opts) {
    check_map(map);
    const auto peak_it = std::max_element(map.values.begin(), map.values.end());
    const double peak = *peak_it;
    if (!(peak > 0.0)) throw invariant_error("no surviving relevance mass");
    const auto peak_idx = static_cast<std::size_t>(peak_it - map.values.begin());

    std::vector<std::uint8_t> binary(map.values.size(), 0);
    bool any = false;
    for (std::size_t i = 0; i < binary.size(); ++i) {
        binary[i] = map.values[i] / peak > opts.threshold ? 1 : 0;
        any = any || binary[i] != 0;
    }
    if (!any) throw invariant_error("morphological box: binary map is empty after thresholding");

    const auto closed = morphological_close(binary, map.rows, map.cols, opts.kernel);
    const auto labels = label_components(closed, map.rows, map.cols);
    const index_t n_labels = *std::max_element(labels.begin(), labels.end());
    std::vector<index_t> sizes(static_cast<std::size_t>(n_labels + 1), 0);
    for (index_t l : labels) ++sizes[static_cast<std::size_t>(l)];

    const index_t peak_label = labels[peak_idx];
    index_t best = 0;
    for (index_t l = 1; l <= n_labels; ++l) {
        const index_t s = sizes[static_cast<std::size_t>(l)];
        if (best == 0 || s > sizes[static_cast<std::size_t>(best)] ||
            (s == sizes[static_cast<std::size_t>(best)] && l == peak_label)) {
            best = l;
        }
    }

    index_t h_lo = map.rows, h_hi = -1, w_lo = map.cols, w_hi = -1;
    for (index_t h = 0; h < map.rows; ++h) {
        for (index_t w = 0; w < map.cols; ++w) {
            if (labels[static_cast<std::size_t>(h * map.cols + w)] != best) continue;
            h_lo = std::min(h_lo, h);
            h_hi = std::max(h_hi, h);
            w_lo = std::min(w_lo, w);
            w_hi = std::max(w_hi, w);
        }
    }
    const grid_box raw{static_cast<double>(w_lo), static_cast<double>(h_lo), static_cast<double>(w_hi),
                       static_cast<double>(h_hi)};
    return finalize_box(raw, map.rows, map.cols, image, bbox_strategy::morphological);
}

} // namespace lot
