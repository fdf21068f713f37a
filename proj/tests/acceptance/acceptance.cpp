// One PASS/FAIL line per primary criterion; exit status 1 if any fails.

#include "commands.hpp"

#include "lot/dump.hpp"
#include "lot/metrics.hpp"
#include "lot/pipeline.hpp"
#include "lot/prompt.hpp"
#include "lot/retrieval.hpp"
#include "lot/synth.hpp"
#include "lot/textual.hpp"
#include "lot/visual.hpp"

#include "oracle.hpp"
#include "random_dump.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

using namespace lot;

namespace {

constexpr double tol = 1e-6;

// Counts failures and keeps the first few messages.
struct tally {
    long checks = 0;
    long failures = 0;
    std::vector<std::string> notes;

    void expect(bool ok, const std::string &what) {
        ++checks;
        if (ok) return;
        ++failures;
        if (notes.size() < 5) notes.push_back(what);
    }
    void close(double a, double b, double eps, const std::string &what) {
        expect(std::abs(a - b) <= eps, what + ": " + std::to_string(a) + " vs " + std::to_string(b));
    }
    void close_all(const std::vector<double> &a, const std::vector<double> &b, const std::string &what) {
        expect(a.size() == b.size(), what + ": length");
        for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) close(a[i], b[i], tol, what);
    }
};

struct criterion {
    std::string name;
    double budget_s; // 0 = no runtime bound
    std::function<void(tally &)> body;
};

relevance_map as_map(const std::vector<double> &v, index_t rows, index_t cols) { return {rows, cols, v}; }

// --- oracle equivalence ---------------------------------------------------

void retrieval_case(std::mt19937_64 &g, index_t max_n, index_t max_dim, tally &t, const std::string &tag) {
    knowledge_base kb;
    const index_t n = 1 + static_cast<index_t>(g() % static_cast<std::uint64_t>(max_n));
    kb.dim = 1 + static_cast<index_t>(g() % static_cast<std::uint64_t>(max_dim));
    const bool coarse = g() % 2 == 0; // small integer grid: many exact ties
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    kb.embeddings.resize(static_cast<std::size_t>(n * kb.dim));
    for (float &x : kb.embeddings) x = coarse ? static_cast<float>(static_cast<int>(g() % 3) - 1) : u(g);
    if (g() % 4 == 0 && n > 1) {
        // duplicate rows force identical scores
        const auto a = static_cast<std::size_t>(g() % static_cast<std::uint64_t>(n));
        const auto b = static_cast<std::size_t>(g() % static_cast<std::uint64_t>(n));
        std::copy_n(kb.embeddings.begin() + static_cast<std::ptrdiff_t>(a * static_cast<std::size_t>(kb.dim)), kb.dim,
                    kb.embeddings.begin() + static_cast<std::ptrdiff_t>(b * static_cast<std::size_t>(kb.dim)));
    }
    for (index_t i = 0; i < n; ++i) kb.entities.push_back({"E" + std::to_string(i), "t", "s" + std::to_string(i)});
    std::vector<float> q(static_cast<std::size_t>(kb.dim));
    for (float &x : q) x = coarse ? static_cast<float>(static_cast<int>(g() % 3) - 1) : u(g);
    // n <= N is a precondition
    const bool use_default = n >= 3 && g() % 3 == 0;
    const index_t top = use_default ? 3 : 1 + static_cast<index_t>(g() % static_cast<std::uint64_t>(std::min<index_t>(n, 12)));
    const auto got = use_default ? retrieve(kb, q) : retrieve(kb, q, top);
    const auto want = oracle::top_n(kb.embeddings, kb.dim, q, top);
    t.expect(got.ranked.size() == want.size(), tag + ": result count");
    for (std::size_t i = 0; i < std::min(got.ranked.size(), want.size()); ++i) {
        t.expect(got.ranked[i].index == want[i].first, tag + ": rank order at " + std::to_string(i));
        t.close(got.ranked[i].score, want[i].second, tol, tag + ": score");
    }
}

void oracle_equivalence(tally &t) {
    std::mt19937_64 g(2024);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto d = oracle::random_dump(seed, {4, 4, 64, 32, true});
        const std::string tag = "seed " + std::to_string(seed);
        const auto layers = resolve_layers(d, {});
        const auto &obj = *d.segmentation.object_indices;

        // object-to-visual aggregate
        const auto a_vis = aggregate_visual(object_to_visual(d, obj, layers.vis));
        t.close_all(a_vis, oracle::object_visual(d, obj, layers.vis), tag + " a_vis");

        // sink dims and scores
        const auto dims = detect_sink_dims(d, d.segmentation.bos_index, layers.sink);
        const auto want_dims =
            d.sink_dims ? *d.sink_dims : oracle::sink_dims(d, *d.segmentation.bos_index, layers.sink, 5.0);
        t.expect(dims == want_dims, tag + " sink dims");
        if (!dims.empty()) {
            const auto s = sink_scores(d, dims, layers.sink);
            t.close_all(s, oracle::sink_scores(d, dims, layers.sink), tag + " s_sink");
        }

        // last-to-context aggregate and sentence means
        if (!d.segmentation.context.empty()) {
            const auto a_txt = aggregate_textual(last_to_context(d, d.segmentation.last_index, layers.txt));
            t.close_all(a_txt, oracle::last_context(d, d.segmentation.last_index, layers.txt), tag + " a_txt");
            const auto spans = context_relative_spans(d.segmentation);
            t.close_all(sentence_scores(a_txt, spans), oracle::sentence_means(a_txt, spans), tag + " sentences");
        }

        // percentile
        const double q = std::uniform_real_distribution<double>(0.0, 100.0)(g);
        t.close(percentile(a_vis, q), oracle::percentile(a_vis, q), tol, tag + " percentile");

        const index_t gh = d.dims.grid_h, gw = d.dims.grid_w;
        double total = 0.0;
        for (double v : a_vis) total += v;
        if (total > 0.0) {
            // centroid and spread
            const auto m = moments(as_map(a_vis, gh, gw));
            const auto o = oracle::full_moments(a_vis, gh, gw);
            t.close(m.cx, o.cx, tol, tag + " cx");
            t.close(m.cy, o.cy, tol, tag + " cy");
            t.close(m.sx, o.sx, tol, tag + " sx");
            t.close(m.sy, o.sy, tol, tag + " sy");

            // morphology and min-max
            const auto b = bbox_morphological(as_map(a_vis, gh, gw), d.image);
            const auto ob = oracle::morph_box(a_vis, gh, gw, 0.1, 3);
            t.expect(b.grid.x1 == double(ob.x1) && b.grid.y1 == double(ob.y1) && b.grid.x2 == double(ob.x2) &&
                         b.grid.y2 == double(ob.y2),
                     tag + " morphological box");
            const auto mm = bbox_min_max(as_map(a_vis, gh, gw), d.image);
            const auto om = oracle::min_max_box(a_vis, gh, gw);
            t.expect(mm.grid.x1 == double(om.x1) && mm.grid.y1 == double(om.y1) && mm.grid.x2 == double(om.x2) &&
                         mm.grid.y2 == double(om.y2),
                     tag + " min-max box");
        }

        retrieval_case(g, 64, 32, t, tag + " retrieval");
    }
}

// --- planted recovery -----------------------------------------------------

synth_spec planted_spec(std::mt19937_64 &g, std::uint64_t seed) {
    auto pick = [&](index_t lo, index_t hi) { return lo + static_cast<index_t>(g() % static_cast<std::uint64_t>(hi - lo + 1)); };
    synth_spec s;
    const index_t gh = pick(3, 6), gw = pick(3, 6);
    const index_t sentences = pick(2, 5);
    s.question_tokens = pick(2, 5);
    s.object_tokens = pick(1, s.question_tokens);
    s.sentences = sentences;
    const index_t n_ctx = sentences * pick(2, 5);
    s.dims = {pick(2, 4), pick(1, 3), gh * gw + s.question_tokens + n_ctx + 1, pick(16, 32), gh, gw};
    const index_t n = gh * gw;
    const peak_cell peak{pick(0, gh - 1), pick(0, gw - 1), std::uniform_real_distribution<double>(0.9, 0.99)(g)};
    s.peaks = {peak};
    std::vector<index_t> free;
    for (index_t v = 0; v < n; ++v) {
        if (v != peak.h * gw + peak.w) free.push_back(v);
    }
    std::shuffle(free.begin(), free.end(), g);
    free.resize(static_cast<std::size_t>(pick(1, 3)));
    std::sort(free.begin(), free.end());
    s.sink_tokens = free;
    std::vector<index_t> dims(static_cast<std::size_t>(s.dims.hidden));
    for (index_t m = 0; m < s.dims.hidden; ++m) dims[static_cast<std::size_t>(m)] = m;
    std::shuffle(dims.begin(), dims.end(), g);
    dims.resize(static_cast<std::size_t>(pick(1, 2)));
    std::sort(dims.begin(), dims.end());
    s.sink_dims = dims;
    s.sink_magnitude = std::uniform_real_distribution<double>(20.0, 60.0)(g);
    s.evidence_sentence = pick(0, sentences - 1);
    s.seed = seed;
    return s;
}

void planted_recovery(tally &t) {
    std::mt19937_64 g(77);
    for (std::uint64_t k = 0; k < 200; ++k) {
        const auto spec = planted_spec(g, 1000 + k);
        const std::string tag = "spec " + std::to_string(k);
        synth_output out;
        try {
            out = generate(spec);
        } catch (const std::exception &e) {
            t.expect(false, tag + ": " + e.what());
            continue;
        }
        const index_t n = spec.dims.n_visual();
        const auto ns = static_cast<double>(spec.sink_tokens.size());
        selection_config c;
        c.q = 100.0 * (static_cast<double>(n) - ns - 0.5) / static_cast<double>(n - 1);
        for (auto strategy : {bbox_strategy::weighted_centroid, bbox_strategy::min_max, bbox_strategy::morphological}) {
            c.strategy = strategy;
            evidence_report rep;
            try {
                rep = select_evidence(out.dump, c);
            } catch (const std::exception &e) {
                t.expect(false, tag + ": " + e.what());
                continue;
            }
            const auto &peak = out.truth.peaks.front();
            t.expect(rep.box.grid.contains_cell(peak.h, peak.w), tag + " " + std::string(to_string(strategy)) + " box");
            if (strategy != bbox_strategy::weighted_centroid) continue;
            std::vector<bool> planted(static_cast<std::size_t>(n), false);
            for (index_t s : out.truth.sink_tokens) planted[static_cast<std::size_t>(s)] = true;
            t.expect(rep.sink_filtered && rep.sinks.mask == planted, tag + " sink mask");
            t.expect(rep.textual && rep.textual->selected == std::vector<index_t>{out.truth.evidence_sentence},
                     tag + " evidence sentence");
        }
    }
}

// --- centroid geometry ----------------------------------------------------

void centroid_geometry(tally &t) {
    std::mt19937_64 g(6);
    for (int k = 0; k < 2000; ++k) {
        const index_t r = 1 + static_cast<index_t>(g() % 12), c = 1 + static_cast<index_t>(g() % 12);
        std::vector<double> v(static_cast<std::size_t>(r * c));
        const int style = static_cast<int>(g() % 3);
        for (double &x : v) {
            const double u = std::uniform_real_distribution<double>(0, 1)(g);
            x = style == 0 ? u : style == 1 ? (g() % 4 == 0 ? u : 0.0) : std::pow(u, 8.0);
        }
        v[static_cast<std::size_t>(g() % v.size())] += 0.5;
        const image_meta img{c * 14 + static_cast<index_t>(g() % 5), r * 14 + static_cast<index_t>(g() % 5), std::nullopt};
        const auto b = bbox_weighted_centroid(as_map(v, r, c), img, 2.0);
        const std::string tag = "map " + std::to_string(k);
        const auto &gb = b.grid;
        t.expect(gb.x1 >= 0 && gb.y1 >= 0 && gb.x2 <= double(c - 1) && gb.y2 <= double(r - 1), tag + " clamped");
        t.expect(gb.x1 <= gb.x2 && gb.y1 <= gb.y2, tag + " ordered");
        t.expect(b.px.x1 >= 0 && b.px.y1 >= 0 && b.px.x2 <= double(img.width_px) + 1e-9 &&
                     b.px.y2 <= double(img.height_px) + 1e-9 && b.px.x1 < b.px.x2 && b.px.y1 < b.px.y2,
                 tag + " pixel box");
        const double cw = double(img.width_px) / double(c), ch = double(img.height_px) / double(r);
        t.expect(b.px.width() >= cw - 1e-9 && b.px.height() >= ch - 1e-9, tag + " at least one cell");
        t.expect(gb.x2 - gb.x1 >= 0.0 && gb.y2 - gb.y1 >= 0.0, tag + " minimum size");
    }

    // two equal cells mirrored about the center of an even grid
    for (index_t side : {2, 4, 6, 8, 10}) {
        for (index_t off = 0; off < side / 2; ++off) {
            std::vector<double> v(static_cast<std::size_t>(side * side), 0.0);
            v[static_cast<std::size_t>(off * side + off)] = 1.0;
            v[static_cast<std::size_t>((side - 1 - off) * side + (side - 1 - off))] = 1.0;
            const image_meta img{side * 28, side * 28, std::nullopt};
            const auto b = bbox_weighted_centroid(as_map(v, side, side), img, 2.0);
            const double mid = double(side - 1) / 2.0;
            const std::string tag = "symmetric " + std::to_string(side) + "/" + std::to_string(off);
            t.expect(b.grid.x1 + b.grid.x2 == 2.0 * mid && b.grid.y1 + b.grid.y2 == 2.0 * mid, tag + " grid");
            t.expect(b.px.x1 + b.px.x2 == double(img.width_px) && b.px.y1 + b.px.y2 == double(img.height_px),
                     tag + " pixels");
        }
    }
}

// --- formats ------------------------------------------------------------

std::string slurp(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void formats(tally &t) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto d = oracle::random_dump(5000 + seed);
        std::stringstream a;
        write_dump(d, a);
        const std::string bytes = a.str();
        std::stringstream in(bytes);
        const auto back = read_dump(in);
        t.expect(back == d, "dump " + std::to_string(seed) + " value round trip");
        std::stringstream b;
        write_dump(back, b);
        t.expect(b.str() == bytes, "dump " + std::to_string(seed) + " byte round trip");
    }

    const std::string golden_dir = LOT_GOLDEN_DIR;
    t.expect(system_prompt() == slurp(golden_dir + "/system_prompt.txt"), "system prompt golden");
    {
        const std::string ctx = "[sentence]\n\n...\n\n[evidence_sentence]\n\n...\n\n[sentence]";
        const std::vector<interval> spans{{0, 10}, {12, 15}, {17, 36}, {38, 41}, {43, 53}};
        const std::vector<index_t> sel{2};
        const auto p = build_prompt("[question]", ctx, spans, sel, {0, 0, 10, 10}, {10, 10, std::nullopt});
        t.expect(p.user_text == slurp(golden_dir + "/user_template.txt"), "user template golden");
    }

    std::mt19937_64 g(501);
    prompt_options bare;
    bare.markers = {"", "", "", ""};
    const image_meta img{120, 90, std::nullopt};
    for (int k = 0; k < 500; ++k) {
        std::string ctx;
        std::vector<interval> spans;
        const std::size_t ns = 1 + g() % 10;
        for (std::size_t s = 0; s < ns; ++s) {
            if (s > 0) ctx += g() % 3 == 0 ? "\n\n" : " ";
            const auto b = static_cast<index_t>(ctx.size());
            ctx += "Fact " + std::to_string(g() % 1000) + (g() % 2 == 0 ? " holds." : " is known.");
            spans.push_back({b, static_cast<index_t>(ctx.size())});
        }
        std::vector<index_t> sel;
        for (std::size_t s = 0; s < ns; ++s) {
            if (g() % 3 == 0) sel.push_back(static_cast<index_t>(s));
        }
        prompt_options o;
        o.gran = static_cast<granularity>(g() % 4);
        o.include_full_image = g() % 2 == 0;
        bare.gran = o.gran;
        bare.include_full_image = o.include_full_image;
        const pixel_rect box{double(g() % 60), double(g() % 45), double(60 + g() % 61), double(45 + g() % 46)};
        const auto p = build_prompt("What is it?", ctx, spans, sel, box, img, o);
        const auto u = build_prompt("What is it?", ctx, spans, sel, box, img, bare);
        t.expect(strip_markers(p.user_text, o.markers) == u.user_text, "strip round trip " + std::to_string(k));
        t.expect(strip_markers(p.system_text, o.markers) == u.system_text, "system strip " + std::to_string(k));
    }
}

// --- metric algebra -------------------------------------------------------

void metric_algebra(tally &t) {
    std::mt19937_64 g(10000);
    const image_meta img{200, 150, std::nullopt};
    auto rnd = [&] {
        const int x1 = static_cast<int>(g() % 199), y1 = static_cast<int>(g() % 149);
        const int x2 = x1 + 1 + static_cast<int>(g() % static_cast<unsigned>(200 - x1));
        const int y2 = y1 + 1 + static_cast<int>(g() % static_cast<unsigned>(150 - y1));
        return std::array<int, 4>{x1, y1, std::min(x2, 200), std::min(y2, 150)};
    };
    for (int k = 0; k < 10000; ++k) {
        const auto a = rnd(), b = rnd();
        const pixel_rect pa{double(a[0]), double(a[1]), double(a[2]), double(a[3])};
        const pixel_rect pb{double(b[0]), double(b[1]), double(b[2]), double(b[3])};
        const auto ab = compare(pa, pb, img), ba = compare(pb, pa, img);
        const double inter = oracle::pixel_intersection(a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3]);
        const std::string tag = "pair " + std::to_string(k);
        t.expect(ab.iou <= std::min(ab.coverage, ab.precision) + 1e-12, tag + " iou bound");
        t.close(ab.iou, ba.iou, 1e-12, tag + " iou symmetry");
        t.close(ab.coverage, ba.precision, 1e-12, tag + " coverage/precision swap");
        t.close(ab.center_distance, ba.center_distance, 1e-12, tag + " distance symmetry");
        t.close(ab.coverage, inter / pb.area(), 1e-9, tag + " coverage oracle");
        t.close(ab.iou, inter / (pa.area() + pb.area() - inter), 1e-9, tag + " iou oracle");
    }
    const image_meta sq{100, 100, std::nullopt};
    const auto h = compare({0, 0, 50, 100}, {0, 0, 100, 100}, sq);
    const double inter = oracle::pixel_intersection(0, 0, 50, 100, 0, 0, 100, 100);
    t.close(h.iou, inter / (5000.0 + 10000.0 - inter), 1e-9, "half image iou oracle");
    t.close(h.iou, 0.5, 1e-9, "half image iou");
    t.close(h.coverage, 0.5, 1e-9, "half image coverage");
    t.close(h.precision, 1.0, 1e-9, "half image precision");
    t.close(h.center_distance, 25.0 / std::sqrt(20000.0), 1e-9, "half image distance");
    t.close(h.center_distance, 0.17678, 1e-5, "half image distance value");
}

// --- token statistics -----------------------------------------------------

void token_statistics(tally &t) {
    cli::stats_inputs in;
    in.before = 291;
    in.after = 208;
    in.answer_tokens = 18;
    in.extra_tokens = 1;
    const auto s = cli::stats(in, {});
    t.close(s["reduction_pct"].get<double>(), 28.5, 0.1, "reduction");
    t.close(s["overhead_pct"].get<double>(), 5.6, 0.1, "overhead");
}

// --- retrieval ------------------------------------------------------------

void retrieval_exactness(tally &t) {
    std::mt19937_64 g(31337);
    for (int k = 0; k < 1000; ++k) {
        // mostly small KBs, a fifth of them up to the full size
        const index_t max_n = g() % 5 == 0 ? 10000 : 300;
        retrieval_case(g, max_n, 64, t, "kb " + std::to_string(k));
    }
    knowledge_base kb;
    kb.dim = 2;
    for (int i = 0; i < 6; ++i) {
        kb.entities.push_back({"T" + std::to_string(i), "", "x"});
        kb.embeddings.insert(kb.embeddings.end(), {1.0f, 0.0f});
    }
    const std::vector<float> q{1, 0};
    const auto r = retrieve(kb, q);
    t.expect(r.n == 3 && r.ranked.size() == 3, "default n is 3");
    t.expect(r.ranked.size() == 3 && r.ranked[0].index == 0 && r.ranked[1].index == 1 && r.ranked[2].index == 2,
             "all-tie order");
}

} // namespace

int main() {
    const std::vector<criterion> all = {
        {"oracle equivalence (1000 dumps, 1e-6)", 60.0, oracle_equivalence},
        {"planted recovery (200 specs)", 30.0, planted_recovery},
        {"weighted-centroid geometry (beta = 2)", 0.0, centroid_geometry},
        {"bit-exact formats (100 dumps, goldens, 500 strips)", 0.0, formats},
        {"metric algebra (10000 pairs, half-image 1e-9)", 0.0, metric_algebra},
        {"token statistics (28.5%, 5.6%)", 0.0, token_statistics},
        {"retrieval exactness (1000 KBs, ties, n = 3)", 0.0, retrieval_exactness},
    };
    int failed = 0;
    for (const auto &c : all) {
        tally t;
        const auto start = std::chrono::steady_clock::now();
        try {
            c.body(t);
        } catch (const std::exception &e) {
            t.expect(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.budget_s > 0.0 && secs > c.budget_s) t.expect(false, "runtime " + std::to_string(secs) + " s over budget");
        const bool ok = t.failures == 0;
        if (!ok) ++failed;
        std::printf("%s %s [%ld checks, %.2f s]\n", ok ? "PASS" : "FAIL", c.name.c_str(), t.checks, secs);
        for (const auto &n : t.notes) std::printf("    %s\n", n.c_str());
    }
    std::printf("%zu/%zu criteria passed\n", all.size() - std::size_t(failed), all.size());
    return failed == 0 ? 0 : 1;
}
