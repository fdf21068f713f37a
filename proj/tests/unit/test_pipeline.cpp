#include "lot/error.hpp"
#include "lot/pipeline.hpp"
#include "lot/synth.hpp"

#include "oracle.hpp"
#include "random_dump.hpp"

#include <doctest.h>

#include <cmath>

using namespace lot;

namespace {

synth_output planted() {
    synth_spec s;
    s.dims = {4, 2, 48, 24, 4, 5};
    s.sentences = 4;
    s.peaks = {{1, 2, 0.95}};
    s.sink_tokens = {4, 9};
    s.sink_dims = {6};
    s.evidence_sentence = 1;
    s.seed = 9;
    return generate(s);
}

} // namespace

TEST_CASE("layer resolution order") {
    auto d = planted().dump;
    selection_config c;
    auto r = resolve_layers(d, c);
    CHECK(r.vis == std::vector<index_t>{1, 2});
    CHECK(r.txt == std::vector<index_t>{2, 3});
    CHECK(r.sink == r.vis);

    d.layers = layer_ranges{{0}, {3}, {1}};
    r = resolve_layers(d, c);
    CHECK(r.vis == std::vector<index_t>{0});
    CHECK(r.sink == std::vector<index_t>{1});

    c.l_vis = std::vector<index_t>{2, 3};
    c.l_txt = std::vector<index_t>{0};
    r = resolve_layers(d, c);
    CHECK(r.vis == std::vector<index_t>{2, 3});
    CHECK(r.txt == std::vector<index_t>{0});
    CHECK(r.sink == std::vector<index_t>{1});

    d.layers.reset();
    r = resolve_layers(d, c);
    CHECK(r.sink == std::vector<index_t>{2, 3}); // follows L_vis by default

    c.l_vis = std::vector<index_t>{7};
    CHECK_THROWS_AS(resolve_layers(d, c), invariant_error);
    c.l_vis = std::vector<index_t>{2, 1};
    CHECK_THROWS_AS(resolve_layers(d, c), invariant_error);
}

TEST_CASE("provided object indices win over the heuristic") {
    auto d = planted().dump;
    auto f = resolve_focus(d);
    CHECK(f.source == focus_source::provided);
    CHECK(f.token_indices == *d.segmentation.object_indices);

    d.segmentation.object_indices.reset();
    d.text->question = "Which mountain range?";
    d.text->question_token_offsets = {{0, 5}, {6, 14}, {15, 21}};
    f = resolve_focus(d);
    CHECK(f.source == focus_source::heuristic);
    const index_t q0 = d.segmentation.question.begin;
    CHECK(f.token_indices == std::vector<index_t>{q0 + 1, q0 + 2});

    d.text.reset();
    CHECK_THROWS_AS(resolve_focus(d), invariant_error);
}

TEST_CASE("end-to-end on a planted dump") {
    const auto out = planted();
    selection_config c;
    c.q = 100.0 * (20 - 2 - 0.5) / 19;
    const auto rep = select_evidence(out.dump, c);
    CHECK(rep.sink_filtered);
    CHECK(rep.sinks.sink_dims == std::vector<index_t>{6});
    CHECK(rep.visual.a_vis[4] == 0.0);
    CHECK(rep.visual.a_vis[9] == 0.0);
    CHECK(rep.box.grid.contains_cell(1, 2));
    REQUIRE(rep.textual);
    CHECK(rep.textual->selected == std::vector<index_t>{1});

    for (auto s : {bbox_strategy::min_max, bbox_strategy::morphological}) {
        c.strategy = s;
        CHECK(select_evidence(out.dump, c).box.grid.contains_cell(1, 2));
    }
}

TEST_CASE("no detected sink dimension skips filtering") {
    synth_spec s;
    s.dims = {4, 2, 48, 24, 4, 5};
    s.sentences = 4;
    s.peaks = {{1, 2, 0.5}};
    s.seed = 3;
    const auto out = generate(s);
    const auto rep = select_evidence(out.dump);
    CHECK_FALSE(rep.sink_filtered);
    CHECK(rep.sinks.sink_dims.empty());
    CHECK(rep.visual.a_vis == rep.a_vis_raw);

    selection_config off;
    off.sink_filter = false;
    CHECK_FALSE(select_evidence(planted().dump, off).sink_filtered);
}

TEST_CASE("random dumps run end to end and agree with the oracles") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto d = oracle::random_dump(seed);
        selection_config c;
        evidence_report rep;
        try {
            rep = select_evidence(d, c);
        } catch (const invariant_error &e) {
            // filtering can remove every bit of mass on tiny grids
            CHECK(std::string(e.what()).find("no surviving relevance mass") != std::string::npos);
            continue;
        }
        const auto want = oracle::object_visual(d, *d.segmentation.object_indices, rep.layers.vis);
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(rep.a_vis_raw[i] - want[i]) <= 1e-6);
        if (rep.sink_filtered) {
            const auto s = oracle::sink_scores(d, rep.sinks.sink_dims, rep.layers.sink);
            const double tau = oracle::percentile(s, c.q);
            for (std::size_t i = 0; i < s.size(); ++i) {
                CHECK(std::abs(rep.sinks.scores[i] - s[i]) <= 1e-6);
                CHECK(rep.visual.a_vis[i] == (s[i] > tau ? 0.0 : rep.a_vis_raw[i]));
            }
        }
        CHECK(rep.textual.has_value() == !d.segmentation.context.empty());
    }
}

TEST_CASE("config validation") {
    const auto d = planted().dump;
    selection_config c;
    c.q = -1;
    CHECK_THROWS_AS(select_evidence(d, c), input_error);
    c = {};
    c.morph.kernel = 4;
    CHECK_THROWS_AS(select_evidence(d, c), input_error);
    c = {};
    c.beta = -0.5;
    CHECK_THROWS_AS(select_evidence(d, c), input_error);
}
