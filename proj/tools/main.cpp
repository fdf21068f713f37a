#include "commands.hpp"

#include "lot/error.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <thread>

namespace {

using namespace lot;
using namespace lot::cli;

struct selection_flags {
    std::string strategy = "weighted_centroid";
    std::string alpha_mode = "argmax";
    std::string l_vis;
    std::string l_txt;
    std::string l_sink;
    bool no_sink_filter = false;
};

void add_selection_flags(CLI::App *cmd, selection_config &c, selection_flags &f) {
    cmd->add_option("--q", c.q, "Sink-score percentile for tau")->capture_default_str();
    cmd->add_option("--beta", c.beta, "Weighted-centroid half-extent in standard deviations")->capture_default_str();
    cmd->add_option("--kappa", c.kappa, "BOS ratio threshold for sink-dimension detection")->capture_default_str();
    cmd->add_option("--strategy", f.strategy, "weighted_centroid | min_max | morphological")->capture_default_str();
    cmd->add_option("--alpha-mode", f.alpha_mode, "argmax | threshold:<alpha>")->capture_default_str();
    cmd->add_option("--morph-threshold", c.morph.threshold, "Relative threshold before closing")->capture_default_str();
    cmd->add_option("--morph-kernel", c.morph.kernel, "Odd closing kernel side")->capture_default_str();
    cmd->add_option("--l-vis", f.l_vis, "Visual layers: a,b,c or begin:end");
    cmd->add_option("--l-txt", f.l_txt, "Textual layers: a,b,c or begin:end");
    cmd->add_option("--l-sink", f.l_sink, "Sink-score layers: a,b,c or begin:end");
    cmd->add_flag("--no-sink-filter", f.no_sink_filter, "Skip attention-sink filtering");
}

void resolve(selection_config &c, const selection_flags &f) {
    c.strategy = parse_bbox_strategy(f.strategy);
    c.alpha_mode = parse_selection_mode(f.alpha_mode);
    if (!f.l_vis.empty()) c.l_vis = parse_layer_list(f.l_vis);
    if (!f.l_txt.empty()) c.l_txt = parse_layer_list(f.l_txt);
    if (!f.l_sink.empty()) c.l_sink = parse_layer_list(f.l_sink);
    c.sink_filter = !f.no_sink_filter;
}

crop_rect parse_crop(const std::vector<index_t> &v) {
    if (v.size() != 4) throw input_error("--crop takes x1 y1 x2 y2");
    return {v[0], v[1], v[2], v[3]};
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Training-free evidence selection over attention dumps"};
    app.require_subcommand(1);

    int exit_code = 0;
    auto emit = [](const json &j) { std::cout << to_text(j); };

    // select
    selection_config sel_cfg;
    selection_flags sel_flags;
    std::vector<fs::path> sel_inputs;
    std::optional<fs::path> sel_out;
    unsigned sel_jobs = std::max(1u, std::thread::hardware_concurrency());
    auto *select = app.add_subcommand("select", "Evidence report per dump");
    select->add_option("inputs", sel_inputs, "Dump files or directories of *.lotd")->required();
    select->add_option("--out-dir", sel_out, "Write <stem>.evidence.json per input and index.json");
    select->add_option("--jobs", sel_jobs, "Parallel workers across files");
    add_selection_flags(select, sel_cfg, sel_flags);
    select->callback([&] {
        resolve(sel_cfg, sel_flags);
        auto res = select_batch(sel_inputs, sel_out, sel_cfg, sel_jobs);
        emit(res.output);
        exit_code = res.exit_code;
    });

    // highlight
    run_config hl_cfg;
    selection_flags hl_flags;
    highlight_inputs hl_in;
    std::string hl_gran = "sentence";
    bool hl_plain_image = false;
    auto *hl = app.add_subcommand("highlight", "Marked second-pass prompt for one dump");
    hl->add_option("dump", hl_in.dump)->required();
    hl->add_option("--question", hl_in.question_file, "Question text file (default: dump text block)");
    hl->add_option("--context", hl_in.context_file, "Context text file (default: dump text block)");
    hl->add_option("--granularity", hl_gran, "sentence | passage | all_context | none")->capture_default_str();
    hl->add_flag("--full-image", hl_cfg.include_full_image, "Prepend the unmarked full image");
    hl->add_flag("--no-image-highlight", hl_plain_image, "Full image only, no crop block");
    add_selection_flags(hl, hl_cfg.selection, hl_flags);
    hl->callback([&] {
        resolve(hl_cfg.selection, hl_flags);
        hl_cfg.gran = parse_granularity(hl_gran);
        hl_cfg.highlight_image = !hl_plain_image;
        emit(highlight(hl_in, hl_cfg));
    });

    // bbox
    selection_config bb_cfg;
    selection_flags bb_flags;
    fs::path bb_dump;
    std::vector<std::string> bb_strategies;
    auto *bb = app.add_subcommand("bbox", "Boxes from every requested strategy");
    bb->add_option("dump", bb_dump)->required();
    bb->add_option("--strategies", bb_strategies, "Strategy list (default: all three)")->delimiter(',');
    add_selection_flags(bb, bb_cfg, bb_flags);
    bb->callback([&] {
        resolve(bb_cfg, bb_flags);
        std::vector<bbox_strategy> list;
        for (const auto &s : bb_strategies) list.push_back(parse_bbox_strategy(s));
        if (list.empty()) list = {bbox_strategy::min_max, bbox_strategy::morphological, bbox_strategy::weighted_centroid};
        emit(boxes(bb_dump, list, bb_cfg));
    });

    // eval-bbox
    eval_inputs ev;
    auto *evc = app.add_subcommand("eval-bbox", "Compare predicted boxes with reference boxes");
    evc->add_option("--pred", ev.pred, "JSON list of {id, x1, y1, x2, y2[, strategy]}")->required();
    evc->add_option("--gt", ev.gt, "JSON list of {id, x1, y1, x2, y2}")->required();
    evc->add_option("--width", ev.image.width_px, "Image width in pixels")->required();
    evc->add_option("--height", ev.image.height_px, "Image height in pixels")->required();
    evc->add_option("--method", ev.default_method, "Label for boxes without a strategy field")->capture_default_str();
    evc->add_option("--csv", ev.csv_out, "Also write the summary table as CSV");
    evc->callback([&] {
        if (ev.image.width_px < 1 || ev.image.height_px < 1) throw input_error("image size must be >= 1");
        emit(eval_bbox(ev));
    });

    // retrieve
    fs::path kb_path;
    std::string query = "-";
    index_t top_n = 3;
    auto *rt = app.add_subcommand("retrieve", "Top-n entities by inner product");
    rt->add_option("kb", kb_path, "Knowledge base manifest JSON")->required();
    rt->add_option("--query", query, "float32 query blob, '-' for standard input")->capture_default_str();
    rt->add_option("-n", top_n, "Number of entities")->capture_default_str();
    rt->callback([&] { emit(retrieve(kb_path, query, top_n)); });

    // synth
    synth_paths sp;
    auto *sy = app.add_subcommand("synth", "Synthetic dump with planted ground truth");
    sy->add_option("spec", sp.spec, "Synth spec JSON")->required();
    sy->add_option("--out", sp.out, "Output dump path")->required();
    sy->add_option("--truth", sp.truth, "Ground-truth JSON path (default: <out>.truth.json)");
    sy->callback([&] { emit(synth(sp)); });

    // stats
    stats_inputs st;
    selection_config st_cfg;
    selection_flags st_flags;
    std::vector<index_t> st_crop;
    auto *sc = app.add_subcommand("stats", "Visual-token reduction and generation overhead");
    sc->add_option("--before", st.before, "Visual tokens of the full image");
    sc->add_option("--after", st.after, "Visual tokens of the crop");
    sc->add_option("--dump", st.dump, "Derive counts from a dump and its evidence box");
    sc->add_option("--crop", st_crop, "Crop x1 y1 x2 y2 in pixels")->expected(4);
    sc->add_option("--answer-tokens", st.answer_tokens, "Mean answer length in tokens")->required();
    sc->add_option("--extra-tokens", st.extra_tokens, "Extra generated tokens per question")->capture_default_str();
    add_selection_flags(sc, st_cfg, st_flags);
    sc->callback([&] {
        resolve(st_cfg, st_flags);
        if (!st_crop.empty()) st.crop = parse_crop(st_crop);
        emit(stats(st, st_cfg));
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const invariant_error &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return exit_code;
}
