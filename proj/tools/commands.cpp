#include "commands.hpp"

#include "lot/error.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace lot::cli {

std::string read_text(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw input_error("cannot write '" + path.string() + "'");
}

std::vector<index_t> parse_layer_list(const std::string &text) {
    auto to_int = [&](const std::string &s) -> index_t {
        std::size_t used = 0;
        index_t v = 0;
        try {
            v = std::stoll(s, &used);
        } catch (const std::exception &) {
            used = 0;
        }
        if (used == 0 || used != s.size()) throw input_error("bad layer list '" + text + "'");
        return v;
    };
    std::vector<index_t> out;
    if (auto colon = text.find(':'); colon != std::string::npos) {
        const index_t b = to_int(text.substr(0, colon));
        const index_t e = to_int(text.substr(colon + 1));
        if (e <= b) throw input_error("empty layer range '" + text + "'");
        for (index_t l = b; l < e; ++l) out.push_back(l);
        return out;
    }
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ',');) out.push_back(to_int(part));
    if (out.empty()) throw input_error("empty layer list");
    return out;
}

std::vector<fs::path> expand_inputs(const std::vector<fs::path> &inputs) {
    std::vector<fs::path> out;
    for (const fs::path &p : inputs) {
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto &entry : fs::directory_iterator(p)) {
                if (entry.is_regular_file() && entry.path().extension() == ".lotd") found.push_back(entry.path());
            }
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else {
            out.push_back(p);
        }
    }
    if (out.empty()) throw input_error("no input dumps");
    return out;
}

json select_one(const fs::path &dump_path, const selection_config &config) {
    const introspection_dump dump = load_dump(dump_path);
    try {
        return to_json(select_evidence(dump, config), config);
    } catch (const invariant_error &e) {
        throw invariant_error(dump_path.string() + ": " + e.what());
    } catch (const input_error &e) {
        throw input_error(dump_path.string() + ": " + e.what());
    }
}

batch_result select_batch(const std::vector<fs::path> &raw_inputs, const std::optional<fs::path> &out_dir,
                          const selection_config &config, unsigned jobs) {
    validate(config);
    const std::vector<fs::path> inputs = expand_inputs(raw_inputs);
    std::vector<std::string> names;
    if (out_dir) {
        std::set<std::string> seen;
        for (const fs::path &p : inputs) {
            std::string name = p.stem().string() + ".evidence.json";
            if (!seen.insert(name).second) throw input_error("two inputs map to the same report name '" + name + "'");
            names.push_back(std::move(name));
        }
        fs::create_directories(*out_dir);
    }

    struct slot {
        json report;
        int code = 0;
        std::string error;
    };
    std::vector<slot> slots(inputs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < inputs.size();) {
            try {
                slots[i].report = select_one(inputs[i], config);
                if (out_dir) write_text(*out_dir / names[i], to_text(slots[i].report));
            } catch (const invariant_error &e) {
                slots[i].code = 2;
                slots[i].error = e.what();
            } catch (const std::exception &e) {
                slots[i].code = 1;
                slots[i].error = e.what();
            }
        }
    };
    const unsigned n_threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(inputs.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(work);
    work();
    for (auto &th : pool) th.join();

    batch_result out;
    for (const slot &s : slots) {
        if (s.code != 0) {
            out.exit_code = s.code;
            break;
        }
    }
    if (out_dir) {
        json entries = json::array();
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            json e = {{"input", inputs[i].string()}, {"status", slots[i].code == 0 ? "ok" : "error"}};
            if (slots[i].code == 0) {
                e["report"] = names[i];
            } else {
                e["error"] = slots[i].error;
                e["exit_code"] = slots[i].code;
            }
            entries.push_back(std::move(e));
        }
        out.output = {{"reports", entries}, {"count", inputs.size()}};
        write_text(*out_dir / "index.json", to_text(out.output));
        return out;
    }
    for (const slot &s : slots) {
        if (s.code == 2) throw invariant_error(s.error);
        if (s.code != 0) throw input_error(s.error);
    }
    if (inputs.size() == 1) {
        out.output = std::move(slots[0].report);
    } else {
        out.output = json::object();
        for (std::size_t i = 0; i < inputs.size(); ++i) out.output[inputs[i].string()] = std::move(slots[i].report);
    }
    return out;
}

json highlight(const highlight_inputs &in, const run_config &config) {
    const introspection_dump dump = load_dump(in.dump);
    const evidence_report rep = select_evidence(dump, config.selection);
    if (!dump.text) throw input_error(in.dump.string() + ": dump has no text block (question, context, sentence spans)");
    const text_meta &text = *dump.text;
    const std::string question = in.question_file ? read_text(*in.question_file) : text.question;
    const std::string context = in.context_file ? read_text(*in.context_file) : text.context;
    prompt_options opts;
    opts.gran = config.gran;
    opts.include_full_image = config.include_full_image;
    opts.highlight_image = config.highlight_image;
    opts.passage_spans = text.passage_char_spans;
    const std::vector<index_t> selected = rep.textual ? rep.textual->selected : std::vector<index_t>{};
    return to_json(build_prompt(question, context, text.sentence_char_spans, selected, rep.box.px, dump.image, opts));
}

json boxes(const fs::path &dump_path, const std::vector<bbox_strategy> &strategies, const selection_config &config) {
    const introspection_dump dump = load_dump(dump_path);
    const evidence_report rep = select_evidence(dump, config);
    json list = json::array();
    for (bbox_strategy s : strategies) list.push_back(to_json(extract_box(rep.visual.grid, dump.image, s, config)));
    return {{"input", dump_path.string()},
            {"grid", {dump.dims.grid_h, dump.dims.grid_w}},
            {"image", {{"width_px", dump.image.width_px}, {"height_px", dump.image.height_px}}},
            {"boxes", list}};
}

json eval_bbox(const eval_inputs &in) {
    const json pred_j = parse_json_text(read_text(in.pred), in.pred.string());
    const json gt_j = parse_json_text(read_text(in.gt), in.gt.string());
    const auto gt = boxes_from_json(gt_j, in.gt.string());
    std::map<std::string, pixel_rect> gt_by_id;
    for (const labeled_box &b : gt) {
        if (!gt_by_id.emplace(b.id, b.box).second) throw input_error(in.gt.string() + ": duplicate id '" + b.id + "'");
    }
    const auto pred = boxes_from_json(pred_j, in.pred.string());
    std::vector<labeled_comparison> cmps;
    json rows = json::array();
    for (std::size_t i = 0; i < pred.size(); ++i) {
        auto it = gt_by_id.find(pred[i].id);
        if (it == gt_by_id.end()) throw input_error(in.pred.string() + ": no reference box for id '" + pred[i].id + "'");
        std::string method = in.default_method;
        if (auto m = pred_j[i].find("strategy"); m != pred_j[i].end() && m->is_string()) method = m->get<std::string>();
        const box_comparison c = compare(pred[i].box, it->second, in.image);
        json row = to_json(c);
        row["id"] = pred[i].id;
        row["method"] = method;
        rows.push_back(std::move(row));
        cmps.push_back({method, c});
    }
    if (cmps.empty()) throw input_error(in.pred.string() + ": no predicted boxes");
    const auto table = summarize(cmps);
    if (in.csv_out) write_text(*in.csv_out, to_csv(table));
    return {{"table", to_json(table)}, {"comparisons", rows}};
}

json retrieve(const fs::path &kb_manifest, const std::string &query, index_t n) {
    const knowledge_base kb = load_kb(kb_manifest);
    std::vector<float> q;
    if (query == "-") {
        std::cin >> std::noskipws;
        q = read_f32_blob(std::cin);
    } else {
        std::ifstream in(query, std::ios::binary);
        if (!in) throw input_error("cannot open query blob '" + query + "'");
        q = read_f32_blob(in);
    }
    if (static_cast<index_t>(q.size()) != kb.dim) {
        throw input_error("query has " + std::to_string(q.size()) + " floats, knowledge base dim is " +
                          std::to_string(kb.dim));
    }
    return to_json(lot::retrieve(kb, q, n));
}

json synth(const synth_paths &paths) {
    const synth_spec spec = synth_spec_from_json(parse_json_text(read_text(paths.spec), paths.spec.string()));
    const synth_output out = generate(spec);
    save_dump(out.dump, paths.out);
    const fs::path truth_path = paths.truth ? *paths.truth : fs::path(paths.out.string() + ".truth.json");
    json truth = to_json(out.truth);
    truth["spec"] = to_json(spec);
    write_text(truth_path, to_text(truth));
    return {{"dump", paths.out.string()}, {"truth", truth_path.string()}, {"ground_truth", truth}};
}

json stats(const stats_inputs &in, const selection_config &config) {
    json extra = json::object();
    double before = 0.0;
    double after = 0.0;
    if (in.dump) {
        const introspection_dump dump = load_dump(*in.dump);
        before = in.before.value_or(static_cast<double>(dump.dims.n_visual()));
        crop_rect crop;
        if (in.crop) {
            crop = *in.crop;
        } else {
            crop = crop_of(select_evidence(dump, config).box.px, dump.image);
        }
        const auto model = token_area_model::from_image(before, dump.image);
        after = in.after.value_or(model.estimate(crop));
        extra["crop_px"] = to_json(crop);
        extra["image"] = {{"width_px", dump.image.width_px}, {"height_px", dump.image.height_px}};
    } else {
        if (!in.before || !in.after) throw input_error("stats: give --before and --after, or --dump");
        before = *in.before;
        after = *in.after;
    }
    json out = to_json(compute_token_stats(before, after, in.answer_tokens, in.extra_tokens));
    out.update(extra);
    return out;
}

} // namespace lot::cli
