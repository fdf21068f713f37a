#pragma once

// Subcommand bodies of the `lot` tool, callable without a process boundary.
// Each returns the JSON it would print; file outputs are written as a side
// effect.

#include "lot/report.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lot::cli {

namespace fs = std::filesystem;

struct run_config {
    selection_config selection;
    granularity gran = granularity::sentence;
    bool include_full_image = false;
    bool highlight_image = true;
    index_t n = 3;
};

// "4,5,6" or a half-open range "4:8".
std::vector<index_t> parse_layer_list(const std::string &text);

// Files are taken as given; directories contribute their *.lotd entries in
// name order.
std::vector<fs::path> expand_inputs(const std::vector<fs::path> &inputs);

json select_one(const fs::path &dump_path, const selection_config &config);

struct batch_result {
    json output;
    int exit_code = 0; // first failing input's code, in input order
};

// With out_dir: one <stem>.evidence.json per input plus index.json, and the
// index is returned. Without: the single report, or an object keyed by input
// path when there are several.
batch_result select_batch(const std::vector<fs::path> &inputs, const std::optional<fs::path> &out_dir,
                          const selection_config &config, unsigned jobs);

struct highlight_inputs {
    fs::path dump;
    std::optional<fs::path> question_file;
    std::optional<fs::path> context_file;
};

json highlight(const highlight_inputs &in, const run_config &config);

json boxes(const fs::path &dump, const std::vector<bbox_strategy> &strategies, const selection_config &config);

struct eval_inputs {
    fs::path pred;
    fs::path gt;
    image_meta image;
    std::string default_method = "weighted_centroid";
    std::optional<fs::path> csv_out;
};

json eval_bbox(const eval_inputs &in);

// query "-" reads standard input.
json retrieve(const fs::path &kb_manifest, const std::string &query, index_t n);

struct synth_paths {
    fs::path spec;
    fs::path out;
    std::optional<fs::path> truth; // default: <out>.truth.json
};

json synth(const synth_paths &paths);

struct stats_inputs {
    std::optional<double> before;
    std::optional<double> after;
    std::optional<fs::path> dump;
    std::optional<crop_rect> crop; // overrides the evidence box
    double answer_tokens = 0.0;
    double extra_tokens = 1.0;
};

json stats(const stats_inputs &in, const selection_config &config);

std::string read_text(const fs::path &path);
void write_text(const fs::path &path, const std::string &text);

} // namespace lot::cli
