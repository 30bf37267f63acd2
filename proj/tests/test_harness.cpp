#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "cfglab/config.hpp"
#include "cfglab/errors.hpp"
#include "cfglab/experiments.hpp"
#include "cfglab/report.hpp"
#include "cfglab/svg.hpp"

using namespace cfglab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("cfglab_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int count_occurrences(const std::string& text, const std::string& needle) {
    int n = 0;
    for (std::size_t pos = text.find(needle); pos != std::string::npos;
         pos = text.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

// Minimal well-formedness scan: every open tag is closed in order,
// self-closing and comment nodes are skipped.
bool xml_balanced(const std::string& text) {
    std::vector<std::string> stack;
    std::size_t pos = 0;
    while ((pos = text.find('<', pos)) != std::string::npos) {
        if (text.compare(pos, 4, "<!--") == 0) {
            pos = text.find("-->", pos);
            if (pos == std::string::npos) return false;
            pos += 3;
            continue;
        }
        const std::size_t end = text.find('>', pos);
        if (end == std::string::npos) return false;
        std::string tag = text.substr(pos + 1, end - pos - 1);
        pos = end + 1;
        if (tag.empty()) return false;
        if (tag[0] == '?') continue;
        bool closing = false;
        if (tag[0] == '/') {
            closing = true;
            tag = tag.substr(1);
        }
        const bool self_closing = !closing && tag.back() == '/';
        const std::size_t name_end = tag.find_first_of(" \t\n/");
        const std::string name = tag.substr(0, name_end);
        if (name.empty()) return false;
        if (closing) {
            if (stack.empty() || stack.back() != name) return false;
            stack.pop_back();
        } else if (!self_closing) {
            stack.push_back(name);
        }
    }
    return stack.empty();
}

// Small grid that runs every driver in well under a second per call.
std::string micro_config_text(const fs::path& out_dir) {
    std::string text;
    text += "seed = 7\n";
    text += "out = " + out_dir.string() + "\n";
    text += "schedule.t_max = 10\n";
    text += "model.hidden = 8\n";
    text += "model.time_embed_dim = 4\n";
    text += "model.class_embed_dim = 4\n";
    text += "classifier.hidden = 8\n";
    text += "classifier.time_embed_dim = 4\n";
    text += "classifier.steps = 10\n";
    text += "classifier.batch_size = 16\n";
    text += "train.steps = 30\n";
    text += "train.batch_size = 16\n";
    text += "train.updated_batch_size = 8\n";
    text += "sampler.n_steps = 5\n";
    text += "sampler.n_samples = 32\n";
    text += "eval.n_samples = 64\n";
    text += "eval.w_list = 1\n";
    text += "eval.w_train_list = 1\n";
    text += "eval.w_sample_list = 1 2\n";
    text += "eval.steps_list = 2 5\n";
    text += "eval.n_seeds = 2\n";
    return text;
}

}  // namespace

TEST_CASE("parse_run_config returns validated defaults on empty text") {
    const RunConfig cfg = parse_run_config("");
    CHECK(cfg.t_max == 100);
    CHECK(cfg.loss_mode == LossMode::standard);
    CHECK(cfg.w_train == 1.0);
    CHECK(cfg.n_samples == 10000);
    CHECK(cfg.n_classes() == 3);
    CHECK(cfg.metric == "energy");
    CHECK(cfg.out_dir == "runs");
    CHECK(cfg.workers == 1);
    CHECK(cfg.digest() == parse_run_config("# just a comment\n\n").digest());
}

TEST_CASE("parse_run_config applies overrides and tolerates comments") {
    const std::string text =
        "# experiment\n"
        "seed = 42\n"
        "train.loss_mode = updated\n"
        "train.w_train = 2.5\n"
        "sampler.kind = ddpm\n"
        "sampler.n_steps = 100\n"
        "  eval.w_list = 0 1 8  \n"
        "model.hidden = 32 16\n"
        "workers = 3\n";
    const RunConfig cfg = parse_run_config(text);
    CHECK(cfg.seed == 42);
    CHECK(cfg.loss_mode == LossMode::updated);
    CHECK(cfg.w_train == 2.5);
    CHECK(cfg.sampler_kind == SamplerKind::ddpm);
    CHECK(cfg.n_steps == 100);
    CHECK(cfg.w_list == std::vector<double>{0.0, 1.0, 8.0});
    CHECK(cfg.model_hidden == std::vector<int>{32, 16});
    CHECK(cfg.workers == 3);
}

TEST_CASE("parse_run_config rejects malformed input") {
    CHECK_THROWS_AS(parse_run_config("seed 42\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("= 42\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("seed = 1\nseed = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("no.such.key = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("schedule.t_max = abc\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("seed = -1\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("train.w_train = fast\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("model.hidden =\n"), ConfigError);
}

TEST_CASE("parse_run_config enforces cross-block consistency") {
    CHECK_THROWS_AS(parse_run_config("sampler.n_steps = 101\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("eval.metric = mmd\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("eval.steps_list = 5 200\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("sampler.class = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("mixture.weights = 0.5 0.5 0.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("train.loss_mode = both\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("schedule.beta_start = 0.3\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("workers = 0\n"), ConfigError);
}

TEST_CASE("digest ignores output plumbing but tracks result-affecting keys") {
    const RunConfig base = parse_run_config("");
    const RunConfig moved = parse_run_config(
        "out = elsewhere\nworkers = 8\neval.csv_a = a.csv\neval.csv_b = b.csv\nplot.csv = c.csv\n"
        "sampler.checkpoint = model.json\nsampler.classifier_checkpoint = cls.json\n");
    CHECK(moved.digest() == base.digest());

    CHECK(parse_run_config("seed = 1\n").digest() != base.digest());
    CHECK(parse_run_config("eval.w_list = 0 1\n").digest() != base.digest());
    CHECK(parse_run_config("train.loss_mode = updated\n").digest() != base.digest());
    CHECK(parse_run_config("sampler.eta = 0.5\n").digest() != base.digest());
}

TEST_CASE("canonical_text is deterministic and self-consistent") {
    const std::string text = "seed = 9\ntrain.w_train = 0.5\neval.w_list = 0 2\n";
    const RunConfig a = parse_run_config(text);
    const RunConfig b = parse_run_config(text);
    CHECK(a.canonical_text() == b.canonical_text());
    CHECK(a.digest() == fnv1a_hex(a.canonical_text()));
    CHECK(a.digest().size() == 16);
    // Re-parsing the canonical form reproduces the digest.
    std::string canon = a.canonical_text();
    const RunConfig c = parse_run_config(canon);
    CHECK(c.digest() == a.digest());
}

TEST_CASE("load_run_config reads files and reports missing ones") {
    const fs::path dir = fresh_dir("config_io");
    const fs::path path = dir / "run.cfg";
    std::ofstream(path) << "seed = 5\ntrain.steps = 123\n";
    const RunConfig cfg = load_run_config(path);
    CHECK(cfg.seed == 5);
    CHECK(cfg.train_steps == 123);
    CHECK_THROWS_AS(load_run_config(dir / "missing.cfg"), IoError);
    const RunConfig defaults = load_run_config("");
    CHECK(defaults.digest() == parse_run_config("").digest());
    fs::remove_all(dir);
}

TEST_CASE("format_double round-trips exactly") {
    const std::vector<double> values = {0.0,   -0.0,        0.1,   1.0 / 3.0, 1e300, -2.5e-308,
                                        1e-17, 123456789.5, 0.3125};
    for (const double v : values) {
        const std::string s = format_double(v);
        const double back = std::strtod(s.c_str(), nullptr);
        CHECK(back == v);
    }
    CHECK(fnv1a_hex("") == fnv1a_hex(""));
    CHECK(fnv1a_hex("a") != fnv1a_hex("b"));
}

TEST_CASE("report CSV round-trips rows and encodes NaN as empty fields") {
    const fs::path dir = fresh_dir("report_io");
    const fs::path path = dir / "report.csv";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    {
        ReportWriter writer(path, "deadbeef01234567");
        ReportRow row;
        row.loss_mode = "standard";
        row.w_train = nan;
        row.w_sample = 1.5;
        row.sampler = "ddim";
        row.n_steps = 50;
        row.seed = 12;
        row.metric = "energy";
        row.value = 0.25;
        row.noise_floor = 0.125;
        writer.write(row);

        // The file is already valid after the first row.
        const RunReport partial = read_report_csv(path);
        CHECK(partial.digest == "deadbeef01234567");
        REQUIRE(partial.rows.size() == 1);

        row.loss_mode = "updated";
        row.w_train = 2.0;
        row.metric = "energy_rel";
        row.value = 1.0;
        row.noise_floor = nan;
        writer.write(row);
    }
    const RunReport report = read_report_csv(path);
    CHECK(report.digest == "deadbeef01234567");
    REQUIRE(report.rows.size() == 2);
    CHECK(report.rows[0].loss_mode == "standard");
    CHECK(std::isnan(report.rows[0].w_train));
    CHECK(report.rows[0].w_sample == 1.5);
    CHECK(report.rows[0].sampler == "ddim");
    CHECK(report.rows[0].n_steps == 50);
    CHECK(report.rows[0].seed == 12);
    CHECK(report.rows[0].value == 0.25);
    CHECK(report.rows[0].noise_floor == 0.125);
    CHECK(report.rows[1].w_train == 2.0);
    CHECK(std::isnan(report.rows[1].noise_floor));
    CHECK(report.rows[1].value == 1.0);
    fs::remove_all(dir);
}

TEST_CASE("sample CSV round-trips points bitwise") {
    const fs::path dir = fresh_dir("samples_io");
    const fs::path path = dir / "samples.csv";
    Matrix points(4, 2);
    points.data = {0.1, -1.0 / 3.0, 1e300, -2.5e-308, 0.0, -0.0, 3.141592653589793, 1e-17};
    const std::vector<int> labels = {0, 2, -1, 1};
    write_samples_csv(path, points, labels, 1.8, "ddpm", 25, 99, "0123456789abcdef");
    const SampleCsv back = read_samples_csv(path);
    CHECK(back.samples.points.data == points.data);
    CHECK(back.samples.labels == labels);
    CHECK(back.w == 1.8);
    CHECK(back.sampler == "ddpm");
    CHECK(back.steps == 25);
    CHECK(back.seed == 99);
    CHECK(back.digest == "0123456789abcdef");
    CHECK_THROWS_AS(read_samples_csv(dir / "missing.csv"), IoError);
    fs::remove_all(dir);
}

TEST_CASE("scatter SVG output is byte-deterministic and well-formed") {
    const fs::path dir = fresh_dir("svg_io");
    Matrix a(3, 2), b(4, 2);
    a.data = {0.0, 0.0, 1.0, 2.0, -1.5, 0.25};
    b.data = {2.0, 2.0, -2.0, 1.0, 0.5, -0.5, 3.0, 0.0};
    const std::vector<SvgSeries> series = {{&a, "first"}, {&b, "second"}};
    emit_scatter_svg(series, dir / "one.svg", "feedfacefeedface");
    emit_scatter_svg(series, dir / "two.svg", "feedfacefeedface");
    const std::string one = slurp(dir / "one.svg");
    CHECK(one == slurp(dir / "two.svg"));
    CHECK(count_occurrences(one, "<circle") == 7);
    CHECK(count_occurrences(one, "viewBox") == 1);
    CHECK(one.find("feedfacefeedface") != std::string::npos);
    CHECK(one.find("first") != std::string::npos);
    CHECK(one.find("second") != std::string::npos);
    CHECK(xml_balanced(one));
    fs::remove_all(dir);
}

TEST_CASE("toy driver emits the full grid and its panel files") {
    const fs::path dir = fresh_dir("toy_driver");
    RunConfig cfg = parse_run_config(micro_config_text(dir));
    ExperimentContext ctx(cfg);
    const RunReport report = run_toy_comparison(ctx);

    // seeds x modes x w_list x classes
    CHECK(report.rows.size() == 2 * 2 * 1 * 3);
    CHECK(report.digest == cfg.digest());
    int standard_rows = 0;
    for (const ReportRow& row : report.rows) {
        CHECK(row.metric == "energy");
        CHECK(row.n_steps == 5);
        CHECK(row.sampler == "ddim");
        CHECK(row.w_sample == 1.0);
        CHECK((row.seed == 7 || row.seed == 8));
        CHECK(row.noise_floor > 0.0);
        CHECK(std::isfinite(row.value));
        if (row.loss_mode == "standard") {
            ++standard_rows;
            CHECK(std::isnan(row.w_train));
        } else {
            CHECK(row.loss_mode == "updated");
            CHECK(row.w_train == 1.0);
        }
    }
    CHECK(standard_rows == 6);

    const RunReport from_disk = read_report_csv(dir / "toy.csv");
    CHECK(from_disk.rows.size() == report.rows.size());
    CHECK(from_disk.digest == cfg.digest());
    CHECK(fs::exists(dir / "data.svg"));
    CHECK(fs::exists(dir / "toy_standard_w1.svg"));
    CHECK(fs::exists(dir / "toy_updated_w1.svg"));
    fs::remove_all(dir);
}

TEST_CASE("toy driver output is byte-identical across repeat runs") {
    const fs::path dir_a = fresh_dir("repeat_a");
    const fs::path dir_b = fresh_dir("repeat_b");
    {
        RunConfig cfg = parse_run_config(micro_config_text(dir_a));
        ExperimentContext ctx(cfg);
        run_toy_comparison(ctx);
    }
    {
        RunConfig cfg = parse_run_config(micro_config_text(dir_b));
        ExperimentContext ctx(cfg);
        run_toy_comparison(ctx);
    }
    CHECK(slurp(dir_a / "toy.csv") == slurp(dir_b / "toy.csv"));
    CHECK(slurp(dir_a / "data.svg") == slurp(dir_b / "data.svg"));
    CHECK(slurp(dir_a / "toy_updated_w1.svg") == slurp(dir_b / "toy_updated_w1.svg"));
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("ablation driver grid is consistent with the toy cells") {
    const fs::path dir = fresh_dir("ablate_driver");
    RunConfig cfg = parse_run_config(micro_config_text(dir));
    ExperimentContext ctx(cfg);
    const RunReport toy = run_toy_comparison(ctx);
    const RunReport grid = run_ablation_grid(ctx, cfg.w_train_list, cfg.w_sample_list);

    // seeds x w_train x w_sample x classes
    CHECK(grid.rows.size() == 2 * 1 * 2 * 3);
    for (const ReportRow& row : grid.rows) {
        CHECK(row.loss_mode == "updated");
        CHECK(row.w_train == 1.0);
        CHECK(std::isfinite(row.value));
    }

    // The w_sample = 1 cells coincide with the toy updated cells, so the
    // cached model and oracle must reproduce their values exactly.
    std::map<std::tuple<std::uint64_t, int>, double> toy_updated;
    for (std::size_t i = 0; i < toy.rows.size(); ++i) {
        const ReportRow& row = toy.rows[i];
        if (row.loss_mode != "updated") continue;
        toy_updated[{row.seed, static_cast<int>(i % 3)}] = row.value;
    }
    int matched = 0;
    std::map<std::uint64_t, int> cls_counter;
    for (const ReportRow& row : grid.rows) {
        if (row.w_sample != 1.0) continue;
        const int cls = cls_counter[row.seed]++;
        CHECK(row.value == toy_updated.at({row.seed, cls}));
        ++matched;
    }
    CHECK(matched == 6);

    const fs::path matrix_path = dir / "ablation_matrix.csv";
    REQUIRE(fs::exists(matrix_path));
    const std::string matrix = slurp(matrix_path);
    CHECK(matrix.find("w_train\\w_sample,1,2") != std::string::npos);
    CHECK(count_occurrences(matrix, "\n") == 3);  // digest + header + one body row
    CHECK(fs::exists(dir / "ablation_wt1_ws2.svg"));
    fs::remove_all(dir);
}

TEST_CASE("steps sweep adds the full-step reference and normalizes against it") {
    const fs::path dir = fresh_dir("sweep_driver");
    RunConfig cfg = parse_run_config(micro_config_text(dir));
    ExperimentContext ctx(cfg);
    const RunReport report = run_steps_sweep(ctx, cfg.steps_list);

    // seeds x modes x classes x steps {2, 5, 10}, absolute plus relative rows
    CHECK(report.rows.size() == 2 * 2 * 3 * 3 * 2);
    std::map<std::tuple<std::string, std::uint64_t, int>, std::map<int, double>> absolute;
    std::map<std::tuple<std::string, std::uint64_t, int>, std::map<int, double>> relative;
    std::map<std::tuple<std::string, std::uint64_t>, int> group_counter;
    for (const ReportRow& row : report.rows) {
        CHECK(row.sampler == "ddim");
        CHECK(row.w_sample == cfg.sweep_w);
        const auto mode_seed = std::make_tuple(row.loss_mode, row.seed);
        // Rows arrive grouped per class: three absolute then three relative.
        const int pos = group_counter[mode_seed]++;
        const int cls = pos / 6;
        if (row.metric == "energy") {
            CHECK(row.noise_floor > 0.0);
            absolute[{row.loss_mode, row.seed, cls}][row.n_steps] = row.value;
        } else {
            CHECK(row.metric == "energy_rel");
            CHECK(std::isnan(row.noise_floor));
            relative[{row.loss_mode, row.seed, cls}][row.n_steps] = row.value;
        }
    }
    REQUIRE(absolute.size() == 12);
    REQUIRE(relative.size() == 12);
    for (const auto& [key, by_steps] : absolute) {
        REQUIRE(by_steps.size() == 3);
        REQUIRE(by_steps.count(10) == 1);
        const double reference = by_steps.at(10);
        const auto& rel = relative.at(key);
        for (const auto& [steps, value] : by_steps) {
            CHECK(rel.at(steps) == value / reference);
        }
        CHECK(rel.at(10) == 1.0);
    }
    CHECK_THROWS_AS(run_steps_sweep(ctx, {}), ConfigError);
    CHECK_THROWS_AS(run_steps_sweep(ctx, std::vector<int>{0}), ConfigError);
    CHECK_THROWS_AS(run_steps_sweep(ctx, std::vector<int>{11}), ConfigError);
    fs::remove_all(dir);
}
