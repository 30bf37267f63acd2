// Command-line front end: train / sample / eval / toy / ablate / sweep-steps
// / plot over a single flat config file. Exit codes: 0 ok, 2 config, 3
// numeric, 4 I/O.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cfglab/config.hpp"
#include "cfglab/errors.hpp"
#include "cfglab/experiments.hpp"
#include "cfglab/report.hpp"
#include "cfglab/sampling.hpp"
#include "cfglab/svg.hpp"

namespace fs = std::filesystem;
using namespace cfglab;

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> workers;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "run-config file (defaults apply when omitted)");
    cmd->add_option("--seed", flags.seed, "experiment seed (overrides the config)");
    cmd->add_option("--out", flags.out, "output directory (overrides CFGLAB_OUT and the config)");
    cmd->add_option("--workers", flags.workers, "sampling worker threads");
}

RunConfig resolve_config(const CommonFlags& flags) {
    RunConfig cfg = load_run_config(flags.config_path);
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.workers) cfg.workers = *flags.workers;
    if (const char* env = std::getenv("CFGLAB_OUT"); env != nullptr && env[0] != '\0') {
        cfg.out_dir = env;
    }
    if (flags.out) cfg.out_dir = *flags.out;
    cfg.validate();
    return cfg;
}

std::string format_w(double w) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", w);
    return buf;
}

int cmd_train(const CommonFlags& flags, const std::string& kind) {
    const RunConfig cfg = resolve_config(flags);
    const MixtureSpec mixture = cfg.mixture();
    const NoiseSchedule sched = cfg.schedule();
    fs::create_directories(cfg.out_dir);

    if (kind == "classifier") {
        std::vector<double> losses;
        const NoiseClassifier cl = train_classifier_from(cfg, cfg.seed, mixture, sched, &losses);
        const fs::path path =
            fs::path(cfg.out_dir) / ("classifier_seed" + std::to_string(cfg.seed) + ".json");
        save_classifier_checkpoint(cl, path, cfg.digest());
        std::cout << "trained classifier: " << losses.size() << " steps, final loss "
                  << (losses.empty() ? 0.0 : losses.back()) << "\n"
                  << "checkpoint: " << path.string() << "\n";
        return 0;
    }

    TrainResult result;
    const Denoiser model =
        train_denoiser_from(cfg, cfg.seed, cfg.loss_mode, cfg.w_train, mixture, sched, &result);
    std::string name = "denoiser_" + loss_mode_name(cfg.loss_mode);
    if (cfg.loss_mode == LossMode::updated) name += "_w" + format_w(cfg.w_train);
    name += "_seed" + std::to_string(cfg.seed) + ".json";
    const fs::path path = fs::path(cfg.out_dir) / name;
    save_denoiser_checkpoint(model, path, cfg.digest());

    double tail = 0.0;
    const std::size_t tail_n = std::min<std::size_t>(100, result.losses.size());
    for (std::size_t i = result.losses.size() - tail_n; i < result.losses.size(); ++i) {
        tail += result.losses[i];
    }
    if (tail_n > 0) tail /= static_cast<double>(tail_n);
    std::cout << "trained " << loss_mode_name(cfg.loss_mode) << " model: " << result.losses.size()
              << " steps, mean loss over final " << tail_n << " steps " << tail << "\n"
              << "checkpoint: " << path.string() << "\n";
    return 0;
}

int cmd_sample(const CommonFlags& flags) {
    const RunConfig cfg = resolve_config(flags);
    if (cfg.denoiser_checkpoint.empty()) {
        throw ConfigError("sample: set sampler.checkpoint to a trained denoiser");
    }
    const NoiseSchedule sched = cfg.schedule();
    const Denoiser model = load_denoiser_checkpoint(cfg.denoiser_checkpoint);

    std::optional<NoiseClassifier> classifier;
    if (cfg.guidance_mode == GuidanceMode::classifier_grad) {
        if (cfg.classifier_checkpoint.empty()) {
            throw ConfigError("sample: classifier guidance needs sampler.classifier_checkpoint");
        }
        classifier = load_classifier_checkpoint(cfg.classifier_checkpoint);
    }

    SamplerConfig sc;
    sc.kind = cfg.sampler_kind;
    sc.n_steps = cfg.n_steps;
    sc.eta = cfg.eta;
    sc.guidance = GuidanceRule{cfg.guidance_mode, cfg.guidance_w, cfg.guidance_phi};
    sc.n_samples = cfg.n_samples;
    sc.condition = cfg.condition_class < 0 ? ConditionToken::null_token()
                                           : ConditionToken::cls(cfg.condition_class);
    sc.seed = cfg.seed;

    const Matrix points =
        generate(model, classifier ? &*classifier : nullptr, sc, sched, cfg.workers);
    const std::vector<int> labels(static_cast<std::size_t>(points.rows), cfg.condition_class);

    fs::create_directories(cfg.out_dir);
    const fs::path path =
        fs::path(cfg.out_dir) / ("samples_" + guidance_mode_name(cfg.guidance_mode) + "_w" +
                                 format_w(cfg.guidance_w) + "_" + sampler_name(cfg.sampler_kind) +
                                 std::to_string(sc.n_steps) + "_seed" + std::to_string(cfg.seed) +
                                 ".csv");
    write_samples_csv(path, points, labels, sc.guidance.w, sampler_name(sc.kind), sc.n_steps,
                      cfg.seed, cfg.digest());
    std::cout << "wrote " << points.rows << " samples: " << path.string() << "\n";
    return 0;
}

int cmd_eval(const CommonFlags& flags) {
    const RunConfig cfg = resolve_config(flags);
    if (cfg.eval_csv_a.empty()) throw ConfigError("eval: set eval.csv_a to a samples CSV");
    const SampleCsv a = read_samples_csv(cfg.eval_csv_a);

    SampleSet b;
    std::optional<double> floor;
    if (!cfg.eval_csv_b.empty()) {
        b = read_samples_csv(cfg.eval_csv_b).samples;
    } else {
        const MixtureSpec mixture = cfg.mixture();
        RandomStream stream_a(fan_seed(cfg.seed, {seed_tag::oracle, w_bits(cfg.eval_oracle_w),
                                                  static_cast<std::uint64_t>(cfg.eval_oracle_class)}));
        RandomStream stream_b(fan_seed(cfg.seed, {seed_tag::floor_draw, w_bits(cfg.eval_oracle_w),
                                                  static_cast<std::uint64_t>(cfg.eval_oracle_class)}));
        b = tilted_target_sample(mixture, cfg.eval_oracle_class, cfg.eval_oracle_w,
                                 cfg.eval_n_samples, stream_a);
        SampleSet b2 = tilted_target_sample(mixture, cfg.eval_oracle_class, cfg.eval_oracle_w,
                                            cfg.eval_n_samples, stream_b);
        if (cfg.metric == "energy") {
            floor = energy_distance(b, b2);
        } else {
            RandomStream ms(fan_seed(cfg.seed, {seed_tag::metric, w_bits(cfg.eval_oracle_w),
                                                static_cast<std::uint64_t>(cfg.eval_oracle_class), 0}));
            floor = sliced_wasserstein(b, b2, cfg.sw_projections, ms);
        }
    }

    double value = 0.0;
    if (cfg.metric == "energy") {
        value = energy_distance(a.samples, b);
    } else {
        RandomStream ms(fan_seed(cfg.seed, {seed_tag::metric, w_bits(cfg.eval_oracle_w),
                                            static_cast<std::uint64_t>(cfg.eval_oracle_class), 1}));
        value = sliced_wasserstein(a.samples, b, cfg.sw_projections, ms);
    }
    std::cout << cfg.metric << " = " << format_double(value) << "\n";
    if (floor) std::cout << "noise_floor = " << format_double(*floor) << "\n";
    return 0;
}

int cmd_plot(const CommonFlags& flags) {
    const RunConfig cfg = resolve_config(flags);
    if (cfg.plot_csv.empty()) throw ConfigError("plot: set plot.csv to a samples CSV");
    const SampleCsv csv = read_samples_csv(cfg.plot_csv);
    if (csv.samples.points.rows == 0) throw ConfigError("plot: samples CSV is empty");

    // Group rows by class value, preserving first-seen order.
    std::vector<int> classes;
    std::vector<std::vector<double>> buckets;
    for (int i = 0; i < csv.samples.points.rows; ++i) {
        const int cls = csv.samples.labels[i];
        std::size_t slot = 0;
        for (; slot < classes.size(); ++slot) {
            if (classes[slot] == cls) break;
        }
        if (slot == classes.size()) {
            classes.push_back(cls);
            buckets.emplace_back();
        }
        buckets[slot].push_back(csv.samples.points.at(i, 0));
        buckets[slot].push_back(csv.samples.points.at(i, 1));
    }
    std::vector<Matrix> mats(classes.size());
    std::vector<SvgSeries> series;
    for (std::size_t s = 0; s < classes.size(); ++s) {
        mats[s] = Matrix(static_cast<int>(buckets[s].size() / 2), 2);
        mats[s].data = buckets[s];
        series.push_back(
            {&mats[s], classes[s] < 0 ? "uncond" : "class " + std::to_string(classes[s])});
    }
    fs::create_directories(cfg.out_dir);
    const fs::path path =
        fs::path(cfg.out_dir) / (fs::path(cfg.plot_csv).stem().string() + ".svg");
    emit_scatter_svg(series, path, csv.digest.empty() ? cfg.digest() : csv.digest);
    std::cout << "wrote plot: " << path.string() << "\n";
    return 0;
}

int cmd_driver(const CommonFlags& flags, const std::string& which) {
    RunConfig cfg = resolve_config(flags);
    ExperimentContext ctx(std::move(cfg));
    RunReport report;
    if (which == "toy") {
        report = run_toy_comparison(ctx);
        std::cout << "toy comparison: " << report.rows.size() << " cells -> "
                  << (fs::path(ctx.config().out_dir) / "toy.csv").string() << "\n";
    } else if (which == "ablate") {
        report = run_ablation_grid(ctx, ctx.config().w_train_list, ctx.config().w_sample_list);
        std::cout << "ablation grid: " << report.rows.size() << " cells -> "
                  << (fs::path(ctx.config().out_dir) / "ablation.csv").string() << "\n";
    } else {
        report = run_steps_sweep(ctx, ctx.config().steps_list);
        std::cout << "steps sweep: " << report.rows.size() << " cells -> "
                  << (fs::path(ctx.config().out_dir) / "sweep.csv").string() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale conditional-diffusion laboratory"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string train_kind = "denoiser";

    CLI::App* train = app.add_subcommand("train", "train one model from the config");
    add_common(train, flags);
    train->add_option("--kind", train_kind, "denoiser or classifier")
        ->check(CLI::IsMember({"denoiser", "classifier"}));

    CLI::App* sample = app.add_subcommand("sample", "generate samples from a checkpoint");
    add_common(sample, flags);
    CLI::App* eval = app.add_subcommand("eval", "metric between two CSVs or CSV vs oracle");
    add_common(eval, flags);
    CLI::App* toy = app.add_subcommand("toy", "standard-vs-updated toy comparison");
    add_common(toy, flags);
    CLI::App* ablate = app.add_subcommand("ablate", "w_train x w_sample ablation grid");
    add_common(ablate, flags);
    CLI::App* sweep = app.add_subcommand("sweep-steps", "DDIM step-count sweep");
    add_common(sweep, flags);
    CLI::App* plot = app.add_subcommand("plot", "samples CSV to scatter SVG");
    add_common(plot, flags);

    try {
        app.parse(argc, argv);
        if (train->parsed()) return cmd_train(flags, train_kind);
        if (sample->parsed()) return cmd_sample(flags);
        if (eval->parsed()) return cmd_eval(flags);
        if (toy->parsed()) return cmd_driver(flags, "toy");
        if (ablate->parsed()) return cmd_driver(flags, "ablate");
        if (sweep->parsed()) return cmd_driver(flags, "sweep");
        if (plot->parsed()) return cmd_plot(flags);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
