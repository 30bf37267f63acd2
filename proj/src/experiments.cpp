#include "cfglab/experiments.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "cfglab/errors.hpp"
#include "cfglab/sampling.hpp"
#include "cfglab/svg.hpp"

namespace fs = std::filesystem;

namespace cfglab {

std::uint64_t w_bits(double w) { return std::bit_cast<std::uint64_t>(w); }

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::uint64_t mode_tag(LossMode mode) { return mode == LossMode::standard ? 1 : 2; }

BatchProvider mixture_provider(const MixtureSpec& mixture) {
    return [&mixture](RandomStream& stream, int n) {
        SampleSet s = sample_mixture(mixture, n, stream);
        return Batch{std::move(s.points), std::move(s.labels)};
    };
}

std::string format_w(double w) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", w);
    return buf;
}

double median(std::vector<double> values) {
    if (values.empty()) throw ConfigError("median: empty input");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    double hi = values[mid];
    if (values.size() % 2 == 1) return hi;
    std::nth_element(values.begin(), values.begin() + mid - 1, values.begin() + mid);
    return 0.5 * (values[mid - 1] + hi);
}

/// First rows of a cell's samples, for plotting without megabyte panels.
Matrix head_rows(const Matrix& points, int limit) {
    const int n = std::min(points.rows, limit);
    Matrix out(n, points.cols);
    std::copy_n(points.data.begin(), static_cast<std::size_t>(n) * points.cols, out.data.begin());
    return out;
}

}  // namespace

Denoiser train_denoiser_from(const RunConfig& cfg, std::uint64_t exp_seed, LossMode mode,
                             double w_train, const MixtureSpec& mixture, const NoiseSchedule& sched,
                             TrainResult* result) {
    TrainConfig tc;
    tc.loss_mode = mode;
    tc.w_train = w_train;
    tc.p_uncond = cfg.p_uncond;
    tc.batch_size = (mode == LossMode::updated) ? cfg.updated_batch_size : cfg.batch_size;
    tc.steps = cfg.train_steps;
    tc.adam = cfg.adam;
    const std::uint64_t base = fan_seed(
        exp_seed, {seed_tag::train, mode_tag(mode), mode == LossMode::updated ? w_bits(w_train) : 0});
    tc.seed = fan_seed(base, {2});

    DenoiserConfig dc = cfg.denoiser_config();
    dc.n_classes = mixture.n_classes();
    RandomStream init_stream(fan_seed(base, {1}));
    Denoiser model = init_denoiser(dc, init_stream);
    TrainResult r = train_model(model, tc, sched, mixture_provider(mixture));
    if (result) *result = std::move(r);
    return model;
}

NoiseClassifier train_classifier_from(const RunConfig& cfg, std::uint64_t exp_seed,
                                      const MixtureSpec& mixture, const NoiseSchedule& sched,
                                      std::vector<double>* losses) {
    ClassifierTrainConfig cc;
    cc.batch_size = cfg.classifier_batch_size;
    cc.steps = cfg.classifier_steps;
    cc.adam = cfg.adam;
    const std::uint64_t base = fan_seed(exp_seed, {seed_tag::classifier});
    cc.seed = fan_seed(base, {2});

    ClassifierConfig cl_cfg = cfg.classifier_config();
    cl_cfg.n_classes = mixture.n_classes();
    RandomStream init_stream(fan_seed(base, {1}));
    NoiseClassifier cl = init_classifier(cl_cfg, init_stream);
    std::vector<double> l = train_classifier(cl, cc, sched, mixture_provider(mixture));
    if (losses) *losses = std::move(l);
    return cl;
}

ExperimentContext::ExperimentContext(RunConfig cfg)
    : cfg_(std::move(cfg)), mixture_(cfg_.mixture()), sched_(cfg_.schedule()),
      digest_(cfg_.digest()) {}

const Denoiser& ExperimentContext::model(LossMode mode, double w_train, std::uint64_t exp_seed) {
    const auto key = std::make_tuple(static_cast<int>(mode_tag(mode)),
                                     mode == LossMode::updated ? w_bits(w_train) : 0, exp_seed);
    auto it = models_.find(key);
    if (it == models_.end()) {
        it = models_.emplace(key, train_denoiser_from(cfg_, exp_seed, mode, w_train, mixture_, sched_))
                 .first;
    }
    return it->second;
}

const OracleEntry& ExperimentContext::oracle(int cls, double w, std::uint64_t exp_seed) {
    const auto key = std::make_tuple(cls, w_bits(w), exp_seed);
    auto it = oracles_.find(key);
    if (it == oracles_.end()) {
        OracleEntry entry;
        RandomStream stream_a(fan_seed(exp_seed, {seed_tag::oracle, w_bits(w), static_cast<std::uint64_t>(cls)}));
        RandomStream stream_b(fan_seed(exp_seed, {seed_tag::floor_draw, w_bits(w), static_cast<std::uint64_t>(cls)}));
        entry.draw_a = tilted_target_sample(mixture_, cls, w, cfg_.eval_n_samples, stream_a);
        entry.draw_b = tilted_target_sample(mixture_, cls, w, cfg_.eval_n_samples, stream_b);
        entry.draw_a.provenance = digest_;
        entry.draw_b.provenance = digest_;
        if (cfg_.metric == "energy") {
            entry.floor = energy_distance(entry.draw_a, entry.draw_b);
        } else {
            RandomStream ms(fan_seed(exp_seed, {seed_tag::metric, w_bits(w),
                                                static_cast<std::uint64_t>(cls), 0}));
            entry.floor = sliced_wasserstein(entry.draw_a, entry.draw_b, cfg_.sw_projections, ms);
        }
        it = oracles_.emplace(key, std::move(entry)).first;
    }
    return it->second;
}

Matrix ExperimentContext::sample_cell(const Denoiser& model, LossMode mode, double w_train,
                                      double w_sample, int cls, std::uint64_t exp_seed, int n_steps,
                                      SamplerKind kind) {
    SamplerConfig sc;
    sc.kind = kind;
    sc.n_steps = n_steps;
    sc.eta = cfg_.eta;
    sc.guidance = GuidanceRule::cfg(w_sample);
    sc.n_samples = cfg_.eval_n_samples;
    sc.condition = ConditionToken::cls(cls);
    sc.seed = fan_seed(exp_seed, {seed_tag::sample, mode_tag(mode),
                                  mode == LossMode::updated ? w_bits(w_train) : 0, w_bits(w_sample),
                                  static_cast<std::uint64_t>(cls),
                                  static_cast<std::uint64_t>(n_steps)});
    return generate(model, nullptr, sc, sched_, cfg_.workers);
}

double ExperimentContext::metric_value(const Matrix& points, const OracleEntry& oracle, int cls,
                                       double w, std::uint64_t exp_seed) {
    SampleSet set;
    set.points = points;
    set.provenance = digest_;
    if (cfg_.metric == "energy") return energy_distance(set, oracle.draw_a);
    RandomStream ms(fan_seed(exp_seed, {seed_tag::metric, w_bits(w),
                                        static_cast<std::uint64_t>(cls), 1}));
    return sliced_wasserstein(set, oracle.draw_a, cfg_.sw_projections, ms);
}

RunReport run_toy_comparison(ExperimentContext& ctx) {
    const RunConfig& cfg = ctx.config();
    const int k = ctx.mixture().n_classes();
    fs::create_directories(cfg.out_dir);
    ReportWriter writer(fs::path(cfg.out_dir) / "toy.csv", ctx.digest());
    RunReport report;
    report.digest = ctx.digest();

    // Reference panel of the raw training distribution.
    {
        RandomStream data_stream(fan_seed(cfg.seed, {seed_tag::data}));
        const SampleSet data = sample_mixture(ctx.mixture(), 2000, data_stream);
        std::vector<Matrix> per_class(k, Matrix(0, 2));
        std::vector<std::vector<double>> buf(k);
        for (int i = 0; i < data.points.rows; ++i) {
            buf[data.labels[i]].push_back(data.points.at(i, 0));
            buf[data.labels[i]].push_back(data.points.at(i, 1));
        }
        std::vector<SvgSeries> series;
        for (int c = 0; c < k; ++c) {
            per_class[c] = Matrix(static_cast<int>(buf[c].size() / 2), 2);
            per_class[c].data = buf[c];
            series.push_back({&per_class[c], "class " + std::to_string(c)});
        }
        emit_scatter_svg(series, fs::path(cfg.out_dir) / "data.svg", ctx.digest());
    }

    for (int s = 0; s < cfg.n_seeds; ++s) {
        const std::uint64_t exp_seed = cfg.seed + static_cast<std::uint64_t>(s);
        for (const LossMode mode : {LossMode::standard, LossMode::updated}) {
            const Denoiser& model = ctx.model(mode, cfg.w_train, exp_seed);
            for (const double w : cfg.w_list) {
                std::vector<Matrix> panel;
                for (int cls = 0; cls < k; ++cls) {
                    const Matrix points = ctx.sample_cell(model, mode, cfg.w_train, w, cls,
                                                          exp_seed, cfg.n_steps, cfg.sampler_kind);
                    const OracleEntry& oracle = ctx.oracle(cls, w, exp_seed);
                    ReportRow row;
                    row.loss_mode = loss_mode_name(mode);
                    row.w_train = (mode == LossMode::updated) ? cfg.w_train : kNan;
                    row.w_sample = w;
                    row.sampler = sampler_name(cfg.sampler_kind);
                    row.n_steps = cfg.n_steps;
                    row.seed = exp_seed;
                    row.metric = cfg.metric;
                    row.value = ctx.metric_value(points, oracle, cls, w, exp_seed);
                    row.noise_floor = oracle.floor;
                    writer.write(row);
                    report.rows.push_back(row);
                    if (s == 0) panel.push_back(head_rows(points, 2000));
                }
                if (s == 0) {
                    std::vector<SvgSeries> series;
                    for (int cls = 0; cls < k; ++cls) {
                        series.push_back({&panel[cls], "class " + std::to_string(cls)});
                    }
                    emit_scatter_svg(series,
                                     fs::path(cfg.out_dir) / ("toy_" + loss_mode_name(mode) + "_w" +
                                                              format_w(w) + ".svg"),
                                     ctx.digest());
                }
            }
        }
    }
    return report;
}

RunReport run_ablation_grid(ExperimentContext& ctx, const std::vector<double>& w_train_list,
                            const std::vector<double>& w_sample_list) {
    if (w_train_list.empty() || w_sample_list.empty()) {
        throw ConfigError("run_ablation_grid: empty w list");
    }
    const RunConfig& cfg = ctx.config();
    const int k = ctx.mixture().n_classes();
    fs::create_directories(cfg.out_dir);
    ReportWriter writer(fs::path(cfg.out_dir) / "ablation.csv", ctx.digest());
    RunReport report;
    report.digest = ctx.digest();

    std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> cell_values;
    for (int s = 0; s < cfg.n_seeds; ++s) {
        const std::uint64_t exp_seed = cfg.seed + static_cast<std::uint64_t>(s);
        for (std::size_t wi = 0; wi < w_train_list.size(); ++wi) {
            const double wt = w_train_list[wi];
            const Denoiser& model = ctx.model(LossMode::updated, wt, exp_seed);
            for (std::size_t si = 0; si < w_sample_list.size(); ++si) {
                const double ws = w_sample_list[si];
                std::vector<Matrix> panel;
                for (int cls = 0; cls < k; ++cls) {
                    const Matrix points = ctx.sample_cell(model, LossMode::updated, wt, ws, cls,
                                                          exp_seed, cfg.n_steps, cfg.sampler_kind);
                    const OracleEntry& oracle = ctx.oracle(cls, ws, exp_seed);
                    ReportRow row;
                    row.loss_mode = "updated";
                    row.w_train = wt;
                    row.w_sample = ws;
                    row.sampler = sampler_name(cfg.sampler_kind);
                    row.n_steps = cfg.n_steps;
                    row.seed = exp_seed;
                    row.metric = cfg.metric;
                    row.value = ctx.metric_value(points, oracle, cls, ws, exp_seed);
                    row.noise_floor = oracle.floor;
                    writer.write(row);
                    report.rows.push_back(row);
                    cell_values[{wi, si}].push_back(row.value);
                    if (s == 0) panel.push_back(head_rows(points, 2000));
                }
                if (s == 0) {
                    std::vector<SvgSeries> series;
                    for (int cls = 0; cls < k; ++cls) {
                        series.push_back({&panel[cls], "class " + std::to_string(cls)});
                    }
                    emit_scatter_svg(series,
                                     fs::path(cfg.out_dir) / ("ablation_wt" + format_w(wt) + "_ws" +
                                                              format_w(ws) + ".svg"),
                                     ctx.digest());
                }
            }
        }
    }

    // Pivoted medians over classes and seeds, one row per w_train.
    const fs::path matrix_path = fs::path(cfg.out_dir) / "ablation_matrix.csv";
    std::ofstream matrix(matrix_path);
    if (!matrix) throw IoError("cannot write " + matrix_path.string());
    matrix << "# config " << ctx.digest() << "\n";
    matrix << "w_train\\w_sample";
    for (const double ws : w_sample_list) matrix << ',' << format_w(ws);
    matrix << "\n";
    for (std::size_t wi = 0; wi < w_train_list.size(); ++wi) {
        matrix << format_w(w_train_list[wi]);
        for (std::size_t si = 0; si < w_sample_list.size(); ++si) {
            matrix << ',' << format_double(median(cell_values.at({wi, si})));
        }
        matrix << "\n";
    }
    matrix.flush();
    if (!matrix) throw IoError("write failed: " + matrix_path.string());
    return report;
}

RunReport run_steps_sweep(ExperimentContext& ctx, const std::vector<int>& steps_list) {
    if (steps_list.empty()) throw ConfigError("run_steps_sweep: empty steps list");
    const RunConfig& cfg = ctx.config();
    const int k = ctx.mixture().n_classes();
    for (int st : steps_list) {
        if (st < 1 || st > cfg.t_max) throw ConfigError("run_steps_sweep: steps value outside [1, T]");
    }
    // The full-step cell defines the per-model reference; evaluate it even
    // when the caller's list omits it.
    std::vector<int> steps_eval = steps_list;
    if (std::find(steps_eval.begin(), steps_eval.end(), cfg.t_max) == steps_eval.end()) {
        steps_eval.push_back(cfg.t_max);
    }
    std::sort(steps_eval.begin(), steps_eval.end());
    steps_eval.erase(std::unique(steps_eval.begin(), steps_eval.end()), steps_eval.end());

    fs::create_directories(cfg.out_dir);
    ReportWriter writer(fs::path(cfg.out_dir) / "sweep.csv", ctx.digest());
    RunReport report;
    report.digest = ctx.digest();
    const double w = cfg.sweep_w;

    for (int s = 0; s < cfg.n_seeds; ++s) {
        const std::uint64_t exp_seed = cfg.seed + static_cast<std::uint64_t>(s);
        for (const LossMode mode : {LossMode::standard, LossMode::updated}) {
            const Denoiser& model = ctx.model(mode, cfg.w_train, exp_seed);
            for (int cls = 0; cls < k; ++cls) {
                const OracleEntry& oracle = ctx.oracle(cls, w, exp_seed);
                std::vector<double> values(steps_eval.size());
                for (std::size_t i = 0; i < steps_eval.size(); ++i) {
                    const Matrix points = ctx.sample_cell(model, mode, cfg.w_train, w, cls,
                                                          exp_seed, steps_eval[i], SamplerKind::ddim);
                    values[i] = ctx.metric_value(points, oracle, cls, w, exp_seed);
                }
                const double reference = values[steps_eval.size() - 1];  // sorted, last is T
                for (std::size_t i = 0; i < steps_eval.size(); ++i) {
                    ReportRow row;
                    row.loss_mode = loss_mode_name(mode);
                    row.w_train = (mode == LossMode::updated) ? cfg.w_train : kNan;
                    row.w_sample = w;
                    row.sampler = "ddim";
                    row.n_steps = steps_eval[i];
                    row.seed = exp_seed;
                    row.metric = cfg.metric;
                    row.value = values[i];
                    row.noise_floor = oracle.floor;
                    writer.write(row);
                    report.rows.push_back(row);
                }
                for (std::size_t i = 0; i < steps_eval.size(); ++i) {
                    ReportRow row;
                    row.loss_mode = loss_mode_name(mode);
                    row.w_train = (mode == LossMode::updated) ? cfg.w_train : kNan;
                    row.w_sample = w;
                    row.sampler = "ddim";
                    row.n_steps = steps_eval[i];
                    row.seed = exp_seed;
                    row.metric = cfg.metric + "_rel";
                    row.value = values[i] / reference;
                    row.noise_floor = kNan;
                    writer.write(row);
                    report.rows.push_back(row);
                }
            }
        }
    }
    return report;
}

}  // namespace cfglab
