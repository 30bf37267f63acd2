#include "cfglab/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "cfglab/errors.hpp"

namespace cfglab {

std::string sampler_name(SamplerKind k) {
    return k == SamplerKind::ddpm ? "ddpm" : "ddim";
}

SamplerKind sampler_from_name(const std::string& name) {
    if (name == "ddpm") return SamplerKind::ddpm;
    if (name == "ddim") return SamplerKind::ddim;
    throw ConfigError("unknown sampler: " + name);
}

void SamplerConfig::validate(const NoiseSchedule& schedule) const {
    guidance.validate();
    if (n_steps < 1 || n_steps > schedule.t_max) {
        throw ConfigError("sampler: n_steps must be in [1, T]");
    }
    if (kind == SamplerKind::ddpm && n_steps != schedule.t_max) {
        throw ConfigError("sampler: ddpm requires n_steps = T");
    }
    if (eta < 0.0) throw ConfigError("sampler: eta must be >= 0");
    if (n_samples < 1) throw ConfigError("sampler: n_samples must be >= 1");
    if (guidance.mode != GuidanceMode::none && condition.is_null()) {
        throw ConfigError("sampler: guided modes require a class condition");
    }
}

std::vector<int> timestep_subsequence(int t_max, int n_steps) {
    if (t_max < 1 || n_steps < 1 || n_steps > t_max) {
        throw ConfigError("timestep_subsequence: need 1 <= n_steps <= T");
    }
    std::vector<int> ts;
    ts.reserve(n_steps);
    if (n_steps == 1) {
        ts.push_back(t_max);
        return ts;
    }
    for (int i = 0; i < n_steps; ++i) {
        const double v = t_max - static_cast<double>(i) * (t_max - 1) / (n_steps - 1);
        const int t = static_cast<int>(std::floor(v));
        if (ts.empty() || t < ts.back()) ts.push_back(t);
    }
    return ts;
}

Matrix ddim_step(const Matrix& z_t, const Matrix& eps_tilde, int t, int t_prev,
                 const NoiseSchedule& schedule, double eta, RandomStream& stream) {
    require_same_shape(z_t, eps_tilde, "ddim_step");
    if (t_prev < 0 || t < t_prev || t < 1 || t > schedule.t_max) {
        throw ConfigError("ddim_step: need T >= t >= t_prev >= 0");
    }
    if (eta < 0.0) throw ConfigError("ddim_step: eta must be >= 0");
    const double abar_t = schedule.alpha_bar_at(t);
    const double abar_prev = schedule.alpha_bar_at(t_prev);
    const double sig = eta * std::sqrt((1.0 - abar_prev) / (1.0 - abar_t)) *
                       std::sqrt(1.0 - abar_t / abar_prev);
    if (sig * sig > 1.0 - abar_prev + 1e-15) {
        throw ConfigError("ddim_step: sigma^2 exceeds 1 - alpha_bar(t_prev)");
    }
    const double dir = std::sqrt(std::max(0.0, 1.0 - abar_prev - sig * sig));
    const double inv_sqrt_abar_t = 1.0 / std::sqrt(abar_t);
    const double sqrt_one_minus_abar_t = std::sqrt(1.0 - abar_t);
    const double sqrt_abar_prev = std::sqrt(abar_prev);

    Matrix out(z_t.rows, z_t.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double x0 = (z_t.data[i] - sqrt_one_minus_abar_t * eps_tilde.data[i]) * inv_sqrt_abar_t;
        out.data[i] = sqrt_abar_prev * x0 + dir * eps_tilde.data[i];
    }
    if (sig > 0.0) {
        for (double& v : out.data) v += sig * stream.normal();
    }
    return out;
}

Matrix ddpm_step(const Matrix& z_t, const Matrix& eps_tilde, int t, const NoiseSchedule& schedule,
                 RandomStream& stream) {
    require_same_shape(z_t, eps_tilde, "ddpm_step");
    if (t < 1 || t > schedule.t_max) throw ConfigError("ddpm_step: t out of range");
    const double beta = schedule.beta_at(t);
    const double abar = schedule.alpha_bar_at(t);
    const double coef = beta / std::sqrt(1.0 - abar);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha_at(t));

    Matrix out(z_t.rows, z_t.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = (z_t.data[i] - coef * eps_tilde.data[i]) * inv_sqrt_alpha;
    }
    if (t > 1) {
        const double sigma = schedule.sigma_at(t);
        for (double& v : out.data) v += sigma * stream.normal();
    }
    return out;
}

Matrix guided_eps(const Denoiser& denoiser, const NoiseClassifier* classifier,
                  const GuidanceRule& rule, const Matrix& z_t, int t, ConditionToken condition,
                  const NoiseSchedule& schedule, SampleStats* stats) {
    const int n = z_t.rows;
    const std::vector<int> tvec(n, t);
    const std::vector<ConditionToken> cond(n, condition);
    switch (rule.mode) {
        case GuidanceMode::none: {
            if (stats) stats->denoiser_passes += n;
            return predict_eps(denoiser, z_t, tvec, cond, schedule);
        }
        case GuidanceMode::cfg:
        case GuidanceMode::rescaled_cfg: {
            const std::vector<ConditionToken> null_tokens(n, ConditionToken::null_token());
            if (stats) stats->denoiser_passes += 2 * static_cast<std::uint64_t>(n);
            const Matrix eps_c = predict_eps(denoiser, z_t, tvec, cond, schedule);
            const Matrix eps_u = predict_eps(denoiser, z_t, tvec, null_tokens, schedule);
            if (rule.mode == GuidanceMode::cfg) return cfg_combine(eps_c, eps_u, rule.w);
            return rescaled_cfg(eps_c, eps_u, rule.w, rule.phi);
        }
        case GuidanceMode::classifier_grad: {
            if (classifier == nullptr) {
                throw ConfigError("guided_eps: classifier-gradient guidance needs a classifier");
            }
            if (stats) {
                stats->denoiser_passes += n;
                stats->classifier_passes += n;
            }
            const Matrix eps_c = predict_eps(denoiser, z_t, tvec, cond, schedule);
            const std::vector<int> classes(n, condition.class_index());
            const Matrix grad = classifier_logprob_grad(*classifier, z_t, tvec, classes, schedule);
            return classifier_guidance(eps_c, grad, rule.w, schedule.sigma_at(t));
        }
    }
    throw ConfigError("guided_eps: unknown guidance mode");
}

namespace {

void generate_rows(const Denoiser& denoiser, const NoiseClassifier* classifier,
                   const SamplerConfig& config, const NoiseSchedule& schedule,
                   const std::vector<int>& ts, int row_begin, int row_end, Matrix& out,
                   SampleStats* stats) {
    const int n = row_end - row_begin;
    if (n <= 0) return;
    const RandomStream base(config.seed);
    std::vector<RandomStream> rows;
    rows.reserve(n);
    for (int r = row_begin; r < row_end; ++r) {
        rows.push_back(base.fork(static_cast<std::uint64_t>(r)));
    }

    Matrix z(n, 2);
    for (int i = 0; i < n; ++i) {
        z.at(i, 0) = rows[i].normal();
        z.at(i, 1) = rows[i].normal();
    }

    Matrix row_z(1, 2), row_eps(1, 2);
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const int t = ts[k];
        const Matrix eps_tilde = guided_eps(denoiser, classifier, config.guidance, z, t,
                                            config.condition, schedule, stats);
        if (stats) stats->stepper_rows += n;
        if (config.kind == SamplerKind::ddpm) {
            for (int i = 0; i < n; ++i) {
                row_z.data[0] = z.at(i, 0);
                row_z.data[1] = z.at(i, 1);
                row_eps.data[0] = eps_tilde.at(i, 0);
                row_eps.data[1] = eps_tilde.at(i, 1);
                const Matrix next = ddpm_step(row_z, row_eps, t, schedule, rows[i]);
                z.at(i, 0) = next.data[0];
                z.at(i, 1) = next.data[1];
            }
        } else {
            const int t_prev = (k + 1 < ts.size()) ? ts[k + 1] : 0;
            for (int i = 0; i < n; ++i) {
                row_z.data[0] = z.at(i, 0);
                row_z.data[1] = z.at(i, 1);
                row_eps.data[0] = eps_tilde.at(i, 0);
                row_eps.data[1] = eps_tilde.at(i, 1);
                const Matrix next = ddim_step(row_z, row_eps, t, t_prev, schedule, config.eta, rows[i]);
                z.at(i, 0) = next.data[0];
                z.at(i, 1) = next.data[1];
            }
        }
    }

    for (int i = 0; i < n; ++i) {
        out.at(row_begin + i, 0) = z.at(i, 0);
        out.at(row_begin + i, 1) = z.at(i, 1);
    }
}

}  // namespace

Matrix generate(const Denoiser& denoiser, const NoiseClassifier* classifier,
                const SamplerConfig& config, const NoiseSchedule& schedule, int workers,
                SampleStats* stats) {
    config.validate(schedule);
    if (workers < 1) throw ConfigError("generate: workers must be >= 1");
    if (config.guidance.mode == GuidanceMode::classifier_grad && classifier == nullptr) {
        throw ConfigError("generate: classifier-gradient guidance needs a classifier");
    }
    if (!config.condition.is_null()) {
        const int c = config.condition.class_index();
        if (c < 0 || c >= denoiser.config.n_classes) {
            throw ConfigError("generate: condition class out of range");
        }
    }

    const std::vector<int> ts = (config.kind == SamplerKind::ddpm)
                                    ? timestep_subsequence(schedule.t_max, schedule.t_max)
                                    : timestep_subsequence(schedule.t_max, config.n_steps);

    Matrix out(config.n_samples, 2);
    if (config.n_samples == 0) return out;

    const int n_workers = std::min(workers, config.n_samples);
    if (n_workers == 1) {
        generate_rows(denoiser, classifier, config, schedule, ts, 0, config.n_samples, out, stats);
        return out;
    }

    std::vector<SampleStats> chunk_stats(n_workers);
    std::vector<std::thread> threads;
    threads.reserve(n_workers);
    const int per = (config.n_samples + n_workers - 1) / n_workers;
    for (int w = 0; w < n_workers; ++w) {
        const int begin = w * per;
        const int end = std::min(config.n_samples, begin + per);
        threads.emplace_back([&, begin, end, w] {
            generate_rows(denoiser, classifier, config, schedule, ts, begin, end, out,
                          stats ? &chunk_stats[w] : nullptr);
        });
    }
    for (std::thread& th : threads) th.join();
    if (stats) {
        for (const SampleStats& s : chunk_stats) {
            stats->denoiser_passes += s.denoiser_passes;
            stats->classifier_passes += s.classifier_passes;
            stats->stepper_rows += s.stepper_rows;
        }
    }
    return out;
}

}  // namespace cfglab
