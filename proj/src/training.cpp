#include "cfglab/training.hpp"

#include <cmath>
#include <cstddef>
#include <numbers>

#include "cfglab/errors.hpp"

namespace cfglab {

std::string loss_mode_name(LossMode m) {
    return m == LossMode::standard ? "standard" : "updated";
}

LossMode loss_mode_from_name(const std::string& name) {
    if (name == "standard") return LossMode::standard;
    if (name == "updated") return LossMode::updated;
    throw ConfigError("unknown loss mode: " + name);
}

void TrainConfig::validate() const {
    if (w_train < 0.0) throw ConfigError("train: w_train must be >= 0");
    if (p_uncond < 0.0 || p_uncond > 1.0) throw ConfigError("train: p_uncond must be in [0, 1]");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (steps < 0) throw ConfigError("train: steps must be >= 0");
}

ConditionToken dropout_condition(ConditionToken c, double p_uncond, RandomStream& stream) {
    // uniform() is in (0, 1], so p_uncond = 0 never drops and p_uncond = 1 always does.
    const double u = stream.uniform();
    return u <= p_uncond ? ConditionToken::null_token() : c;
}

double loss_standard(const Matrix& eps, const Matrix& eps_hat) {
    require_same_shape(eps, eps_hat, "loss_standard");
    double acc = 0.0;
    for (std::size_t i = 0; i < eps.data.size(); ++i) {
        const double d = eps.data[i] - eps_hat.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(eps.data.size());
}

double loss_updated(const Matrix& eps, const Matrix& eps_cond_hat, const Matrix& eps_uncond_hat,
                    double w) {
    require_same_shape(eps, eps_cond_hat, "loss_updated");
    require_same_shape(eps, eps_uncond_hat, "loss_updated");
    if (w < 0.0) throw ConfigError("loss_updated: w must be >= 0");
    double acc = 0.0;
    for (std::size_t i = 0; i < eps.data.size(); ++i) {
        const double r = eps.data[i] - (1.0 + w) * eps_cond_hat.data[i] + w * eps_uncond_hat.data[i];
        acc += r * r;
    }
    return acc / static_cast<double>(eps.data.size());
}

DenoiserGrads zero_denoiser_grads(const Denoiser& model) {
    DenoiserGrads g;
    g.mlp = zero_grads_like(model.mlp);
    g.class_embed = Matrix(model.class_embed.rows, model.class_embed.cols);
    return g;
}

BatchDraws draw_batch(std::span<const int> labels, const TrainConfig& config,
                      const NoiseSchedule& schedule, RandomStream& stream) {
    const int n = static_cast<int>(labels.size());
    BatchDraws d;
    d.t.resize(n);
    for (int i = 0; i < n; ++i) {
        d.t[i] = 1 + static_cast<int>(stream.uniform_index(static_cast<std::uint64_t>(schedule.t_max)));
    }
    d.eps = Matrix(n, 2);
    for (double& v : d.eps.data) v = stream.normal();
    if (config.loss_mode == LossMode::standard) {
        d.tokens.reserve(n);
        for (int i = 0; i < n; ++i) {
            d.tokens.push_back(dropout_condition(ConditionToken::cls(labels[i]), config.p_uncond, stream));
        }
    }
    return d;
}

namespace {

/// Scatters the embedding-segment columns of the mlp input gradient back onto
/// the embedding-table rows selected per example.
void accumulate_embed_grads(const Denoiser& model, const Matrix& input_grad,
                            std::span<const ConditionToken> tokens, Matrix& embed_grads) {
    const int offset = 2 + model.config.time_embed_dim;
    const int e = model.config.class_embed_dim;
    for (int i = 0; i < input_grad.rows; ++i) {
        const int row = model.embed_row(tokens[i]);
        for (int j = 0; j < e; ++j) {
            embed_grads.at(row, j) += input_grad.at(i, offset + j);
        }
    }
}

std::vector<std::span<const double>> grad_views(const DenoiserGrads& g) {
    std::vector<std::span<const double>> views;
    for (const LinearLayer& layer : g.mlp.layers) {
        views.emplace_back(layer.weight.data);
        views.emplace_back(layer.bias);
    }
    views.emplace_back(g.class_embed.data);
    return views;
}

}  // namespace

BatchObjective objective_grads_at(const Denoiser& model, const Matrix& z0, std::span<const int> labels,
                                  const BatchDraws& draws, const TrainConfig& config,
                                  const NoiseSchedule& schedule, PassCounter* counter) {
    const int n = z0.rows;
    if (n == 0) throw ConfigError("objective_grads: empty batch");
    if (static_cast<int>(labels.size()) != n || static_cast<int>(draws.t.size()) != n ||
        draws.eps.rows != n) {
        throw ShapeError("objective_grads: batch size mismatch");
    }
    const Matrix z_t = q_sample(z0, draws.t, draws.eps, schedule);
    const double denom = static_cast<double>(draws.eps.data.size());

    BatchObjective out;
    out.grads = zero_denoiser_grads(model);

    if (config.loss_mode == LossMode::standard) {
        const Matrix input = assemble_denoiser_input(model, z_t, draws.t, draws.tokens, schedule);
        MlpCache cache;
        const Matrix eps_hat = mlp_forward(model.mlp, input, &cache);
        out.loss = loss_standard(draws.eps, eps_hat);
        Matrix upstream(n, 2);
        for (std::size_t i = 0; i < upstream.data.size(); ++i) {
            upstream.data[i] = 2.0 * (eps_hat.data[i] - draws.eps.data[i]) / denom;
        }
        MlpBackwardResult back = mlp_backward(model.mlp, cache, upstream);
        out.grads.mlp = std::move(back.grads);
        accumulate_embed_grads(model, back.input_grad, draws.tokens, out.grads.class_embed);
        if (counter) {
            counter->forward += static_cast<std::uint64_t>(n);
            counter->backward += static_cast<std::uint64_t>(n);
        }
        return out;
    }

    // Updated mode: the same (z_t, t) pass through the network twice, once
    // conditioned and once with the null token; the loss couples both outputs
    // so gradients flow through both branches into the shared parameters.
    const double w = config.w_train;
    std::vector<ConditionToken> cond;
    cond.reserve(n);
    for (int i = 0; i < n; ++i) cond.push_back(ConditionToken::cls(labels[i]));
    const std::vector<ConditionToken> null_tokens(n, ConditionToken::null_token());

    const Matrix input_c = assemble_denoiser_input(model, z_t, draws.t, cond, schedule);
    const Matrix input_u = assemble_denoiser_input(model, z_t, draws.t, null_tokens, schedule);
    MlpCache cache_c, cache_u;
    const Matrix eps_c = mlp_forward(model.mlp, input_c, &cache_c);
    const Matrix eps_u = mlp_forward(model.mlp, input_u, &cache_u);
    out.loss = loss_updated(draws.eps, eps_c, eps_u, w);

    Matrix upstream_c(n, 2), upstream_u(n, 2);
    for (std::size_t i = 0; i < upstream_c.data.size(); ++i) {
        const double r = draws.eps.data[i] - (1.0 + w) * eps_c.data[i] + w * eps_u.data[i];
        upstream_c.data[i] = -(1.0 + w) * 2.0 * r / denom;
        upstream_u.data[i] = w * 2.0 * r / denom;
    }
    MlpBackwardResult back_c = mlp_backward(model.mlp, cache_c, upstream_c);
    MlpBackwardResult back_u = mlp_backward(model.mlp, cache_u, upstream_u);
    out.grads.mlp = std::move(back_c.grads);
    add_grads(out.grads.mlp, back_u.grads);
    accumulate_embed_grads(model, back_c.input_grad, cond, out.grads.class_embed);
    accumulate_embed_grads(model, back_u.input_grad, null_tokens, out.grads.class_embed);
    if (counter) {
        counter->forward += 2 * static_cast<std::uint64_t>(n);
        counter->backward += 2 * static_cast<std::uint64_t>(n);
    }
    return out;
}

BatchObjective objective_grads(const Denoiser& model, const Matrix& z0, std::span<const int> labels,
                               const TrainConfig& config, const NoiseSchedule& schedule,
                               RandomStream& stream, PassCounter* counter) {
    const BatchDraws draws = draw_batch(labels, config, schedule, stream);
    return objective_grads_at(model, z0, labels, draws, config, schedule, counter);
}

AdamState adam_init_for(const Denoiser& model, const AdamHyper& hyper) {
    const std::vector<std::size_t> sizes = model.tensor_sizes();
    return adam_init(sizes, hyper);
}

double train_step(Denoiser& model, const Matrix& z0, std::span<const int> labels,
                  const TrainConfig& config, const NoiseSchedule& schedule, AdamState& adam,
                  RandomStream& stream, PassCounter* counter) {
    BatchObjective obj = objective_grads(model, z0, labels, config, schedule, stream, counter);
    if (!std::isfinite(obj.loss)) throw NumericError("train_step: non-finite loss");
    std::vector<std::span<double>> params = model.tensor_views();
    std::vector<std::span<const double>> grads = grad_views(obj.grads);
    adam_step_arrays(params, grads, adam);
    return obj.loss;
}

TrainResult train_model(Denoiser& model, const TrainConfig& config, const NoiseSchedule& schedule,
                        const BatchProvider& provider) {
    config.validate();
    RandomStream stream(config.seed);
    AdamState adam = adam_init_for(model, config.adam);
    TrainResult result;
    result.losses.reserve(config.steps);
    for (int step = 0; step < config.steps; ++step) {
        // Cosine decay to zero; constant lr leaves Adam jitter in the learned
        // field that dominates sampling error at this problem scale.
        adam.hyper.lr = config.adam.lr * 0.5 *
                        (1.0 + std::cos(std::numbers::pi * step / config.steps));
        const Batch batch = provider(stream, config.batch_size);
        const double loss = train_step(model, batch.z0, batch.labels, config, schedule, adam,
                                       stream, &result.passes);
        result.losses.push_back(loss);
    }
    return result;
}

std::vector<double> train_classifier(NoiseClassifier& cl, const ClassifierTrainConfig& config,
                                     const NoiseSchedule& schedule, const BatchProvider& provider) {
    if (config.batch_size < 1) throw ConfigError("train_classifier: batch_size must be >= 1");
    RandomStream stream(config.seed);
    std::vector<std::size_t> sizes;
    for (const LinearLayer& layer : cl.mlp.layers) {
        sizes.push_back(layer.weight.data.size());
        sizes.push_back(layer.bias.size());
    }
    AdamState adam = adam_init(sizes, config.adam);
    std::vector<double> losses;
    losses.reserve(config.steps);

    for (int step = 0; step < config.steps; ++step) {
        const Batch batch = provider(stream, config.batch_size);
        const int n = batch.z0.rows;
        std::vector<int> t(n);
        for (int i = 0; i < n; ++i) {
            t[i] = 1 + static_cast<int>(stream.uniform_index(static_cast<std::uint64_t>(schedule.t_max)));
        }
        Matrix eps(n, 2);
        for (double& v : eps.data) v = stream.normal();
        const Matrix z_t = q_sample(batch.z0, t, eps, schedule);

        const Matrix input = assemble_classifier_input(cl, z_t, t, schedule);
        MlpCache cache;
        const Matrix logits = mlp_forward(cl.mlp, input, &cache);
        const Matrix logp = log_softmax_rows(logits);

        double loss = 0.0;
        Matrix upstream(n, logits.cols);
        for (int i = 0; i < n; ++i) {
            const int label = batch.labels[i];
            loss -= logp.at(i, label);
            // d(-logp[label])/dlogits = softmax - onehot
            for (int k = 0; k < logits.cols; ++k) {
                upstream.at(i, k) = std::exp(logp.at(i, k)) / static_cast<double>(n);
            }
            upstream.at(i, label) -= 1.0 / static_cast<double>(n);
        }
        loss /= static_cast<double>(n);
        if (!std::isfinite(loss)) throw NumericError("train_classifier: non-finite loss");

        MlpBackwardResult back = mlp_backward(cl.mlp, cache, upstream);
        std::vector<std::span<double>> params;
        std::vector<std::span<const double>> grads;
        for (std::size_t k = 0; k < cl.mlp.layers.size(); ++k) {
            params.emplace_back(cl.mlp.layers[k].weight.data);
            params.emplace_back(cl.mlp.layers[k].bias);
            grads.emplace_back(back.grads.layers[k].weight.data);
            grads.emplace_back(back.grads.layers[k].bias);
        }
        adam_step_arrays(params, grads, adam);
        losses.push_back(loss);
    }
    return losses;
}

}  // namespace cfglab
