#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cfglab/denoiser.hpp"
#include "cfglab/diffusion.hpp"
#include "cfglab/matrix.hpp"
#include "cfglab/mlp.hpp"
#include "cfglab/rng.hpp"

namespace cfglab {

enum class LossMode { standard, updated };

std::string loss_mode_name(LossMode m);
LossMode loss_mode_from_name(const std::string& name);

struct TrainConfig {
    LossMode loss_mode = LossMode::standard;
    double w_train = 1.0;   // guidance scale baked into the updated loss
    double p_uncond = 0.1;  // conditioning dropout rate; used by standard mode only
    int batch_size = 256;
    int steps = 20000;
    AdamHyper adam;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Replaces a class token with the null token with probability p_uncond.
ConditionToken dropout_condition(ConditionToken c, double p_uncond, RandomStream& stream);

/// Mean over all batch×dim elements of the squared difference.
double loss_standard(const Matrix& eps, const Matrix& eps_hat);

/// Mean squared residual of eps against (1+w)·eps_cond_hat − w·eps_uncond_hat.
double loss_updated(const Matrix& eps, const Matrix& eps_cond_hat, const Matrix& eps_uncond_hat,
                    double w);

/// Gradients for every denoiser tensor, in tensor_views() order.
struct DenoiserGrads {
    MlpGrads mlp;
    Matrix class_embed;  // (K+1)×E
};

DenoiserGrads zero_denoiser_grads(const Denoiser& model);

/// Work done, in units of single-example network passes.
struct PassCounter {
    std::uint64_t forward = 0;
    std::uint64_t backward = 0;
};

/// Per-step randomness, drawn in a fixed phase order: all timesteps, then all
/// noise rows, then (standard mode only) all dropout tokens. The fixed order
/// makes the updated/standard gradient reduction at w_train = 0 exact on a
/// shared stream state.
struct BatchDraws {
    std::vector<int> t;                   // per-example timestep in [1, T]
    Matrix eps;                           // n×2 forward noise
    std::vector<ConditionToken> tokens;   // standard mode only
};

BatchDraws draw_batch(std::span<const int> labels, const TrainConfig& config,
                      const NoiseSchedule& schedule, RandomStream& stream);

struct BatchObjective {
    double loss = 0.0;
    DenoiserGrads grads;
};

/// Loss and parameter gradients of one batch at explicit draws. Pure in the
/// model; the finite-difference tests perturb parameters against fixed draws.
BatchObjective objective_grads_at(const Denoiser& model, const Matrix& z0, std::span<const int> labels,
                                  const BatchDraws& draws, const TrainConfig& config,
                                  const NoiseSchedule& schedule, PassCounter* counter = nullptr);

/// draw_batch + objective_grads_at.
BatchObjective objective_grads(const Denoiser& model, const Matrix& z0, std::span<const int> labels,
                               const TrainConfig& config, const NoiseSchedule& schedule,
                               RandomStream& stream, PassCounter* counter = nullptr);

/// Adam state sized for every denoiser tensor.
AdamState adam_init_for(const Denoiser& model, const AdamHyper& hyper);

/// One optimization step on one batch; returns the pre-update loss.
double train_step(Denoiser& model, const Matrix& z0, std::span<const int> labels,
                  const TrainConfig& config, const NoiseSchedule& schedule, AdamState& adam,
                  RandomStream& stream, PassCounter* counter = nullptr);

/// One training batch: points with their class labels.
struct Batch {
    Matrix z0;                // n×2
    std::vector<int> labels;  // n
};

/// Draws a fresh batch each call; training consumes the stream first for the
/// batch, then for the per-step noise draws.
using BatchProvider = std::function<Batch(RandomStream& stream, int n)>;

struct TrainResult {
    std::vector<double> losses;  // one entry per step
    PassCounter passes;
};

/// Full loop from config.seed: fresh batch every step, one Adam update each.
TrainResult train_model(Denoiser& model, const TrainConfig& config, const NoiseSchedule& schedule,
                        const BatchProvider& provider);

// ---------------------------------------------------------------------------
// Noise-conditioned classifier training (cross-entropy on q_sample-noised
// batches at uniformly random t).

struct ClassifierTrainConfig {
    int batch_size = 256;
    int steps = 4000;
    AdamHyper adam;
    std::uint64_t seed = 0;
};

std::vector<double> train_classifier(NoiseClassifier& cl, const ClassifierTrainConfig& config,
                                     const NoiseSchedule& schedule, const BatchProvider& provider);

}  // namespace cfglab
