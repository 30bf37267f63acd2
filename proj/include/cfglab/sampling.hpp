#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfglab/denoiser.hpp"
#include "cfglab/diffusion.hpp"
#include "cfglab/guidance.hpp"
#include "cfglab/matrix.hpp"
#include "cfglab/rng.hpp"

namespace cfglab {

enum class SamplerKind { ddpm, ddim };

std::string sampler_name(SamplerKind k);
SamplerKind sampler_from_name(const std::string& name);

struct SamplerConfig {
    SamplerKind kind = SamplerKind::ddim;
    int n_steps = 50;
    double eta = 0.0;  // DDIM stochasticity; 0 = deterministic
    GuidanceRule guidance = GuidanceRule::none();
    int n_samples = 0;
    ConditionToken condition = ConditionToken::null_token();
    std::uint64_t seed = 0;

    /// Throws ConfigError on any invariant violation (DDPM needs n_steps = T,
    /// guided modes need a class condition, ...).
    void validate(const NoiseSchedule& schedule) const;
};

/// n_steps evenly spaced timesteps from T down to 1, endpoints included,
/// strictly decreasing (floor of linear interpolation, deduplicated).
std::vector<int> timestep_subsequence(int t_max, int n_steps);

/// One DDIM hop t -> t_prev. t_prev = 0 is the final hop to data (abar = 1).
/// eta = 0 consumes no randomness; the degenerate t_prev = t is the identity.
Matrix ddim_step(const Matrix& z_t, const Matrix& eps_tilde, int t, int t_prev,
                 const NoiseSchedule& schedule, double eta, RandomStream& stream);

/// One DDPM ancestral step t -> t-1; deterministic at t = 1 (no draw consumed).
Matrix ddpm_step(const Matrix& z_t, const Matrix& eps_tilde, int t, const NoiseSchedule& schedule,
                 RandomStream& stream);

/// Network/stepper work counters, in units of single-example evaluations.
struct SampleStats {
    std::uint64_t denoiser_passes = 0;
    std::uint64_t classifier_passes = 0;
    std::uint64_t stepper_rows = 0;
};

/// Guided noise estimate for one batch at a shared timestep. Cfg and
/// RescaledCfg evaluate both branches even at w = 0.
Matrix guided_eps(const Denoiser& denoiser, const NoiseClassifier* classifier,
                  const GuidanceRule& rule, const Matrix& z_t, int t, ConditionToken condition,
                  const NoiseSchedule& schedule, SampleStats* stats = nullptr);

/// Reverse-process generation: z_T ~ N(0, I), then the configured stepper with
/// the guidance rule applied to every noise estimate. Each output row uses its
/// own random stream forked from (seed, row), so results are bitwise identical
/// for any worker count and permute with requested row order.
Matrix generate(const Denoiser& denoiser, const NoiseClassifier* classifier,
                const SamplerConfig& config, const NoiseSchedule& schedule, int workers = 1,
                SampleStats* stats = nullptr);

}  // namespace cfglab
