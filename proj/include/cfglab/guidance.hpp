#pragma once

#include <string>

#include "cfglab/matrix.hpp"

namespace cfglab {

enum class GuidanceMode { none, cfg, classifier_grad, rescaled_cfg };

std::string guidance_mode_name(GuidanceMode m);
GuidanceMode guidance_mode_from_name(const std::string& name);

/// Noise-estimate combination rule applied at each reverse step. Guidance
/// operates purely on noise estimates; samplers own all schedule math.
struct GuidanceRule {
    GuidanceMode mode = GuidanceMode::none;
    double w = 0.0;    // guidance scale, >= 0
    double phi = 0.0;  // rescaled_cfg mixing weight in [0, 1]

    static GuidanceRule none() { return {GuidanceMode::none, 0.0, 0.0}; }
    static GuidanceRule cfg(double w) { return {GuidanceMode::cfg, w, 0.0}; }
    static GuidanceRule classifier_grad(double w) { return {GuidanceMode::classifier_grad, w, 0.0}; }
    static GuidanceRule rescaled_cfg(double w, double phi) { return {GuidanceMode::rescaled_cfg, w, phi}; }

    void validate() const;
};

/// (1+w)·eps_cond − w·eps_uncond, elementwise.
Matrix cfg_combine(const Matrix& eps_cond, const Matrix& eps_uncond, double w);

/// eps_cond − w·sigma_t·grad_logp, elementwise.
Matrix classifier_guidance(const Matrix& eps_cond, const Matrix& grad_logp, double w, double sigma_t);

/// Plain c.f.g. result rescaled per batch row to the conditional estimate's
/// standard deviation, then mixed back: phi·rescaled + (1−phi)·plain.
/// Row std is mean-centered and population-normalized over coordinates.
Matrix rescaled_cfg(const Matrix& eps_cond, const Matrix& eps_uncond, double w, double phi);

}  // namespace cfglab
