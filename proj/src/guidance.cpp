#include "cfglab/guidance.hpp"

#include <cmath>

#include "cfglab/errors.hpp"

namespace cfglab {

std::string guidance_mode_name(GuidanceMode m) {
    switch (m) {
        case GuidanceMode::none: return "none";
        case GuidanceMode::cfg: return "cfg";
        case GuidanceMode::classifier_grad: return "classifier";
        case GuidanceMode::rescaled_cfg: return "rescaled";
    }
    throw ConfigError("unknown guidance mode enum value");
}

GuidanceMode guidance_mode_from_name(const std::string& name) {
    if (name == "none") return GuidanceMode::none;
    if (name == "cfg") return GuidanceMode::cfg;
    if (name == "classifier") return GuidanceMode::classifier_grad;
    if (name == "rescaled") return GuidanceMode::rescaled_cfg;
    throw ConfigError("unknown guidance mode: " + name);
}

void GuidanceRule::validate() const {
    if (w < 0.0) throw ConfigError("guidance: w must be >= 0");
    if (phi < 0.0 || phi > 1.0) throw ConfigError("guidance: phi must be in [0, 1]");
}

Matrix cfg_combine(const Matrix& eps_cond, const Matrix& eps_uncond, double w) {
    require_same_shape(eps_cond, eps_uncond, "cfg_combine");
    Matrix out(eps_cond.rows, eps_cond.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = (1.0 + w) * eps_cond.data[i] - w * eps_uncond.data[i];
    }
    return out;
}

Matrix classifier_guidance(const Matrix& eps_cond, const Matrix& grad_logp, double w, double sigma_t) {
    require_same_shape(eps_cond, grad_logp, "classifier_guidance");
    if (!(sigma_t > 0.0)) throw ConfigError("classifier_guidance: sigma_t must be > 0");
    Matrix out(eps_cond.rows, eps_cond.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = eps_cond.data[i] - w * sigma_t * grad_logp.data[i];
    }
    return out;
}

namespace {

double row_std(const Matrix& m, int row) {
    const double* r = m.data.data() + static_cast<std::size_t>(row) * m.cols;
    double mean = 0.0;
    for (int j = 0; j < m.cols; ++j) mean += r[j];
    mean /= m.cols;
    double var = 0.0;
    for (int j = 0; j < m.cols; ++j) var += (r[j] - mean) * (r[j] - mean);
    return std::sqrt(var / m.cols);
}

}  // namespace

Matrix rescaled_cfg(const Matrix& eps_cond, const Matrix& eps_uncond, double w, double phi) {
    if (phi < 0.0 || phi > 1.0) throw ConfigError("rescaled_cfg: phi must be in [0, 1]");
    Matrix x = cfg_combine(eps_cond, eps_uncond, w);
    if (phi == 0.0) return x;
    Matrix out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        const double sx = row_std(x, i);
        if (sx == 0.0) {
            throw NumericError("rescaled_cfg: degenerate zero-std guided row with phi > 0");
        }
        const double scale = row_std(eps_cond, i) / sx;
        for (int j = 0; j < x.cols; ++j) {
            const double plain = x.at(i, j);
            out.at(i, j) = phi * (plain * scale) + (1.0 - phi) * plain;
        }
    }
    return out;
}

}  // namespace cfglab
