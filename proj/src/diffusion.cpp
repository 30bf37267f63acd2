#include "cfglab/diffusion.hpp"

#include <cmath>
#include <string>

#include "cfglab/errors.hpp"

namespace cfglab {

namespace {

void check_t(int t, int t_max, int lo) {
    if (t < lo || t > t_max) {
        throw ConfigError("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) +
                          ", " + std::to_string(t_max) + "]");
    }
}

}  // namespace

double NoiseSchedule::beta_at(int t) const {
    check_t(t, t_max, 1);
    return beta[t - 1];
}

double NoiseSchedule::alpha_at(int t) const {
    check_t(t, t_max, 1);
    return alpha[t - 1];
}

double NoiseSchedule::alpha_bar_at(int t) const {
    check_t(t, t_max, 0);
    return t == 0 ? 1.0 : alpha_bar[t - 1];
}

double NoiseSchedule::sigma_at(int t) const {
    check_t(t, t_max, 1);
    return sigma[t - 1];
}

NoiseSchedule linear_schedule(int t_count, double beta_start, double beta_end) {
    if (t_count < 2) throw ConfigError("linear_schedule: T must be >= 2");
    if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0)) {
        throw ConfigError("linear_schedule: need 0 < beta_start < beta_end < 1");
    }
    NoiseSchedule s;
    s.t_max = t_count;
    s.beta.resize(t_count);
    s.alpha.resize(t_count);
    s.alpha_bar.resize(t_count);
    s.sigma.resize(t_count);
    double prod = 1.0;
    for (int i = 0; i < t_count; ++i) {
        s.beta[i] = beta_start + (beta_end - beta_start) * i / (t_count - 1);
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
        s.sigma[i] = std::sqrt(s.beta[i]);
    }
    return s;
}

Matrix q_sample(const Matrix& z0, std::span<const int> t, const Matrix& eps,
                const NoiseSchedule& schedule) {
    require_same_shape(z0, eps, "q_sample");
    if (static_cast<int>(t.size()) != z0.rows) {
        throw ShapeError("q_sample: timestep count != batch rows");
    }
    Matrix z_t(z0.rows, z0.cols);
    for (int i = 0; i < z0.rows; ++i) {
        check_t(t[i], schedule.t_max, 1);
        const double abar = schedule.alpha_bar_at(t[i]);
        const double a = std::sqrt(abar);
        const double b = std::sqrt(1.0 - abar);
        for (int j = 0; j < z0.cols; ++j) {
            z_t.at(i, j) = a * z0.at(i, j) + b * eps.at(i, j);
        }
    }
    return z_t;
}

}  // namespace cfglab
