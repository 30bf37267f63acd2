#pragma once

#include <span>
#include <vector>

#include "cfglab/matrix.hpp"

namespace cfglab {

/// Per-timestep schedule arrays defining the forward and reverse processes.
/// Timesteps are 1-indexed at the interface; internal arrays are 0-indexed,
/// so e.g. beta_at(1) == beta[0].
struct NoiseSchedule {
    int t_max = 0;                  // T
    std::vector<double> beta;       // variance increments, strictly increasing
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // cumulative product of alpha
    std::vector<double> sigma;      // reverse-step noise scale, sqrt(beta)

    double beta_at(int t) const;
    double alpha_at(int t) const;
    /// Accepts t in [0, T]; alpha_bar_at(0) == 1 by convention (needed for the
    /// final DDIM hop to data).
    double alpha_bar_at(int t) const;
    double sigma_at(int t) const;
};

/// Beta linearly interpolated over [beta_start, beta_end], endpoints included.
NoiseSchedule linear_schedule(int t_count, double beta_start, double beta_end);

/// Closed-form forward process: z_t = sqrt(abar_t)·z0 + sqrt(1-abar_t)·eps,
/// with a per-row timestep.
Matrix q_sample(const Matrix& z0, std::span<const int> t, const Matrix& eps,
                const NoiseSchedule& schedule);

}  // namespace cfglab
