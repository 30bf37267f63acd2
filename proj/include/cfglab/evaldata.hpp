#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cfglab/matrix.hpp"
#include "cfglab/rng.hpp"

namespace cfglab {

/// 2D Gaussian mixture with per-class Cholesky/inverse/logdet cached at
/// construction (the only place SPD is enforced).
struct MixtureSpec {
    struct Component {
        std::array<double, 2> mean{};
        std::array<double, 4> cov{};  // row-major 2×2, symmetric positive-definite
        double weight = 0.0;
        // cached at construction
        double l11 = 0.0, l21 = 0.0, l22 = 0.0;  // lower Cholesky factor
        std::array<double, 4> inv_cov{};
        double logdet = 0.0;
        double log_weight = 0.0;
    };
    std::vector<Component> components;

    int n_classes() const { return static_cast<int>(components.size()); }
};

/// Validates weights (sum 1 within 1e-12) and SPD covariances; caches factors.
MixtureSpec make_mixture(const std::vector<std::array<double, 2>>& means,
                         const std::vector<std::array<double, 4>>& covs,
                         const std::vector<double>& weights);

/// Three equal-weight isotropic classes (sigma 0.35) at angles 90/210/330
/// degrees on a radius-2 circle.
MixtureSpec default_mixture();

struct SampleSet {
    Matrix points;            // n×2
    std::vector<int> labels;  // optional; empty or one per row
    std::string provenance;   // config digest of the producing run

    void validate(int n_classes) const;
};

/// Labeled draw: class from the mixture weights, then the class Gaussian.
/// Consumes one uniform plus two normals per point.
SampleSet sample_mixture(const MixtureSpec& spec, int n, RandomStream& stream);

/// log p(c|z) for every class, computed fully in log space.
std::vector<double> class_log_posterior(const MixtureSpec& spec, std::array<double, 2> z);

/// Bayes posterior p(c|z); entries sum to 1.
std::vector<double> class_posterior(const MixtureSpec& spec, std::array<double, 2> z);

/// Ground truth for guided sampling at scale w: draws 50·n mixture proposals,
/// weights by p(c|z)^w, and resamples n points (self-normalized importance
/// resampling). Throws NumericError when the weight effective sample size
/// drops below n.
SampleSet tilted_target_sample(const MixtureSpec& spec, int cls, double w, int n,
                               RandomStream& stream);

/// Mean Euclidean distance over all cross pairs (denominator |a|·|b|).
double mean_cross_distance(const Matrix& a, const Matrix& b);

/// Mean Euclidean distance over all within pairs, V-statistic convention
/// (denominator n², zero diagonal included).
double mean_within_distance(const Matrix& a);

/// 2·E‖a−b‖ − E‖a−a′‖ − E‖b−b′‖ (V-statistic). Exactly symmetric in its
/// arguments (operands are ordered canonically before accumulation).
double energy_distance(const SampleSet& a, const SampleSet& b);

/// Average 1-D W1 over n_proj uniform directions (sorted projections). When
/// sizes differ the larger set is subsampled without replacement first.
double sliced_wasserstein(const SampleSet& a, const SampleSet& b, int n_proj, RandomStream& stream);

}  // namespace cfglab
