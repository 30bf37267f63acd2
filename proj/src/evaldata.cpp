#include "cfglab/evaldata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cfglab/errors.hpp"

namespace cfglab {

MixtureSpec make_mixture(const std::vector<std::array<double, 2>>& means,
                         const std::vector<std::array<double, 4>>& covs,
                         const std::vector<double>& weights) {
    const std::size_t k = means.size();
    if (k == 0) throw ConfigError("mixture: needs at least one class");
    if (covs.size() != k || weights.size() != k) {
        throw ConfigError("mixture: means/covs/weights length mismatch");
    }
    double weight_sum = 0.0;
    for (double w : weights) {
        if (!(w > 0.0)) throw ConfigError("mixture: weights must be positive");
        weight_sum += w;
    }
    if (std::abs(weight_sum - 1.0) > 1e-12) throw ConfigError("mixture: weights must sum to 1");

    MixtureSpec spec;
    spec.components.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        MixtureSpec::Component& c = spec.components[i];
        c.mean = means[i];
        c.cov = covs[i];
        c.weight = weights[i];
        c.log_weight = std::log(weights[i]);
        const double c00 = c.cov[0], c01 = c.cov[1], c10 = c.cov[2], c11 = c.cov[3];
        if (std::abs(c01 - c10) > 1e-12) throw ConfigError("mixture: covariance not symmetric");
        if (!(c00 > 0.0)) throw ConfigError("mixture: covariance not positive-definite");
        c.l11 = std::sqrt(c00);
        c.l21 = c10 / c.l11;
        const double rem = c11 - c.l21 * c.l21;
        if (!(rem > 0.0)) throw ConfigError("mixture: covariance not positive-definite");
        c.l22 = std::sqrt(rem);
        const double det = c00 * c11 - c01 * c10;
        c.logdet = std::log(det);
        c.inv_cov = {c11 / det, -c01 / det, -c10 / det, c00 / det};
    }
    return spec;
}

MixtureSpec default_mixture() {
    const double r3 = std::sqrt(3.0);  // radius 2 at angles 90/210/330 degrees
    const double s2 = 0.35 * 0.35;
    const std::array<double, 4> iso = {s2, 0.0, 0.0, s2};
    return make_mixture({{0.0, 2.0}, {-r3, -1.0}, {r3, -1.0}}, {iso, iso, iso},
                        {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
}

void SampleSet::validate(int n_classes) const {
    if (points.cols != 2) throw ShapeError("sample set: points must be n×2");
    if (!labels.empty()) {
        if (static_cast<int>(labels.size()) != points.rows) {
            throw ShapeError("sample set: one label per row");
        }
        for (int label : labels) {
            if (label < 0 || label >= n_classes) throw ConfigError("sample set: label out of range");
        }
    }
}

SampleSet sample_mixture(const MixtureSpec& spec, int n, RandomStream& stream) {
    if (n < 1) throw ConfigError("sample_mixture: n must be >= 1");
    const int k = spec.n_classes();
    SampleSet out;
    out.points = Matrix(n, 2);
    out.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        const double u = stream.uniform();
        int cls = k - 1;
        double cum = 0.0;
        for (int j = 0; j < k; ++j) {
            cum += spec.components[j].weight;
            if (u <= cum) {
                cls = j;
                break;
            }
        }
        const MixtureSpec::Component& c = spec.components[cls];
        const double x1 = stream.normal();
        const double x2 = stream.normal();
        out.points.at(i, 0) = c.mean[0] + c.l11 * x1;
        out.points.at(i, 1) = c.mean[1] + c.l21 * x1 + c.l22 * x2;
        out.labels[i] = cls;
    }
    return out;
}

std::vector<double> class_log_posterior(const MixtureSpec& spec, std::array<double, 2> z) {
    const int k = spec.n_classes();
    std::vector<double> lj(k);
    for (int j = 0; j < k; ++j) {
        const MixtureSpec::Component& c = spec.components[j];
        const double d0 = z[0] - c.mean[0];
        const double d1 = z[1] - c.mean[1];
        const double quad = c.inv_cov[0] * d0 * d0 + (c.inv_cov[1] + c.inv_cov[2]) * d0 * d1 +
                            c.inv_cov[3] * d1 * d1;
        lj[j] = c.log_weight - std::log(2.0 * std::numbers::pi) - 0.5 * c.logdet - 0.5 * quad;
    }
    const double m = *std::max_element(lj.begin(), lj.end());
    double acc = 0.0;
    for (double v : lj) acc += std::exp(v - m);
    const double lse = m + std::log(acc);
    for (double& v : lj) v -= lse;
    return lj;
}

std::vector<double> class_posterior(const MixtureSpec& spec, std::array<double, 2> z) {
    std::vector<double> p = class_log_posterior(spec, z);
    double sum = 0.0;
    for (double& v : p) {
        v = std::exp(v);
        sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
}

SampleSet tilted_target_sample(const MixtureSpec& spec, int cls, double w, int n,
                               RandomStream& stream) {
    if (w < 0.0) throw ConfigError("tilted_target_sample: w must be >= 0");
    if (n < 1) throw ConfigError("tilted_target_sample: n must be >= 1");
    if (cls < 0 || cls >= spec.n_classes()) {
        throw ConfigError("tilted_target_sample: class out of range");
    }
    const int m = 50 * n;
    const SampleSet proposals = sample_mixture(spec, m, stream);

    std::vector<double> lw(m);
    double lw_max = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
        const std::array<double, 2> z = {proposals.points.at(i, 0), proposals.points.at(i, 1)};
        lw[i] = w * class_log_posterior(spec, z)[cls];
        lw_max = std::max(lw_max, lw[i]);
    }

    std::vector<double> cum(m);
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < m; ++i) {
        const double wt = std::exp(lw[i] - lw_max);
        s1 += wt;
        s2 += wt * wt;
        cum[i] = s1;
    }
    const double ess = s1 * s1 / s2;
    if (ess < static_cast<double>(n)) {
        throw NumericError("tilted_target_sample: importance weights degenerate (effective sample size " +
                           std::to_string(ess) + " < n)");
    }

    SampleSet out;
    out.points = Matrix(n, 2);
    out.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        const double target = stream.uniform() * s1;
        const auto it = std::lower_bound(cum.begin(), cum.end(), target);
        const int idx = std::min<int>(m - 1, static_cast<int>(it - cum.begin()));
        out.points.at(i, 0) = proposals.points.at(idx, 0);
        out.points.at(i, 1) = proposals.points.at(idx, 1);
        out.labels[i] = proposals.labels[idx];
    }
    return out;
}

namespace {

void require_points(const Matrix& a, const char* what) {
    if (a.cols != 2) throw ShapeError(std::string(what) + ": points must be n×2");
    if (a.rows == 0) throw ConfigError(std::string(what) + ": empty sample set");
}

inline double dist2d(double ax, double ay, double bx, double by) {
    const double dx = ax - bx;
    const double dy = ay - by;
    return std::sqrt(dx * dx + dy * dy);
}

/// Distances from (ax, ay) to rows [j0, j1) of b, accumulated in a fixed
/// order: four independent lanes over the blocked range, combined pairwise,
/// then the tail. The lane structure keeps the loop vectorizable without
/// float reassociation.
double row_distance_sum(double ax, double ay, const double* b, int j0, int j1) {
    double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
    int j = j0;
    for (; j + 4 <= j1; j += 4) {
        l0 += dist2d(ax, ay, b[2 * j + 0], b[2 * j + 1]);
        l1 += dist2d(ax, ay, b[2 * j + 2], b[2 * j + 3]);
        l2 += dist2d(ax, ay, b[2 * j + 4], b[2 * j + 5]);
        l3 += dist2d(ax, ay, b[2 * j + 6], b[2 * j + 7]);
    }
    double rest = 0.0;
    for (; j < j1; ++j) rest += dist2d(ax, ay, b[2 * j], b[2 * j + 1]);
    return ((l0 + l1) + (l2 + l3)) + rest;
}

}  // namespace

double mean_cross_distance(const Matrix& a, const Matrix& b) {
    require_points(a, "mean_cross_distance");
    require_points(b, "mean_cross_distance");
    double total = 0.0;
    for (int i = 0; i < a.rows; ++i) {
        total += row_distance_sum(a.at(i, 0), a.at(i, 1), b.data.data(), 0, b.rows);
    }
    return total / (static_cast<double>(a.rows) * static_cast<double>(b.rows));
}

double mean_within_distance(const Matrix& a) {
    require_points(a, "mean_within_distance");
    double total = 0.0;
    for (int i = 0; i < a.rows; ++i) {
        total += row_distance_sum(a.at(i, 0), a.at(i, 1), a.data.data(), i + 1, a.rows);
    }
    return 2.0 * total / (static_cast<double>(a.rows) * static_cast<double>(a.rows));
}

double energy_distance(const SampleSet& a, const SampleSet& b) {
    require_points(a.points, "energy_distance");
    require_points(b.points, "energy_distance");
    // Canonical operand order makes the result exactly symmetric in (a, b).
    const SampleSet* first = &a;
    const SampleSet* second = &b;
    const bool swap =
        (b.points.rows < a.points.rows) ||
        (b.points.rows == a.points.rows &&
         std::lexicographical_compare(b.points.data.begin(), b.points.data.end(),
                                      a.points.data.begin(), a.points.data.end()));
    if (swap) std::swap(first, second);
    const double cross = mean_cross_distance(first->points, second->points);
    return 2.0 * cross - mean_within_distance(first->points) - mean_within_distance(second->points);
}

namespace {

/// Uniform subsample without replacement (partial Fisher-Yates); identity
/// (and no stream consumption) when n equals the input size.
Matrix subsample_points(const Matrix& points, int n, RandomStream& stream) {
    if (points.rows == n) return points;
    std::vector<int> idx(points.rows);
    for (int i = 0; i < points.rows; ++i) idx[i] = i;
    for (int i = 0; i < n; ++i) {
        const int j = i + static_cast<int>(stream.uniform_index(static_cast<std::uint64_t>(points.rows - i)));
        std::swap(idx[i], idx[j]);
    }
    Matrix out(n, 2);
    for (int i = 0; i < n; ++i) {
        out.at(i, 0) = points.at(idx[i], 0);
        out.at(i, 1) = points.at(idx[i], 1);
    }
    return out;
}

}  // namespace

double sliced_wasserstein(const SampleSet& a, const SampleSet& b, int n_proj, RandomStream& stream) {
    require_points(a.points, "sliced_wasserstein");
    require_points(b.points, "sliced_wasserstein");
    if (n_proj < 1) throw ConfigError("sliced_wasserstein: n_proj must be >= 1");
    const int n = std::min(a.points.rows, b.points.rows);
    const Matrix pa = subsample_points(a.points, n, stream);
    const Matrix pb = subsample_points(b.points, n, stream);
    if (pa.rows != pb.rows) throw ConfigError("sliced_wasserstein: size mismatch after subsampling");

    std::vector<double> proj_a(n), proj_b(n);
    double acc = 0.0;
    for (int p = 0; p < n_proj; ++p) {
        const double theta = 2.0 * std::numbers::pi * stream.uniform();
        const double cx = std::cos(theta);
        const double cy = std::sin(theta);
        for (int i = 0; i < n; ++i) {
            proj_a[i] = cx * pa.at(i, 0) + cy * pa.at(i, 1);
            proj_b[i] = cx * pb.at(i, 0) + cy * pb.at(i, 1);
        }
        std::sort(proj_a.begin(), proj_a.end());
        std::sort(proj_b.begin(), proj_b.end());
        double w1 = 0.0;
        for (int i = 0; i < n; ++i) w1 += std::abs(proj_a[i] - proj_b[i]);
        acc += w1 / static_cast<double>(n);
    }
    return acc / static_cast<double>(n_proj);
}

}  // namespace cfglab
