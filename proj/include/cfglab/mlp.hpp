#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cfglab/matrix.hpp"
#include "cfglab/rng.hpp"

namespace cfglab {

/// Scalar nonlinearity applied between layers (never after the final layer;
/// noise predictions are unbounded).
enum class Activation { silu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct LinearLayer {
    Matrix weight;              // out×in
    std::vector<double> bias;   // out
};

struct MlpParams {
    std::vector<LinearLayer> layers;
    Activation activation = Activation::silu;

    int input_dim() const { return layers.front().weight.cols; }
    int output_dim() const { return layers.back().weight.rows; }

    /// Checks dimension chaining and finiteness; throws ShapeError/NumericError.
    void validate() const;
};

/// Gradient container mirroring MlpParams shapes.
struct MlpGrads {
    std::vector<LinearLayer> layers;
};

MlpGrads zero_grads_like(const MlpParams& params);
void add_grads(MlpGrads& into, const MlpGrads& other);

/// Per-layer records kept by the forward pass, sufficient for backward.
struct MlpCache {
    Matrix input;
    std::vector<Matrix> pre;    // pre-activation per layer
    std::vector<Matrix> post;   // post-activation per layer (post.back() is the output)
};

/// batch×in → batch×out. Pass a cache to enable a later backward pass.
Matrix mlp_forward(const MlpParams& params, const Matrix& input, MlpCache* cache = nullptr);

struct MlpBackwardResult {
    MlpGrads grads;
    Matrix input_grad;  // batch×in
};

/// Gradients of sum_batch⟨upstream, output⟩ w.r.t. parameters and input.
/// The cache must come from a matching mlp_forward call.
MlpBackwardResult mlp_backward(const MlpParams& params, const MlpCache& cache, const Matrix& upstream);

/// He-style init: weights ~ N(0, 2/fan_in), biases 0.
MlpParams init_mlp(int input_dim, std::span<const int> hidden, int output_dim, RandomStream& stream,
                   Activation activation = Activation::silu);

// ---------------------------------------------------------------------------
// Adam

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Moment arrays mirror an ordered list of parameter tensors (one flat slot
/// per tensor), so the same state type serves MLPs and embedding tables.
struct AdamState {
    struct Slot {
        std::vector<double> m;
        std::vector<double> v;
    };
    std::vector<Slot> slots;
    long step = 0;
    AdamHyper hyper;
};

AdamState adam_init(std::span<const std::size_t> tensor_sizes, const AdamHyper& hyper);

/// One bias-corrected Adam update over an ordered tensor list. Throws
/// NumericError on any non-finite gradient entry; nothing is clipped.
void adam_step_arrays(std::span<std::span<double>> params, std::span<std::span<const double>> grads,
                      AdamState& state);

/// Spec-shaped convenience for a bare MLP.
void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state);

// ---------------------------------------------------------------------------
// Timestep embedding

/// Interleaved sin/cos of t against dim/2 geometric frequencies whose periods
/// span [1, 10^4]. t_max only bounds the valid range of t.
std::vector<double> sinusoidal_embed(int t, int dim, int t_max);

}  // namespace cfglab
