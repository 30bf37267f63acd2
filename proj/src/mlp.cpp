#include "cfglab/mlp.hpp"

#include <cmath>
#include <string>

#include "cfglab/errors.hpp"

namespace cfglab {

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::silu: return "silu";
    }
    throw ConfigError("unknown activation enum value");
}

Activation activation_from_name(const std::string& name) {
    if (name == "silu") return Activation::silu;
    throw ConfigError("unknown activation: " + name);
}

namespace {

inline double silu(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return x * s;
}

inline double silu_deriv(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

}  // namespace

void MlpParams::validate() const {
    if (layers.empty()) throw ShapeError("mlp: no layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const auto& layer = layers[k];
        if (layer.weight.rows <= 0 || layer.weight.cols <= 0) {
            throw ShapeError("mlp: layer " + std::to_string(k) + " has empty weight");
        }
        if (static_cast<int>(layer.bias.size()) != layer.weight.rows) {
            throw ShapeError("mlp: layer " + std::to_string(k) + " bias length != out dim");
        }
        if (k + 1 < layers.size() && layers[k + 1].weight.cols != layer.weight.rows) {
            throw ShapeError("mlp: layer dimensions do not chain at layer " + std::to_string(k + 1));
        }
        if (!layer.weight.all_finite()) {
            throw NumericError("mlp: non-finite weight in layer " + std::to_string(k));
        }
        for (double b : layer.bias) {
            if (!std::isfinite(b)) throw NumericError("mlp: non-finite bias in layer " + std::to_string(k));
        }
    }
}

Matrix mlp_forward(const MlpParams& params, const Matrix& input, MlpCache* cache) {
    if (params.layers.empty()) throw ShapeError("mlp_forward: no layers");
    if (input.cols != params.input_dim()) {
        throw ShapeError("mlp_forward: input cols " + std::to_string(input.cols) +
                         " != first-layer in dim " + std::to_string(params.input_dim()));
    }
    if (cache) {
        cache->input = input;
        cache->pre.clear();
        cache->post.clear();
    }
    Matrix h = input;
    const std::size_t last = params.layers.size() - 1;
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        const auto& layer = params.layers[k];
        Matrix pre = matmul_nt(h, layer.weight);
        for (int i = 0; i < pre.rows; ++i) {
            double* row = pre.data.data() + static_cast<std::size_t>(i) * pre.cols;
            for (int j = 0; j < pre.cols; ++j) row[j] += layer.bias[j];
        }
        Matrix post = pre;
        if (k != last) {
            for (double& v : post.data) v = silu(v);
        }
        if (cache) {
            cache->pre.push_back(pre);
            cache->post.push_back(post);
        }
        h = std::move(post);
    }
    return h;
}

MlpBackwardResult mlp_backward(const MlpParams& params, const MlpCache& cache, const Matrix& upstream) {
    const std::size_t n_layers = params.layers.size();
    if (cache.pre.size() != n_layers || cache.post.size() != n_layers) {
        throw ShapeError("mlp_backward: cache does not match params");
    }
    if (upstream.rows != cache.input.rows || upstream.cols != params.output_dim()) {
        throw ShapeError("mlp_backward: upstream shape mismatch");
    }

    MlpBackwardResult result;
    result.grads.layers.resize(n_layers);

    Matrix delta = upstream;  // gradient w.r.t. pre-activation of current layer
    for (std::size_t k = n_layers; k-- > 0;) {
        const Matrix& layer_input = (k == 0) ? cache.input : cache.post[k - 1];
        auto& g = result.grads.layers[k];
        g.weight = matmul_tn(delta, layer_input);      // out×in
        g.bias.assign(params.layers[k].weight.rows, 0.0);
        for (int i = 0; i < delta.rows; ++i) {
            const double* row = delta.data.data() + static_cast<std::size_t>(i) * delta.cols;
            for (int j = 0; j < delta.cols; ++j) g.bias[j] += row[j];
        }
        Matrix dinput = matmul_nn(delta, params.layers[k].weight);  // batch×in
        if (k == 0) {
            result.input_grad = std::move(dinput);
        } else {
            const Matrix& pre_prev = cache.pre[k - 1];
            for (std::size_t i = 0; i < dinput.data.size(); ++i) {
                dinput.data[i] *= silu_deriv(pre_prev.data[i]);
            }
            delta = std::move(dinput);
        }
    }
    return result;
}

MlpGrads zero_grads_like(const MlpParams& params) {
    MlpGrads g;
    g.layers.resize(params.layers.size());
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        g.layers[k].weight = Matrix(params.layers[k].weight.rows, params.layers[k].weight.cols);
        g.layers[k].bias.assign(params.layers[k].bias.size(), 0.0);
    }
    return g;
}

void add_grads(MlpGrads& into, const MlpGrads& other) {
    if (into.layers.size() != other.layers.size()) throw ShapeError("add_grads: layer count mismatch");
    for (std::size_t k = 0; k < into.layers.size(); ++k) {
        require_same_shape(into.layers[k].weight, other.layers[k].weight, "add_grads");
        for (std::size_t i = 0; i < into.layers[k].weight.data.size(); ++i) {
            into.layers[k].weight.data[i] += other.layers[k].weight.data[i];
        }
        for (std::size_t i = 0; i < into.layers[k].bias.size(); ++i) {
            into.layers[k].bias[i] += other.layers[k].bias[i];
        }
    }
}

MlpParams init_mlp(int input_dim, std::span<const int> hidden, int output_dim, RandomStream& stream,
                   Activation activation) {
    if (input_dim < 1 || output_dim < 1) throw ConfigError("init_mlp: dimensions must be >= 1");
    for (int h : hidden) {
        if (h < 1) throw ConfigError("init_mlp: hidden sizes must be >= 1");
    }
    MlpParams params;
    params.activation = activation;
    std::vector<int> dims;
    dims.push_back(input_dim);
    for (int h : hidden) dims.push_back(h);
    dims.push_back(output_dim);
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        LinearLayer layer;
        layer.weight = Matrix(dims[k + 1], dims[k]);
        const double scale = std::sqrt(2.0 / dims[k]);
        for (double& w : layer.weight.data) w = scale * stream.normal();
        layer.bias.assign(dims[k + 1], 0.0);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

AdamState adam_init(std::span<const std::size_t> tensor_sizes, const AdamHyper& hyper) {
    if (!(hyper.lr > 0.0) || !(hyper.beta1 >= 0.0 && hyper.beta1 < 1.0) ||
        !(hyper.beta2 >= 0.0 && hyper.beta2 < 1.0) || !(hyper.epsilon > 0.0)) {
        throw ConfigError("adam: invalid hyperparameters");
    }
    AdamState state;
    state.hyper = hyper;
    state.slots.resize(tensor_sizes.size());
    for (std::size_t i = 0; i < tensor_sizes.size(); ++i) {
        state.slots[i].m.assign(tensor_sizes[i], 0.0);
        state.slots[i].v.assign(tensor_sizes[i], 0.0);
    }
    return state;
}

void adam_step_arrays(std::span<std::span<double>> params, std::span<std::span<const double>> grads,
                      AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.slots.size()) {
        throw ShapeError("adam_step: tensor-list length mismatch");
    }
    for (std::size_t s = 0; s < params.size(); ++s) {
        if (params[s].size() != grads[s].size() || params[s].size() != state.slots[s].m.size()) {
            throw ShapeError("adam_step: tensor size mismatch in slot " + std::to_string(s));
        }
        for (double g : grads[s]) {
            if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient entry");
        }
    }
    state.step += 1;
    const auto& h = state.hyper;
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
    for (std::size_t s = 0; s < params.size(); ++s) {
        auto& slot = state.slots[s];
        auto p = params[s];
        auto g = grads[s];
        for (std::size_t i = 0; i < p.size(); ++i) {
            slot.m[i] = h.beta1 * slot.m[i] + (1.0 - h.beta1) * g[i];
            slot.v[i] = h.beta2 * slot.v[i] + (1.0 - h.beta2) * g[i] * g[i];
            const double m_hat = slot.m[i] / bc1;
            const double v_hat = slot.v[i] / bc2;
            p[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.epsilon);
        }
    }
}

void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state) {
    std::vector<std::span<double>> p;
    std::vector<std::span<const double>> g;
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        p.emplace_back(params.layers[k].weight.data);
        g.emplace_back(grads.layers[k].weight.data);
        p.emplace_back(params.layers[k].bias);
        g.emplace_back(grads.layers[k].bias);
    }
    adam_step_arrays(p, g, state);
}

std::vector<double> sinusoidal_embed(int t, int dim, int t_max) {
    if (dim < 2 || dim % 2 != 0) throw ConfigError("sinusoidal_embed: dim must be even and >= 2");
    if (t < 0 || t > t_max) {
        throw ConfigError("sinusoidal_embed: t=" + std::to_string(t) + " outside [0, " +
                          std::to_string(t_max) + "]");
    }
    std::vector<double> out(dim);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double exponent = (half > 1) ? static_cast<double>(i) / (half - 1) : 0.0;
        const double period = std::pow(10000.0, exponent);
        out[2 * i] = std::sin(t / period);
        out[2 * i + 1] = std::cos(t / period);
    }
    return out;
}

}  // namespace cfglab
