#include "cfglab/denoiser.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "cfglab/errors.hpp"

namespace cfglab {

ConditionToken ConditionToken::cls(int index) {
    if (index < 0) throw ConfigError("ConditionToken: class index must be >= 0");
    return ConditionToken(index);
}

int ConditionToken::class_index() const {
    if (is_null()) throw ConfigError("ConditionToken: null token has no class index");
    return index_;
}

std::vector<std::size_t> Denoiser::tensor_sizes() const {
    std::vector<std::size_t> sizes;
    for (const auto& layer : mlp.layers) {
        sizes.push_back(layer.weight.data.size());
        sizes.push_back(layer.bias.size());
    }
    sizes.push_back(class_embed.data.size());
    return sizes;
}

std::vector<std::span<double>> Denoiser::tensor_views() {
    std::vector<std::span<double>> views;
    for (auto& layer : mlp.layers) {
        views.emplace_back(layer.weight.data);
        views.emplace_back(layer.bias);
    }
    views.emplace_back(class_embed.data);
    return views;
}

Denoiser init_denoiser(const DenoiserConfig& config, RandomStream& stream) {
    if (config.n_classes < 1) throw ConfigError("denoiser: n_classes must be >= 1");
    if (config.class_embed_dim < 1) throw ConfigError("denoiser: class_embed_dim must be >= 1");
    if (config.time_embed_dim < 2 || config.time_embed_dim % 2 != 0) {
        throw ConfigError("denoiser: time_embed_dim must be even and >= 2");
    }
    Denoiser d;
    d.config = config;
    d.mlp = init_mlp(config.input_dim(), config.hidden, 2, stream);
    d.class_embed = Matrix(config.n_classes + 1, config.class_embed_dim);
    for (double& v : d.class_embed.data) v = stream.normal();
    return d;
}

Matrix assemble_denoiser_input(const Denoiser& d, const Matrix& z_t, std::span<const int> t,
                               std::span<const ConditionToken> c, const NoiseSchedule& schedule) {
    if (z_t.cols != 2) throw ShapeError("denoiser input: z_t must have 2 columns");
    if (static_cast<int>(t.size()) != z_t.rows || static_cast<int>(c.size()) != z_t.rows) {
        throw ShapeError("denoiser input: t/c rows do not match z_t");
    }
    const int et = d.config.time_embed_dim;
    const int ec = d.config.class_embed_dim;
    Matrix input(z_t.rows, 2 + et + ec);
    std::vector<double> emb;
    int emb_t = -1;  // sampling feeds one shared t per batch; reuse its embedding
    for (int i = 0; i < z_t.rows; ++i) {
        if (!c[i].is_null() && c[i].class_index() >= d.config.n_classes) {
            throw ConfigError("denoiser input: class index out of range");
        }
        double* row = input.data.data() + static_cast<std::size_t>(i) * input.cols;
        row[0] = z_t.at(i, 0);
        row[1] = z_t.at(i, 1);
        if (t[i] != emb_t) {
            emb = sinusoidal_embed(t[i], et, schedule.t_max);
            emb_t = t[i];
        }
        for (int j = 0; j < et; ++j) row[2 + j] = emb[j];
        const int erow = d.embed_row(c[i]);
        for (int j = 0; j < ec; ++j) row[2 + et + j] = d.class_embed.at(erow, j);
    }
    return input;
}

Matrix predict_eps(const Denoiser& d, const Matrix& z_t, std::span<const int> t,
                   std::span<const ConditionToken> c, const NoiseSchedule& schedule) {
    return mlp_forward(d.mlp, assemble_denoiser_input(d, z_t, t, c, schedule));
}

NoiseClassifier init_classifier(const ClassifierConfig& config, RandomStream& stream) {
    if (config.n_classes < 1) throw ConfigError("classifier: n_classes must be >= 1");
    if (config.time_embed_dim < 2 || config.time_embed_dim % 2 != 0) {
        throw ConfigError("classifier: time_embed_dim must be even and >= 2");
    }
    NoiseClassifier cl;
    cl.config = config;
    cl.mlp = init_mlp(config.input_dim(), config.hidden, config.n_classes, stream);
    return cl;
}

Matrix assemble_classifier_input(const NoiseClassifier& cl, const Matrix& z_t, std::span<const int> t,
                                 const NoiseSchedule& schedule) {
    if (z_t.cols != 2) throw ShapeError("classifier input: z_t must have 2 columns");
    if (static_cast<int>(t.size()) != z_t.rows) {
        throw ShapeError("classifier input: t rows do not match z_t");
    }
    const int et = cl.config.time_embed_dim;
    Matrix input(z_t.rows, 2 + et);
    std::vector<double> emb;
    int emb_t = -1;
    for (int i = 0; i < z_t.rows; ++i) {
        double* row = input.data.data() + static_cast<std::size_t>(i) * input.cols;
        row[0] = z_t.at(i, 0);
        row[1] = z_t.at(i, 1);
        if (t[i] != emb_t) {
            emb = sinusoidal_embed(t[i], et, schedule.t_max);
            emb_t = t[i];
        }
        for (int j = 0; j < et; ++j) row[2 + j] = emb[j];
    }
    return input;
}

Matrix classifier_logits(const NoiseClassifier& cl, const Matrix& z_t, std::span<const int> t,
                         const NoiseSchedule& schedule) {
    return mlp_forward(cl.mlp, assemble_classifier_input(cl, z_t, t, schedule));
}

Matrix log_softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) {
        double max = logits.at(i, 0);
        for (int j = 1; j < logits.cols; ++j) max = std::max(max, logits.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < logits.cols; ++j) sum += std::exp(logits.at(i, j) - max);
        const double lse = max + std::log(sum);
        for (int j = 0; j < logits.cols; ++j) out.at(i, j) = logits.at(i, j) - lse;
    }
    return out;
}

Matrix classifier_logprob_grad(const NoiseClassifier& cl, const Matrix& z_t, std::span<const int> t,
                               std::span<const int> classes, const NoiseSchedule& schedule) {
    if (static_cast<int>(classes.size()) != z_t.rows) {
        throw ShapeError("classifier_logprob_grad: class rows do not match z_t");
    }
    MlpCache cache;
    const Matrix input = assemble_classifier_input(cl, z_t, t, schedule);
    const Matrix logits = mlp_forward(cl.mlp, input, &cache);
    // d log softmax_c / d logit_j = 1[j==c] - softmax_j
    Matrix upstream(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) {
        if (classes[i] < 0 || classes[i] >= cl.config.n_classes) {
            throw ConfigError("classifier_logprob_grad: class index out of range");
        }
        double max = logits.at(i, 0);
        for (int j = 1; j < logits.cols; ++j) max = std::max(max, logits.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < logits.cols; ++j) sum += std::exp(logits.at(i, j) - max);
        for (int j = 0; j < logits.cols; ++j) {
            const double softmax = std::exp(logits.at(i, j) - max) / sum;
            upstream.at(i, j) = (j == classes[i] ? 1.0 : 0.0) - softmax;
        }
    }
    const MlpBackwardResult back = mlp_backward(cl.mlp, cache, upstream);
    Matrix grad(z_t.rows, 2);
    for (int i = 0; i < z_t.rows; ++i) {
        grad.at(i, 0) = back.input_grad.at(i, 0);
        grad.at(i, 1) = back.input_grad.at(i, 1);
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kCheckpointFormat = "cfglab-checkpoint";
constexpr int kCheckpointVersion = 1;

ordered_json matrix_to_json(const Matrix& m) {
    ordered_json j;
    j["rows"] = m.rows;
    j["cols"] = m.cols;
    j["data"] = m.data;
    return j;
}

Matrix matrix_from_json(const ordered_json& j) {
    Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
    const auto& data = j.at("data");
    if (data.size() != m.data.size()) throw IoError("checkpoint: tensor length mismatch");
    m.data = data.get<std::vector<double>>();
    return m;
}

ordered_json mlp_to_json(const MlpParams& mlp) {
    ordered_json tensors;
    for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
        const std::string prefix = "layer" + std::to_string(k);
        tensors[prefix + ".weight"] = matrix_to_json(mlp.layers[k].weight);
        tensors[prefix + ".bias"] = mlp.layers[k].bias;
    }
    return tensors;
}

void mlp_from_json(const ordered_json& tensors, MlpParams& mlp, std::size_t n_layers) {
    mlp.layers.resize(n_layers);
    for (std::size_t k = 0; k < n_layers; ++k) {
        const std::string prefix = "layer" + std::to_string(k);
        mlp.layers[k].weight = matrix_from_json(tensors.at(prefix + ".weight"));
        mlp.layers[k].bias = tensors.at(prefix + ".bias").get<std::vector<double>>();
    }
}

ordered_json read_checkpoint_file(const std::filesystem::path& path, const std::string& kind) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint parse error in " + path.string() + ": " + e.what());
    }
    if (j.value("format", "") != kCheckpointFormat) throw IoError("not a cfglab checkpoint: " + path.string());
    if (j.value("version", -1) != kCheckpointVersion) throw IoError("unsupported checkpoint version");
    if (j.value("kind", "") != kind) {
        throw IoError("checkpoint kind is '" + j.value("kind", "") + "', expected '" + kind + "'");
    }
    return j;
}

void write_checkpoint_file(const ordered_json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    out << j.dump(1) << "\n";
    if (!out) throw IoError("checkpoint write failed: " + path.string());
}

}  // namespace

void save_denoiser_checkpoint(const Denoiser& d, const std::filesystem::path& path,
                              const std::string& config_digest) {
    ordered_json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["kind"] = "denoiser";
    j["config_digest"] = config_digest;
    ordered_json cfg;
    cfg["n_classes"] = d.config.n_classes;
    cfg["hidden"] = d.config.hidden;
    cfg["time_embed_dim"] = d.config.time_embed_dim;
    cfg["class_embed_dim"] = d.config.class_embed_dim;
    cfg["activation"] = activation_name(d.mlp.activation);
    j["config"] = cfg;
    ordered_json tensors = mlp_to_json(d.mlp);
    tensors["class_embed"] = matrix_to_json(d.class_embed);
    j["tensors"] = tensors;
    write_checkpoint_file(j, path);
}

Denoiser load_denoiser_checkpoint(const std::filesystem::path& path) {
    const ordered_json j = read_checkpoint_file(path, "denoiser");
    Denoiser d;
    const auto& cfg = j.at("config");
    d.config.n_classes = cfg.at("n_classes").get<int>();
    d.config.hidden = cfg.at("hidden").get<std::vector<int>>();
    d.config.time_embed_dim = cfg.at("time_embed_dim").get<int>();
    d.config.class_embed_dim = cfg.at("class_embed_dim").get<int>();
    d.mlp.activation = activation_from_name(cfg.at("activation").get<std::string>());
    mlp_from_json(j.at("tensors"), d.mlp, d.config.hidden.size() + 1);
    d.class_embed = matrix_from_json(j.at("tensors").at("class_embed"));
    d.mlp.validate();
    if (d.mlp.input_dim() != d.config.input_dim() || d.mlp.output_dim() != 2 ||
        d.class_embed.rows != d.config.n_classes + 1 || d.class_embed.cols != d.config.class_embed_dim) {
        throw IoError("denoiser checkpoint: tensor shapes inconsistent with config");
    }
    return d;
}

void save_classifier_checkpoint(const NoiseClassifier& cl, const std::filesystem::path& path,
                                const std::string& config_digest) {
    ordered_json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["kind"] = "classifier";
    j["config_digest"] = config_digest;
    ordered_json cfg;
    cfg["n_classes"] = cl.config.n_classes;
    cfg["hidden"] = cl.config.hidden;
    cfg["time_embed_dim"] = cl.config.time_embed_dim;
    cfg["activation"] = activation_name(cl.mlp.activation);
    j["config"] = cfg;
    j["tensors"] = mlp_to_json(cl.mlp);
    write_checkpoint_file(j, path);
}

NoiseClassifier load_classifier_checkpoint(const std::filesystem::path& path) {
    const ordered_json j = read_checkpoint_file(path, "classifier");
    NoiseClassifier cl;
    const auto& cfg = j.at("config");
    cl.config.n_classes = cfg.at("n_classes").get<int>();
    cl.config.hidden = cfg.at("hidden").get<std::vector<int>>();
    cl.config.time_embed_dim = cfg.at("time_embed_dim").get<int>();
    cl.mlp.activation = activation_from_name(cfg.at("activation").get<std::string>());
    mlp_from_json(j.at("tensors"), cl.mlp, cl.config.hidden.size() + 1);
    cl.mlp.validate();
    if (cl.mlp.input_dim() != cl.config.input_dim() || cl.mlp.output_dim() != cl.config.n_classes) {
        throw IoError("classifier checkpoint: tensor shapes inconsistent with config");
    }
    return cl;
}

}  // namespace cfglab
