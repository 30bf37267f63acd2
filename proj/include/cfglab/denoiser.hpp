#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cfglab/diffusion.hpp"
#include "cfglab/matrix.hpp"
#include "cfglab/mlp.hpp"
#include "cfglab/rng.hpp"

namespace cfglab {

/// Class label or the learned null token.
class ConditionToken {
public:
    static ConditionToken cls(int index);
    static ConditionToken null_token() { return ConditionToken(-1); }

    bool is_null() const { return index_ < 0; }
    int class_index() const;

    bool operator==(const ConditionToken&) const = default;

private:
    explicit ConditionToken(int index) : index_(index) {}
    int index_;
};

struct DenoiserConfig {
    int n_classes = 3;
    std::vector<int> hidden = {128, 128};
    int time_embed_dim = 16;
    int class_embed_dim = 8;

    int input_dim() const { return 2 + time_embed_dim + class_embed_dim; }
};

/// Conditional noise predictor. One shared network serves both the
/// conditional and unconditional branches; the null token is row n_classes of
/// the embedding table.
struct Denoiser {
    DenoiserConfig config;
    MlpParams mlp;
    Matrix class_embed;  // (K+1)×E, row K is the null token

    int embed_row(ConditionToken token) const {
        return token.is_null() ? config.n_classes : token.class_index();
    }
    std::vector<std::size_t> tensor_sizes() const;
    std::vector<std::span<double>> tensor_views();
};

Denoiser init_denoiser(const DenoiserConfig& config, RandomStream& stream);

/// [z_t | time embedding | class embedding] per row; the input fed to the mlp.
Matrix assemble_denoiser_input(const Denoiser& d, const Matrix& z_t, std::span<const int> t,
                               std::span<const ConditionToken> c, const NoiseSchedule& schedule);

Matrix predict_eps(const Denoiser& d, const Matrix& z_t, std::span<const int> t,
                   std::span<const ConditionToken> c, const NoiseSchedule& schedule);

// ---------------------------------------------------------------------------
// Noise-conditioned classifier for classifier-gradient guidance.

struct ClassifierConfig {
    int n_classes = 3;
    std::vector<int> hidden = {64, 64};
    int time_embed_dim = 16;

    int input_dim() const { return 2 + time_embed_dim; }
};

struct NoiseClassifier {
    ClassifierConfig config;
    MlpParams mlp;
};

NoiseClassifier init_classifier(const ClassifierConfig& config, RandomStream& stream);

Matrix assemble_classifier_input(const NoiseClassifier& cl, const Matrix& z_t, std::span<const int> t,
                                 const NoiseSchedule& schedule);

Matrix classifier_logits(const NoiseClassifier& cl, const Matrix& z_t, std::span<const int> t,
                         const NoiseSchedule& schedule);

/// Row-wise log-softmax (numerically stable).
Matrix log_softmax_rows(const Matrix& logits);

/// Gradient of log p(class|z_t) with respect to z_t, one row per sample.
Matrix classifier_logprob_grad(const NoiseClassifier& cl, const Matrix& z_t, std::span<const int> t,
                               std::span<const int> classes, const NoiseSchedule& schedule);

// ---------------------------------------------------------------------------
// Checkpoints: versioned JSON with a config block and one flat 64-bit decimal
// array per parameter tensor. Field order is fixed (see README).

void save_denoiser_checkpoint(const Denoiser& d, const std::filesystem::path& path,
                              const std::string& config_digest);
Denoiser load_denoiser_checkpoint(const std::filesystem::path& path);

void save_classifier_checkpoint(const NoiseClassifier& cl, const std::filesystem::path& path,
                                const std::string& config_digest);
NoiseClassifier load_classifier_checkpoint(const std::filesystem::path& path);

}  // namespace cfglab
