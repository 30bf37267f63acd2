#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cfglab/denoiser.hpp"
#include "cfglab/diffusion.hpp"
#include "cfglab/evaldata.hpp"
#include "cfglab/sampling.hpp"
#include "cfglab/training.hpp"

namespace cfglab {

/// Everything an experiment run can configure, loaded from a flat dotted-key
/// file (`key = value`, `#` comments). Unknown or duplicate keys are errors.
struct RunConfig {
    // schedule block
    int t_max = 100;
    double beta_start = 1e-3;
    double beta_end = 0.2;

    // model block (n_classes always tracks the mixture)
    std::vector<int> model_hidden = {128, 128};
    int time_embed_dim = 16;
    int class_embed_dim = 8;

    // classifier block
    std::vector<int> classifier_hidden = {64, 64};
    int classifier_time_embed_dim = 16;
    int classifier_steps = 4000;
    int classifier_batch_size = 256;

    // train block
    LossMode loss_mode = LossMode::standard;
    double w_train = 1.0;
    double p_uncond = 0.1;
    int batch_size = 256;          // standard mode
    int updated_batch_size = 128;  // halved for equal compute per step
    int train_steps = 20000;
    AdamHyper adam;

    // sampler block
    SamplerKind sampler_kind = SamplerKind::ddim;
    int n_steps = 100;  // full reverse pass at the default schedule
    double eta = 0.0;
    GuidanceMode guidance_mode = GuidanceMode::cfg;
    double guidance_w = 1.0;
    double guidance_phi = 0.5;
    int n_samples = 10000;
    int condition_class = 0;  // -1 = unconditional (null token)
    std::string denoiser_checkpoint;
    std::string classifier_checkpoint;

    // mixture block (flattened per-class arrays)
    std::vector<double> mixture_means;    // 2K values
    std::vector<double> mixture_covs;     // 4K values, row-major 2x2 each
    std::vector<double> mixture_weights;  // K values

    // eval block
    std::string metric = "energy";  // energy | sw
    int eval_n_samples = 10000;
    int sw_projections = 64;
    std::vector<double> w_list = {0.0, 1.0, 2.0, 4.0, 8.0};
    std::vector<double> w_train_list = {0.5, 1.0, 2.0};
    std::vector<double> w_sample_list = {0.5, 1.0, 2.0, 4.0};
    std::vector<int> steps_list = {5, 10, 20, 50, 100};
    double sweep_w = 1.0;  // matches the default w_train so the sweep stays on-diagonal
    int n_seeds = 5;
    std::string eval_csv_a;
    std::string eval_csv_b;
    int eval_oracle_class = 0;
    double eval_oracle_w = 1.0;

    // plot block
    std::string plot_csv;

    // harness
    std::uint64_t seed = 0;
    std::string out_dir = "runs";
    int workers = 1;

    MixtureSpec mixture() const;
    NoiseSchedule schedule() const;
    int n_classes() const { return static_cast<int>(mixture_weights.size()); }
    DenoiserConfig denoiser_config() const;
    ClassifierConfig classifier_config() const;
    TrainConfig train_config() const;  // seed filled in by the caller

    /// Cross-block consistency checks; throws ConfigError.
    void validate() const;

    /// Fixed-order serialization of every result-affecting key (out_dir,
    /// workers, and file-path keys excluded). The digest hashes this.
    std::string canonical_text() const;
    std::string digest() const;
};

/// Parses config text; starts from defaults, applies overrides, validates.
RunConfig parse_run_config(const std::string& text);

/// Loads a config file, or returns validated defaults for an empty path.
RunConfig load_run_config(const std::filesystem::path& path);

/// FNV-1a 64-bit hash as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

/// Shortest-round-trip decimal for a double (17 significant digits).
std::string format_double(double v);

}  // namespace cfglab
