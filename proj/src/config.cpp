#include "cfglab/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "cfglab/errors.hpp"

namespace cfglab {

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

/// Raw key-value view of a config file with consumption tracking, so any key
/// the schema does not recognize is reported instead of silently ignored.
class KeyValues {
  public:
    explicit KeyValues(const std::string& text) {
        std::istringstream in(text);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string stripped = trim(line);
            if (stripped.empty() || stripped[0] == '#') continue;
            const auto eq = stripped.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
            }
            const std::string key = trim(stripped.substr(0, eq));
            const std::string value = trim(stripped.substr(eq + 1));
            if (key.empty()) {
                throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
            }
            if (!entries_.emplace(key, value).second) {
                throw ConfigError("config: duplicate key '" + key + "'");
            }
        }
    }

    bool take(const std::string& key, std::string& out) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return false;
        out = it->second;
        entries_.erase(it);
        return true;
    }

    void get(const std::string& key, std::string& field) {
        std::string v;
        if (take(key, v)) field = v;
    }

    void get(const std::string& key, int& field) {
        std::string v;
        if (take(key, v)) field = parse_int(key, v);
    }

    void get(const std::string& key, double& field) {
        std::string v;
        if (take(key, v)) field = parse_double(key, v);
    }

    void get(const std::string& key, std::uint64_t& field) {
        std::string v;
        if (take(key, v)) {
            try {
                std::size_t pos = 0;
                // stoull would wrap negative input, so reject it up front
                if (v.find('-') != std::string::npos) throw std::invalid_argument(v);
                field = std::stoull(v, &pos);
                if (pos != v.size()) throw std::invalid_argument(v);
            } catch (const std::exception&) {
                throw ConfigError("config: key '" + key + "' is not an unsigned integer: " + v);
            }
        }
    }

    void get(const std::string& key, std::vector<int>& field) {
        std::string v;
        if (!take(key, v)) return;
        field.clear();
        std::istringstream in(v);
        std::string tok;
        while (in >> tok) field.push_back(parse_int(key, tok));
        if (field.empty()) throw ConfigError("config: key '" + key + "' has an empty list");
    }

    void get(const std::string& key, std::vector<double>& field) {
        std::string v;
        if (!take(key, v)) return;
        field.clear();
        std::istringstream in(v);
        std::string tok;
        while (in >> tok) field.push_back(parse_double(key, tok));
        if (field.empty()) throw ConfigError("config: key '" + key + "' has an empty list");
    }

    void require_empty() const {
        if (entries_.empty()) return;
        std::string keys;
        for (const auto& [k, v] : entries_) {
            if (!keys.empty()) keys += ", ";
            keys += k;
        }
        throw ConfigError("config: unknown key(s): " + keys);
    }

  private:
    static int parse_int(const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            const int out = std::stoi(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' is not an integer: " + v);
        }
    }

    static double parse_double(const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            const double out = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' is not a number: " + v);
        }
    }

    std::map<std::string, std::string> entries_;
};

void append_list(std::string& out, const std::vector<int>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(v[i]);
    }
}

void append_list(std::string& out, const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += format_double(v[i]);
    }
}

}  // namespace

MixtureSpec RunConfig::mixture() const {
    const std::size_t k = mixture_weights.size();
    if (mixture_means.size() != 2 * k || mixture_covs.size() != 4 * k) {
        throw ConfigError("config: mixture.means needs 2 and mixture.covs 4 values per weight");
    }
    std::vector<std::array<double, 2>> means(k);
    std::vector<std::array<double, 4>> covs(k);
    for (std::size_t i = 0; i < k; ++i) {
        means[i] = {mixture_means[2 * i], mixture_means[2 * i + 1]};
        covs[i] = {mixture_covs[4 * i], mixture_covs[4 * i + 1], mixture_covs[4 * i + 2],
                   mixture_covs[4 * i + 3]};
    }
    return make_mixture(means, covs, mixture_weights);
}

NoiseSchedule RunConfig::schedule() const { return linear_schedule(t_max, beta_start, beta_end); }

DenoiserConfig RunConfig::denoiser_config() const {
    DenoiserConfig c;
    c.n_classes = n_classes();
    c.hidden = model_hidden;
    c.time_embed_dim = time_embed_dim;
    c.class_embed_dim = class_embed_dim;
    return c;
}

ClassifierConfig RunConfig::classifier_config() const {
    ClassifierConfig c;
    c.n_classes = n_classes();
    c.hidden = classifier_hidden;
    c.time_embed_dim = classifier_time_embed_dim;
    return c;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig c;
    c.loss_mode = loss_mode;
    c.w_train = w_train;
    c.p_uncond = p_uncond;
    c.batch_size = (loss_mode == LossMode::updated) ? updated_batch_size : batch_size;
    c.steps = train_steps;
    c.adam = adam;
    return c;
}

void RunConfig::validate() const {
    const MixtureSpec spec = mixture();  // checks SPD, weights
    const NoiseSchedule sched = schedule();
    train_config().validate();
    if (updated_batch_size < 1) throw ConfigError("config: train.updated_batch_size must be >= 1");
    if (classifier_steps < 0 || classifier_batch_size < 1) {
        throw ConfigError("config: invalid classifier training block");
    }

    SamplerConfig sampler;
    sampler.kind = sampler_kind;
    sampler.n_steps = n_steps;
    sampler.eta = eta;
    sampler.guidance = GuidanceRule{guidance_mode, guidance_w, guidance_phi};
    sampler.n_samples = n_samples;
    sampler.condition = condition_class < 0 ? ConditionToken::null_token()
                                            : ConditionToken::cls(condition_class);
    sampler.seed = seed;
    sampler.validate(sched);
    if (condition_class >= spec.n_classes()) {
        throw ConfigError("config: sampler.class out of range");
    }

    if (metric != "energy" && metric != "sw") {
        throw ConfigError("config: eval.metric must be 'energy' or 'sw'");
    }
    if (eval_n_samples < 1) throw ConfigError("config: eval.n_samples must be >= 1");
    if (sw_projections < 1) throw ConfigError("config: eval.n_proj must be >= 1");
    if (n_seeds < 1) throw ConfigError("config: eval.n_seeds must be >= 1");
    if (w_list.empty() || w_train_list.empty() || w_sample_list.empty() || steps_list.empty()) {
        throw ConfigError("config: eval lists must be non-empty");
    }
    for (double w : w_list) {
        if (w < 0.0) throw ConfigError("config: eval.w_list entries must be >= 0");
    }
    for (double w : w_train_list) {
        if (w < 0.0) throw ConfigError("config: eval.w_train_list entries must be >= 0");
    }
    for (double w : w_sample_list) {
        if (w < 0.0) throw ConfigError("config: eval.w_sample_list entries must be >= 0");
    }
    for (int s : steps_list) {
        if (s < 1 || s > t_max) throw ConfigError("config: eval.steps_list entries must be in [1, T]");
    }
    if (sweep_w < 0.0) throw ConfigError("config: eval.sweep_w must be >= 0");
    if (eval_oracle_class < 0 || eval_oracle_class >= spec.n_classes()) {
        throw ConfigError("config: eval.oracle_class out of range");
    }
    if (eval_oracle_w < 0.0) throw ConfigError("config: eval.oracle_w must be >= 0");
    if (workers < 1) throw ConfigError("config: workers must be >= 1");
}

std::string RunConfig::canonical_text() const {
    std::string s;
    const auto put = [&s](const std::string& key, const std::string& value) {
        s += key;
        s += " = ";
        s += value;
        s += '\n';
    };
    put("seed", std::to_string(seed));
    put("schedule.t_max", std::to_string(t_max));
    put("schedule.beta_start", format_double(beta_start));
    put("schedule.beta_end", format_double(beta_end));
    std::string tmp;
    append_list(tmp, model_hidden);
    put("model.hidden", tmp);
    put("model.time_embed_dim", std::to_string(time_embed_dim));
    put("model.class_embed_dim", std::to_string(class_embed_dim));
    tmp.clear();
    append_list(tmp, classifier_hidden);
    put("classifier.hidden", tmp);
    put("classifier.time_embed_dim", std::to_string(classifier_time_embed_dim));
    put("classifier.steps", std::to_string(classifier_steps));
    put("classifier.batch_size", std::to_string(classifier_batch_size));
    put("train.loss_mode", loss_mode_name(loss_mode));
    put("train.w_train", format_double(w_train));
    put("train.p_uncond", format_double(p_uncond));
    put("train.batch_size", std::to_string(batch_size));
    put("train.updated_batch_size", std::to_string(updated_batch_size));
    put("train.steps", std::to_string(train_steps));
    put("train.lr", format_double(adam.lr));
    put("train.adam_beta1", format_double(adam.beta1));
    put("train.adam_beta2", format_double(adam.beta2));
    put("train.adam_epsilon", format_double(adam.epsilon));
    put("sampler.kind", sampler_name(sampler_kind));
    put("sampler.n_steps", std::to_string(n_steps));
    put("sampler.eta", format_double(eta));
    put("sampler.guidance", guidance_mode_name(guidance_mode));
    put("sampler.w", format_double(guidance_w));
    put("sampler.phi", format_double(guidance_phi));
    put("sampler.n_samples", std::to_string(n_samples));
    put("sampler.class", std::to_string(condition_class));
    tmp.clear();
    append_list(tmp, mixture_means);
    put("mixture.means", tmp);
    tmp.clear();
    append_list(tmp, mixture_covs);
    put("mixture.covs", tmp);
    tmp.clear();
    append_list(tmp, mixture_weights);
    put("mixture.weights", tmp);
    put("eval.metric", metric);
    put("eval.n_samples", std::to_string(eval_n_samples));
    put("eval.n_proj", std::to_string(sw_projections));
    tmp.clear();
    append_list(tmp, w_list);
    put("eval.w_list", tmp);
    tmp.clear();
    append_list(tmp, w_train_list);
    put("eval.w_train_list", tmp);
    tmp.clear();
    append_list(tmp, w_sample_list);
    put("eval.w_sample_list", tmp);
    tmp.clear();
    append_list(tmp, steps_list);
    put("eval.steps_list", tmp);
    put("eval.sweep_w", format_double(sweep_w));
    put("eval.n_seeds", std::to_string(n_seeds));
    put("eval.oracle_class", std::to_string(eval_oracle_class));
    put("eval.oracle_w", format_double(eval_oracle_w));
    return s;
}

std::string RunConfig::digest() const { return fnv1a_hex(canonical_text()); }

RunConfig parse_run_config(const std::string& text) {
    RunConfig c;
    {
        const MixtureSpec def = default_mixture();
        for (const auto& comp : def.components) {
            c.mixture_means.push_back(comp.mean[0]);
            c.mixture_means.push_back(comp.mean[1]);
            for (double v : comp.cov) c.mixture_covs.push_back(v);
            c.mixture_weights.push_back(comp.weight);
        }
    }

    KeyValues kv(text);
    kv.get("seed", c.seed);
    kv.get("out", c.out_dir);
    kv.get("workers", c.workers);
    kv.get("schedule.t_max", c.t_max);
    kv.get("schedule.beta_start", c.beta_start);
    kv.get("schedule.beta_end", c.beta_end);
    kv.get("model.hidden", c.model_hidden);
    kv.get("model.time_embed_dim", c.time_embed_dim);
    kv.get("model.class_embed_dim", c.class_embed_dim);
    kv.get("classifier.hidden", c.classifier_hidden);
    kv.get("classifier.time_embed_dim", c.classifier_time_embed_dim);
    kv.get("classifier.steps", c.classifier_steps);
    kv.get("classifier.batch_size", c.classifier_batch_size);

    std::string mode_name;
    if (kv.take("train.loss_mode", mode_name)) c.loss_mode = loss_mode_from_name(mode_name);
    kv.get("train.w_train", c.w_train);
    kv.get("train.p_uncond", c.p_uncond);
    kv.get("train.batch_size", c.batch_size);
    kv.get("train.updated_batch_size", c.updated_batch_size);
    kv.get("train.steps", c.train_steps);
    kv.get("train.lr", c.adam.lr);
    kv.get("train.adam_beta1", c.adam.beta1);
    kv.get("train.adam_beta2", c.adam.beta2);
    kv.get("train.adam_epsilon", c.adam.epsilon);

    std::string sampler_kind_name;
    if (kv.take("sampler.kind", sampler_kind_name)) c.sampler_kind = sampler_from_name(sampler_kind_name);
    kv.get("sampler.n_steps", c.n_steps);
    kv.get("sampler.eta", c.eta);
    std::string guidance_name;
    if (kv.take("sampler.guidance", guidance_name)) c.guidance_mode = guidance_mode_from_name(guidance_name);
    kv.get("sampler.w", c.guidance_w);
    kv.get("sampler.phi", c.guidance_phi);
    kv.get("sampler.n_samples", c.n_samples);
    kv.get("sampler.class", c.condition_class);
    kv.get("sampler.checkpoint", c.denoiser_checkpoint);
    kv.get("sampler.classifier_checkpoint", c.classifier_checkpoint);

    kv.get("mixture.means", c.mixture_means);
    kv.get("mixture.covs", c.mixture_covs);
    kv.get("mixture.weights", c.mixture_weights);

    kv.get("eval.metric", c.metric);
    kv.get("eval.n_samples", c.eval_n_samples);
    kv.get("eval.n_proj", c.sw_projections);
    kv.get("eval.w_list", c.w_list);
    kv.get("eval.w_train_list", c.w_train_list);
    kv.get("eval.w_sample_list", c.w_sample_list);
    kv.get("eval.steps_list", c.steps_list);
    kv.get("eval.sweep_w", c.sweep_w);
    kv.get("eval.n_seeds", c.n_seeds);
    kv.get("eval.csv_a", c.eval_csv_a);
    kv.get("eval.csv_b", c.eval_csv_b);
    kv.get("eval.oracle_class", c.eval_oracle_class);
    kv.get("eval.oracle_w", c.eval_oracle_w);
    kv.get("plot.csv", c.plot_csv);
    kv.require_empty();

    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    if (path.empty()) {
        RunConfig c = parse_run_config("");
        return c;
    }
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

}  // namespace cfglab
