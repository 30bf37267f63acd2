#include <doctest.h>

#include <cmath>
#include <vector>

#include "cfglab/errors.hpp"
#include "cfglab/sampling.hpp"

using namespace cfglab;

namespace {

Matrix random_points(int n, RandomStream& stream) {
    Matrix m(n, 2);
    for (double& v : m.data) v = stream.normal();
    return m;
}

Denoiser test_denoiser(std::uint64_t seed) {
    DenoiserConfig c;
    c.n_classes = 3;
    c.hidden = {12, 12};
    c.time_embed_dim = 6;
    c.class_embed_dim = 4;
    RandomStream stream(seed);
    return init_denoiser(c, stream);
}

}  // namespace

TEST_CASE("timestep_subsequence conventions") {
    const std::vector<int> full = timestep_subsequence(5, 5);
    CHECK(full == std::vector<int>{5, 4, 3, 2, 1});
    CHECK(timestep_subsequence(100, 1) == std::vector<int>{100});
    CHECK(timestep_subsequence(100, 4) == std::vector<int>{100, 67, 34, 1});

    for (const int t_max : {10, 37, 100}) {
        for (int n = 1; n <= t_max; n += 3) {
            const std::vector<int> seq = timestep_subsequence(t_max, n);
            CHECK(seq.front() == t_max);
            if (n > 1) CHECK(seq.back() == 1);
            for (std::size_t i = 1; i < seq.size(); ++i) CHECK(seq[i] < seq[i - 1]);
            CHECK(static_cast<int>(seq.size()) <= n);
        }
    }
    CHECK_THROWS_AS(timestep_subsequence(100, 0), ConfigError);
    CHECK_THROWS_AS(timestep_subsequence(100, 101), ConfigError);
}

TEST_CASE("ddim_step inverts q_sample when fed the true noise") {
    const NoiseSchedule sched = linear_schedule(100, 1e-3, 0.2);
    RandomStream stream(3);
    const Matrix z0 = random_points(6, stream);
    for (const int t : {1, 10, 50, 100}) {
        const Matrix eps = random_points(6, stream);
        const std::vector<int> ts(6, t);
        const Matrix z_t = q_sample(z0, ts, eps, sched);
        RandomStream unused(0);
        const Matrix back = ddim_step(z_t, eps, t, 0, sched, 0.0, unused);
        for (std::size_t i = 0; i < z0.data.size(); ++i) {
            CHECK(std::fabs(back.data[i] - z0.data[i]) <= 1e-10);
        }
        CHECK(unused.counter == 0);
    }
}

TEST_CASE("degenerate ddim step is the identity") {
    const NoiseSchedule sched = linear_schedule(100, 1e-3, 0.2);
    RandomStream stream(5);
    const Matrix z_t = random_points(4, stream);
    const Matrix eps = random_points(4, stream);
    RandomStream unused(0);
    const Matrix out = ddim_step(z_t, eps, 42, 42, sched, 0.0, unused);
    for (std::size_t i = 0; i < z_t.data.size(); ++i) {
        CHECK(std::fabs(out.data[i] - z_t.data[i]) <= 1e-12);
    }
}

TEST_CASE("ddim_step matches a scalar-formula oracle") {
    const NoiseSchedule sched = linear_schedule(100, 1e-3, 0.2);
    RandomStream stream(7);
    const Matrix z_t = random_points(3, stream);
    const Matrix eps = random_points(3, stream);
    const int t = 50, t_prev = 25;
    const double abar_t = sched.alpha_bar_at(t);
    const double abar_p = sched.alpha_bar_at(t_prev);

    SUBCASE("deterministic") {
        RandomStream unused(0);
        const Matrix out = ddim_step(z_t, eps, t, t_prev, sched, 0.0, unused);
        CHECK(unused.counter == 0);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 2; ++j) {
                const double x0 = (z_t.at(i, j) - std::sqrt(1.0 - abar_t) * eps.at(i, j)) / std::sqrt(abar_t);
                const double expect = std::sqrt(abar_p) * x0 + std::sqrt(1.0 - abar_p) * eps.at(i, j);
                CHECK(out.at(i, j) == doctest::Approx(expect).epsilon(1e-12));
            }
        }
    }

    SUBCASE("stochastic") {
        const double eta = 0.3;
        const double sig = eta * std::sqrt((1.0 - abar_p) / (1.0 - abar_t)) *
                           std::sqrt(1.0 - abar_t / abar_p);
        RandomStream step_stream(99);
        RandomStream oracle_stream(99);
        const Matrix out = ddim_step(z_t, eps, t, t_prev, sched, eta, step_stream);
        CHECK(step_stream.counter == 3 * 2 * 2);  // two normals per row, two counters each
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 2; ++j) {
                const double x0 = (z_t.at(i, j) - std::sqrt(1.0 - abar_t) * eps.at(i, j)) / std::sqrt(abar_t);
                const double dir = std::sqrt(1.0 - abar_p - sig * sig);
                const double expect = std::sqrt(abar_p) * x0 + dir * eps.at(i, j) +
                                      sig * oracle_stream.normal();
                CHECK(out.at(i, j) == doctest::Approx(expect).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("ddim_step rejects an eta that overshoots the variance budget") {
    const NoiseSchedule sched = linear_schedule(100, 1e-3, 0.2);
    Matrix z(1, 2), eps(1, 2);
    RandomStream stream(1);
    CHECK_THROWS_AS(ddim_step(z, eps, 50, 25, sched, 50.0, stream), ConfigError);
    CHECK_THROWS_AS(ddim_step(z, eps, 50, 25, sched, -0.1, stream), ConfigError);
    CHECK_THROWS_AS(ddim_step(z, eps, 25, 50, sched, 0.0, stream), ConfigError);
}

TEST_CASE("ddpm_step terminal and zero-mean behavior") {
    const NoiseSchedule sched = linear_schedule(100, 1e-3, 0.2);
    RandomStream stream(9);
    const Matrix z_t = random_points(2, stream);
    const Matrix eps = random_points(2, stream);

    RandomStream s1(11);
    const Matrix out1 = ddpm_step(z_t, eps, 1, sched, s1);
    CHECK(s1.counter == 0);  // no noise at the final step
    RandomStream s2(12);
    const Matrix out2 = ddpm_step(z_t, eps, 1, sched, s2);
    CHECK(out1.data == out2.data);

    RandomStream s3(13), s3_oracle(13);
    const Matrix zero(2, 2);
    const Matrix noise_only = ddpm_step(zero, zero, 60, sched, s3);
    const double sigma = sched.sigma_at(60);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            CHECK(noise_only.at(i, j) == doctest::Approx(sigma * s3_oracle.normal()).epsilon(1e-14));
        }
    }
}

TEST_CASE("ddpm_step matches a scalar-formula oracle at t = 50") {
    const NoiseSchedule sched = linear_schedule(100, 1e-3, 0.2);
    RandomStream stream(15);
    const Matrix z_t = random_points(3, stream);
    const Matrix eps = random_points(3, stream);
    const int t = 50;
    RandomStream step_stream(21), oracle_stream(21);
    const Matrix out = ddpm_step(z_t, eps, t, sched, step_stream);
    const double beta = sched.beta_at(t);
    const double alpha = sched.alpha_at(t);
    const double abar = sched.alpha_bar_at(t);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 2; ++j) {
            const double mean = (z_t.at(i, j) - beta / std::sqrt(1.0 - abar) * eps.at(i, j)) /
                                std::sqrt(alpha);
            const double expect = mean + sched.sigma_at(t) * oracle_stream.normal();
            CHECK(out.at(i, j) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("sampler config validation") {
    const NoiseSchedule sched = linear_schedule(100, 1e-3, 0.2);
    SamplerConfig sc;
    sc.n_samples = 10;
    sc.condition = ConditionToken::cls(0);
    sc.guidance = GuidanceRule::cfg(1.0);
    CHECK_NOTHROW(sc.validate(sched));

    SamplerConfig bad = sc;
    bad.kind = SamplerKind::ddpm;
    bad.n_steps = 50;
    CHECK_THROWS_AS(bad.validate(sched), ConfigError);
    bad.n_steps = 100;
    CHECK_NOTHROW(bad.validate(sched));

    bad = sc;
    bad.n_steps = 101;
    CHECK_THROWS_AS(bad.validate(sched), ConfigError);
    bad = sc;
    bad.eta = -1.0;
    CHECK_THROWS_AS(bad.validate(sched), ConfigError);
    bad = sc;
    bad.condition = ConditionToken::null_token();
    CHECK_THROWS_AS(bad.validate(sched), ConfigError);  // guided mode needs a class
    bad.guidance = GuidanceRule::none();
    CHECK_NOTHROW(bad.validate(sched));
    bad = sc;
    bad.n_samples = 0;
    CHECK_THROWS_AS(bad.validate(sched), ConfigError);
}

TEST_CASE("cfg at w = 0 generates bit-identically to no guidance") {
    const NoiseSchedule sched = linear_schedule(100, 1e-3, 0.2);
    const Denoiser d = test_denoiser(1);
    SamplerConfig a;
    a.kind = SamplerKind::ddim;
    a.n_steps = 10;
    a.n_samples = 8;
    a.seed = 303;
    a.condition = ConditionToken::cls(1);
    a.guidance = GuidanceRule::cfg(0.0);
    SamplerConfig b = a;
    b.guidance = GuidanceRule::none();
    const Matrix out_a = generate(d, nullptr, a, sched);
    const Matrix out_b = generate(d, nullptr, b, sched);
    CHECK(out_a.data == out_b.data);
}

TEST_CASE("generation is bitwise reproducible across runs and worker counts") {
    const NoiseSchedule sched = linear_schedule(100, 1e-3, 0.2);
    const Denoiser d = test_denoiser(2);
    SamplerConfig sc;
    sc.kind = SamplerKind::ddim;
    sc.n_steps = 12;
    sc.eta = 0.5;  // exercise the stochastic path too
    sc.n_samples = 9;
    sc.seed = 555;
    sc.condition = ConditionToken::cls(0);
    sc.guidance = GuidanceRule::cfg(2.0);

    const Matrix r1 = generate(d, nullptr, sc, sched, 1);
    const Matrix r2 = generate(d, nullptr, sc, sched, 1);
    const Matrix r3 = generate(d, nullptr, sc, sched, 3);
    const Matrix r4 = generate(d, nullptr, sc, sched, 8);
    CHECK(r1.data == r2.data);
    CHECK(r1.data == r3.data);
    CHECK(r1.data == r4.data);
}

TEST_CASE("each output row has its own seed-isolated stream") {
    const NoiseSchedule sched = linear_schedule(100, 1e-3, 0.2);
    const Denoiser d = test_denoiser(3);
    SamplerConfig sc;
    sc.kind = SamplerKind::ddim;
    sc.n_steps = 8;
    sc.n_samples = 5;
    sc.seed = 777;
    sc.condition = ConditionToken::cls(2);
    sc.guidance = GuidanceRule::cfg(1.0);
    const Matrix small = generate(d, nullptr, sc, sched);
    sc.n_samples = 9;
    const Matrix big = generate(d, nullptr, sc, sched);
    for (int i = 0; i < 5; ++i) {
        CHECK(small.at(i, 0) == big.at(i, 0));
        CHECK(small.at(i, 1) == big.at(i, 1));
    }
}

TEST_CASE("work counters separate guidance cost from stepper cost") {
    const NoiseSchedule sched = linear_schedule(100, 1e-3, 0.2);
    const Denoiser d = test_denoiser(4);
    ClassifierConfig cc;
    cc.n_classes = 3;
    cc.hidden = {8};
    cc.time_embed_dim = 6;
    RandomStream cl_stream(9);
    const NoiseClassifier cl = init_classifier(cc, cl_stream);

    SamplerConfig sc;
    sc.kind = SamplerKind::ddim;
    sc.n_steps = 10;
    sc.n_samples = 6;
    sc.seed = 888;
    sc.condition = ConditionToken::cls(0);

    SampleStats none_stats, cfg_stats, rescaled_stats, grad_stats;
    sc.guidance = GuidanceRule::none();
    generate(d, nullptr, sc, sched, 1, &none_stats);
    sc.guidance = GuidanceRule::cfg(0.0);
    generate(d, nullptr, sc, sched, 1, &cfg_stats);
    sc.guidance = GuidanceRule::rescaled_cfg(1.0, 0.5);
    generate(d, nullptr, sc, sched, 1, &rescaled_stats);
    sc.guidance = GuidanceRule::classifier_grad(1.0);
    generate(d, &cl, sc, sched, 1, &grad_stats);

    const std::uint64_t rows = 6 * 10;
    CHECK(none_stats.stepper_rows == rows);
    CHECK(cfg_stats.stepper_rows == rows);
    CHECK(rescaled_stats.stepper_rows == rows);
    CHECK(grad_stats.stepper_rows == rows);

    CHECK(none_stats.denoiser_passes == rows);
    CHECK(cfg_stats.denoiser_passes == 2 * rows);  // both branches even at w = 0
    CHECK(rescaled_stats.denoiser_passes == 2 * rows);
    CHECK(grad_stats.denoiser_passes == rows);
    CHECK(grad_stats.classifier_passes == rows);
    CHECK(none_stats.classifier_passes == 0);
}

TEST_CASE("classifier-grad generation requires the classifier") {
    const NoiseSchedule sched = linear_schedule(100, 1e-3, 0.2);
    const Denoiser d = test_denoiser(5);
    SamplerConfig sc;
    sc.kind = SamplerKind::ddim;
    sc.n_steps = 5;
    sc.n_samples = 2;
    sc.condition = ConditionToken::cls(0);
    sc.guidance = GuidanceRule::classifier_grad(1.0);
    CHECK_THROWS_AS(generate(d, nullptr, sc, sched), ConfigError);
}

TEST_CASE("full-length ddim visits every timestep and stays finite") {
    const NoiseSchedule sched = linear_schedule(100, 1e-3, 0.2);
    const std::vector<int> seq = timestep_subsequence(100, 100);
    CHECK(static_cast<int>(seq.size()) == 100);
    for (int i = 0; i < 100; ++i) CHECK(seq[i] == 100 - i);

    const Denoiser d = test_denoiser(6);
    SamplerConfig sc;
    sc.kind = SamplerKind::ddim;
    sc.n_steps = 100;
    sc.n_samples = 4;
    sc.seed = 404;
    sc.condition = ConditionToken::cls(1);
    sc.guidance = GuidanceRule::cfg(1.5);
    SampleStats stats;
    const Matrix out = generate(d, nullptr, sc, sched, 1, &stats);
    CHECK(out.all_finite());
    CHECK(stats.stepper_rows == 4 * 100);

    SamplerConfig ddpm = sc;
    ddpm.kind = SamplerKind::ddpm;
    const Matrix out2 = generate(d, nullptr, ddpm, sched, 1);
    CHECK(out2.all_finite());
}
