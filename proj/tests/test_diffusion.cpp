#include <doctest.h>

#include "turnpoint/analytic.hpp"
#include "turnpoint/diffusion.hpp"
#include "turnpoint/metrics.hpp"
#include "turnpoint/worldgen.hpp"

using namespace turnpoint;

namespace {

ConditionEmbedding cond_of(double v) { return compose_single(Eigen::VectorXd::Constant(7, v)); }

// Resolves a condition to a Gaussian whose mean is the condition's first slot entry.
AnalyticDenoiser shifted_backend(Eigen::Index frames, Eigen::Index features) {
  return AnalyticDenoiser(frames, features, [n = frames * features](const ConditionEmbedding& c) {
    const double m = c.is_null() ? 0.0 : c.slot1()[0];
    return GaussianMixture::isotropic(Eigen::VectorXd::Constant(n, m), 0.25);
  });
}

}  // namespace

TEST_CASE("noise schedule: single step") {
  const auto s = build_schedule(1, 0.02, 0.02);
  CHECK(s.beta()[0] == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(s.alpha_bar()[0] == doctest::Approx(0.98).epsilon(1e-15));
}

TEST_CASE("noise schedule: fifty steps") {
  const auto s = build_schedule(50);
  CHECK(s.alpha_bar()[0] == doctest::Approx(1.0 - 1e-4).epsilon(1e-15));
  for (int t = 1; t < 50; ++t) CHECK(s.alpha_bar()[t] < s.alpha_bar()[t - 1]);
  for (int t = 0; t < 50; ++t) {
    double direct = 1.0;
    for (int u = 0; u <= t; ++u) direct *= 1.0 - s.beta()[u];
    CHECK(std::abs(s.alpha_bar()[t] - direct) < 1e-12);
  }
  CHECK(s.beta()[49] == doctest::Approx(0.02));
}

TEST_CASE("noise schedule: invalid input") {
  CHECK_THROWS_AS(build_schedule(0), ConfigError);
  CHECK_THROWS_AS(build_schedule(10, 0.0, 0.02), ConfigError);
  CHECK_THROWS_AS(build_schedule(10, 0.03, 0.02), ConfigError);
  CHECK_THROWS_AS(build_schedule(10, 0.01, 1.0), ConfigError);
  CHECK_THROWS_AS(build_schedule(10).check_step(10), RangeError);
  CHECK(build_schedule(10).normalized_time(5) == 0.5);
}

TEST_CASE("forward noise limits") {
  Rng rng(3);
  const Eigen::VectorXd z0 = rng.normal_vector(12), eps = rng.normal_vector(12);
  CHECK(forward_noise(z0, eps, 1.0) == z0);
  CHECK((forward_noise(z0, eps, 0.0) - eps).norm() == 0.0);
  CHECK(forward_noise(Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4), 0.3).isZero(0.0));
  CHECK_THROWS_AS(forward_noise(z0, Eigen::VectorXd::Zero(3), 0.5), ShapeError);
  const auto s = build_schedule(20);
  CHECK_THROWS_AS(forward_noise(z0, 20, eps, s), RangeError);
  const Eigen::VectorXd zt = forward_noise(z0, 7, eps, s);
  CHECK((zt - (std::sqrt(s.alpha_bar()[7]) * z0 + std::sqrt(1 - s.alpha_bar()[7]) * eps)).norm() < 1e-15);
}

TEST_CASE("ancestral step: final step ignores noise") {
  const auto s = build_schedule(10);
  Rng rng(5);
  const Eigen::VectorXd z = rng.normal_vector(8), e = rng.normal_vector(8);
  const Eigen::VectorXd a = ancestral_step(z, 0, e, s, rng.normal_vector(8));
  const Eigen::VectorXd b = ancestral_step(z, 0, e, s, rng.normal_vector(8));
  CHECK(a == b);
  CHECK(ancestral_step(z, 3, e, s, rng.normal_vector(8)) != ancestral_step(z, 3, e, s, rng.normal_vector(8)));
}

TEST_CASE("ancestral step inverts a single forward step") {
  const auto s = build_schedule(1);
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd z0 = rng.normal_vector(16), eps = rng.normal_vector(16);
    const Eigen::VectorXd zt = forward_noise(z0, 0, eps, s);
    const Eigen::VectorXd back = ancestral_step(zt, 0, eps, s, rng.normal_vector(16));
    CHECK((back - z0).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("ancestral update with zero beta and zero noise is the identity") {
  const Eigen::VectorXd z = Eigen::VectorXd::LinSpaced(5, -1, 1);
  const Eigen::VectorXd out = ancestral_update(z, Eigen::VectorXd::Zero(5), 1.0, 1.0, 0.0, 0.0, Eigen::VectorXd::Zero(5));
  CHECK(out == z);
  CHECK_THROWS_AS(ancestral_update(z, Eigen::VectorXd::Zero(4), 1.0, 1.0, 0.0, 0.0, Eigen::VectorXd::Zero(5)),
                  ShapeError);
}

TEST_CASE("deterministic step at t = 0 returns the predicted clean sample") {
  const auto s = build_schedule(1);
  Rng rng(2);
  const Eigen::VectorXd z0 = rng.normal_vector(6), eps = rng.normal_vector(6);
  const Eigen::VectorXd zt = forward_noise(z0, 0, eps, s);
  CHECK((deterministic_step(zt, 0, eps, s) - z0).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("sampler endpoint equivalence") {
  const auto backend = shifted_backend(4, 3);
  const auto p1 = cond_of(2.0), p2 = cond_of(-1.0);
  for (auto kind : {SamplerKind::ancestral, SamplerKind::deterministic}) {
    SamplerConfig cfg;
    cfg.n_steps = 40;
    cfg.kind = kind;
    cfg.seed = 99;
    const Trajectory at0 = sample(backend, step_switch(0.0, 40, p1, p2), std::nullopt, cfg);
    const Trajectory c2 = sample(backend, StepSchedule::constant(40, p2), std::nullopt, cfg);
    const Trajectory at1 = sample(backend, step_switch(1.0, 40, p1, p2), std::nullopt, cfg);
    const Trajectory c1 = sample(backend, StepSchedule::constant(40, p1), std::nullopt, cfg);
    CHECK(at0 == c2);
    CHECK(at1 == c1);
    CHECK(at0 != at1);
  }
}

TEST_CASE("sampler determinism and seed sensitivity") {
  const auto backend = shifted_backend(4, 3);
  const auto sched = StepSchedule::constant(30, cond_of(1.0));
  SamplerConfig cfg;
  cfg.n_steps = 30;
  cfg.seed = 1;
  const Trajectory a = sample(backend, sched, std::nullopt, cfg);
  CHECK(a == sample(backend, sched, std::nullopt, cfg));
  cfg.seed = 2;
  CHECK(a != sample(backend, sched, std::nullopt, cfg));
  CHECK(a.rows() == 4);
  CHECK(a.cols() == 3);
}

TEST_CASE("sampler converges onto a near-degenerate Gaussian") {
  EventParams e{0.7, 1.2, Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)};
  const Trajectory m = mean_trajectory(e, e, 16);
  const Eigen::VectorXd mean = flatten(m);
  AnalyticDenoiser backend(16, 6, [&](const ConditionEmbedding&) { return GaussianMixture::isotropic(mean, 1e-6); });
  SamplerConfig cfg;
  cfg.n_steps = 200;
  cfg.seed = 17;
  const Trajectory out = sample(backend, StepSchedule::constant(200, cond_of(0.0)), std::nullopt, cfg);
  CHECK((out - m).cwiseAbs().maxCoeff() <= 0.1);
}

TEST_CASE("sampler input validation") {
  const auto backend = shifted_backend(4, 3);
  SamplerConfig cfg;
  cfg.n_steps = 10;
  CHECK_THROWS_AS(sample(backend, StepSchedule::constant(12, cond_of(0.0)), std::nullopt, cfg), ScheduleError);
  CHECK_THROWS_AS(sample(backend, StepSchedule::constant(10, cond_of(0.0)), uniform_assignment(2, cond_of(0.0)), cfg),
                  UnsupportedError);
}

TEST_CASE("classifier-free guidance at scale 1 matches the unguided sampler") {
  const auto backend = shifted_backend(4, 3);
  const auto sched = StepSchedule::constant(20, cond_of(1.5));
  SamplerConfig cfg;
  cfg.n_steps = 20;
  cfg.seed = 4;
  const Trajectory plain = sample(backend, sched, std::nullopt, cfg);
  cfg.guidance_scale = 3.0;
  const Trajectory guided = sample(backend, sched, std::nullopt, cfg);
  CHECK(plain != guided);
  // Guidance pushes the sample further from the unconditional mean.
  CHECK(guided.mean() > plain.mean());
}

TEST_CASE("metrics do not touch the sampler's random stream") {
  const auto backend = shifted_backend(16, 6);
  SamplerConfig cfg;
  cfg.n_steps = 10;
  cfg.seed = 8;
  const auto sched = StepSchedule::constant(10, cond_of(0.3));
  EventParams e{0.0, 1.0, Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 0)};
  const Trajectory a = sample(backend, sched, std::nullopt, cfg);
  const MetricsRecord m1 = compute_metrics(a, e, e);
  const Trajectory b = sample(backend, sched, std::nullopt, cfg);
  const MetricsRecord m2 = compute_metrics(a, e, e);
  CHECK(a == b);
  CHECK(m1.ta_mean == m2.ta_mean);
  CHECK(m1.turning_frame == m2.turning_frame);
}
