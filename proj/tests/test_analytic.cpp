#include <doctest.h>

#include "oracles.hpp"
#include "turnpoint/analytic.hpp"
#include "turnpoint/random.hpp"

using namespace turnpoint;

namespace {

GaussianMixture random_mixture(Rng& rng, Eigen::Index d, int k) {
  GaussianMixture m;
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    GaussianMixture::Component c;
    c.weight = rng.uniform(0.2, 1.0);
    total += c.weight;
    c.mean = 2.0 * rng.normal_vector(d);
    c.var.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) c.var[j] = rng.uniform(0.05, 1.5);
    m.components.push_back(c);
  }
  for (auto& c : m.components) c.weight /= total;
  return m;
}

double oracle_log_density(const Eigen::VectorXd& z, const GaussianMixture& m) {
  std::vector<double> w;
  std::vector<Eigen::VectorXd> mean, var;
  for (const auto& c : m.components) {
    w.push_back(c.weight);
    mean.push_back(c.mean);
    var.push_back(c.var);
  }
  return oracle::mixture_log_density(z, w, mean, var);
}

}  // namespace

TEST_CASE("diffused mixture") {
  const auto unit = GaussianMixture::isotropic(Eigen::VectorXd::Zero(3), 1.0);
  for (double ab : {0.9, 0.5, 0.01}) {
    const auto d = diffused_mixture(unit, ab);
    CHECK(d.components[0].mean.isZero(0.0));
    CHECK((d.components[0].var.array() - 1.0).abs().maxCoeff() < 1e-15);
  }
  const auto point = GaussianMixture::isotropic(Eigen::VectorXd::Constant(1, 2.0), 1e-12);
  const auto d = diffused_mixture(point, 0.5);
  CHECK(d.components[0].mean[0] == doctest::Approx(1.41421356).epsilon(1e-8));
  CHECK(d.components[0].var[0] == doctest::Approx(0.5).epsilon(1e-10));

  Rng rng(4);
  const auto m = random_mixture(rng, 3, 3);
  const auto dm = diffused_mixture(m, 4, build_schedule(10));
  for (std::size_t k = 0; k < 3; ++k) CHECK(dm.components[k].weight == m.components[k].weight);
}

TEST_CASE("responsibilities") {
  GaussianMixture sym;
  sym.components = {{0.5, Eigen::VectorXd::Constant(2, -1.0), Eigen::VectorXd::Ones(2)},
                    {0.5, Eigen::VectorXd::Constant(2, 1.0), Eigen::VectorXd::Ones(2)}};
  const auto r = responsibilities(Eigen::VectorXd::Zero(2), sym);
  CHECK(r[0] == doctest::Approx(0.5));
  CHECK(r[1] == doctest::Approx(0.5));

  const auto one = GaussianMixture::isotropic(Eigen::VectorXd::Zero(2), 1.0);
  CHECK(responsibilities(Eigen::VectorXd::Constant(2, 5.0), one)[0] == 1.0);

  GaussianMixture far;
  far.components = {{0.5, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)},
                    {0.5, Eigen::VectorXd::Constant(1, 20.0), Eigen::VectorXd::Ones(1)}};
  CHECK(responsibilities(Eigen::VectorXd::Constant(1, -10.0), far)[0] >= 1.0 - 1e-6);

  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const auto m = random_mixture(rng, 4, 1 + static_cast<int>(rng.below(4)));
    const auto rr = responsibilities(50.0 * rng.normal_vector(4), m);
    CHECK((rr.array() >= 0.0).all());
    CHECK(std::abs(rr.sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("log density agrees with an independent evaluation") {
  Rng rng(12);
  for (int i = 0; i < 50; ++i) {
    const auto m = random_mixture(rng, 5, 1 + static_cast<int>(rng.below(3)));
    const Eigen::VectorXd z = rng.normal_vector(5);
    CHECK(std::abs(log_density(z, m) - oracle_log_density(z, m)) < 1e-10);
  }
}

TEST_CASE("predict_eps fixed points") {
  const auto sched = build_schedule(100);
  const auto unit = GaussianMixture::isotropic(Eigen::VectorXd::Zero(4), 1.0);
  Rng rng(1);
  const Eigen::VectorXd z = rng.normal_vector(4);
  for (int t : {0, 37, 99}) {
    const Eigen::VectorXd e = predict_eps(z, t, unit, sched);
    CHECK((e - std::sqrt(1.0 - sched.alpha_bar()[t]) * z).norm() < 1e-12);
  }
  const auto point = GaussianMixture::isotropic(Eigen::VectorXd::Constant(1, 2.0), 1e-12);
  const Eigen::VectorXd s = score(Eigen::VectorXd::Zero(1), diffused_mixture(point, 0.5));
  CHECK(s[0] == doctest::Approx(2.82843).epsilon(1e-5));
  CHECK(predict_eps(Eigen::VectorXd::Zero(1), 0.5, point)[0] == doctest::Approx(-2.0).epsilon(1e-9));
}

TEST_CASE("predict_eps matches the numerical score of the log density") {
  const auto sched = build_schedule(100);
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(6));
    const auto m = random_mixture(rng, d, 1 + static_cast<int>(rng.below(3)));
    const int t = static_cast<int>(rng.below(100));
    const Eigen::VectorXd z = rng.normal_vector(d);
    const auto mt = diffused_mixture(m, t, sched);
    const Eigen::VectorXd num =
        oracle::numerical_gradient([&](const Eigen::VectorXd& y) { return oracle_log_density(y, mt); }, z, 1e-4);
    const Eigen::VectorXd expect = -std::sqrt(1.0 - sched.alpha_bar()[t]) * num;
    const Eigen::VectorXd got = predict_eps(z, t, m, sched);
    CHECK((got - expect).norm() / std::max(expect.norm(), 1e-8) < 1e-5);
  }
}

TEST_CASE("mixture validation") {
  GaussianMixture bad;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.components = {{0.4, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.components = {{1.0, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.components = {{0.5, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)},
                    {0.5, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3)}};
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("analytic backend resolves conditions") {
  const auto sched = build_schedule(10);
  AnalyticDenoiser backend(2, 3, [](const ConditionEmbedding& c) {
    return GaussianMixture::isotropic(Eigen::VectorXd::Constant(6, c.is_null() ? 0.0 : 1.0), 0.5);
  });
  CHECK(backend.dim() == 6);
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(6);
  const auto a = backend.predict_eps(z, 5, ConditionEmbedding::null(), sched);
  const auto b = backend.predict_eps(z, 5, compose_single(Eigen::VectorXd::Ones(7)), sched);
  CHECK(a.isZero(1e-15));
  CHECK((b.array() < 0.0).all());
  CHECK_FALSE(backend.supports_block_assignment());
  CHECK_THROWS_AS(backend.predict_eps(z, 5, uniform_assignment(2, ConditionEmbedding::null()), sched),
                  UnsupportedError);
  CHECK_THROWS_AS(backend.predict_eps(Eigen::VectorXd::Zero(5), 5, ConditionEmbedding::null(), sched), ShapeError);
}
