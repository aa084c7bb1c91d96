#include "turnpoint/analytic.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace turnpoint {

GaussianMixture GaussianMixture::single(Eigen::VectorXd mean, Eigen::VectorXd var) {
  GaussianMixture m;
  m.components.push_back({1.0, std::move(mean), std::move(var)});
  m.validate();
  return m;
}

GaussianMixture GaussianMixture::isotropic(Eigen::VectorXd mean, double var) {
  Eigen::VectorXd v = Eigen::VectorXd::Constant(mean.size(), var);
  return single(std::move(mean), std::move(v));
}

void GaussianMixture::validate() const {
  if (components.empty()) throw ConfigError("mixture has no components");
  const Eigen::Index d = dim();
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight > 0.0)) throw ConfigError("mixture weights must be positive");
    if (c.mean.size() != d || c.var.size() != d) throw ShapeError("mixture components differ in dimension");
    if (!c.mean.allFinite()) throw ConfigError("mixture mean is not finite");
    if (!(c.var.array() > 0.0).all() || !c.var.allFinite()) {
      throw ConfigError("mixture variances must be positive and finite");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("mixture weights sum to " + std::to_string(total));
}

GaussianMixture diffused_mixture(const GaussianMixture& m, double alpha_bar) {
  GaussianMixture out;
  out.components.reserve(m.components.size());
  const double scale = std::sqrt(alpha_bar);
  for (const auto& c : m.components) {
    out.components.push_back(
        {c.weight, scale * c.mean, (alpha_bar * c.var.array() + (1.0 - alpha_bar)).matrix()});
  }
  return out;
}

GaussianMixture diffused_mixture(const GaussianMixture& m, int t, const NoiseSchedule& sched) {
  sched.check_step(t);
  return diffused_mixture(m, sched.alpha_bar()[t]);
}

namespace {

Eigen::VectorXd component_log_terms(const Eigen::VectorXd& z, const GaussianMixture& m) {
  if (z.size() != m.dim()) {
    throw ShapeError("latent dimension " + std::to_string(z.size()) + " does not match mixture dimension " +
                     std::to_string(m.dim()));
  }
  Eigen::VectorXd logs(static_cast<Eigen::Index>(m.components.size()));
  for (std::size_t k = 0; k < m.components.size(); ++k) {
    const auto& c = m.components[k];
    const Eigen::ArrayXd var = c.var.array().max(kVarianceFloor);
    const Eigen::ArrayXd diff = z.array() - c.mean.array();
    logs[static_cast<Eigen::Index>(k)] =
        std::log(c.weight) - 0.5 * ((diff.square() / var) + (2.0 * M_PI * var).log()).sum();
  }
  return logs;
}

}  // namespace

Eigen::VectorXd responsibilities(const Eigen::VectorXd& z, const GaussianMixture& m) {
  const Eigen::VectorXd logs = component_log_terms(z, m);
  const double peak = logs.maxCoeff();
  Eigen::VectorXd r = (logs.array() - peak).exp().matrix();
  r /= r.sum();
  return r;
}

double log_density(const Eigen::VectorXd& z, const GaussianMixture& m) {
  const Eigen::VectorXd logs = component_log_terms(z, m);
  const double peak = logs.maxCoeff();
  return peak + std::log((logs.array() - peak).exp().sum());
}

Eigen::VectorXd score(const Eigen::VectorXd& z, const GaussianMixture& m) {
  const Eigen::VectorXd r = responsibilities(z, m);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(z.size());
  for (std::size_t k = 0; k < m.components.size(); ++k) {
    const auto& c = m.components[k];
    s.array() -= r[static_cast<Eigen::Index>(k)] * (z.array() - c.mean.array()) / c.var.array().max(kVarianceFloor);
  }
  return s;
}

Eigen::VectorXd predict_eps(const Eigen::VectorXd& z, double alpha_bar, const GaussianMixture& cond_mixture) {
  const GaussianMixture diffused = diffused_mixture(cond_mixture, alpha_bar);
  Eigen::VectorXd eps = -std::sqrt(1.0 - alpha_bar) * score(z, diffused);
  if (!eps.allFinite()) throw InternalError("analytic noise prediction is not finite");
  return eps;
}

Eigen::VectorXd predict_eps(const Eigen::VectorXd& z, int t, const GaussianMixture& cond_mixture,
                            const NoiseSchedule& sched) {
  sched.check_step(t);
  return predict_eps(z, sched.alpha_bar()[t], cond_mixture);
}

AnalyticDenoiser::AnalyticDenoiser(Eigen::Index frames, Eigen::Index features, Resolver resolver)
    : frames_(frames), features_(features), resolver_(std::move(resolver)) {
  if (frames_ < 1 || features_ < 1) throw ConfigError("analytic denoiser needs positive frame and feature counts");
  if (!resolver_) throw ConfigError("analytic denoiser needs a condition resolver");
}

Eigen::VectorXd AnalyticDenoiser::predict_eps(const Eigen::VectorXd& z, int t, const ConditionEmbedding& cond,
                                              const NoiseSchedule& sched) const {
  const GaussianMixture m = resolver_(cond);
  if (m.dim() != dim()) throw ShapeError("resolved mixture dimension does not match the trajectory latent");
  return turnpoint::predict_eps(z, t, m, sched);
}

}  // namespace turnpoint
