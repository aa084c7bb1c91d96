#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

#include "turnpoint/diffusion.hpp"

namespace turnpoint {

/// Diagonal-covariance Gaussian mixture over the flattened latent.
struct GaussianMixture {
  struct Component {
    double weight = 1.0;
    Eigen::VectorXd mean;
    Eigen::VectorXd var;  // diagonal, > 0
  };

  std::vector<Component> components;

  static GaussianMixture single(Eigen::VectorXd mean, Eigen::VectorXd var);
  static GaussianMixture isotropic(Eigen::VectorXd mean, double var);

  Eigen::Index dim() const { return components.empty() ? 0 : components.front().mean.size(); }

  /// Throws ConfigError unless weights are positive and sum to 1 (1e-12),
  /// variances are positive and every component has the same dimension.
  void validate() const;
};

/// Variance floor applied wherever a variance divides.
inline constexpr double kVarianceFloor = 1e-12;

/// Marginal of the forward process at step t: mean * sqrt(ab), var * ab + (1 - ab).
GaussianMixture diffused_mixture(const GaussianMixture& m, int t, const NoiseSchedule& sched);
GaussianMixture diffused_mixture(const GaussianMixture& m, double alpha_bar);

/// Posterior component weights, log-sum-exp stabilized.
Eigen::VectorXd responsibilities(const Eigen::VectorXd& z, const GaussianMixture& m);

double log_density(const Eigen::VectorXd& z, const GaussianMixture& m);

/// Gradient of log p(z) for the mixture.
Eigen::VectorXd score(const Eigen::VectorXd& z, const GaussianMixture& m);

/// The optimal noise prediction, -sqrt(1 - ab) * grad log p_t(z).
Eigen::VectorXd predict_eps(const Eigen::VectorXd& z, int t, const GaussianMixture& cond_mixture,
                            const NoiseSchedule& sched);
Eigen::VectorXd predict_eps(const Eigen::VectorXd& z, double alpha_bar, const GaussianMixture& cond_mixture);

/// Training-free backend: each condition resolves to a data mixture whose
/// exact denoiser is evaluated in closed form.
class AnalyticDenoiser final : public DenoiserBackend {
 public:
  using Resolver = std::function<GaussianMixture(const ConditionEmbedding&)>;

  AnalyticDenoiser(Eigen::Index frames, Eigen::Index features, Resolver resolver);

  Eigen::Index frames() const override { return frames_; }
  Eigen::Index features() const override { return features_; }

  using DenoiserBackend::predict_eps;
  Eigen::VectorXd predict_eps(const Eigen::VectorXd& z, int t, const ConditionEmbedding& cond,
                              const NoiseSchedule& sched) const override;

  GaussianMixture resolve(const ConditionEmbedding& cond) const { return resolver_(cond); }

 private:
  Eigen::Index frames_;
  Eigen::Index features_;
  Resolver resolver_;
};

}  // namespace turnpoint
