#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "turnpoint/conditioning.hpp"
#include "turnpoint/errors.hpp"
#include "turnpoint/random.hpp"
#include "turnpoint/trajectory.hpp"

namespace turnpoint {

/// Per-step beta / alpha / alpha_bar over N diffusion steps.
///
/// Step t = 0 is the least noisy. alpha_bar[t] is the running product of
/// alpha[0..t] and is strictly decreasing.
template <typename Scalar>
class BasicNoiseSchedule {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  static BasicNoiseSchedule linear(int n_steps, Scalar beta_min, Scalar beta_max) {
    if (n_steps < 1) throw ConfigError("noise schedule needs n_steps >= 1");
    if (!(beta_min > 0 && beta_min <= beta_max && beta_max < 1)) {
      throw ConfigError("noise schedule needs 0 < beta_min <= beta_max < 1");
    }
    Vector beta(n_steps);
    for (int t = 0; t < n_steps; ++t) {
      const Scalar w = n_steps == 1 ? Scalar(0) : Scalar(t) / Scalar(n_steps - 1);
      beta[t] = beta_min + w * (beta_max - beta_min);
    }
    return from_betas(std::move(beta));
  }

  static BasicNoiseSchedule from_betas(Vector beta) {
    if (beta.size() < 1) throw ConfigError("noise schedule needs n_steps >= 1");
    for (Eigen::Index t = 0; t < beta.size(); ++t) {
      if (!(beta[t] > 0 && beta[t] < 1)) throw ConfigError("every beta must lie in (0, 1)");
    }
    BasicNoiseSchedule s;
    s.alpha_ = Vector::Ones(beta.size()) - beta;
    s.alpha_bar_.resize(beta.size());
    Scalar running = 1;
    for (Eigen::Index t = 0; t < beta.size(); ++t) {
      running *= s.alpha_[t];
      s.alpha_bar_[t] = running;
    }
    s.beta_ = std::move(beta);
    return s;
  }

  int n_steps() const { return static_cast<int>(beta_.size()); }
  const Vector& beta() const { return beta_; }
  const Vector& alpha() const { return alpha_; }
  const Vector& alpha_bar() const { return alpha_bar_; }

  /// tau = i / N for denoising iteration i.
  Scalar normalized_time(int i) const { return Scalar(i) / Scalar(n_steps()); }

  void check_step(int t) const {
    if (t < 0 || t >= n_steps()) {
      throw RangeError("diffusion step " + std::to_string(t) + " outside [0, " + std::to_string(n_steps()) + ")");
    }
  }

 private:
  Vector beta_, alpha_, alpha_bar_;
};

using NoiseSchedule = BasicNoiseSchedule<double>;

inline NoiseSchedule build_schedule(int n_steps, double beta_min = 1e-4, double beta_max = 0.02) {
  return NoiseSchedule::linear(n_steps, beta_min, beta_max);
}

namespace detail {
template <typename A, typename B>
void check_same_size(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": dimension mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
}
}  // namespace detail

/// sqrt(alpha_bar) * z0 + sqrt(1 - alpha_bar) * eps for an explicit alpha_bar.
template <typename D1, typename D2>
auto forward_noise(const Eigen::MatrixBase<D1>& z0, const Eigen::MatrixBase<D2>& eps,
                   typename D1::Scalar alpha_bar) {
  detail::check_same_size(z0, eps, "forward_noise");
  using std::sqrt;
  return (sqrt(alpha_bar) * z0 + sqrt(1 - alpha_bar) * eps).eval();
}

template <typename D1, typename D2>
auto forward_noise(const Eigen::MatrixBase<D1>& z0, int t, const Eigen::MatrixBase<D2>& eps,
                   const BasicNoiseSchedule<typename D1::Scalar>& sched) {
  sched.check_step(t);
  return forward_noise(z0, eps, sched.alpha_bar()[t]);
}

/// DDPM ancestral update with explicit coefficients:
///   (z - beta / sqrt(1 - alpha_bar) * eps_hat) / sqrt(alpha) + sigma * noise
template <typename D1, typename D2, typename D3>
auto ancestral_update(const Eigen::MatrixBase<D1>& z_t, const Eigen::MatrixBase<D2>& eps_hat,
                      typename D1::Scalar alpha, typename D1::Scalar alpha_bar, typename D1::Scalar beta,
                      typename D1::Scalar sigma, const Eigen::MatrixBase<D3>& noise) {
  detail::check_same_size(z_t, eps_hat, "ancestral_step");
  detail::check_same_size(z_t, noise, "ancestral_step");
  using std::sqrt;
  using Scalar = typename D1::Scalar;
  const Scalar eps_coef = beta == 0 ? Scalar(0) : beta / sqrt(1 - alpha_bar);
  return ((z_t - eps_coef * eps_hat) / sqrt(alpha) + sigma * noise).eval();
}

/// One reverse step from diffusion step t; sigma_t^2 = beta[t] and sigma_0 = 0.
template <typename D1, typename D2, typename D3>
auto ancestral_step(const Eigen::MatrixBase<D1>& z_t, int t, const Eigen::MatrixBase<D2>& eps_hat,
                    const BasicNoiseSchedule<typename D1::Scalar>& sched, const Eigen::MatrixBase<D3>& noise) {
  sched.check_step(t);
  using std::sqrt;
  const auto beta = sched.beta()[t];
  const auto sigma = t > 0 ? sqrt(beta) : typename D1::Scalar(0);
  return ancestral_update(z_t, eps_hat, sched.alpha()[t], sched.alpha_bar()[t], beta, sigma, noise);
}

/// Deterministic (eta = 0) reverse step: predict z0, then re-noise to t - 1.
template <typename D1, typename D2>
auto deterministic_step(const Eigen::MatrixBase<D1>& z_t, int t, const Eigen::MatrixBase<D2>& eps_hat,
                        const BasicNoiseSchedule<typename D1::Scalar>& sched) {
  sched.check_step(t);
  detail::check_same_size(z_t, eps_hat, "deterministic_step");
  using std::sqrt;
  using Scalar = typename D1::Scalar;
  const Scalar ab = sched.alpha_bar()[t];
  const Scalar ab_prev = t > 0 ? sched.alpha_bar()[t - 1] : Scalar(1);
  const auto z0_hat = ((z_t - sqrt(1 - ab) * eps_hat) / sqrt(ab)).eval();
  return (sqrt(ab_prev) * z0_hat + sqrt(1 - ab_prev) * eps_hat).eval();
}

enum class SamplerKind { ancestral, deterministic };

struct SamplerConfig {
  int n_steps = 100;
  SamplerKind kind = SamplerKind::ancestral;
  /// Classifier-free guidance weight; 1 disables guidance.
  double guidance_scale = 1.0;
  std::uint64_t seed = 0;
  double beta_min = 1e-4;
  double beta_max = 0.02;

  NoiseSchedule schedule() const { return build_schedule(n_steps, beta_min, beta_max); }
};

/// A noise-prediction model queried by the sampler.
class DenoiserBackend {
 public:
  virtual ~DenoiserBackend() = default;

  virtual Eigen::Index frames() const = 0;
  virtual Eigen::Index features() const = 0;
  Eigen::Index dim() const { return frames() * features(); }

  virtual Eigen::VectorXd predict_eps(const Eigen::VectorXd& z, int t, const ConditionEmbedding& cond,
                                      const NoiseSchedule& sched) const = 0;

  virtual bool supports_block_assignment() const { return false; }

  virtual Eigen::VectorXd predict_eps(const Eigen::VectorXd& z, int t, const BlockAssignment& assign,
                                      const NoiseSchedule& sched) const;
};

/// Sampler state: latent, denoising iteration in [0, N], and the run's RNG.
struct LatentState {
  Eigen::VectorXd z;
  int step_index = 0;
  Rng rng;
};

/// Reverse-diffusion sampling under a per-iteration conditioning schedule.
///
/// Iteration i queries the schedule at i and denoises diffusion step
/// t = N - 1 - i. With a block assignment the assignment replaces the
/// schedule's conditions at every iteration; the schedule still fixes N.
Trajectory sample(const DenoiserBackend& denoiser, const StepSchedule& schedule,
                  const std::optional<BlockAssignment>& block_assign, const SamplerConfig& cfg);

}  // namespace turnpoint
