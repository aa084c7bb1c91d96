#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "turnpoint/conditioning.hpp"
#include "turnpoint/diffusion.hpp"
#include "turnpoint/random.hpp"

namespace turnpoint {

/// Dimensions of the block-stacked denoiser.
struct ModelShape {
  Eigen::Index latent_dim = 96;  // D = T * F
  Eigen::Index hidden = 128;     // H
  int n_blocks = 8;              // B
  Eigen::Index time_dim = 16;    // sinusoidal timestep embedding width, even
  Eigen::Index slot_dim = 7;     // E

  Eigen::Index cond_dim() const { return 2 * slot_dim + 2; }
  Eigen::Index block_input_dim() const { return hidden + time_dim + cond_dim(); }
  Eigen::Index feature_dim() const { return (slot_dim - 3) / 2; }
  Eigen::Index features() const { return 2 + 2 * feature_dim(); }
  Eigen::Index frames() const { return latent_dim / features(); }

  void validate() const;
  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

struct BlockParams {
  Eigen::MatrixXd w1;  // H x (H + T_emb + 2E + 2)
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // H x H
  Eigen::VectorXd b2;
};

/// All trainable tensors. Declared order (also the checkpoint order):
/// w_in, b_in, then per block w1, b1, w2, b2, then w_out, b_out.
struct DenoiserParams {
  Eigen::MatrixXd w_in;  // H x D
  Eigen::VectorXd b_in;
  std::vector<BlockParams> blocks;
  Eigen::MatrixXd w_out;  // D x H, zero at init
  Eigen::VectorXd b_out;

  static DenoiserParams zeros(const ModelShape& shape);

  /// Visits every tensor in declared order as a flat column-major span.
  template <typename F>
  void for_each(F&& f) {
    f("w_in", span(w_in));
    f("b_in", span(b_in));
    for (std::size_t j = 0; j < blocks.size(); ++j) {
      f("block" + std::to_string(j) + ".w1", span(blocks[j].w1));
      f("block" + std::to_string(j) + ".b1", span(blocks[j].b1));
      f("block" + std::to_string(j) + ".w2", span(blocks[j].w2));
      f("block" + std::to_string(j) + ".b2", span(blocks[j].b2));
    }
    f("w_out", span(w_out));
    f("b_out", span(b_out));
  }

  template <typename F>
  void for_each(F&& f) const {
    const_cast<DenoiserParams*>(this)->for_each(
        [&f](const std::string& name, std::span<double> s) { f(name, std::span<const double>(s)); });
  }

  std::size_t parameter_count() const;
  bool all_finite() const;

 private:
  template <typename Derived>
  static std::span<double> span(Eigen::PlainObjectBase<Derived>& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
  }
};

/// Sinusoidal embedding of the integer diffusion step.
Eigen::VectorXd timestep_embedding(int t, Eigen::Index dim);

/// Residual tanh block stack with per-block condition injection:
///   h_0 = W_in z + b_in
///   h_{j+1} = h_j + W2_j tanh(W1_j [h_j; temb(t); c_j] + b1_j) + b2_j
///   eps_hat = W_out h_B + b_out
class DenoiserModel final : public DenoiserBackend {
 public:
  /// Scaled-normal init for hidden maps; the output projection starts at
  /// zero so a fresh model predicts eps_hat = 0.
  static DenoiserModel create(const ModelShape& shape, std::uint64_t seed);

  DenoiserModel(ModelShape shape, DenoiserParams params);

  const ModelShape& shape() const { return shape_; }
  const DenoiserParams& params() const { return params_; }
  DenoiserParams& mutable_params() { return params_; }

  Eigen::Index frames() const override { return shape_.frames(); }
  Eigen::Index features() const override { return shape_.features(); }
  bool supports_block_assignment() const override { return true; }

  Eigen::VectorXd forward(const Eigen::VectorXd& z_t, int t, const BlockAssignment& assign) const;

  /// Batched forward: columns of `z_t` are examples, `block_cond[j]` holds
  /// the conditioned vectors fed to block j (one column per example).
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& z_t, std::span<const int> t,
                                std::span<const Eigen::MatrixXd> block_cond) const;

  Eigen::VectorXd predict_eps(const Eigen::VectorXd& z, int t, const ConditionEmbedding& cond,
                              const NoiseSchedule& sched) const override;
  Eigen::VectorXd predict_eps(const Eigen::VectorXd& z, int t, const BlockAssignment& assign,
                              const NoiseSchedule& sched) const override;

 private:
  ModelShape shape_;
  DenoiserParams params_;
};

struct TrainingExample {
  Eigen::VectorXd z0;
  int t = 0;
  Eigen::VectorXd eps;
  BlockAssignment assign;
};

struct LossAndGrads {
  double loss = 0.0;
  DenoiserParams grads;
};

/// Mean over the batch of ||eps - eps_hat||^2 / D with exact reverse-mode
/// gradients.
LossAndGrads loss_and_grads(const DenoiserModel& model, std::span<const TrainingExample> batch,
                            const NoiseSchedule& sched);

struct TrainConfig {
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 128;
  int steps = 20000;
  std::uint64_t seed = 0;
  double ema_decay = 0.0;  // 0 disables EMA
  int log_every = 100;

  void validate() const;
};

/// A clean latent and the condition it was drawn under.
struct TrainingPair {
  Eigen::VectorXd z0;
  ConditionEmbedding cond;
};

using DataSampler = std::function<TrainingPair(Rng&)>;

struct LossPoint {
  int step = 0;       // steps completed
  double loss = 0.0;  // mean over the preceding window
};

struct TrainResult {
  DenoiserModel model;
  std::vector<LossPoint> trace;
};

/// Adam on the denoising objective. Each example draws t uniformly and is
/// conditioned uniformly across blocks; block splits are inference-only.
TrainResult train(DenoiserModel model, const DataSampler& sampler, const TrainConfig& cfg,
                  const NoiseSchedule& sched);

/// Mean ||eps - eps_hat||^2 / D of any backend over fixed noisy examples.
/// Backends without block support see each example's block-0 condition.
double denoising_mse(const DenoiserBackend& backend, std::span<const TrainingExample> examples,
                     const NoiseSchedule& sched);

/// Binary checkpoint:
///   "TPCKPT" | u32 version = 1 | u32 D, H, B, T_emb, E | u64 parameter count |
///   f64 parameters in declared order (each tensor column-major)
/// All integers and floats little-endian.
void save_checkpoint(const DenoiserModel& model, const std::filesystem::path& path);
DenoiserModel load_checkpoint(const std::filesystem::path& path);

}  // namespace turnpoint
