#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "turnpoint/analytic.hpp"
#include "turnpoint/neural.hpp"
#include "turnpoint/random.hpp"
#include "turnpoint/worldgen.hpp"

namespace turnpoint {

/// One draw from a diagonal Gaussian mixture.
Eigen::VectorXd draw(const GaussianMixture& m, Rng& rng);

/// Clean third-view latents of a single fixed event.
DataSampler fixed_event_sampler(const EventParams& e, const WorldConfig& world);

/// Third-view latents of the given prompts under event1, event2 or concat
/// conditions (uniformly), replaced by the null condition with probability
/// p_null. Prompts with a first-view record are used through their events only.
DataSampler prompt_sampler(std::vector<PromptRecord> prompts, const WorldConfig& world, double p_null = 0.0);

/// Fixed held-out examples: n draws of (z0, t, eps) from `data`, each
/// conditioned uniformly across n_blocks blocks.
std::vector<TrainingExample> make_examples(const DataSampler& data, int n, int n_blocks, const NoiseSchedule& sched,
                                           std::uint64_t seed);

/// Everything `train` needs, read from one config tree:
///   { "model": {hidden, n_blocks, time_dim},
///     "train": {learning_rate, adam_beta1, adam_beta2, adam_eps, batch_size, steps, seed, ema_decay, log_every},
///     "world": {frames, feature_dim, sigma_model, w_mix},
///     "diffusion": {n_steps, beta_min, beta_max},
///     "data": {mode: "suite" | "single", suite_seed, p_null, event: {theta, speed, identity, background}} }
struct TrainJob {
  ModelShape shape;
  TrainConfig train;
  WorldConfig world;
  int n_steps = 100;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  std::string data_mode = "suite";
  std::uint64_t suite_seed = 0;
  double p_null = 0.1;
  std::optional<EventParams> event;  // data_mode == "single"

  NoiseSchedule schedule() const;
  DataSampler data() const;
  void validate() const;
};

TrainJob train_job_from_json(const nlohmann::json& j);

}  // namespace turnpoint
