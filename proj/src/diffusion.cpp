#include "turnpoint/diffusion.hpp"

namespace turnpoint {

Eigen::VectorXd DenoiserBackend::predict_eps(const Eigen::VectorXd&, int, const BlockAssignment&,
                                             const NoiseSchedule&) const {
  throw UnsupportedError("this denoiser backend does not accept per-block conditioning");
}

namespace {

Eigen::VectorXd guided_eps(const DenoiserBackend& d, const Eigen::VectorXd& z, int t, const StepSchedule& schedule,
                           int iteration, const std::optional<BlockAssignment>& assign, const NoiseSchedule& sched,
                           double w) {
  auto conditional = [&]() -> Eigen::VectorXd {
    if (assign) return d.predict_eps(z, t, *assign, sched);
    return d.predict_eps(z, t, schedule.at(iteration), sched);
  };
  if (w == 1.0) return conditional();
  const Eigen::Index slot_dim = schedule.at(iteration).slot_dim();
  const ConditionEmbedding null = ConditionEmbedding::null(slot_dim);
  const Eigen::VectorXd uncond = assign ? d.predict_eps(z, t, uniform_assignment(assign->n_blocks, null), sched)
                                        : d.predict_eps(z, t, null, sched);
  return uncond + w * (conditional() - uncond);
}

}  // namespace

Trajectory sample(const DenoiserBackend& denoiser, const StepSchedule& schedule,
                  const std::optional<BlockAssignment>& block_assign, const SamplerConfig& cfg) {
  if (cfg.n_steps < 1) throw ConfigError("sampler needs n_steps >= 1");
  if (!std::isfinite(cfg.guidance_scale) || cfg.guidance_scale < 0) {
    throw ConfigError("guidance_scale must be finite and non-negative");
  }
  if (schedule.n_steps() != cfg.n_steps) {
    throw ScheduleError("conditioning schedule covers " + std::to_string(schedule.n_steps()) +
                        " iterations but the sampler runs " + std::to_string(cfg.n_steps));
  }
  if (block_assign && !denoiser.supports_block_assignment()) {
    throw UnsupportedError("block assignment requires the block-structured neural backend");
  }

  const NoiseSchedule sched = cfg.schedule();
  const Eigen::Index dim = denoiser.dim();
  LatentState state{Eigen::VectorXd(), 0, Rng(cfg.seed)};
  state.z = state.rng.normal_vector(dim);

  for (; state.step_index < cfg.n_steps; ++state.step_index) {
    const int t = cfg.n_steps - 1 - state.step_index;
    const Eigen::VectorXd eps =
        guided_eps(denoiser, state.z, t, schedule, state.step_index, block_assign, sched, cfg.guidance_scale);
    if (cfg.kind == SamplerKind::ancestral) {
      const Eigen::VectorXd noise = state.rng.normal_vector(dim);
      state.z = ancestral_step(state.z, t, eps, sched, noise);
    } else {
      state.z = deterministic_step(state.z, t, eps, sched);
    }
  }
  if (!state.z.allFinite()) throw InternalError("sampler produced a non-finite latent");
  return unflatten(state.z, denoiser.frames(), denoiser.features());
}

}  // namespace turnpoint
