#include "turnpoint/training.hpp"

#include <cmath>
#include <memory>

#include "turnpoint/errors.hpp"
#include "turnpoint/suite.hpp"

namespace turnpoint {

using nlohmann::json;

Eigen::VectorXd draw(const GaussianMixture& m, Rng& rng) {
  if (m.components.empty()) throw ConfigError("cannot draw from an empty mixture");
  std::size_t k = 0;
  if (m.components.size() > 1) {
    double u = rng.uniform();
    while (k + 1 < m.components.size() && u >= m.components[k].weight) {
      u -= m.components[k].weight;
      ++k;
    }
  }
  const auto& c = m.components[k];
  return c.mean + (c.var.array().sqrt() * rng.normal_vector(c.mean.size()).array()).matrix();
}

DataSampler fixed_event_sampler(const EventParams& e, const WorldConfig& world) {
  world.validate();
  PromptRecord rec;
  rec.id = "fixed";
  rec.events = {e, e};
  auto mixture = std::make_shared<const GaussianMixture>(gaussian_of(rec, Which::event1, world));
  auto cond = std::make_shared<const ConditionEmbedding>(compose_single(embed_event(e), world.slot_dim()));
  return [mixture, cond](Rng& rng) { return TrainingPair{draw(*mixture, rng), *cond}; };
}

DataSampler prompt_sampler(std::vector<PromptRecord> prompts, const WorldConfig& world, double p_null) {
  world.validate();
  if (prompts.empty()) throw ConfigError("training needs at least one prompt");
  if (!(p_null >= 0.0 && p_null < 1.0)) throw ConfigError("p_null must lie in [0, 1)");
  struct Entry {
    GaussianMixture mixture;
    ConditionEmbedding cond;
  };
  auto entries = std::make_shared<std::vector<Entry>>();
  for (auto rec : prompts) {
    rec.view = View::third;
    for (Which w : {Which::event1, Which::event2, Which::concat}) {
      entries->push_back({gaussian_of(rec, w, world), condition_of(rec, w)});
    }
  }
  const auto null = ConditionEmbedding::null(world.slot_dim());
  return [entries, null, p_null](Rng& rng) {
    const Entry& e = (*entries)[rng.below(entries->size())];
    const bool drop = p_null > 0.0 && rng.uniform() < p_null;
    return TrainingPair{draw(e.mixture, rng), drop ? null : e.cond};
  };
}

std::vector<TrainingExample> make_examples(const DataSampler& data, int n, int n_blocks, const NoiseSchedule& sched,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainingExample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    TrainingPair pair = data(rng);
    TrainingExample ex;
    ex.t = static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.n_steps())));
    ex.eps = rng.normal_vector(pair.z0.size());
    ex.z0 = std::move(pair.z0);
    ex.assign = uniform_assignment(n_blocks, pair.cond);
    out.push_back(std::move(ex));
  }
  return out;
}

NoiseSchedule TrainJob::schedule() const { return build_schedule(n_steps, beta_min, beta_max); }

DataSampler TrainJob::data() const {
  if (data_mode == "single") return fixed_event_sampler(*event, world);
  std::vector<PromptRecord> prompts = generate_suite(suite_seed, world.feature_dim);
  return prompt_sampler(std::move(prompts), world, p_null);
}

void TrainJob::validate() const {
  world.validate();
  train.validate();
  shape.validate();
  if (shape.latent_dim != world.latent_dim() || shape.slot_dim != world.slot_dim()) {
    throw ConfigError("model shape does not match the world dimensions");
  }
  if (n_steps < 1) throw ConfigError("diffusion n_steps must be >= 1");
  if (data_mode != "suite" && data_mode != "single") throw ConfigError("data mode must be 'suite' or 'single'");
  if (data_mode == "single" && !event) throw ConfigError("data mode 'single' needs an event");
  if (event && (event->identity.size() != world.feature_dim || event->background.size() != world.feature_dim)) {
    throw ConfigError("event feature vectors do not match feature_dim");
  }
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& into) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return;
  try {
    into = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

const json& section(const json& j, const char* name) {
  static const json empty = json::object();
  auto it = j.find(name);
  if (it == j.end()) return empty;
  if (!it->is_object()) throw ConfigError(std::string("config section '") + name + "' must be an object");
  return *it;
}

}  // namespace

TrainJob train_job_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a key-value object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k != "model" && k != "train" && k != "world" && k != "diffusion" && k != "data") {
      throw ConfigError("unknown train config section '" + k + "'");
    }
  }
  TrainJob job;
  const json& w = section(j, "world");
  read(w, "frames", job.world.frames);
  read(w, "feature_dim", job.world.feature_dim);
  read(w, "sigma_model", job.world.sigma_model);
  read(w, "w_mix", job.world.w_mix);
  job.world.validate();

  const json& m = section(j, "model");
  job.shape.latent_dim = job.world.latent_dim();
  job.shape.slot_dim = job.world.slot_dim();
  read(m, "hidden", job.shape.hidden);
  read(m, "n_blocks", job.shape.n_blocks);
  read(m, "time_dim", job.shape.time_dim);

  const json& t = section(j, "train");
  read(t, "learning_rate", job.train.learning_rate);
  read(t, "adam_beta1", job.train.adam_beta1);
  read(t, "adam_beta2", job.train.adam_beta2);
  read(t, "adam_eps", job.train.adam_eps);
  read(t, "batch_size", job.train.batch_size);
  read(t, "steps", job.train.steps);
  read(t, "seed", job.train.seed);
  read(t, "ema_decay", job.train.ema_decay);
  read(t, "log_every", job.train.log_every);

  const json& d = section(j, "diffusion");
  read(d, "n_steps", job.n_steps);
  read(d, "beta_min", job.beta_min);
  read(d, "beta_max", job.beta_max);

  const json& data = section(j, "data");
  read(data, "mode", job.data_mode);
  read(data, "suite_seed", job.suite_seed);
  read(data, "p_null", job.p_null);
  if (auto it = data.find("event"); it != data.end()) {
    try {
      job.event = event_from_json(*it);
    } catch (const InputError& e) {
      throw ConfigError(std::string("data.event: ") + e.what());
    }
  }
  job.validate();
  return job;
}

}  // namespace turnpoint
