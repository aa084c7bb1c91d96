#include "turnpoint/worldgen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "turnpoint/errors.hpp"
#include "turnpoint/random.hpp"

namespace turnpoint {

std::string_view to_string(View v) { return v == View::first ? "first" : "third"; }

std::string_view to_string(Category c) {
  switch (c) {
    case Category::General: return "General";
    case Category::MotionOrder: return "MotionOrder";
    case Category::HumanIdentity: return "HumanIdentity";
    case Category::ComplexPlot: return "ComplexPlot";
    case Category::EgoExo: return "EgoExo";
  }
  return "?";
}

std::optional<View> parse_view(std::string_view s) {
  if (s == "first") return View::first;
  if (s == "third") return View::third;
  return std::nullopt;
}

std::optional<Category> parse_category(std::string_view s) {
  for (Category c : kAllCategories) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

Eigen::Vector2d EventParams::drift() const { return speed * Eigen::Vector2d(std::cos(theta), std::sin(theta)); }

void WorldConfig::validate() const {
  if (frames < 2) throw ConfigError("trajectories need at least 2 frames");
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (!(sigma_model > 0.0) || !std::isfinite(sigma_model)) throw ConfigError("sigma_model must be positive");
  if (!std::isfinite(w_mix)) throw ConfigError("w_mix must be finite");
}

namespace {

Eigen::Matrix2d rotation(double angle) {
  Eigen::Matrix2d r;
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

double heading_of(const Eigen::Vector2d& v) { return v.isZero(0.0) ? 0.0 : std::atan2(v.y(), v.x()); }

void check_event(const EventParams& e, Eigen::Index d) {
  if (e.identity.size() != d || e.background.size() != d) {
    throw ShapeError("event identity/background must both have dimension " + std::to_string(d));
  }
}

// Shared renderer: per-step drift and heading, per-frame feature channels
// taken from e1 before the split frame and e2 from it on.
Trajectory render(const EventParams& e1, const EventParams& e2, int frames, View view,
                  const Eigen::Vector2d& drift1, const Eigen::Vector2d& drift2, double heading1, double heading2) {
  if (frames < 2) throw ConfigError("trajectories need at least 2 frames");
  const Eigen::Index d = e1.identity.size();
  check_event(e1, d);
  check_event(e2, d);
  const int split = frames / 2;
  Trajectory traj(frames, 2 + 2 * d);
  Eigen::Vector2d pos = Eigen::Vector2d::Zero();
  for (int t = 0; t < frames; ++t) {
    const EventParams& active = t < split ? e1 : e2;
    traj.block(t, 2, 1, d) = active.identity.transpose();
    traj.block(t, 2 + d, 1, d) = active.background.transpose();
    if (view == View::third) {
      traj.block<1, 2>(t, 0) = pos.transpose();
      pos += t < split ? drift1 : drift2;
    } else {
      const int step = std::min(t, frames - 2);
      const bool in_first = step < split;
      const Eigen::Vector2d local = rotation(-(in_first ? heading1 : heading2)) * (in_first ? drift1 : drift2);
      traj.block<1, 2>(t, 0) = local.transpose();
    }
  }
  return traj;
}

GaussianMixture isotropic_of(const Trajectory& mean, double sigma) {
  return GaussianMixture::isotropic(flatten(mean), sigma * sigma);
}

GaussianMixture concat_mixture(const EventParams& e1, const EventParams& e2, const WorldConfig& world, View view) {
  const double w = std::clamp(world.w_mix, 0.01, 0.99);
  const double var = world.sigma_model * world.sigma_model;
  GaussianMixture m;
  m.components.push_back({w, flatten(mean_trajectory(e1, e2, world.frames, view)),
                          Eigen::VectorXd::Constant(world.latent_dim(), var)});
  m.components.push_back({1.0 - w, flatten(blended_trajectory(e1, e2, world.frames, view)),
                          Eigen::VectorXd::Constant(world.latent_dim(), var)});
  m.validate();
  return m;
}

}  // namespace

Trajectory mean_trajectory(const EventParams& e1, const EventParams& e2, int frames, View view) {
  return render(e1, e2, frames, view, e1.drift(), e2.drift(), e1.theta, e2.theta);
}

Trajectory blended_trajectory(const EventParams& e1, const EventParams& e2, int frames, View view) {
  const Eigen::Vector2d avg = 0.5 * (e1.drift() + e2.drift());
  const double heading = heading_of(avg);
  return render(e1, e2, frames, view, avg, avg, heading, heading);
}

Trajectory sample_trajectory(const EventParams& e1, const EventParams& e2, int frames, double sigma_noise,
                             std::uint64_t seed, View view) {
  if (!(sigma_noise >= 0.0)) throw RangeError("sigma_noise must be non-negative");
  Trajectory traj = mean_trajectory(e1, e2, frames, view);
  if (sigma_noise == 0.0) return traj;
  Rng rng(seed);
  for (Eigen::Index i = 0; i < traj.size(); ++i) traj.data()[i] += sigma_noise * rng.normal();
  return traj;
}

Trajectory to_third_view(const Trajectory& first_view, const EventParams& e1, const EventParams& e2) {
  const Eigen::Index frames = first_view.rows();
  const Eigen::Index split = frames / 2;
  Trajectory out = first_view;
  Eigen::Vector2d pos = Eigen::Vector2d::Zero();
  for (Eigen::Index t = 0; t < frames; ++t) {
    out.block<1, 2>(t, 0) = pos.transpose();
    const Eigen::Vector2d local = first_view.block<1, 2>(t, 0).transpose();
    pos += rotation(t < split ? e1.theta : e2.theta) * local;
  }
  return out;
}

Eigen::VectorXd embed_event(const EventParams& e) {
  const Eigen::Index d = e.identity.size();
  check_event(e, d);
  Eigen::VectorXd v(3 + 2 * d);
  v << std::cos(e.theta), std::sin(e.theta), e.speed, e.identity, e.background;
  return v;
}

EventParams decode_event(const Eigen::Ref<const Eigen::VectorXd>& slot, int feature_dim) {
  if (slot.size() != 3 + 2 * feature_dim) throw ShapeError("event slot has the wrong dimension");
  EventParams e;
  double theta = std::atan2(slot[1], slot[0]);
  if (theta < 0.0) theta += 2.0 * M_PI;
  if (theta >= 2.0 * M_PI) theta = 0.0;
  e.theta = theta;
  e.speed = slot[2];
  e.identity = slot.segment(3, feature_dim);
  e.background = slot.segment(3 + feature_dim, feature_dim);
  return e;
}

ConditionEmbedding condition_of(const PromptRecord& rec, Which which) {
  const Eigen::VectorXd v1 = embed_event(rec.event1());
  const Eigen::VectorXd v2 = embed_event(rec.event2());
  switch (which) {
    case Which::event1: return compose_single(v1, v1.size());
    case Which::event2: return compose_single(v2, v2.size());
    case Which::concat: return compose_concat(v1, v2, v1.size());
  }
  throw InternalError("unknown condition selector");
}

GaussianMixture gaussian_of(const PromptRecord& rec, Which which, const WorldConfig& world) {
  world.validate();
  const EventParams& e1 = rec.event1();
  const EventParams& e2 = rec.event2();
  switch (which) {
    case Which::event1: return isotropic_of(mean_trajectory(e1, e1, world.frames, rec.view), world.sigma_model);
    case Which::event2: return isotropic_of(mean_trajectory(e2, e2, world.frames, rec.view), world.sigma_model);
    case Which::concat: return concat_mixture(e1, e2, world, rec.view);
  }
  throw InternalError("unknown condition selector");
}

GaussianMixture mixture_for_condition(const ConditionEmbedding& cond, const WorldConfig& world, View view) {
  if (cond.slot_dim() != world.slot_dim()) throw ShapeError("condition slot width does not match the world config");
  if (cond.is_null()) {
    return GaussianMixture::isotropic(Eigen::VectorXd::Zero(world.latent_dim()), 1.0);
  }
  if (cond.flag1() && cond.flag2()) {
    return concat_mixture(decode_event(cond.slot1(), world.feature_dim), decode_event(cond.slot2(), world.feature_dim),
                          world, view);
  }
  const EventParams e = decode_event(cond.flag1() ? cond.slot1() : cond.slot2(), world.feature_dim);
  return isotropic_of(mean_trajectory(e, e, world.frames, view), world.sigma_model);
}

AnalyticDenoiser make_analytic_denoiser(const WorldConfig& world, View view) {
  world.validate();
  return AnalyticDenoiser(world.frames, world.features(), [world, view](const ConditionEmbedding& c) {
    return mixture_for_condition(c, world, view);
  });
}

}  // namespace turnpoint
