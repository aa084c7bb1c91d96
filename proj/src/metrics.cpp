#include "turnpoint/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "turnpoint/errors.hpp"

namespace turnpoint {

namespace {

constexpr double kZeroNorm = 1e-9;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

Eigen::Vector2d displacement(const Trajectory& traj, Eigen::Index t) {
  return (traj.block<1, 2>(t + 1, 0) - traj.block<1, 2>(t, 0)).transpose();
}

double alignment(const Eigen::Vector2d& u, const EventParams& e) {
  if (e.speed == 0.0) return 0.5;
  return cosine_score(u, e.drift());
}

double midpoint_similarity(const Trajectory& traj, Eigen::Index offset, Eigen::Index width) {
  const Eigen::Index frames = traj.rows();
  const Eigen::Index m1 = frames / 4;
  const Eigen::Index m2 = (3 * frames) / 4;
  if (traj.cols() < offset + width) throw ShapeError("trajectory has fewer feature channels than expected");
  const Eigen::VectorXd a = traj.block(m1, offset, 1, width).transpose();
  const Eigen::VectorXd b = traj.block(std::min(m2, frames - 1), offset, 1, width).transpose();
  return cosine_score(a, b);
}

}  // namespace

double cosine_score(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na < kZeroNorm || nb < kZeroNorm) return 0.5;
  return clamp01(0.5 * (1.0 + std::clamp(a.dot(b) / (na * nb), -1.0, 1.0)));
}

TextAlignment ta_per_event(const Trajectory& traj, const EventParams& e1, const EventParams& e2) {
  const Eigen::Index frames = traj.rows();
  if (frames < 4) throw ConfigError("text alignment needs at least 4 frames");
  const Eigen::Index split = frames / 2;
  // Mean displacement over a segment telescopes to its endpoints.
  const Eigen::Vector2d u1 = (traj.block<1, 2>(split - 1, 0) - traj.block<1, 2>(0, 0)).transpose() /
                             static_cast<double>(split - 1);
  const Eigen::Vector2d u2 = (traj.block<1, 2>(frames - 1, 0) - traj.block<1, 2>(split, 0)).transpose() /
                             static_cast<double>(frames - 1 - split);
  TextAlignment ta{alignment(u1, e1), alignment(u2, e2), 0.0};
  ta.ta_mean = (ta.ta1 + ta.ta2) / 2.0;
  return ta;
}

double ic(const Trajectory& traj, Eigen::Index feature_dim) { return midpoint_similarity(traj, 2, feature_dim); }

double bc(const Trajectory& traj, Eigen::Index feature_dim) {
  return midpoint_similarity(traj, 2 + feature_dim, feature_dim);
}

TurningPoint turning_frame(const Trajectory& traj, const EventParams& e1, const EventParams& e2) {
  const Eigen::Index frames = traj.rows();
  const Eigen::Index steps = frames - 1;
  std::vector<bool> is_e2(static_cast<std::size_t>(std::max<Eigen::Index>(steps, 0)));
  int count2 = 0;
  for (Eigen::Index t = 0; t < steps; ++t) {
    const Eigen::Vector2d d = displacement(traj, t);
    const bool second = alignment(d, e2) > alignment(d, e1);
    is_e2[static_cast<std::size_t>(t)] = second;
    count2 += second ? 1 : 0;
  }
  TurningPoint tp;
  tp.occupancy2 = steps > 0 ? static_cast<double>(count2) / static_cast<double>(steps) : 0.0;

  const double gap = std::abs(std::remainder(e2.theta - e1.theta, 2.0 * M_PI));
  if (gap < 1e-9 || e1.speed == 0.0 || e2.speed == 0.0) return tp;

  // errors(s) = #e2 labels before s + #e1 labels from s on, updated in one pass.
  int errors = steps - count2;
  int best = errors;
  int best_split = 0;
  for (Eigen::Index s = 1; s <= steps; ++s) {
    errors += is_e2[static_cast<std::size_t>(s - 1)] ? 1 : -1;
    if (errors < best) {
      best = errors;
      best_split = static_cast<int>(s);
    }
  }
  tp.frame = best_split;
  return tp;
}

MetricsRecord compute_metrics(const Trajectory& traj, const EventParams& e1, const EventParams& e2) {
  const Eigen::Index d = e1.identity.size();
  const TextAlignment ta = ta_per_event(traj, e1, e2);
  const TurningPoint tp = turning_frame(traj, e1, e2);
  MetricsRecord m;
  m.ta1 = ta.ta1;
  m.ta2 = ta.ta2;
  m.ta_mean = ta.ta_mean;
  m.ic = ic(traj, d);
  m.bc = bc(traj, d);
  m.turning_frame = tp.frame;
  m.occupancy2 = tp.occupancy2;
  return m;
}

nlohmann::json to_json(const MetricsRecord& m) {
  return {{"ta1", m.ta1},
          {"ta2", m.ta2},
          {"ta_mean", m.ta_mean},
          {"ic", m.ic},
          {"bc", m.bc},
          {"turning_frame", m.turning_frame ? nlohmann::json(*m.turning_frame) : nlohmann::json(nullptr)},
          {"occupancy2", m.occupancy2}};
}

}  // namespace turnpoint
