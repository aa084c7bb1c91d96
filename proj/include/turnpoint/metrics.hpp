#pragma once

#include <optional>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "turnpoint/trajectory.hpp"
#include "turnpoint/worldgen.hpp"

namespace turnpoint {

/// Toy metric bundle for one generated trajectory. Every score is in [0, 1].
struct MetricsRecord {
  double ta1 = 0.5;
  double ta2 = 0.5;
  double ta_mean = 0.5;
  double ic = 0.5;
  double bc = 0.5;
  std::optional<int> turning_frame;
  double occupancy2 = 0.0;
};

/// (1 + cos angle) / 2; 0.5 when either vector is (near) zero.
double cosine_score(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

struct TextAlignment {
  double ta1;
  double ta2;
  double ta_mean;
};

/// Per-event drift alignment over the halves [0, T/2) and [T/2, T).
TextAlignment ta_per_event(const Trajectory& traj, const EventParams& e1, const EventParams& e2);

/// Identity similarity between frames T/4 and 3T/4.
double ic(const Trajectory& traj, Eigen::Index feature_dim);

/// Background similarity between frames T/4 and 3T/4.
double bc(const Trajectory& traj, Eigen::Index feature_dim);

struct TurningPoint {
  std::optional<int> frame;
  double occupancy2 = 0.0;
};

/// Labels each frame-to-frame displacement with the better-aligned event
/// (ties go to e1) and returns the split s in [0, T-1] that minimizes the
/// number of mislabeled displacements when d_0..d_{s-1} are taken as e1 and
/// the rest as e2; the smallest such s wins ties. No frame is reported when
/// the two directions coincide.
TurningPoint turning_frame(const Trajectory& traj, const EventParams& e1, const EventParams& e2);

nlohmann::json to_json(const MetricsRecord& m);

/// All metrics for a third-view trajectory.
MetricsRecord compute_metrics(const Trajectory& traj, const EventParams& e1, const EventParams& e2);

}  // namespace turnpoint
