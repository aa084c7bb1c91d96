#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "turnpoint/analytic.hpp"
#include "turnpoint/conditioning.hpp"
#include "turnpoint/trajectory.hpp"

namespace turnpoint {

enum class View { first, third };

enum class Category { General, MotionOrder, HumanIdentity, ComplexPlot, EgoExo };

inline constexpr Category kAllCategories[] = {Category::General, Category::MotionOrder, Category::HumanIdentity,
                                              Category::ComplexPlot, Category::EgoExo};

std::string_view to_string(View v);
std::string_view to_string(Category c);
std::optional<View> parse_view(std::string_view s);
std::optional<Category> parse_category(std::string_view s);

/// One toy event: a drift (direction, speed) plus identity and background
/// feature vectors of equal dimension d.
struct EventParams {
  double theta = 0.0;  // radians, [0, 2*pi)
  double speed = 1.0;  // units per frame
  Eigen::VectorXd identity;
  Eigen::VectorXd background;

  Eigen::Vector2d drift() const;

  friend bool operator==(const EventParams& a, const EventParams& b) {
    return a.theta == b.theta && a.speed == b.speed && a.identity.size() == b.identity.size() &&
           a.background.size() == b.background.size() && a.identity == b.identity && a.background == b.background;
  }
};

/// Dual-event prompt record. `events` holds exactly two entries in a valid
/// record; the vector form lets the validator report malformed input.
struct PromptRecord {
  std::string id;
  Category category = Category::General;
  View view = View::third;
  std::optional<std::string> pair_id;
  std::vector<EventParams> events;
  std::optional<std::string> text;

  const EventParams& event1() const { return events.at(0); }
  const EventParams& event2() const { return events.at(1); }

  friend bool operator==(const PromptRecord&, const PromptRecord&) = default;
};

/// Shape and model-noise settings of the toy domain.
struct WorldConfig {
  int frames = 16;
  int feature_dim = 2;       // d: identity/background width
  double sigma_model = 0.5;  // per-entry std of the conditional data Gaussians
  double w_mix = 0.5;        // weight of the sequential component for concat conditions

  Eigen::Index features() const { return 2 + 2 * feature_dim; }
  Eigen::Index slot_dim() const { return 3 + 2 * feature_dim; }
  Eigen::Index latent_dim() const { return frames * features(); }
  int split_frame() const { return frames / 2; }

  void validate() const;
};

/// Noise-free dual-event trajectory.
///
/// Positions start at the origin and integrate the drift of e1 for frames
/// t < floor(T/2), e2 afterwards; identity and background channels are
/// constant per segment. The first-person view replaces positions with
/// per-frame displacements rotated by minus the active heading; the last
/// frame repeats the previous displacement.
Trajectory mean_trajectory(const EventParams& e1, const EventParams& e2, int frames, View view = View::third);

/// Like mean_trajectory, but the drift is the average of both events'
/// drifts throughout. The second component of a concat condition.
Trajectory blended_trajectory(const EventParams& e1, const EventParams& e2, int frames, View view = View::third);

/// mean_trajectory plus i.i.d. N(0, sigma_noise^2) on every entry.
Trajectory sample_trajectory(const EventParams& e1, const EventParams& e2, int frames, double sigma_noise,
                             std::uint64_t seed, View view = View::third);

/// Inverse of the first-person transform given the two events' headings.
Trajectory to_third_view(const Trajectory& first_view, const EventParams& e1, const EventParams& e2);

/// [cos(theta), sin(theta), speed, identity..., background...]
Eigen::VectorXd embed_event(const EventParams& e);
EventParams decode_event(const Eigen::Ref<const Eigen::VectorXd>& slot, int feature_dim);

enum class Which { event1, event2, concat };

ConditionEmbedding condition_of(const PromptRecord& rec, Which which);

/// Data distribution of a prompt condition: N(flatten(mean), sigma^2 I) for a
/// single event and the two-component sequential/blended mixture for concat.
GaussianMixture gaussian_of(const PromptRecord& rec, Which which, const WorldConfig& world);

/// The same mapping read back from a condition embedding. The null condition
/// maps to the standard normal.
GaussianMixture mixture_for_condition(const ConditionEmbedding& cond, const WorldConfig& world, View view);

AnalyticDenoiser make_analytic_denoiser(const WorldConfig& world, View view);

}  // namespace turnpoint
