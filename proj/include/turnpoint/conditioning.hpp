#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace turnpoint {

/// Default event-slot width: [cos, sin, speed, identity(2), background(2)].
inline constexpr Eigen::Index kDefaultSlotDim = 7;

/// Two positional event slots plus presence flags.
///
/// The conditioned vector is [slot1; slot2; flag1; flag2] (dimension 2E+2).
/// slot1 is the temporally first event. A cleared flag always comes with an
/// all-zero slot; presence is carried by the flag, never by the slot norm.
class ConditionEmbedding {
 public:
  ConditionEmbedding() = default;

  /// Unconditional embedding: both slots zero, both flags cleared.
  static ConditionEmbedding null(Eigen::Index slot_dim = kDefaultSlotDim);

  Eigen::Index slot_dim() const { return slot1_.size(); }
  Eigen::Index dim() const { return 2 * slot_dim() + 2; }

  const Eigen::VectorXd& slot1() const { return slot1_; }
  const Eigen::VectorXd& slot2() const { return slot2_; }
  bool flag1() const { return flag1_; }
  bool flag2() const { return flag2_; }
  bool is_null() const { return !flag1_ && !flag2_; }

  Eigen::VectorXd vector() const;

  /// Writes the conditioned vector into a preallocated column.
  template <typename Derived>
  void write_to(Eigen::MatrixBase<Derived>&& out) const {
    const Eigen::Index e = slot_dim();
    out.segment(0, e) = slot1_;
    out.segment(e, e) = slot2_;
    out(2 * e) = flag1_ ? 1.0 : 0.0;
    out(2 * e + 1) = flag2_ ? 1.0 : 0.0;
  }

  friend bool operator==(const ConditionEmbedding& a, const ConditionEmbedding& b);

 private:
  friend ConditionEmbedding compose_single(const Eigen::Ref<const Eigen::VectorXd>&, Eigen::Index);
  friend ConditionEmbedding compose_concat(const Eigen::Ref<const Eigen::VectorXd>&,
                                           const Eigen::Ref<const Eigen::VectorXd>&, Eigen::Index);

  Eigen::VectorXd slot1_;
  Eigen::VectorXd slot2_;
  bool flag1_ = false;
  bool flag2_ = false;
};

ConditionEmbedding compose_single(const Eigen::Ref<const Eigen::VectorXd>& e,
                                  Eigen::Index slot_dim = kDefaultSlotDim);

/// The "P1 then P2" concatenation baseline; order is positional.
ConditionEmbedding compose_concat(const Eigen::Ref<const Eigen::VectorXd>& e1,
                                  const Eigen::Ref<const Eigen::VectorXd>& e2,
                                  Eigen::Index slot_dim = kDefaultSlotDim);

/// floor(x * n) for x in [0, 1], robust to decimal grid values such as 0.7
/// whose binary representation sits just below the intended product.
int fraction_floor(double x, int n);

struct ScheduleSegment {
  int begin = 0;  // inclusive iteration index
  int end = 0;    // exclusive
  ConditionEmbedding condition;
};

/// Per-iteration conditioning over N denoising iterations.
///
/// Iteration i runs from the noisiest step (i = 0) to the cleanest
/// (i = N - 1); normalized time is i / N. Segments partition [0, N).
class StepSchedule {
 public:
  static StepSchedule constant(int n_steps, ConditionEmbedding c);
  static StepSchedule from_segments(int n_steps, std::vector<ScheduleSegment> segments);

  int n_steps() const { return n_steps_; }
  const std::vector<ScheduleSegment>& segments() const { return segments_; }
  std::optional<double> fusion_ratio() const { return fusion_ratio_; }
  std::optional<int> switch_index() const { return switch_index_; }

  const ConditionEmbedding& at(int i) const;

 private:
  friend StepSchedule step_switch(double, int, const ConditionEmbedding&, const ConditionEmbedding&);

  int n_steps_ = 0;
  std::vector<ScheduleSegment> segments_;
  std::optional<double> fusion_ratio_;
  std::optional<int> switch_index_;
};

/// Iterations i < floor(xN) get `first`, the rest get `second`.
StepSchedule step_switch(double x, int n_steps, const ConditionEmbedding& first,
                         const ConditionEmbedding& second);

const ConditionEmbedding& condition_at(const StepSchedule& schedule, int i);

/// Per-block conditioning for the block-stacked denoiser.
///
/// Blocks are 0-indexed shallow to deep; "blocks 1..b" in 1-based terms are
/// j < b here.
struct BlockAssignment {
  int n_blocks = 0;
  int split_index = 0;
  double split_ratio = 1.0;
  std::vector<ConditionEmbedding> per_block;
};

BlockAssignment block_split(double x, int n_blocks, const ConditionEmbedding& first,
                            const ConditionEmbedding& second);

BlockAssignment uniform_assignment(int n_blocks, const ConditionEmbedding& c);

/// The four fixed-x comparison settings, in order:
///   1. concat(e1, e2) throughout
///   2. e1 -> e2
///   3. concat(e1, e2) -> e1
///   4. e1 -> concat(e1, e2)
std::array<StepSchedule, 4> qualitative_settings(double x, const Eigen::Ref<const Eigen::VectorXd>& e1,
                                                 const Eigen::Ref<const Eigen::VectorXd>& e2, int n_steps);

nlohmann::json to_json(const ConditionEmbedding& c);
nlohmann::json to_json(const StepSchedule& s);
nlohmann::json to_json(const BlockAssignment& a);

}  // namespace turnpoint
