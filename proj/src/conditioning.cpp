#include "turnpoint/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "turnpoint/errors.hpp"

namespace turnpoint {

namespace {

void check_slot(const Eigen::Ref<const Eigen::VectorXd>& e, Eigen::Index slot_dim) {
  if (e.size() != slot_dim) {
    throw ShapeError("event slot has dimension " + std::to_string(e.size()) + ", expected " +
                     std::to_string(slot_dim));
  }
}

void check_ratio(double x) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw RangeError("ratio x must lie in [0, 1], got " + std::to_string(x));
  }
}

}  // namespace

ConditionEmbedding ConditionEmbedding::null(Eigen::Index slot_dim) {
  ConditionEmbedding c;
  c.slot1_ = Eigen::VectorXd::Zero(slot_dim);
  c.slot2_ = Eigen::VectorXd::Zero(slot_dim);
  return c;
}

Eigen::VectorXd ConditionEmbedding::vector() const {
  Eigen::VectorXd v(dim());
  write_to(v.head(dim()));
  return v;
}

bool operator==(const ConditionEmbedding& a, const ConditionEmbedding& b) {
  return a.flag1_ == b.flag1_ && a.flag2_ == b.flag2_ && a.slot1_.size() == b.slot1_.size() &&
         a.slot1_ == b.slot1_ && a.slot2_ == b.slot2_;
}

ConditionEmbedding compose_single(const Eigen::Ref<const Eigen::VectorXd>& e, Eigen::Index slot_dim) {
  check_slot(e, slot_dim);
  ConditionEmbedding c = ConditionEmbedding::null(slot_dim);
  c.slot1_ = e;
  c.flag1_ = true;
  return c;
}

ConditionEmbedding compose_concat(const Eigen::Ref<const Eigen::VectorXd>& e1,
                                  const Eigen::Ref<const Eigen::VectorXd>& e2, Eigen::Index slot_dim) {
  check_slot(e1, slot_dim);
  check_slot(e2, slot_dim);
  ConditionEmbedding c;
  c.slot1_ = e1;
  c.slot2_ = e2;
  c.flag1_ = true;
  c.flag2_ = true;
  return c;
}

int fraction_floor(double x, int n) {
  check_ratio(x);
  const int k = static_cast<int>(std::floor(x * n + 1e-9));
  return std::clamp(k, 0, n);
}

StepSchedule StepSchedule::constant(int n_steps, ConditionEmbedding c) {
  if (n_steps < 1) throw ConfigError("schedule needs at least one step");
  StepSchedule s;
  s.n_steps_ = n_steps;
  s.segments_.push_back({0, n_steps, std::move(c)});
  return s;
}

StepSchedule StepSchedule::from_segments(int n_steps, std::vector<ScheduleSegment> segments) {
  if (n_steps < 1) throw ConfigError("schedule needs at least one step");
  int cursor = 0;
  for (const auto& seg : segments) {
    if (seg.begin != cursor || seg.end <= seg.begin) {
      throw ScheduleError("segments must partition [0, " + std::to_string(n_steps) +
                          ") without gaps, overlaps or empty ranges");
    }
    cursor = seg.end;
  }
  if (cursor != n_steps) {
    throw ScheduleError("segments cover " + std::to_string(cursor) + " of " + std::to_string(n_steps) +
                        " iterations");
  }
  StepSchedule s;
  s.n_steps_ = n_steps;
  s.segments_ = std::move(segments);
  return s;
}

const ConditionEmbedding& StepSchedule::at(int i) const {
  if (i < 0 || i >= n_steps_) {
    throw RangeError("iteration " + std::to_string(i) + " outside [0, " + std::to_string(n_steps_) + ")");
  }
  // Segments are few (at most two for every built-in constructor).
  for (const auto& seg : segments_) {
    if (i < seg.end) return seg.condition;
  }
  throw InternalError("schedule segments do not cover iteration " + std::to_string(i));
}

StepSchedule step_switch(double x, int n_steps, const ConditionEmbedding& first,
                         const ConditionEmbedding& second) {
  check_ratio(x);
  if (n_steps < 1) throw ConfigError("schedule needs at least one step");
  const int k = fraction_floor(x, n_steps);
  std::vector<ScheduleSegment> segs;
  if (k > 0) segs.push_back({0, k, first});
  if (k < n_steps) segs.push_back({k, n_steps, second});
  StepSchedule s = StepSchedule::from_segments(n_steps, std::move(segs));
  s.fusion_ratio_ = x;
  s.switch_index_ = k;
  return s;
}

const ConditionEmbedding& condition_at(const StepSchedule& schedule, int i) { return schedule.at(i); }

BlockAssignment block_split(double x, int n_blocks, const ConditionEmbedding& first,
                            const ConditionEmbedding& second) {
  check_ratio(x);
  if (n_blocks < 1) throw ConfigError("block assignment needs at least one block");
  BlockAssignment a;
  a.n_blocks = n_blocks;
  a.split_index = fraction_floor(x, n_blocks);
  a.split_ratio = x;
  a.per_block.reserve(n_blocks);
  for (int j = 0; j < n_blocks; ++j) a.per_block.push_back(j < a.split_index ? first : second);
  return a;
}

BlockAssignment uniform_assignment(int n_blocks, const ConditionEmbedding& c) {
  return block_split(1.0, n_blocks, c, c);
}

std::array<StepSchedule, 4> qualitative_settings(double x, const Eigen::Ref<const Eigen::VectorXd>& e1,
                                                 const Eigen::Ref<const Eigen::VectorXd>& e2, int n_steps) {
  check_ratio(x);
  const Eigen::Index dim = e1.size();
  const ConditionEmbedding p1 = compose_single(e1, dim);
  const ConditionEmbedding p2 = compose_single(e2, dim);
  const ConditionEmbedding both = compose_concat(e1, e2, dim);
  return {StepSchedule::constant(n_steps, both), step_switch(x, n_steps, p1, p2),
          step_switch(x, n_steps, both, p1), step_switch(x, n_steps, p1, both)};
}

nlohmann::json to_json(const ConditionEmbedding& c) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"slot1", vec(c.slot1())}, {"slot2", vec(c.slot2())}, {"flag1", c.flag1() ? 1 : 0},
          {"flag2", c.flag2() ? 1 : 0}};
}

nlohmann::json to_json(const StepSchedule& s) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& seg : s.segments()) {
    segs.push_back({{"begin", seg.begin}, {"end", seg.end}, {"condition", to_json(seg.condition)}});
  }
  nlohmann::json j = {{"n_steps", s.n_steps()}, {"segments", segs}};
  if (s.fusion_ratio()) j["fusion_ratio"] = *s.fusion_ratio();
  if (s.switch_index()) j["switch_index"] = *s.switch_index();
  return j;
}

nlohmann::json to_json(const BlockAssignment& a) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& c : a.per_block) blocks.push_back(to_json(c));
  return {{"n_blocks", a.n_blocks}, {"split_index", a.split_index}, {"split_ratio", a.split_ratio},
          {"per_block", blocks}};
}

}  // namespace turnpoint
