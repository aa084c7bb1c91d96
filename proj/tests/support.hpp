#pragma once

#include <filesystem>
#include <string>

#include "turnpoint/neural.hpp"
#include "turnpoint/random.hpp"

namespace support {

// A model whose every parameter, output projection included, is random.
inline turnpoint::DenoiserModel random_model(const turnpoint::ModelShape& shape, std::uint64_t seed,
                                             double scale = 0.5) {
  turnpoint::Rng rng(seed);
  auto p = turnpoint::DenoiserParams::zeros(shape);
  p.for_each([&](const std::string&, std::span<double> s) {
    for (double& v : s) v = scale * rng.normal();
  });
  return turnpoint::DenoiserModel(shape, std::move(p));
}

inline turnpoint::ConditionEmbedding random_condition(turnpoint::Rng& rng, Eigen::Index slot_dim = 7) {
  switch (rng.below(3)) {
    case 0: return turnpoint::compose_single(rng.normal_vector(slot_dim), slot_dim);
    case 1: return turnpoint::compose_concat(rng.normal_vector(slot_dim), rng.normal_vector(slot_dim), slot_dim);
    default: return turnpoint::ConditionEmbedding::null(slot_dim);
  }
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::path(TURNPOINT_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace support
