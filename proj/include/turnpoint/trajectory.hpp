#pragma once

#include <Eigen/Core>

namespace turnpoint {

/// A T x F frame matrix (the toy "video"). Row-major so that the flattened
/// diffusion latent is frame-major: index = t * F + f.
template <typename Scalar>
using BasicTrajectory = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Trajectory = BasicTrajectory<double>;

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> flatten(const BasicTrajectory<Scalar>& traj) {
  return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(traj.data(), traj.size());
}

template <typename Derived>
BasicTrajectory<typename Derived::Scalar> unflatten(const Eigen::MatrixBase<Derived>& latent, Eigen::Index frames,
                                                    Eigen::Index features) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> tmp = latent;
  return Eigen::Map<const BasicTrajectory<Scalar>>(tmp.data(), frames, features);
}

}  // namespace turnpoint
