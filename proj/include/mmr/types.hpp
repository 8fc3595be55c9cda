#pragma once

#include <complex>
#include <numbers>

#include <Eigen/Dense>

namespace mmr {

template <typename Scalar>
using Complex = std::complex<Scalar>;

// Multichannel time signal: one column per channel, one row per sample.
template <typename Scalar>
using Signal = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using CMatrix = Eigen::Matrix<Complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using CVector = Eigen::Matrix<Complex<Scalar>, Eigen::Dynamic, 1>;

using Signald = Signal<double>;
using CMatrixd = CMatrix<double>;
using CVectord = CVector<double>;
using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kSpeedOfSound = 343.0;

}  // namespace mmr
