#pragma once

#include <cstdint>
#include <random>

#include <Eigen/SVD>

#include "mmr/model_matching.hpp"
#include "mmr/types.hpp"

namespace mmr::testing {

inline Eigen::MatrixXd random_signal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd x(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) x(r, c) = n(rng);
  return x;
}

inline CMatrixd random_complex(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  CMatrixd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = {n(rng), n(rng)};
  return m;
}

inline double rel_error(const CMatrixd& a, const CMatrixd& b) { return (a - b).norm() / b.norm(); }

// H = M V diag(s / (s^2 + beta^2)) U^H from the thin SVD G = U S V^H.
inline CMatrixd tikhonov_svd(const CMatrixd& m, const CMatrixd& g, double beta) {
  Eigen::JacobiSVD<CMatrixd> svd(g, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  Eigen::VectorXd f(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) f(i) = s(i) / (s(i) * s(i) + beta * beta);
  return m * svd.matrixV() * f.asDiagonal() * svd.matrixU().adjoint();
}

inline DesiredModel<double> random_model(int bins, int dirs, std::mt19937_64& rng) {
  DesiredModel<double> m;
  for (int k = 0; k < bins; ++k) m.m.push_back(random_complex(2, dirs, rng));
  return m;
}

inline AcousticSystem<double> random_system(int bins, int mics, int dirs, std::mt19937_64& rng) {
  AcousticSystem<double> g;
  for (int k = 0; k < bins; ++k) g.g.push_back(random_complex(mics, dirs, rng));
  return g;
}

}  // namespace mmr::testing
