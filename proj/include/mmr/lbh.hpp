#pragma once

#include <span>
#include <vector>

#include "mmr/hrir.hpp"
#include "mmr/room.hpp"
#include "mmr/stft.hpp"

namespace mmr {

// Free-field far-field steering vectors d_i(f, theta) = exp(+j 2 pi f tau_i(theta)),
// tau_i = p_i . u(theta) / c, for every grid azimuth and one-sided bin.
struct SteeringGrid {
  std::vector<double> azimuths;      // degrees, ascending
  std::vector<CMatrixd> vectors;     // per direction: bins x mics
  int sample_rate = 0;
  int fft_len = 0;

  static SteeringGrid make(const ArrayGeometry& geom, const StftConfig& cfg, int n_directions = 72,
                           double speed_of_sound = kSpeedOfSound);
  int size() const { return static_cast<int>(azimuths.size()); }
  int mics() const { return vectors.empty() ? 0 : static_cast<int>(vectors.front().cols()); }
  CVectord steering(int direction, int bin) const {
    return vectors[static_cast<std::size_t>(direction)].row(bin).transpose();
  }
};

struct SrpOptions {
  int block_frames = 16;
  int block_hop = 8;
  double f_low = 100.0;
  double f_high = 7500.0;
  double epsilon = 1e-12;  // cross-spectra below this magnitude are skipped
};

struct LocalizationResult {
  std::vector<int> index;         // grid index per block
  std::vector<double> azimuths;   // degrees per block
  Eigen::MatrixXd power;          // blocks x grid
  int block_frames = 0;
  int block_hop = 0;
};

// First maximum wins, so ties resolve to the smallest grid angle.
int grid_argmax(std::span<const double> power);

// Block-averaged cross-spectra, PHAT-weighted, steered over the grid.
LocalizationResult srp_phat(const Spectrogramd& mic_spec, const SteeringGrid& grid, const SrpOptions& options = {});

enum class CovarianceMode { block, recursive };

struct MpdrConfig {
  CovarianceMode covariance = CovarianceMode::block;
  double alpha = 0.9;              // recursive smoothing factor, 0 < alpha < 1
  double loading_factor = 1e-3;    // diagonal loading = factor * trace(R) / N_m
  void validate() const;
};

// w = R^-1 d / (d^H R^-1 d) with `loading` added to the diagonal of R first.
CVectord mpdr_weights(const CMatrixd& cov, const CVectord& steering, double loading = 0.0);

struct LbhResult {
  Signald binaural;                       // samples x 2
  std::vector<double> raw_azimuths;       // per block, straight from SRP-PHAT
  std::vector<double> azimuths;           // per block, after 3-block circular median
  double max_constraint_error = 0.0;      // max |w^H d - 1| over blocks and bins
};

// Localize per block, steer MPDR to the smoothed estimate, apply the HRTF pair of that angle,
// crossfade blocks and resynthesize.
LbhResult lbh_render(const Signald& mic_signal, const SteeringGrid& grid, const MpdrConfig& mpdr,
                     const HrirSet& hrirs, const StftConfig& cfg, const SrpOptions& srp = {});

// Circular median of a short list of angles (the member minimizing total angular distance).
double circular_median(std::span<const double> angles_deg);

}  // namespace mmr
