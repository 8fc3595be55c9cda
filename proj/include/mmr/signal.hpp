#pragma once

#include <vector>

#include "mmr/types.hpp"

namespace mmr {

// Taps of the interpolation kernel used for every fractional delay in the project.
inline constexpr int kFractionalDelayTaps = 81;

// Adds gain * windowed-sinc(n - delay) into `out` (Hann-windowed, kFractionalDelayTaps wide).
// Taps falling outside [0, out.size()) are dropped.
void add_fractional_impulse(Eigen::Ref<Eigen::VectorXd> out, double delay, double gain);

// Full linear convolution, length a + b - 1.
Eigen::VectorXd convolve(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Reuses one transform of `x` against many kernels of length <= max_kernel_len.
class Convolver {
 public:
  Convolver(const Eigen::VectorXd& x, Eigen::Index max_kernel_len);
  // First `out_len` samples of x * kernel.
  Eigen::VectorXd apply(const Eigen::VectorXd& kernel, Eigen::Index out_len) const;

 private:
  Eigen::Index nfft_;
  std::vector<std::complex<double>> x_spec_;
};

int next_pow2(Eigen::Index n);

// Cascaded-biquad Butterworth; order must be even.
struct Biquad {
  double b0, b1, b2, a1, a2;
};
std::vector<Biquad> butterworth_lowpass(int order, double cutoff_hz, double sample_rate);

// Forward-backward filtering with odd-reflection edge padding; zero phase, squared magnitude.
Eigen::VectorXd filtfilt(const std::vector<Biquad>& sections, const Eigen::VectorXd& x);

// Integer-ratio resampling (from/to or to/from must be integral). Channels are columns.
Signald resample_integer(const Signald& x, int from_rate, int to_rate);

double mean_power(const Eigen::Ref<const Eigen::VectorXd>& x);
double power_db(const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace mmr
