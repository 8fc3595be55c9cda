#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "mmr/error.hpp"
#include "mmr/types.hpp"

namespace mmr {

enum class WindowKind { sqrt_hann };

struct StftConfig {
  int sample_rate = 16000;
  int frame_len = 512;  // 32 ms
  int hop = 256;        // 16 ms
  int fft_len = 512;
  WindowKind window = WindowKind::sqrt_hann;

  int bins() const { return fft_len / 2 + 1; }
  int padding() const { return frame_len - hop; }

  // Frames produced for a signal of `samples` samples.
  int frames_for(std::ptrdiff_t samples) const {
    const std::ptrdiff_t span = samples + 2 * padding() - frame_len;
    if (span <= 0) return 1;
    return static_cast<int>((span + hop - 1) / hop) + 1;
  }

  void validate() const;
};

// Periodic analysis/synthesis window.
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> make_window(const StftConfig& cfg) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> w(cfg.frame_len);
  for (int n = 0; n < cfg.frame_len; ++n) {
    const double hann = 0.5 * (1.0 - std::cos(2.0 * kPi * n / cfg.frame_len));
    w(n) = static_cast<Scalar>(std::sqrt(hann));
  }
  return w;
}

// Sum of analysis*synthesis windows shifted by hop, sampled over one hop.
// Constant across the hop when the COLA condition holds.
inline Eigen::VectorXd overlap_profile(const StftConfig& cfg) {
  const Eigen::VectorXd w = make_window<double>(cfg);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(cfg.hop);
  for (int n = 0; n < cfg.frame_len; ++n) acc(n % cfg.hop) += w(n) * w(n);
  return acc;
}

inline void StftConfig::validate() const {
  if (sample_rate <= 0) throw ValidationError("stft: sample_rate must be positive");
  if (frame_len <= 0 || hop <= 0 || fft_len <= 0)
    throw ValidationError("stft: frame_len, hop and fft_len must be positive");
  if (frame_len % hop != 0) throw ValidationError("stft: hop must divide frame_len");
  if (fft_len < frame_len) throw ValidationError("stft: fft_len must be >= frame_len");
  const Eigen::VectorXd prof = overlap_profile(*this);
  if (prof.maxCoeff() - prof.minCoeff() > 1e-10 * prof.maxCoeff() || prof.minCoeff() <= 0.0)
    throw ValidationError("stft: window does not satisfy constant overlap-add at this hop");
}

// One-sided multichannel spectrogram, channel-major; each channel is bins x frames.
template <typename Scalar>
struct Spectrogram {
  std::vector<CMatrix<Scalar>> channels;
  std::ptrdiff_t samples = 0;  // original signal length, used to trim on synthesis

  Spectrogram() = default;
  Spectrogram(int n_channels, int n_bins, int n_frames)
      : channels(n_channels, CMatrix<Scalar>::Zero(n_bins, n_frames)) {}

  int n_channels() const { return static_cast<int>(channels.size()); }
  int bins() const { return channels.empty() ? 0 : static_cast<int>(channels.front().rows()); }
  int frames() const { return channels.empty() ? 0 : static_cast<int>(channels.front().cols()); }

  Complex<Scalar>& at(int ch, int frame, int bin) { return channels[ch](bin, frame); }
  const Complex<Scalar>& at(int ch, int frame, int bin) const { return channels[ch](bin, frame); }

  // Channel vector x(f, t).
  CVector<Scalar> column(int frame, int bin) const {
    CVector<Scalar> x(n_channels());
    for (int c = 0; c < n_channels(); ++c) x(c) = channels[c](bin, frame);
    return x;
  }
};

using Spectrogramd = Spectrogram<double>;

template <typename Derived>
Spectrogram<typename Derived::Scalar> stft(const Eigen::MatrixBase<Derived>& signal,
                                           const StftConfig& cfg) {
  using Scalar = typename Derived::Scalar;
  cfg.validate();
  if (signal.rows() == 0 || signal.cols() == 0) throw ValidationError("stft: empty signal");
  if (!signal.allFinite()) throw ValidationError("stft: non-finite samples");

  const auto window = make_window<Scalar>(cfg);
  const int n_frames = cfg.frames_for(signal.rows());
  const int pad = cfg.padding();
  Spectrogram<Scalar> out(static_cast<int>(signal.cols()), cfg.bins(), n_frames);
  out.samples = signal.rows();

  Eigen::FFT<Scalar> fft;
  fft.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
  std::vector<Scalar> frame(cfg.fft_len);
  std::vector<Complex<Scalar>> bins;

  for (int c = 0; c < signal.cols(); ++c) {
    for (int t = 0; t < n_frames; ++t) {
      std::fill(frame.begin(), frame.end(), Scalar(0));
      const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t) * cfg.hop - pad;
      for (int n = 0; n < cfg.frame_len; ++n) {
        const std::ptrdiff_t idx = start + n;
        if (idx >= 0 && idx < signal.rows()) frame[n] = signal(idx, c) * window(n);
      }
      fft.fwd(bins, frame);
      for (int k = 0; k < cfg.bins(); ++k) out.channels[c](k, t) = bins[k];
    }
  }
  return out;
}

// Weighted overlap-add synthesis. Output length defaults to spec.samples when set.
template <typename Scalar>
Signal<Scalar> istft(const Spectrogram<Scalar>& spec, const StftConfig& cfg,
                     std::ptrdiff_t length = -1) {
  cfg.validate();
  if (spec.n_channels() == 0) throw ValidationError("istft: spectrogram has no channels");
  if (spec.bins() != cfg.bins())
    throw ValidationError("istft: spectrogram has " + std::to_string(spec.bins()) +
                          " bins, config expects " + std::to_string(cfg.bins()));
  const int pad = cfg.padding();
  const int n_frames = spec.frames();
  if (length < 0)
    length = spec.samples > 0 ? spec.samples
                              : static_cast<std::ptrdiff_t>(n_frames - 1) * cfg.hop +
                                    cfg.frame_len - 2 * pad;
  if (length < 0) length = 0;

  const auto window = make_window<Scalar>(cfg);
  const Scalar norm = static_cast<Scalar>(overlap_profile(cfg)(0));
  Signal<Scalar> out = Signal<Scalar>::Zero(length, spec.n_channels());

  Eigen::FFT<Scalar> fft;
  fft.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
  std::vector<Complex<Scalar>> bins(cfg.bins());
  std::vector<Scalar> frame;

  for (int c = 0; c < spec.n_channels(); ++c) {
    for (int t = 0; t < n_frames; ++t) {
      for (int k = 0; k < cfg.bins(); ++k) bins[k] = spec.channels[c](k, t);
      fft.inv(frame, bins, cfg.fft_len);
      const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t) * cfg.hop - pad;
      for (int n = 0; n < cfg.frame_len; ++n) {
        const std::ptrdiff_t idx = start + n;
        if (idx >= 0 && idx < length) out(idx, c) += frame[n] * window(n) / norm;
      }
    }
  }
  return out;
}

}  // namespace mmr
