#include "mmr/signal.hpp"

#include <cmath>

#include <unsupported/Eigen/FFT>

#include "mmr/error.hpp"

namespace mmr {

void add_fractional_impulse(Eigen::Ref<Eigen::VectorXd> out, double delay, double gain) {
  constexpr int half = kFractionalDelayTaps / 2;
  constexpr double window_half_width = kFractionalDelayTaps / 2.0;
  const double base = std::floor(delay);
  const double frac = delay - base;
  const auto first = static_cast<Eigen::Index>(base) - half;
  const double sin_frac = std::sin(kPi * frac);
  // Window phase rotated incrementally: cos(pi * (m - frac) / window_half_width).
  const double step = kPi / window_half_width;
  std::complex<double> rot = std::polar(1.0, (-half - frac) * step);
  const std::complex<double> inc = std::polar(1.0, step);
  for (int m = -half; m <= half; ++m, rot *= inc) {
    const Eigen::Index n = first + m + half;
    if (n < 0 || n >= out.size()) continue;
    const double x = m - frac;
    double sinc;
    if (std::abs(x) < 1e-12) {
      sinc = 1.0;
    } else {
      const double sign = (m % 2 == 0) ? -1.0 : 1.0;
      sinc = sign * sin_frac / (kPi * x);
    }
    out(n) += gain * 0.5 * (1.0 + rot.real()) * sinc;
  }
}

int next_pow2(Eigen::Index n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

Eigen::VectorXd convolve(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() == 0 || b.size() == 0) return Eigen::VectorXd();
  const Eigen::Index len = a.size() + b.size() - 1;
  if (std::min(a.size(), b.size()) <= 32) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(len);
    const Eigen::VectorXd& small = a.size() <= b.size() ? a : b;
    const Eigen::VectorXd& large = a.size() <= b.size() ? b : a;
    for (Eigen::Index k = 0; k < small.size(); ++k)
      out.segment(k, large.size()) += small(k) * large;
    return out;
  }
  return Convolver(a, b.size()).apply(b, len);
}

Convolver::Convolver(const Eigen::VectorXd& x, Eigen::Index max_kernel_len)
    : nfft_(next_pow2(x.size() + max_kernel_len - 1)) {
  Eigen::FFT<double> fft;
  std::vector<double> buf(static_cast<std::size_t>(nfft_), 0.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) buf[static_cast<std::size_t>(i)] = x(i);
  fft.fwd(x_spec_, buf);
}

Eigen::VectorXd Convolver::apply(const Eigen::VectorXd& kernel, Eigen::Index out_len) const {
  Eigen::FFT<double> fft;
  std::vector<double> buf(static_cast<std::size_t>(nfft_), 0.0);
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(kernel.size(), nfft_); ++i)
    buf[static_cast<std::size_t>(i)] = kernel(i);
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, buf);
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= x_spec_[k];
  fft.inv(buf, spec);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(out_len);
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(out_len, nfft_); ++i)
    out(i) = buf[static_cast<std::size_t>(i)];
  return out;
}

std::vector<Biquad> butterworth_lowpass(int order, double cutoff_hz, double sample_rate) {
  if (order <= 0 || order % 2 != 0) throw ValidationError("butterworth: order must be even and > 0");
  if (cutoff_hz <= 0 || cutoff_hz >= sample_rate / 2)
    throw ValidationError("butterworth: cutoff must lie in (0, fs/2)");
  std::vector<Biquad> sections;
  const double w0 = 2.0 * kPi * cutoff_hz / sample_rate;
  const double cw = std::cos(w0);
  for (int k = 0; k < order / 2; ++k) {
    const double q = 1.0 / (2.0 * std::cos(kPi * (2 * k + 1) / (2.0 * order)));
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    sections.push_back({(1.0 - cw) / 2.0 / a0, (1.0 - cw) / a0, (1.0 - cw) / 2.0 / a0,
                        -2.0 * cw / a0, (1.0 - alpha) / a0});
  }
  return sections;
}

namespace {

void run_sections(const std::vector<Biquad>& sections, Eigen::VectorXd& x) {
  for (const Biquad& s : sections) {
    double z1 = 0.0, z2 = 0.0;  // transposed direct form II
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double in = x(i);
      const double y = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * y + z2;
      z2 = s.b2 * in - s.a2 * y;
      x(i) = y;
    }
  }
}

}  // namespace

Eigen::VectorXd filtfilt(const std::vector<Biquad>& sections, const Eigen::VectorXd& x) {
  if (x.size() == 0) return x;
  const Eigen::Index pad = std::min<Eigen::Index>(x.size() - 1, 6 * static_cast<Eigen::Index>(sections.size()) * 2 + 64);
  Eigen::VectorXd ext(x.size() + 2 * pad);
  for (Eigen::Index i = 0; i < pad; ++i) {
    ext(i) = 2.0 * x(0) - x(pad - i);
    ext(pad + x.size() + i) = 2.0 * x(x.size() - 1) - x(x.size() - 2 - i);
  }
  ext.segment(pad, x.size()) = x;
  run_sections(sections, ext);
  ext.reverseInPlace();
  run_sections(sections, ext);
  ext.reverseInPlace();
  return ext.segment(pad, x.size());
}

Signald resample_integer(const Signald& x, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw ValidationError("resample: rates must be positive");
  if (from_rate == to_rate) return x;
  const bool up = to_rate > from_rate;
  const int factor = up ? to_rate / from_rate : from_rate / to_rate;
  if ((up ? to_rate % from_rate : from_rate % to_rate) != 0)
    throw ValidationError("resample: only integer rate ratios are supported (" +
                          std::to_string(from_rate) + " -> " + std::to_string(to_rate) + ")");

  // Hann-windowed sinc lowpass at the lower Nyquist.
  const int half = 16 * factor;
  Eigen::VectorXd h(2 * half + 1);
  const double cutoff = 0.5 / factor;
  for (int n = -half; n <= half; ++n) {
    const double sinc = n == 0 ? 2.0 * cutoff : std::sin(2.0 * kPi * cutoff * n) / (kPi * n);
    h(n + half) = sinc * 0.5 * (1.0 + std::cos(kPi * n / (half + 1)));
  }

  const Eigen::Index out_len = up ? x.rows() * factor : (x.rows() + factor - 1) / factor;
  Signald out(out_len, x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    Eigen::VectorXd src;
    if (up) {
      src = Eigen::VectorXd::Zero(x.rows() * factor);
      for (Eigen::Index i = 0; i < x.rows(); ++i) src(i * factor) = x(i, c) * factor;
    } else {
      src = x.col(c);
    }
    const Eigen::VectorXd y = convolve(src, h);
    for (Eigen::Index i = 0; i < out_len; ++i) out(i, c) = y(half + (up ? i : i * factor));
  }
  return out;
}

double mean_power(const Eigen::Ref<const Eigen::VectorXd>& x) {
  return x.size() == 0 ? 0.0 : x.squaredNorm() / static_cast<double>(x.size());
}

double power_db(const Eigen::Ref<const Eigen::VectorXd>& x) {
  return 10.0 * std::log10(std::max(mean_power(x), 1e-300));
}

}  // namespace mmr
