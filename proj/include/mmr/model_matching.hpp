#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/FFT>

#include "mmr/error.hpp"
#include "mmr/hrir.hpp"
#include "mmr/room.hpp"
#include "mmr/stft.hpp"
#include "mmr/types.hpp"

namespace mmr {

// Desired binaural response M(f): 2 x N_s per bin, rows (left, right), columns ascending azimuth.
template <typename Scalar>
struct DesiredModel {
  std::vector<CMatrix<Scalar>> m;
  double truncated_energy_fraction = 0.0;

  int bins() const { return static_cast<int>(m.size()); }
  int directions() const { return m.empty() ? 0 : static_cast<int>(m.front().cols()); }
};

// Acoustic system G(f): N_m x N_s per bin.
template <typename Scalar>
struct AcousticSystem {
  std::vector<CMatrix<Scalar>> g;
  double truncated_energy_fraction = 0.0;

  int bins() const { return static_cast<int>(g.size()); }
  int mics() const { return g.empty() ? 0 : static_cast<int>(g.front().rows()); }
  int directions() const { return g.empty() ? 0 : static_cast<int>(g.front().cols()); }
};

enum class BetaMode { absolute, relative_to_spectral_norm };

struct MifConfig {
  double beta = 1e-4;
  BetaMode beta_mode = BetaMode::absolute;
};

// Post-filters H(f) (static) or H(f, t) (time-varying), each 2 x N_m.
template <typename Scalar>
struct PostFilterBank {
  int n_bins = 0;
  int n_frames = 0;  // 0: static
  int n_mics = 0;
  std::vector<CMatrix<Scalar>> h;  // index t * n_bins + f; static banks hold n_bins entries

  PostFilterBank() = default;
  PostFilterBank(int bins, int frames, int mics)
      : n_bins(bins), n_frames(frames), n_mics(mics),
        h(static_cast<std::size_t>(bins) * std::max(frames, 1), CMatrix<Scalar>::Zero(2, mics)) {}

  bool is_static() const { return n_frames == 0; }
  CMatrix<Scalar>& at(int frame, int bin) { return h[index(frame, bin)]; }
  const CMatrix<Scalar>& at(int frame, int bin) const { return h[index(frame, bin)]; }

 private:
  std::size_t index(int frame, int bin) const {
    return static_cast<std::size_t>(is_static() ? 0 : frame) * n_bins + bin;
  }
};

template <typename Scalar>
struct MatchResidual {
  std::vector<CMatrix<Scalar>> e;  // M - H G per bin
  Eigen::VectorXd bin_norm;        // Frobenius norm per bin
  double total_norm = 0.0;         // Frobenius norm over all bins
};

namespace detail {

// One-sided transforms of the columns of `taps`, truncated or zero-padded to fft_len.
// Returns bins x columns; accumulates kept/discarded energy.
inline CMatrixd one_sided_columns(const Eigen::MatrixXd& taps, int fft_len, double& kept, double& dropped) {
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  const int bins = fft_len / 2 + 1;
  CMatrixd out(bins, taps.cols());
  std::vector<double> buf(static_cast<std::size_t>(fft_len));
  std::vector<std::complex<double>> spec;
  for (Eigen::Index c = 0; c < taps.cols(); ++c) {
    std::fill(buf.begin(), buf.end(), 0.0);
    const Eigen::Index keep = std::min<Eigen::Index>(fft_len, taps.rows());
    for (Eigen::Index n = 0; n < keep; ++n) buf[static_cast<std::size_t>(n)] = taps(n, c);
    kept += taps.col(c).head(keep).squaredNorm();
    dropped += taps.col(c).tail(taps.rows() - keep).squaredNorm();
    fft.fwd(spec, buf);
    for (int k = 0; k < bins; ++k) out(k, c) = spec[static_cast<std::size_t>(k)];
  }
  return out;
}

}  // namespace detail

// G(f) from one multichannel RIR per direction (taps x mics each).
inline AcousticSystem<double> build_acoustic_system(const std::vector<Rir>& rirs, const StftConfig& cfg) {
  cfg.validate();
  if (rirs.empty()) throw ValidationError("build_acoustic_system: no RIRs");
  const Eigen::Index mics = rirs.front().taps.cols();
  for (std::size_t j = 0; j < rirs.size(); ++j) {
    if (rirs[j].sample_rate != cfg.sample_rate)
      throw ValidationError("build_acoustic_system: RIR for direction " + std::to_string(j) + " is at " +
                            std::to_string(rirs[j].sample_rate) + " Hz, config expects " +
                            std::to_string(cfg.sample_rate) + " Hz");
    if (rirs[j].taps.cols() != mics || rirs[j].taps.rows() == 0)
      throw ValidationError("build_acoustic_system: RIR for direction " + std::to_string(j) +
                            " has inconsistent microphone count");
  }
  AcousticSystem<double> sys;
  sys.g.assign(static_cast<std::size_t>(cfg.bins()), CMatrixd::Zero(mics, static_cast<Eigen::Index>(rirs.size())));
  double kept = 0.0, dropped = 0.0;
  for (std::size_t j = 0; j < rirs.size(); ++j) {
    const CMatrixd spec = detail::one_sided_columns(rirs[j].taps, cfg.fft_len, kept, dropped);
    for (int k = 0; k < cfg.bins(); ++k)
      sys.g[static_cast<std::size_t>(k)].col(static_cast<Eigen::Index>(j)) = spec.row(k).transpose();
  }
  sys.truncated_energy_fraction = kept + dropped > 0.0 ? dropped / (kept + dropped) : 0.0;
  return sys;
}

// Free-field propagation from a source at `distance` to the head center, folded into M so that
// the model matches what microphone RIRs carry (delay d/c and 1/(4 pi d) spreading).
struct Propagation {
  double distance = 1.5;
  double speed_of_sound = kSpeedOfSound;
};

inline DesiredModel<double> build_desired_model(const HrirSet& hrirs, const StftConfig& cfg,
                                                std::optional<Propagation> propagation = std::nullopt) {
  cfg.validate();
  hrirs.validate();
  if (hrirs.sample_rate != cfg.sample_rate)
    throw ValidationError("build_desired_model: HRIRs are at " + std::to_string(hrirs.sample_rate) +
                          " Hz, config expects " + std::to_string(cfg.sample_rate) + " Hz");
  double kept = 0.0, dropped = 0.0;
  const CMatrixd left = detail::one_sided_columns(hrirs.left, cfg.fft_len, kept, dropped);
  const CMatrixd right = detail::one_sided_columns(hrirs.right, cfg.fft_len, kept, dropped);
  DesiredModel<double> model;
  model.truncated_energy_fraction = kept + dropped > 0.0 ? dropped / (kept + dropped) : 0.0;
  model.m.assign(static_cast<std::size_t>(cfg.bins()), CMatrixd::Zero(2, hrirs.size()));
  for (int k = 0; k < cfg.bins(); ++k) {
    CMatrixd& mk = model.m[static_cast<std::size_t>(k)];
    mk.row(0) = left.row(k);
    mk.row(1) = right.row(k);
    if (propagation) {
      const double delay = propagation->distance / propagation->speed_of_sound * cfg.sample_rate;
      mk *= std::polar(1.0 / (4.0 * kPi * propagation->distance), -2.0 * kPi * k * delay / cfg.fft_len);
    }
  }
  return model;
}

// Tikhonov-regularized model matching per bin: H = M G^H (G G^H + beta^2 I)^-1, solved through a
// Cholesky factorization of the N_m x N_m Hermitian matrix.
template <typename Scalar>
PostFilterBank<Scalar> solve_mif(const DesiredModel<Scalar>& model, const AcousticSystem<Scalar>& system,
                                 const MifConfig& cfg = {}) {
  using Mat = CMatrix<Scalar>;
  if (!(cfg.beta >= 0.0) || !std::isfinite(cfg.beta)) throw ValidationError("solve_mif: beta must be >= 0");
  if (model.bins() != system.bins())
    throw ValidationError("solve_mif: model has " + std::to_string(model.bins()) + " bins, system has " +
                          std::to_string(system.bins()));
  if (model.directions() != system.directions())
    throw ValidationError("solve_mif: model has " + std::to_string(model.directions()) +
                          " directions, system has " + std::to_string(system.directions()));
  const int mics = system.mics();
  PostFilterBank<Scalar> bank(system.bins(), 0, mics);
  for (int k = 0; k < system.bins(); ++k) {
    const Mat& g = system.g[static_cast<std::size_t>(k)];
    const Mat& m = model.m[static_cast<std::size_t>(k)];
    Mat a = g * g.adjoint();
    Scalar beta = static_cast<Scalar>(cfg.beta);
    if (cfg.beta_mode == BetaMode::relative_to_spectral_norm) {
      Eigen::SelfAdjointEigenSolver<Mat> eig(a, Eigen::EigenvaluesOnly);
      beta *= std::sqrt(std::max(eig.eigenvalues().maxCoeff(), Scalar(0)));
    }
    a.diagonal().array() += beta * beta;
    Eigen::LLT<Mat> llt(a);
    const Scalar tiny = static_cast<Scalar>(mics) * std::numeric_limits<Scalar>::epsilon() * Scalar(16);
    if (llt.info() != Eigen::Success || !(llt.rcond() > tiny))
      throw NumericalError("solve_mif: G G^H + beta^2 I is singular at bin " + std::to_string(k) +
                           "; use a positive regularization (beta > 0)");
    bank.at(0, k) = llt.solve(g * m.adjoint()).adjoint();
  }
  return bank;
}

template <typename Scalar>
MatchResidual<Scalar> match_residual(const DesiredModel<Scalar>& model, const AcousticSystem<Scalar>& system,
                                     const PostFilterBank<Scalar>& filters) {
  if (model.bins() != system.bins() || filters.n_bins != system.bins())
    throw ValidationError("match_residual: bin counts differ");
  MatchResidual<Scalar> out;
  out.bin_norm.resize(system.bins());
  double total = 0.0;
  for (int k = 0; k < system.bins(); ++k) {
    out.e.push_back(model.m[static_cast<std::size_t>(k)] - filters.at(0, k) * system.g[static_cast<std::size_t>(k)]);
    const double n = static_cast<double>(out.e.back().norm());
    out.bin_norm(k) = n;
    total += n * n;
  }
  out.total_norm = std::sqrt(total);
  return out;
}

// Y(f, t) = H(f[, t]) x(f, t).
template <typename Scalar>
Spectrogram<Scalar> apply_postfilters(const Spectrogram<Scalar>& mic_spec, const PostFilterBank<Scalar>& filters) {
  if (mic_spec.n_channels() != filters.n_mics)
    throw ValidationError("apply_postfilters: spectrogram has " + std::to_string(mic_spec.n_channels()) +
                          " channels, filters expect " + std::to_string(filters.n_mics));
  if (mic_spec.bins() != filters.n_bins)
    throw ValidationError("apply_postfilters: spectrogram has " + std::to_string(mic_spec.bins()) +
                          " bins, filters have " + std::to_string(filters.n_bins));
  if (!filters.is_static() && filters.n_frames != mic_spec.frames())
    throw ValidationError("apply_postfilters: filters have " + std::to_string(filters.n_frames) +
                          " frames, input has " + std::to_string(mic_spec.frames()));
  Spectrogram<Scalar> out(2, mic_spec.bins(), mic_spec.frames());
  out.samples = mic_spec.samples;
  CVector<Scalar> x(mic_spec.n_channels());
  for (int t = 0; t < mic_spec.frames(); ++t) {
    for (int k = 0; k < mic_spec.bins(); ++k) {
      for (int c = 0; c < mic_spec.n_channels(); ++c) x(c) = mic_spec.channels[c](k, t);
      const CMatrix<Scalar>& h = filters.at(t, k);
      out.channels[0](k, t) = (h.row(0) * x)(0);
      out.channels[1](k, t) = (h.row(1) * x)(0);
    }
  }
  return out;
}

}  // namespace mmr
