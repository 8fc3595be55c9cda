#include "mmr/lbh.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "mmr/error.hpp"
#include "mmr/model_matching.hpp"

namespace mmr {

SteeringGrid SteeringGrid::make(const ArrayGeometry& geom, const StftConfig& cfg, int n_directions,
                                double speed_of_sound) {
  geom.validate();
  cfg.validate();
  if (n_directions < 1) throw ValidationError("steering grid: need at least one direction");
  SteeringGrid grid;
  grid.sample_rate = cfg.sample_rate;
  grid.fft_len = cfg.fft_len;
  for (int d = 0; d < n_directions; ++d) {
    const double az = 360.0 * d / n_directions;
    const double rad = az * kPi / 180.0;
    const Vec3 u(std::cos(rad), std::sin(rad), 0.0);
    CMatrixd v(cfg.bins(), geom.size());
    for (int i = 0; i < geom.size(); ++i) {
      const double tau = geom.mic_positions[static_cast<std::size_t>(i)].dot(u) / speed_of_sound;
      for (int k = 0; k < cfg.bins(); ++k) {
        const double f = static_cast<double>(k) * cfg.sample_rate / cfg.fft_len;
        v(k, i) = std::polar(1.0, 2.0 * kPi * f * tau);
      }
    }
    grid.azimuths.push_back(az);
    grid.vectors.push_back(std::move(v));
  }
  return grid;
}

int grid_argmax(std::span<const double> power) {
  if (power.empty()) throw ValidationError("grid_argmax: empty power map");
  int best = 0;
  for (std::size_t i = 1; i < power.size(); ++i)
    if (power[i] > power[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

namespace {

struct BlockLayout {
  int count;
  int len;
  int hop;
  int start(int b) const { return b * hop; }
};

BlockLayout block_layout(int frames, int len, int hop) {
  const int count = frames <= len ? 1 : (frames - len + hop - 1) / hop + 1;
  return {count, len, hop};
}

}  // namespace

LocalizationResult srp_phat(const Spectrogramd& mic_spec, const SteeringGrid& grid, const SrpOptions& opt) {
  const int mics = mic_spec.n_channels();
  if (mics < 2) throw ValidationError("srp_phat: need at least two microphones");
  if (grid.mics() != mics)
    throw ValidationError("srp_phat: grid has " + std::to_string(grid.mics()) + " microphones, input has " +
                          std::to_string(mics));
  if (opt.block_frames < 1 || opt.block_hop < 1) throw ValidationError("srp_phat: block sizes must be >= 1");
  if (grid.vectors.front().rows() != mic_spec.bins()) throw ValidationError("srp_phat: bin count mismatch");

  const int k_lo = std::max(1, static_cast<int>(std::ceil(opt.f_low * grid.fft_len / grid.sample_rate)));
  const int k_hi = std::min(mic_spec.bins() - 2, static_cast<int>(std::floor(opt.f_high * grid.fft_len / grid.sample_rate)));
  const BlockLayout layout = block_layout(mic_spec.frames(), opt.block_frames, opt.block_hop);

  LocalizationResult out;
  out.block_frames = opt.block_frames;
  out.block_hop = opt.block_hop;
  out.power = Eigen::MatrixXd::Zero(layout.count, grid.size());

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < mics; ++i)
    for (int j = i + 1; j < mics; ++j) pairs.emplace_back(i, j);

  CMatrixd phat(k_hi - k_lo + 1, static_cast<Eigen::Index>(pairs.size()));
  for (int b = 0; b < layout.count; ++b) {
    const int t0 = layout.start(b);
    const int t1 = std::min(mic_spec.frames(), t0 + layout.len);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      for (int k = k_lo; k <= k_hi; ++k) {
        std::complex<double> cross = 0.0;
        for (int t = t0; t < t1; ++t)
          cross += mic_spec.channels[pairs[p].first](k, t) * std::conj(mic_spec.channels[pairs[p].second](k, t));
        const double mag = std::abs(cross);
        phat(k - k_lo, static_cast<Eigen::Index>(p)) = mag < opt.epsilon ? 0.0 : cross / mag;
      }
    }
    for (int d = 0; d < grid.size(); ++d) {
      const CMatrixd& v = grid.vectors[static_cast<std::size_t>(d)];
      double acc = 0.0;
      for (std::size_t p = 0; p < pairs.size(); ++p)
        for (int k = k_lo; k <= k_hi; ++k)
          acc += (phat(k - k_lo, static_cast<Eigen::Index>(p)) * std::conj(v(k, pairs[p].first)) * v(k, pairs[p].second)).real();
      out.power(b, d) = acc;
    }
    const Eigen::VectorXd row = out.power.row(b).transpose();
    const int best = grid_argmax(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    out.index.push_back(best);
    out.azimuths.push_back(grid.azimuths[static_cast<std::size_t>(best)]);
  }
  return out;
}

void MpdrConfig::validate() const {
  if (!(loading_factor >= 0.0)) throw ValidationError("mpdr: diagonal loading must be >= 0");
  if (covariance == CovarianceMode::recursive && !(alpha > 0.0 && alpha < 1.0))
    throw ValidationError("mpdr: recursive alpha must lie in (0, 1)");
}

CVectord mpdr_weights(const CMatrixd& cov, const CVectord& steering, double loading) {
  if (cov.rows() != cov.cols() || cov.rows() != steering.size())
    throw ValidationError("mpdr_weights: covariance and steering dimensions differ");
  CMatrixd r = cov;
  r.diagonal().array() += loading;
  Eigen::LLT<CMatrixd> llt(r);
  const double tiny = static_cast<double>(r.rows()) * std::numeric_limits<double>::epsilon() * 16.0;
  if (llt.info() != Eigen::Success || !(llt.rcond() > tiny))
    throw NumericalError("mpdr_weights: covariance is singular after diagonal loading");
  const CVectord rinv_d = llt.solve(steering);
  const std::complex<double> denom = steering.dot(rinv_d);  // d^H R^-1 d
  return rinv_d / std::conj(denom);
}

double circular_median(std::span<const double> angles) {
  if (angles.empty()) throw ValidationError("circular_median: no angles");
  double best = angles.front();
  double best_cost = std::numeric_limits<double>::infinity();
  for (double a : angles) {
    double cost = 0.0;
    for (double b : angles) cost += angular_distance(a, b);
    if (cost < best_cost - 1e-12) {
      best_cost = cost;
      best = a;
    }
  }
  return best;
}

LbhResult lbh_render(const Signald& mic_signal, const SteeringGrid& grid, const MpdrConfig& mpdr,
                     const HrirSet& hrirs, const StftConfig& cfg, const SrpOptions& srp) {
  mpdr.validate();
  const Spectrogramd x = stft(mic_signal, cfg);
  const int mics = x.n_channels();
  const int bins = x.bins();
  const int frames = x.frames();

  // HRTF pair for each grid direction.
  const DesiredModel<double> hrtf = build_desired_model(hrirs, cfg);
  std::vector<int> hrtf_index;
  for (double az : grid.azimuths) {
    const int idx = hrirs.nearest(az);
    if (angular_distance(hrirs.azimuths[static_cast<std::size_t>(idx)], az) > 1e-6)
      throw ValidationError("lbh_render: HRIR set has no direction at grid angle " + std::to_string(az));
    hrtf_index.push_back(idx);
  }

  LbhResult result;
  const LocalizationResult loc = srp_phat(x, grid, srp);
  const int n_blocks = static_cast<int>(loc.index.size());
  result.raw_azimuths = loc.azimuths;
  std::vector<int> smoothed(static_cast<std::size_t>(n_blocks));
  for (int b = 0; b < n_blocks; ++b) {
    std::vector<double> window;
    for (int o = -1; o <= 1; ++o)
      if (b + o >= 0 && b + o < n_blocks) window.push_back(loc.azimuths[static_cast<std::size_t>(b + o)]);
    const double med = window.size() == 3 ? circular_median(window) : loc.azimuths[static_cast<std::size_t>(b)];
    // Median is a member of the window, hence a grid angle.
    int idx = 0;
    for (int d = 0; d < grid.size(); ++d)
      if (angular_distance(grid.azimuths[static_cast<std::size_t>(d)], med) < 1e-9) idx = d;
    smoothed[static_cast<std::size_t>(b)] = idx;
    result.azimuths.push_back(grid.azimuths[static_cast<std::size_t>(idx)]);
  }

  Spectrogramd y(2, bins, frames);
  y.samples = x.samples;
  Eigen::MatrixXd weight_sum = Eigen::MatrixXd::Zero(1, frames);
  std::vector<CMatrixd> recursive_cov(static_cast<std::size_t>(bins), CMatrixd::Zero(mics, mics));
  int recursive_frame = 0;
  CVectord xv(mics);

  for (int b = 0; b < n_blocks; ++b) {
    const int t0 = b * loc.block_hop;
    const int t1 = std::min(frames, t0 + loc.block_frames);
    const int dir = smoothed[static_cast<std::size_t>(b)];
    for (int k = 0; k < bins; ++k) {
      CMatrixd cov = CMatrixd::Zero(mics, mics);
      if (mpdr.covariance == CovarianceMode::block) {
        for (int t = t0; t < t1; ++t) {
          xv = x.column(t, k);
          cov.noalias() += xv * xv.adjoint();
        }
        cov /= static_cast<double>(t1 - t0);
      } else {
        CMatrixd& rc = recursive_cov[static_cast<std::size_t>(k)];
        for (int t = recursive_frame; t < t1; ++t) {
          xv = x.column(t, k);
          rc = mpdr.alpha * rc + (1.0 - mpdr.alpha) * (xv * xv.adjoint());
        }
        cov = rc;
      }
      const CVectord d = grid.steering(dir, k);
      const double trace = cov.trace().real() / mics;
      CVectord w;
      if (trace <= 1e-30) {
        w = d / static_cast<double>(mics);  // no signal: identity covariance
      } else {
        w = mpdr_weights(cov, d, mpdr.loading_factor * trace);
      }
      result.max_constraint_error = std::max(result.max_constraint_error, std::abs(w.dot(d) - 1.0));
      const std::complex<double> hl = hrtf.m[static_cast<std::size_t>(k)](0, hrtf_index[static_cast<std::size_t>(dir)]);
      const std::complex<double> hr = hrtf.m[static_cast<std::size_t>(k)](1, hrtf_index[static_cast<std::size_t>(dir)]);
      for (int t = t0; t < t1; ++t) {
        const double fade = std::pow(std::sin(kPi * (t - t0 + 0.5) / loc.block_frames), 2);
        const std::complex<double> s = w.dot(x.column(t, k));  // w^H x
        y.channels[0](k, t) += fade * hl * s;
        y.channels[1](k, t) += fade * hr * s;
        if (k == 0) weight_sum(0, t) += fade;
      }
    }
    if (mpdr.covariance == CovarianceMode::recursive) recursive_frame = t1;
  }
  for (int t = 0; t < frames; ++t) {
    if (weight_sum(0, t) <= 0.0) continue;
    y.channels[0].col(t) /= weight_sum(0, t);
    y.channels[1].col(t) /= weight_sum(0, t);
  }
  result.binaural = istft(y, cfg, mic_signal.rows());
  if (!result.binaural.allFinite()) throw NumericalError("lbh_render: non-finite output");
  return result;
}

}  // namespace mmr
