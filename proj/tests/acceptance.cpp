// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "mmr/hrir.hpp"
#include "mmr/lbh.hpp"
#include "mmr/metrics.hpp"
#include "mmr/model_matching.hpp"
#include "mmr/room.hpp"
#include "mmr/scene.hpp"
#include "mmr/signal.hpp"
#include "mmr/stft.hpp"

using namespace mmr;

namespace {

constexpr int kFs = 16000;
int failures = 0;

void report(bool ok, const char* name, const std::string& detail) {
  std::printf("%s  %-34s %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

CMatrixd random_complex(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  CMatrixd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = {n(rng), n(rng)};
  return m;
}

CMatrixd tikhonov_svd(const CMatrixd& m, const CMatrixd& g, double beta) {
  Eigen::JacobiSVD<CMatrixd> svd(g, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  Eigen::VectorXd f(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) f(i) = s(i) / (s(i) * s(i) + beta * beta);
  return m * svd.matrixV() * f.asDiagonal() * svd.matrixU().adjoint();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void solver_correctness() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (double beta : {0.0, 1e-4, 1e-1}) {
    for (int trial = 0; trial < 100; ++trial) {
      DesiredModel<double> m;
      AcousticSystem<double> g;
      for (int k = 0; k < 16; ++k) {
        m.m.push_back(random_complex(2, 8, rng));
        g.g.push_back(random_complex(3, 8, rng));
      }
      MifConfig cfg;
      cfg.beta = beta;
      const auto h = solve_mif(m, g, cfg);
      for (int k = 0; k < 16; ++k) {
        const CMatrixd o = tikhonov_svd(m.m[k], g.g[k], beta);
        worst = std::max(worst, (h.at(0, k) - o).norm() / o.norm());
      }
    }
  }
  const double t = seconds_since(t0);
  report(worst <= 1e-9 && t < 1.0, "solver vs SVD oracle",
         fmt("max rel err %.2e (<= 1e-9), 300 systems in %.3f s (< 1 s)", worst, t));
}

void exact_inversion() {
  std::mt19937_64 rng(7);
  DesiredModel<double> m;
  AcousticSystem<double> g;
  m.m.push_back(random_complex(2, 4, rng));
  CMatrixd gk = random_complex(4, 4, rng);
  gk += 4.0 * CMatrixd::Identity(4, 4);  // well conditioned
  g.g.push_back(gk);
  MifConfig cfg;
  cfg.beta = 0.0;
  const auto h = solve_mif(m, g, cfg);
  const double rel = (m.m[0] - h.at(0, 0) * g.g[0]).norm() / m.m[0].norm();
  report(rel < 1e-8, "exact inversion", fmt("||M-HG||/||M|| = %.2e (< 1e-8)", rel));
}

void residual_monotonicity() {
  std::mt19937_64 rng(11);
  DesiredModel<double> m;
  AcousticSystem<double> g;
  for (int k = 0; k < 16; ++k) {
    m.m.push_back(random_complex(2, 8, rng));
    g.g.push_back(random_complex(3, 8, rng));
  }
  std::vector<double> r;
  for (double beta : {1e-4, 1e-3, 1e-2, 1e-1}) {
    MifConfig cfg;
    cfg.beta = beta;
    r.push_back(match_residual(m, g, solve_mif(m, g, cfg)).total_norm);
  }
  bool ok = true;
  for (std::size_t i = 1; i < r.size(); ++i) ok &= r[i] >= r[i - 1];
  report(ok, "residual monotone in beta", fmt("%.6f %.6f %.6f %.6f", r[0], r[1], r[2], r[3]));
}

void stft_round_trip() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  Signald x(5 * kFs, 6);
  for (Eigen::Index c = 0; c < 6; ++c)
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, c) = n(rng);
  StftConfig cfg;
  const Signald y = istft(stft(x, cfg), cfg);
  const double rel = (y - x).norm() / x.norm();
  report(rel < 1e-6, "STFT round trip", fmt("rel L2 err %.2e (< 1e-6)", rel));
}

// Band-limited reconstruction around the largest sample: (position, value) of the peak.
std::pair<double, double> bandlimited_peak(const Eigen::VectorXd& h) {
  Eigen::Index n_max = 0;
  h.cwiseAbs().maxCoeff(&n_max);
  double best_t = static_cast<double>(n_max), best_v = 0.0;
  for (double t = n_max - 1.0; t <= n_max + 1.0; t += 1e-3) {
    double v = 0.0;
    for (Eigen::Index k = std::max<Eigen::Index>(0, n_max - 300); k < std::min<Eigen::Index>(h.size(), n_max + 300); ++k) {
      const double d = t - static_cast<double>(k);
      v += h(k) * (std::abs(d) < 1e-12 ? 1.0 : std::sin(kPi * d) / (kPi * d));
    }
    if (std::abs(v) > std::abs(best_v)) {
      best_v = v;
      best_t = t;
    }
  }
  return {best_t, best_v};
}

void ism_direct_path() {
  RoomSpec room;
  const double d = 1.7;
  const Rir rir = simulate_rir_points(room, room.source_position(30.0, d), {room.array_center}, kFs);
  const double pos = bandlimited_peak(rir.taps.col(0)).first;
  const double amp = rir.taps.col(0).sum();  // DC gain of the band-limited impulse
  const double want_pos = d * kFs / room.speed_of_sound, want_amp = 1.0 / (4.0 * kPi * d);
  bool ok = std::abs(pos - want_pos) <= 0.5 && std::abs(amp - want_amp) <= 0.01 * want_amp;
  std::string detail = fmt("peak %.3f vs %.3f samples, amp err %.3f %%;", pos, want_pos,
                           100.0 * std::abs(amp - want_amp) / want_amp);
  for (double t60 : {0.2, 0.4, 0.6}) {
    RoomSpec r;
    r.t60 = t60;
    const Eigen::VectorXd h = simulate_center_rir(r, 45.0, 1.5, kFs);
    const double est = estimate_t60(h, kFs);
    ok &= std::abs(est - t60) <= 0.2 * t60;
    detail += fmt(" T60 %.1f->%.3f", t60, est);
  }
  report(ok, "ISM direct path and T60", detail);
}

void srp_accuracy() {
  RoomSpec room;
  const ArrayGeometry geom = ArrayGeometry::uca();
  StftConfig cfg;
  const SteeringGrid grid = SteeringGrid::make(geom, cfg);
  const Eigen::VectorXd s = synth_speech_like(1.0, kFs, 17);
  int hits = 0;
  for (int d = 0; d < 72; ++d) {
    const double az = 5.0 * d;
    const Signald x = moving_source_convolve(
        s, {{0.0, az}}, [&](double a) { return simulate_rir(room, geom, a, 1.5, kFs).taps; }, kFs);
    const LocalizationResult loc = srp_phat(stft(x, cfg), grid);
    const double est = circular_median(loc.azimuths);
    hits += angular_distance(est, az) <= 5.0 + 1e-9;
  }
  const double frac = hits / 72.0;
  report(frac >= 0.95, "SRP-PHAT sweep", fmt("%d/72 within one grid step (%.1f %%, >= 95 %%)", hits, 100.0 * frac));
}

void itd_oracle() {
  const HrirSet h = synth_spherical_hrir(72, 0.0875, kFs);
  const Eigen::VectorXd s = synth_speech_like(3.0, kFs, 21);
  const auto render = [&](int idx) {
    Signald x(s.size(), 2);
    x.col(0) = convolve(s, h.left.col(idx)).head(s.size());
    x.col(1) = convolve(s, h.right.col(idx)).head(s.size());
    return x;
  };
  const double itd90 = median(itd(render(18), kFs).values);
  const double itd0 = median(itd(render(0), kFs).values);
  Signald x(s.size(), 2);
  x.col(0) = 0.5 * s;
  x.col(1) = s;
  const double ild_half = median(ild(x, kFs).values);
  const bool ok = std::abs(itd90 - 0.656e-3) <= 0.05e-3 && std::abs(itd0) <= 1.0 / kFs &&
                  std::abs(std::abs(ild_half) - 6.02) <= 0.01;
  report(ok, "ITD/ILD oracle",
         fmt("ITD(90) %.4f ms (0.656 +- 0.05), ITD(0) %.4f ms (<= %.4f), ILD(L/2) %.3f dB (6.02 +- 0.01)",
             itd90 * 1e3, itd0 * 1e3, 1e3 / kFs, ild_half));
}

struct PipelineResult {
  double zero = 0.0, mif = 0.0, lbh = 0.0;
  double constraint = 0.0;
  double rtf_mif = 0.0, rtf_lbh = 0.0;
};

// Static-source scene: speech at 45 degrees, optional music ambience at 200 degrees.
PipelineResult run_pipeline(double t60, bool ambience, bool noise, bool timing) {
  const HrirSet h = synth_spherical_hrir(72, 0.0875, kFs);
  StftConfig cfg;
  Scene s;
  s.room.t60 = t60;
  s.seed = 3;
  s.sensor_noise = noise;
  s.sources.push_back({synth_speech_like(5.0, kFs, 1), {{0.0, 45.0}}, 1.5});
  if (ambience) s.ambience.push_back({synth_music_like(5.0, kFs, 2), 200.0});
  const RenderedScene r = mix_scene(s, h);

  const auto rirs = simulate_rir_grid(s.room, s.geometry, h.azimuths, 1.5, kFs);
  const auto g = build_acoustic_system(rirs, cfg);
  const auto m = build_desired_model(h, cfg, Propagation{1.5, s.room.speed_of_sound});
  const auto filters = solve_mif(m, g);
  const auto mif_render = [&](const Signald& x) { return istft(apply_postfilters(stft(x, cfg), filters), cfg, x.rows()); };
  const SteeringGrid grid = SteeringGrid::make(s.geometry, cfg);

  PipelineResult out;
  const LbhResult l = lbh_render(r.mic_signals, grid, MpdrConfig{}, h, cfg);
  out.zero = eatm(Signald::Zero(r.mic_signals.rows(), 2), r.reference_binaural, cfg);
  out.mif = eatm(mif_render(r.mic_signals), r.reference_binaural, cfg);
  out.lbh = eatm(l.binaural, r.reference_binaural, cfg);
  out.constraint = l.max_constraint_error;
  if (timing) {
    out.rtf_mif = rtf([&](const Signald& x) { mif_render(x); }, r.mic_signals, kFs, 5);
    out.rtf_lbh = rtf([&](const Signald& x) { lbh_render(x, grid, MpdrConfig{}, h, cfg); }, r.mic_signals, kFs, 3);
  }
  return out;
}

void eatm_contract() {
  StftConfig cfg;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  Signald y(kFs, 2);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = n(rng);
  const double same = eatm(y, y, cfg);
  const PipelineResult p = run_pipeline(0.0, false, false, false);
  const double gain = p.zero - p.mif;
  report(same == 20.0 * std::log10(kEatmFloor) && gain >= 20.0, "E_ATM floor and anechoic MIF",
         fmt("identical %.1f dB (floor %.1f); anechoic MIF %.2f dB vs zero %.2f dB, gain %.2f dB (>= 20)", same,
             20.0 * std::log10(kEatmFloor), p.mif, p.zero, gain));
}

void reverberation_trend_and_rtf() {
  const PipelineResult a = run_pipeline(0.32, true, true, true);
  const PipelineResult b = run_pipeline(0.54, true, true, false);
  const double mif_gap = std::abs(a.mif - b.mif);
  const double mif_deg = b.mif - a.mif, lbh_deg = b.lbh - a.lbh;
  report(mif_gap < 3.0 && lbh_deg > mif_deg, "reverberation trend",
         fmt("MIF %.2f -> %.2f (gap %.2f dB, < 3); LBH %.2f -> %.2f (degradation %.2f vs MIF %.2f); zero %.2f -> %.2f",
             a.mif, b.mif, mif_gap, a.lbh, b.lbh, lbh_deg, mif_deg, a.zero, b.zero));
  report(std::max(a.constraint, b.constraint) < 1e-9, "MPDR distortionless constraint",
         fmt("max |w^H d - 1| %.2e (< 1e-9) over reverberant renders", std::max(a.constraint, b.constraint)));
  report(a.rtf_mif < a.rtf_lbh && a.rtf_mif < 1.0, "RTF ordering",
         fmt("MIF %.4f, LBH %.4f (MIF < LBH, MIF < 1)", a.rtf_mif, a.rtf_lbh));
}

double window_median(const Trace& t, double lo, double hi) {
  std::vector<double> v;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.times[i] >= lo && t.times[i] < hi) v.push_back(t.values[i]);
  return v.empty() ? std::nan("") : median(v);
}

void moving_source() {
  const HrirSet h = synth_spherical_hrir(72, 0.0875, kFs);
  StftConfig cfg;
  Scene s;
  s.room.t60 = 0.32;
  s.sar_db = 15.0;
  s.snr_db = 25.0;
  s.seed = 5;
  s.sources.push_back({synth_speech_like(5.0, kFs, 31), {{0.0, 0.0}, {1.25, 90.0}, {2.5, 180.0}, {3.75, 270.0}, {5.0, 0.0}}, 1.5});
  s.ambience.push_back({synth_music_like(5.0, kFs, 32), 120.0});
  const RenderedScene r = mix_scene(s, h);
  const auto rirs = simulate_rir_grid(s.room, s.geometry, h.azimuths, 1.5, kFs);
  const auto filters = solve_mif(build_desired_model(h, cfg, Propagation{1.5, s.room.speed_of_sound}),
                                 build_acoustic_system(rirs, cfg));
  const Signald y = istft(apply_postfilters(stft(r.mic_signals, cfg), filters), cfg, r.mic_signals.rows());
  const double e = eatm(y, r.reference_binaural, cfg);
  const Trace ref = itd(r.reference_binaural, kFs);
  const double q0 = window_median(ref, 0.0, 0.35), q1 = window_median(ref, 1.0, 1.5),
               q2 = window_median(ref, 2.3, 2.7), q3 = window_median(ref, 3.5, 4.0), q4 = window_median(ref, 4.65, 5.0);
  // One signed cycle: up to a left lobe near 90 degrees, down through the back to a right lobe near 270
  // degrees, then back up toward the front.
  const bool ok = y.allFinite() && std::isfinite(e) && q1 > 0.3e-3 && q3 < -0.3e-3 && q0 < q1 && q2 < q1 &&
                  q2 > q3 && q4 > q3;
  report(ok, "moving-source pipeline",
         fmt("reference ITD ms at 0/90/180/270/360 deg: %.3f %.3f %.3f %.3f %.3f; MIF E_ATM %.2f dB", q0 * 1e3,
             q1 * 1e3, q2 * 1e3, q3 * 1e3, q4 * 1e3, e));
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> checks{solver_correctness, exact_inversion, residual_monotonicity,
                                                  stft_round_trip,    ism_direct_path, srp_accuracy,
                                                  itd_oracle,         eatm_contract,   reverberation_trend_and_rtf,
                                                  moving_source};
  for (const auto& c : checks) {
    try {
      c();
    } catch (const std::exception& e) {
      report(false, "exception", e.what());
    }
  }
  std::printf("%d criterion line(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
