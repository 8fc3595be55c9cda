#include "mmr/scene.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mmr/error.hpp"
#include "mmr/signal.hpp"
#include "mmr/wav.hpp"

namespace mmr {

using nlohmann::json;

void validate_trajectory(const std::vector<Keyframe>& trajectory) {
  if (trajectory.empty()) throw ValidationError("trajectory: at least one keyframe is required");
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const Keyframe& k = trajectory[i];
    if (!std::isfinite(k.time) || !std::isfinite(k.azimuth))
      throw ValidationError("trajectory[" + std::to_string(i) + "]: non-finite value");
    if (k.azimuth < 0.0 || k.azimuth >= 360.0)
      throw ValidationError("trajectory[" + std::to_string(i) + "]: azimuth must lie in [0, 360)");
    if (i > 0 && !(k.time > trajectory[i - 1].time))
      throw ValidationError("trajectory[" + std::to_string(i) + "]: keyframe times must be strictly increasing");
  }
}

double trajectory_azimuth(const std::vector<Keyframe>& traj, double time) {
  if (traj.empty()) throw ValidationError("trajectory: empty");
  if (time <= traj.front().time) return traj.front().azimuth;
  if (time >= traj.back().time) return traj.back().azimuth;
  std::size_t k = 0;
  while (traj[k + 1].time < time) ++k;
  const double frac = (time - traj[k].time) / (traj[k + 1].time - traj[k].time);
  const double delta = wrap_degrees(traj[k + 1].azimuth - traj[k].azimuth);
  double az = std::fmod(traj[k].azimuth + frac * delta, 360.0);
  if (az < 0.0) az += 360.0;
  return az;
}

namespace {

double quantize_angle(const MovingOptions& opt, double az) {
  if (opt.quantize) return opt.quantize(az);
  double q = std::round(az / opt.grid_step) * opt.grid_step;
  q = std::fmod(q, 360.0);
  if (q < 0.0) q += 360.0;
  if (q >= 360.0 - 1e-9) q = 0.0;
  return q;
}

}  // namespace

std::vector<double> segment_angles(const std::vector<Keyframe>& trajectory, Eigen::Index samples, int sample_rate,
                                   const MovingOptions& opt) {
  validate_trajectory(trajectory);
  if (opt.block < 2 || opt.block % 2 != 0) throw ValidationError("moving source: block must be even and >= 2");
  const Eigen::Index hop = opt.block / 2;
  const Eigen::Index n_seg = samples <= 1 ? 1 : (samples - 1 + hop - 1) / hop + 1;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n_seg));
  for (Eigen::Index b = 0; b < n_seg; ++b)
    out.push_back(quantize_angle(opt, trajectory_azimuth(trajectory, static_cast<double>(b * hop) / sample_rate)));
  return out;
}

Signald moving_source_convolve(const Eigen::VectorXd& source, const std::vector<Keyframe>& trajectory,
                               const RirProvider& provider, int sample_rate, const MovingOptions& opt,
                               Eigen::Index out_len) {
  if (source.size() == 0) throw ValidationError("moving source: empty signal");
  if (out_len < 0) out_len = source.size();
  const std::vector<double> angles = segment_angles(trajectory, source.size(), sample_rate, opt);
  const Eigen::Index hop = opt.block / 2;

  // Sum the segments sharing an angle, keeping first-appearance order.
  std::vector<double> order;
  std::vector<Eigen::VectorXd> parts;
  auto slot = [&](double az) -> Eigen::VectorXd& {
    for (std::size_t i = 0; i < order.size(); ++i)
      if (order[i] == az) return parts[i];
    order.push_back(az);
    parts.push_back(Eigen::VectorXd::Zero(source.size()));
    return parts.back();
  };
  if (angles.size() == 1 || std::all_of(angles.begin(), angles.end(), [&](double a) { return a == angles.front(); })) {
    slot(angles.front()) = source;
  } else {
    for (std::size_t b = 0; b < angles.size(); ++b) {
      Eigen::VectorXd& acc = slot(angles[b]);
      const Eigen::Index c = static_cast<Eigen::Index>(b) * hop;
      const Eigen::Index lo = std::max<Eigen::Index>(0, c - hop + 1);
      const Eigen::Index hi = std::min<Eigen::Index>(source.size() - 1, c + hop - 1);
      for (Eigen::Index n = lo; n <= hi; ++n)
        acc(n) += source(n) * (1.0 - std::abs(static_cast<double>(n - c)) / static_cast<double>(hop));
    }
  }

  Signald out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Signald kernel = provider(order[i]);
    if (kernel.rows() == 0 || kernel.cols() == 0) throw ValidationError("moving source: empty kernel");
    if (out.size() == 0) out = Signald::Zero(out_len, kernel.cols());
    if (kernel.cols() != out.cols()) throw ValidationError("moving source: kernel channel count changed");
    const Convolver conv(parts[i], kernel.rows());
    for (Eigen::Index ch = 0; ch < kernel.cols(); ++ch) out.col(ch) += conv.apply(kernel.col(ch), out_len);
  }
  return out;
}

Eigen::VectorXd early_window(const Eigen::VectorXd& rir, double direct_delay, double early_ms, int sample_rate) {
  if (!(early_ms >= 0.0)) throw ValidationError("early_window: early_ms must be >= 0");
  const Eigen::Index early = static_cast<Eigen::Index>(std::llround(early_ms * 1e-3 * sample_rate));
  const Eigen::Index end = static_cast<Eigen::Index>(std::floor(direct_delay)) + kFractionalDelayTaps / 2 + early;
  const Eigen::Index taper = std::min<Eigen::Index>(early, std::llround(0.005 * sample_rate));
  // Everything after `end` is zero, so the tail is dropped rather than stored.
  Eigen::VectorXd out = rir.head(std::clamp<Eigen::Index>(end + 1, 1, rir.size()));
  for (Eigen::Index n = 0; n < out.size(); ++n) {
    if (taper > 0 && n > end - taper) {
      out(n) *= 0.5 * (1.0 + std::cos(kPi * static_cast<double>(n - (end - taper)) / static_cast<double>(taper)));
    }
  }
  return out;
}

Signald make_target(const Eigen::VectorXd& source, const std::vector<Keyframe>& trajectory, const HrirSet& hrirs,
                    const RoomSpec& room, double early_ms, double distance, Eigen::Index out_len,
                    std::vector<std::string>* warnings) {
  hrirs.validate();
  validate_trajectory(trajectory);
  if (!(early_ms >= 0.0)) throw ValidationError("make_target: early_ms must be >= 0");
  const int fs = hrirs.sample_rate;
  if (warnings) {
    for (const Keyframe& k : trajectory) {
      const double snapped = hrirs.azimuths[static_cast<std::size_t>(hrirs.nearest(k.azimuth))];
      if (angular_distance(snapped, k.azimuth) > 1e-6) {
        std::ostringstream msg;
        msg << "target azimuth " << k.azimuth << " at t=" << k.time << " s is off the HRIR grid; snapped to "
            << snapped;
        warnings->push_back(msg.str());
      }
    }
  }
  MovingOptions opt;
  opt.quantize = [&](double az) { return hrirs.azimuths[static_cast<std::size_t>(hrirs.nearest(az))]; };
  std::map<double, Signald> cache;
  const RirProvider provider = [&](double az) -> Signald {
    auto it = cache.find(az);
    if (it != cache.end()) return it->second;
    const Eigen::VectorXd rir = simulate_center_rir(room, az, distance, fs);
    const Eigen::VectorXd early = early_window(rir, distance / room.speed_of_sound * fs, early_ms, fs);
    const int idx = hrirs.nearest(az);
    const Eigen::VectorXd l = convolve(early, hrirs.left.col(idx));
    const Eigen::VectorXd r = convolve(early, hrirs.right.col(idx));
    Signald k(l.size(), 2);
    k.col(0) = l;
    k.col(1) = r;
    return cache.emplace(az, std::move(k)).first->second;
  };
  return moving_source_convolve(source, trajectory, provider, fs, opt, out_len);
}

std::vector<Rir> simulate_rir_grid(const RoomSpec& room, const ArrayGeometry& geom, const std::vector<double>& azimuths,
                                   double distance, int sample_rate) {
  std::vector<Rir> out(azimuths.size());
  if (azimuths.empty()) return out;
  calibrated_reflection(room);  // fill the cache once before fanning out
  const int n_threads = std::min<int>(worker_threads(), static_cast<int>(azimuths.size()));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_threads));
  auto work = [&](int id) {
    try {
      for (std::size_t i = next++; i < azimuths.size(); i = next++)
        out[i] = simulate_rir(room, geom, azimuths[i], distance, sample_rate);
    } catch (...) {
      errors[static_cast<std::size_t>(id)] = std::current_exception();
      next = azimuths.size();
    }
  };
  if (n_threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work, t);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

void Scene::validate() const {
  if (sources.empty()) throw ValidationError("scene: at least one source is required");
  if (!std::isfinite(sar_db)) throw ValidationError("scene: sar_db must be finite");
  if (!std::isfinite(snr_db)) throw ValidationError("scene: snr_db must be finite");
  if (!(early_ms >= 0.0)) throw ValidationError("scene: early_ms must be >= 0");
  if (sample_rate <= 0) throw ValidationError("scene: sample_rate must be positive");
  room.validate();
  geometry.validate();
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const std::string where = "scene: sources[" + std::to_string(i) + "]";
    if (sources[i].signal.size() == 0) throw ValidationError(where + ": empty signal");
    if (!sources[i].signal.allFinite()) throw ValidationError(where + ": non-finite samples");
    if (!(sources[i].distance > 0.0)) throw ValidationError(where + ": distance must be positive");
    try {
      validate_trajectory(sources[i].trajectory);
    } catch (const ValidationError& e) {
      throw ValidationError(where + "." + e.what());
    }
  }
  for (std::size_t i = 0; i < ambience.size(); ++i) {
    const std::string where = "scene: ambience[" + std::to_string(i) + "]";
    if (ambience[i].signal.size() == 0) throw ValidationError(where + ": empty signal");
    if (ambience[i].azimuth < 0.0 || ambience[i].azimuth >= 360.0)
      throw ValidationError(where + ": azimuth must lie in [0, 360)");
  }
}

namespace {

Eigen::VectorXd fit_length(const Eigen::VectorXd& x, Eigen::Index n) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  const Eigen::Index k = std::min(n, x.size());
  out.head(k) = x.head(k);
  return out;
}

// Mic-side provider backed by a precomputed grid of RIRs.
Signald mic_component(const Eigen::VectorXd& signal, const std::vector<Keyframe>& traj, double distance,
                      const Scene& scene, const HrirSet& hrirs, Eigen::Index len) {
  MovingOptions opt;
  opt.quantize = [&](double az) { return hrirs.azimuths[static_cast<std::size_t>(hrirs.nearest(az))]; };
  std::vector<double> needed = segment_angles(traj, signal.size(), scene.sample_rate, opt);
  std::sort(needed.begin(), needed.end());
  needed.erase(std::unique(needed.begin(), needed.end()), needed.end());
  const std::vector<Rir> rirs = simulate_rir_grid(scene.room, scene.geometry, needed, distance, scene.sample_rate);
  const RirProvider provider = [&](double az) -> Signald {
    const auto it = std::lower_bound(needed.begin(), needed.end(), az);
    return rirs[static_cast<std::size_t>(it - needed.begin())].taps;
  };
  return moving_source_convolve(signal, traj, provider, scene.sample_rate, opt, len);
}

}  // namespace

RenderedScene mix_scene(const Scene& scene, const HrirSet& hrirs) {
  scene.validate();
  hrirs.validate();
  if (hrirs.sample_rate != scene.sample_rate)
    throw ValidationError("scene: HRIR rate " + std::to_string(hrirs.sample_rate) + " Hz differs from scene rate " +
                          std::to_string(scene.sample_rate) + " Hz");
  Eigen::Index len = scene.length;
  if (len <= 0)
    for (const auto& s : scene.sources) len = std::max(len, s.signal.size());
  const double duration = static_cast<double>(len) / scene.sample_rate;
  const int mics = scene.geometry.size();

  RenderedScene out;
  out.target_mics = Signald::Zero(len, mics);
  out.reference_binaural = Signald::Zero(len, 2);
  for (std::size_t i = 0; i < scene.sources.size(); ++i) {
    const SceneSource& src = scene.sources[i];
    if (src.trajectory.back().time > duration)
      out.warnings.push_back("sources[" + std::to_string(i) + "]: trajectory extends beyond the " +
                             std::to_string(duration) + " s clip; clamped");
    const Eigen::VectorXd dry = fit_length(src.signal, len);
    out.dry_sources.push_back(dry);
    out.target_mics += mic_component(dry, src.trajectory, src.distance, scene, hrirs, len);
    out.reference_binaural +=
        make_target(dry, src.trajectory, hrirs, scene.room, scene.early_ms, src.distance, len, &out.warnings);
  }

  out.ambience_mics = Signald::Zero(len, mics);
  Signald ambience_ref = Signald::Zero(len, 2);
  for (const AmbienceSource& amb : scene.ambience) {
    const Eigen::VectorXd dry = fit_length(amb.signal, len);
    const std::vector<Keyframe> traj{{0.0, amb.azimuth}};
    out.ambience_mics += mic_component(dry, traj, scene.ambience_distance, scene, hrirs, len);
    ambience_ref += make_target(dry, traj, hrirs, scene.room, scene.early_ms, scene.ambience_distance, len,
                                &out.warnings);
  }
  const double p_target = mean_power(out.target_mics.col(0));
  if (!scene.ambience.empty()) {
    const double p_amb = mean_power(out.ambience_mics.col(0));
    if (p_amb > 0.0) {
      out.ambience_gain = std::sqrt(p_target / (p_amb * std::pow(10.0, scene.sar_db / 10.0)));
    } else {
      out.warnings.push_back("ambience is silent at the reference microphone; ambience gain set to 0");
    }
    out.ambience_mics *= out.ambience_gain;
    ambience_ref *= out.ambience_gain;
  }

  out.noise_mics = Signald::Zero(len, mics);
  if (scene.sensor_noise) {
    std::mt19937_64 rng(scene.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int m = 0; m < mics; ++m)
      for (Eigen::Index n = 0; n < len; ++n) out.noise_mics(n, m) = normal(rng);
    const double p_signal = mean_power(out.target_mics.col(0) + out.ambience_mics.col(0));
    const double p_noise = mean_power(out.noise_mics.col(0));
    out.noise_gain = p_noise > 0.0 ? std::sqrt(p_signal / (p_noise * std::pow(10.0, scene.snr_db / 10.0))) : 0.0;
    out.noise_mics *= out.noise_gain;
  }

  out.mic_signals = out.target_mics + out.ambience_mics + out.noise_mics;
  out.reference_binaural += ambience_ref;
  return out;
}

Eigen::VectorXd white_noise(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x(i) = normal(rng);
  return x;
}

namespace {

struct Resonator {
  double a1, a2, g;
  double y1 = 0.0, y2 = 0.0;
  Resonator(double freq, double bandwidth, int fs) {
    const double r = std::exp(-kPi * bandwidth / fs);
    a1 = 2.0 * r * std::cos(2.0 * kPi * freq / fs);
    a2 = -r * r;
    g = (1.0 - r) * 2.0 * std::sin(2.0 * kPi * freq / fs);  // unit gain at the peak
  }
  double step(double x) {
    const double y = g * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

void normalize_rms(Eigen::VectorXd& x, double rms) {
  const double p = mean_power(x);
  if (p > 0.0) x *= rms / std::sqrt(p);
}

}  // namespace

// Syllables of glottal-pulse excitation (one-pole tilt, about -6 dB/octave above 1 kHz) through four
// formant resonators, some unvoiced, separated by short pauses.
Eigen::VectorXd synth_speech_like(double seconds, int fs, std::uint64_t seed) {
  if (!(seconds > 0.0)) throw ValidationError("synth_speech_like: duration must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Eigen::Index n = static_cast<Eigen::Index>(std::llround(seconds * fs));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::Index pos = static_cast<Eigen::Index>(0.02 * fs);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double tilt = std::exp(-2.0 * kPi * 1000.0 / fs);
  double glottal = 0.0;
  while (pos < n) {
    const Eigen::Index syl = static_cast<Eigen::Index>((0.12 + 0.18 * u(rng)) * fs);
    const bool voiced = u(rng) > 0.2;
    const double f0 = 100.0 + 120.0 * u(rng);
    const double glide = (u(rng) - 0.5) * 0.3;
    Resonator f1(300.0 + 500.0 * u(rng), 100.0, fs), f2(900.0 + 1600.0 * u(rng), 160.0, fs),
        f3(2400.0 + 800.0 * u(rng), 250.0, fs), f4(3500.0 + 500.0 * u(rng), 300.0, fs);
    double phase = 0.0;
    for (Eigen::Index i = 0; i < syl && pos + i < n; ++i) {
      const double t = static_cast<double>(i) / syl;
      double e;
      if (voiced) {
        phase += f0 * (1.0 + glide * t) / fs;
        e = 0.0;
        if (phase >= 1.0) {
          phase -= 1.0;
          e = 1.0;
        }
        glottal = (1.0 - tilt) * (e + 0.02 * normal(rng)) + tilt * glottal;
        e = 20.0 * glottal;
      } else {
        e = 0.3 * normal(rng);
      }
      const double v = f1.step(e) + 0.7 * f2.step(e) + 0.5 * f3.step(e) + 0.3 * f4.step(e);
      x(pos + i) = v * std::pow(std::sin(kPi * t), 2);
    }
    pos += syl + static_cast<Eigen::Index>((0.03 + 0.12 * u(rng)) * fs);
  }
  normalize_rms(x, 0.1);
  return x;
}

// Three-note harmonic chords changing every half second, plucked envelopes.
Eigen::VectorXd synth_music_like(double seconds, int fs, std::uint64_t seed) {
  if (!(seconds > 0.0)) throw ValidationError("synth_music_like: duration must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> note(0, 24);
  const Eigen::Index n = static_cast<Eigen::Index>(std::llround(seconds * fs));
  const Eigen::Index step = fs / 2;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (Eigen::Index start = 0; start < n; start += step) {
    for (int v = 0; v < 3; ++v) {
      const double f = 130.81 * std::pow(2.0, note(rng) / 12.0);
      for (Eigen::Index i = 0; i < step && start + i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        const double env = std::exp(-4.0 * t) * std::min(1.0, t / 0.01);
        double s = 0.0;
        for (int h = 1; h <= 6; ++h)
          if (h * f < 0.45 * fs) s += std::sin(2.0 * kPi * h * f * t) / h;
        x(start + i) += env * s;
      }
    }
  }
  normalize_rms(x, 0.1);
  return x;
}

namespace {

std::string field(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

double get_number(const json& j, const std::string& path, const std::string& key, std::optional<double> fallback) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw ValidationError("scene: missing field '" + field(path, key) + "'");
  }
  if (!j.at(key).is_number()) throw ValidationError("scene: field '" + field(path, key) + "' must be a number");
  return j.at(key).get<double>();
}

Vec3 get_vec3(const json& j, const std::string& path, const std::string& key, const Vec3& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number())
    throw ValidationError("scene: field '" + field(path, key) + "' must be an array of three numbers");
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

Eigen::VectorXd load_signal(const json& j, const std::string& path, const std::filesystem::path& base, int fs,
                            double default_seconds) {
  if (j.is_string()) {
    std::filesystem::path p = j.get<std::string>();
    if (p.is_relative()) p = base / p;
    WavData wav = read_wav(p);
    if (wav.samples.cols() != 1)
      throw ValidationError("scene: field '" + path + "': " + p.string() + " must be mono, has " +
                            std::to_string(wav.samples.cols()) + " channels");
    if (wav.sample_rate != fs) wav.samples = resample_integer(wav.samples, wav.sample_rate, fs);
    return wav.samples.col(0);
  }
  if (!j.is_object() || !j.contains("generator") || !j.at("generator").is_string())
    throw ValidationError("scene: field '" + path + "' must be a WAV path or {\"generator\": ...}");
  const std::string gen = j.at("generator").get<std::string>();
  const double seconds = get_number(j, path, "seconds", default_seconds);
  const auto seed = static_cast<std::uint64_t>(get_number(j, path, "seed", 0.0));
  const double rms = get_number(j, path, "rms", 0.1);
  Eigen::VectorXd x;
  if (gen == "speech") {
    x = synth_speech_like(seconds, fs, seed);
  } else if (gen == "music") {
    x = synth_music_like(seconds, fs, seed);
  } else if (gen == "noise") {
    x = white_noise(static_cast<Eigen::Index>(std::llround(seconds * fs)), seed);
  } else {
    throw ValidationError("scene: field '" + field(path, "generator") + "': unknown generator '" + gen +
                          "' (expected speech, music or noise)");
  }
  normalize_rms(x, rms);
  return x;
}

std::vector<Keyframe> parse_trajectory(const json& src, const std::string& path) {
  std::vector<Keyframe> out;
  if (src.contains("trajectory")) {
    const json& t = src.at("trajectory");
    if (!t.is_array()) throw ValidationError("scene: field '" + field(path, "trajectory") + "' must be an array");
    for (std::size_t i = 0; i < t.size(); ++i) {
      const std::string p = field(path, "trajectory") + "[" + std::to_string(i) + "]";
      if (t[i].is_array()) {
        if (t[i].size() != 2 || !t[i][0].is_number() || !t[i][1].is_number())
          throw ValidationError("scene: field '" + p + "' must be [time, azimuth]");
        out.push_back({t[i][0].get<double>(), t[i][1].get<double>()});
      } else if (t[i].is_object()) {
        out.push_back({get_number(t[i], p, "time", std::nullopt), get_number(t[i], p, "azimuth", std::nullopt)});
      } else {
        throw ValidationError("scene: field '" + p + "' must be [time, azimuth] or {time, azimuth}");
      }
    }
  } else {
    out.push_back({0.0, get_number(src, path, "azimuth", std::nullopt)});
  }
  try {
    validate_trajectory(out);
  } catch (const ValidationError& e) {
    throw ValidationError("scene: field '" + path + "." + e.what() + "'");
  }
  return out;
}

void parse_setup(const json& doc, RoomSpec& room, ArrayGeometry& geometry) {
  if (doc.contains("room")) {
    const json& r = doc.at("room");
    if (!r.is_object()) throw ValidationError("scene: field 'room' must be an object");
    room.dimensions = get_vec3(r, "room", "dimensions", room.dimensions);
    room.t60 = get_number(r, "room", "t60", 0.0);
    room.array_center = get_vec3(r, "room", "array_center", room.array_center);
    room.speed_of_sound = get_number(r, "room", "speed_of_sound", kSpeedOfSound);
    room.max_image_order = static_cast<int>(get_number(r, "room", "max_image_order", -1.0));
    if (r.contains("absorption")) {
      const std::string a = r.at("absorption").is_string() ? r.at("absorption").get<std::string>() : "";
      if (a == "sabine") room.absorption = AbsorptionModel::sabine;
      else if (a == "eyring") room.absorption = AbsorptionModel::eyring;
      else if (a == "calibrated") room.absorption = AbsorptionModel::calibrated;
      else throw ValidationError("scene: field 'room.absorption' must be sabine, eyring or calibrated");
    }
  }
  if (doc.contains("geometry")) {
    const json& g = doc.at("geometry");
    if (g.contains("mic_positions")) {
      geometry.mic_positions.clear();
      const json& m = g.at("mic_positions");
      if (!m.is_array()) throw ValidationError("scene: field 'geometry.mic_positions' must be an array");
      for (std::size_t i = 0; i < m.size(); ++i) {
        json wrap = {{"p", m[i]}};
        geometry.mic_positions.push_back(
            get_vec3(wrap, "geometry.mic_positions[" + std::to_string(i) + "]", "p", Vec3::Zero()));
      }
    } else if (g.contains("uca")) {
      const json& u = g.at("uca");
      geometry = ArrayGeometry::uca(static_cast<int>(get_number(u, "geometry.uca", "n", 6.0)),
                                      get_number(u, "geometry.uca", "radius", 0.05));
    } else {
      throw ValidationError("scene: field 'geometry' needs 'uca' or 'mic_positions'");
    }
  }

}

}  // namespace

Scene parse_scene(const std::string& text, const std::filesystem::path& base, HrirSet* hrirs) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("scene: JSON parse error: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("scene: top level must be an object");
  Scene s;
  s.sample_rate = static_cast<int>(get_number(doc, "", "sample_rate", 16000.0));
  s.seed = static_cast<std::uint64_t>(get_number(doc, "", "seed", 0.0));
  s.sar_db = get_number(doc, "", "sar_db", 15.0);
  s.snr_db = get_number(doc, "", "snr_db", 25.0);
  s.early_ms = get_number(doc, "", "early_ms", 50.0);
  s.ambience_distance = get_number(doc, "", "ambience_distance", 1.5);
  if (doc.contains("sensor_noise")) {
    if (!doc.at("sensor_noise").is_boolean()) throw ValidationError("scene: field 'sensor_noise' must be a boolean");
    s.sensor_noise = doc.at("sensor_noise").get<bool>();
  }
  const double duration = get_number(doc, "", "duration_s", 0.0);
  if (duration < 0.0) throw ValidationError("scene: field 'duration_s' must be >= 0");
  s.length = static_cast<Eigen::Index>(std::llround(duration * s.sample_rate));
  const double default_seconds = duration > 0.0 ? duration : 5.0;

  parse_setup(doc, s.room, s.geometry);

  HrirSet set;
  const json hrir = doc.contains("hrir") ? doc.at("hrir") : json::object();
  if (hrir.contains("manifest")) {
    if (!hrir.at("manifest").is_string()) throw ValidationError("scene: field 'hrir.manifest' must be a path");
    std::filesystem::path p = hrir.at("manifest").get<std::string>();
    if (p.is_relative()) p = base / p;
    set = import_hrir(p, s.sample_rate);
  } else {
    const json syn = hrir.contains("synthetic") ? hrir.at("synthetic") : json::object();
    set = synth_spherical_hrir(static_cast<int>(get_number(syn, "hrir.synthetic", "n_directions", 72.0)),
                               get_number(syn, "hrir.synthetic", "head_radius", 0.0875), s.sample_rate);
  }

  if (!doc.contains("sources") || !doc.at("sources").is_array())
    throw ValidationError("scene: field 'sources' must be an array");
  const json& sources = doc.at("sources");
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const std::string p = "sources[" + std::to_string(i) + "]";
    const json& src = sources[i];
    if (!src.is_object()) throw ValidationError("scene: field '" + p + "' must be an object");
    if (!src.contains("signal")) throw ValidationError("scene: missing field '" + p + ".signal'");
    SceneSource ss;
    ss.signal = load_signal(src.at("signal"), p + ".signal", base, s.sample_rate, default_seconds);
    ss.distance = get_number(src, p, "distance", 1.5);
    ss.trajectory = parse_trajectory(src, p);
    s.sources.push_back(std::move(ss));
  }
  if (doc.contains("ambience")) {
    const json& amb = doc.at("ambience");
    if (!amb.is_array()) throw ValidationError("scene: field 'ambience' must be an array");
    for (std::size_t i = 0; i < amb.size(); ++i) {
      const std::string p = "ambience[" + std::to_string(i) + "]";
      if (!amb[i].is_object() || !amb[i].contains("signal"))
        throw ValidationError("scene: field '" + p + "' must be an object with a 'signal'");
      AmbienceSource a;
      a.signal = load_signal(amb[i].at("signal"), p + ".signal", base, s.sample_rate, default_seconds);
      // Unplaced clips are spread evenly over the HRIR grid.
      const std::size_t slot = static_cast<std::size_t>(i) * static_cast<std::size_t>(set.size()) / amb.size();
      a.azimuth = get_number(amb[i], p, "azimuth", set.azimuths[slot]);
      s.ambience.push_back(std::move(a));
    }
  }
  s.validate();
  if (hrirs) *hrirs = std::move(set);
  return s;
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Scene load_scene(const std::filesystem::path& path, HrirSet* hrirs) {
  const std::string text = slurp(path);
  try {
    return parse_scene(text, path.parent_path(), hrirs);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

AcousticSetup load_setup(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  AcousticSetup setup;
  try {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ValidationError(std::string("JSON parse error: ") + e.what());
    }
    if (!doc.is_object()) throw ValidationError("top level must be an object");
    parse_setup(doc, setup.room, setup.geometry);
    setup.room.validate();
    setup.geometry.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return setup;
}

}  // namespace mmr
