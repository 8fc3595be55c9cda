#include "mmr/hrir.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <unsupported/Eigen/FFT>

#include "json.hpp"
#include "mmr/error.hpp"
#include "mmr/signal.hpp"
#include "mmr/wav.hpp"

namespace mmr {

double wrap_degrees(double deg) {
  double w = std::remainder(deg, 360.0);
  if (w <= -180.0) w += 360.0;
  return w;
}

double angular_distance(double a_deg, double b_deg) { return std::abs(wrap_degrees(a_deg - b_deg)); }

void HrirSet::validate() const {
  if (sample_rate <= 0) throw ValidationError("hrir: sample_rate must be positive");
  if (azimuths.size() < 2) throw ValidationError("hrir: need at least two directions");
  if (left.cols() != size() || right.cols() != size() || left.rows() != right.rows() || left.rows() == 0)
    throw ValidationError("hrir: left/right HRIR matrices inconsistent with direction count");
  for (std::size_t i = 0; i < azimuths.size(); ++i) {
    if (azimuths[i] < 0.0 || azimuths[i] >= 360.0)
      throw ValidationError("hrir: azimuth out of [0, 360): " + std::to_string(azimuths[i]));
    if (i > 0 && !(azimuths[i] > azimuths[i - 1]))
      throw ValidationError("hrir: azimuths must be strictly increasing");
  }
  if (!left.allFinite() || !right.allFinite()) throw ValidationError("hrir: non-finite taps");
}

int HrirSet::nearest(double azimuth_deg) const {
  int best = 0;
  double best_d = 1e300;
  for (int i = 0; i < size(); ++i) {
    const double d = angular_distance(azimuths[static_cast<std::size_t>(i)], azimuth_deg);
    if (d < best_d - 1e-12) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

double woodworth_itd(double azimuth_deg, double head_radius, double speed_of_sound) {
  const double lateral = std::asin(std::sin(wrap_degrees(azimuth_deg) * kPi / 180.0));
  return head_radius / speed_of_sound * (lateral + std::sin(lateral));
}

namespace {

// Brown-Duda style head shadow magnitude for an ear seeing the source at `ear_angle_deg`
// from its axis.
double shadow_magnitude(double omega, double ear_angle_deg, double head_radius, double c) {
  constexpr double alpha_min = 0.1;
  constexpr double theta_min = 150.0;
  const double alpha = (1.0 + alpha_min / 2.0) + (1.0 - alpha_min / 2.0) * std::cos(ear_angle_deg / theta_min * kPi);
  const double x = omega * head_radius / (2.0 * c);
  return std::sqrt((1.0 + alpha * alpha * x * x) / (1.0 + x * x));
}

Eigen::VectorXd ear_response(double delay, double ear_angle_deg, double head_radius, int sample_rate,
                             const SphericalHeadOptions& opt) {
  constexpr int nfft = 1024;
  std::vector<std::complex<double>> spec(nfft / 2 + 1);
  for (int k = 0; k <= nfft / 2; ++k) {
    const double omega = 2.0 * kPi * k * sample_rate / nfft;
    const double mag = shadow_magnitude(omega, ear_angle_deg, head_radius, opt.speed_of_sound);
    // Nyquist carried as a real value so the delay stays unbiased.
    spec[static_cast<std::size_t>(k)] =
        k == nfft / 2 ? std::complex<double>(mag * std::cos(kPi * delay), 0.0)
                      : std::polar(mag, -2.0 * kPi * k * delay / nfft);
  }
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> h;
  fft.inv(h, spec, nfft);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(opt.taps);
  for (int n = 0; n < opt.taps; ++n) {
    const double x = (n - delay) / opt.half_width;
    if (std::abs(x) >= 1.0) continue;
    out(n) = h[static_cast<std::size_t>(n)] * 0.5 * (1.0 + std::cos(kPi * x));
  }
  return out;
}

}  // namespace

HrirSet synth_spherical_hrir(int n_directions, double head_radius, int sample_rate,
                             const SphericalHeadOptions& opt) {
  if (n_directions < 2) throw ValidationError("synth_spherical_hrir: need at least two directions");
  if (!(head_radius > 0.0)) throw ValidationError("synth_spherical_hrir: head_radius must be positive");
  if (sample_rate <= 0) throw ValidationError("synth_spherical_hrir: sample_rate must be positive");
  const double max_half_itd = head_radius / opt.speed_of_sound * (kPi / 2.0 + 1.0) * sample_rate / 2.0;
  if (opt.bulk_delay - max_half_itd < opt.half_width || opt.bulk_delay + max_half_itd + opt.half_width > opt.taps)
    throw ValidationError("synth_spherical_hrir: taps/bulk_delay too small for the head radius");

  HrirSet set;
  set.sample_rate = sample_rate;
  set.left.resize(opt.taps, n_directions);
  set.right.resize(opt.taps, n_directions);
  for (int d = 0; d < n_directions; ++d) {
    const double az = 360.0 * d / n_directions;
    set.azimuths.push_back(az);
    const double half_itd = 0.5 * woodworth_itd(az, head_radius, opt.speed_of_sound) * sample_rate;
    const double wrapped = wrap_degrees(az);
    set.left.col(d) = ear_response(opt.bulk_delay - half_itd, std::abs(wrap_degrees(wrapped - 90.0)),
                                   head_radius, sample_rate, opt);
    set.right.col(d) = ear_response(opt.bulk_delay + half_itd, std::abs(wrap_degrees(wrapped + 90.0)),
                                    head_radius, sample_rate, opt);
  }
  return set;
}

HrirSet import_hrir(const std::filesystem::path& manifest, int target_rate) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open HRIR manifest: " + manifest.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("HRIR manifest " + manifest.string() + ": " + e.what());
  }
  const nlohmann::json& entries = doc.is_array() ? doc : doc.value("entries", nlohmann::json::array());
  if (!entries.is_array() || entries.empty())
    throw ValidationError("HRIR manifest " + manifest.string() + ": no entries");
  if (entries.size() < 2)
    throw ValidationError("HRIR manifest " + manifest.string() + ": need at least two directions");

  struct Loaded {
    double azimuth;
    std::string path;
    WavData wav;
  };
  std::vector<Loaded> loaded;
  const std::filesystem::path base = manifest.parent_path();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (!e.contains("azimuth_deg") || !e.contains("wav_path"))
      throw ValidationError("HRIR manifest entries[" + std::to_string(i) + "]: needs azimuth_deg and wav_path");
    const std::filesystem::path p = base / e.at("wav_path").get<std::string>();
    WavData wav = read_wav(p);
    if (wav.samples.cols() != 2)
      throw ValidationError("HRIR file " + p.string() + ": expected 2 channels, found " +
                            std::to_string(wav.samples.cols()));
    if (wav.samples.rows() == 0) throw ValidationError("HRIR file " + p.string() + ": no samples");
    double az = std::fmod(e.at("azimuth_deg").get<double>(), 360.0);
    if (az < 0.0) az += 360.0;
    loaded.push_back({az, p.string(), std::move(wav)});
  }
  std::sort(loaded.begin(), loaded.end(), [](const Loaded& a, const Loaded& b) { return a.azimuth < b.azimuth; });

  const Eigen::Index taps = loaded.front().wav.samples.rows();
  const int rate = loaded.front().wav.sample_rate;
  for (const Loaded& l : loaded) {
    if (l.wav.samples.rows() != taps)
      throw ValidationError("HRIR file " + l.path + ": length " + std::to_string(l.wav.samples.rows()) +
                            " differs from " + std::to_string(taps));
    if (l.wav.sample_rate != rate)
      throw ValidationError("HRIR file " + l.path + ": sample rate differs from the other files");
  }
  const double spacing = 360.0 / static_cast<double>(loaded.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    const double expected = loaded.front().azimuth + spacing * static_cast<double>(i);
    if (std::abs(loaded[i].azimuth - expected) > 1e-6)
      throw ValidationError("HRIR manifest " + manifest.string() + ": directions are not uniformly spaced (" +
                            std::to_string(loaded[i].azimuth) + " deg where " + std::to_string(expected) +
                            " expected)");
  }

  HrirSet set;
  set.sample_rate = target_rate;
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    const Signald ir = resample_integer(loaded[i].wav.samples, rate, target_rate);
    if (i == 0) {
      set.left.resize(ir.rows(), static_cast<Eigen::Index>(loaded.size()));
      set.right.resize(ir.rows(), static_cast<Eigen::Index>(loaded.size()));
    }
    set.azimuths.push_back(loaded[i].azimuth);
    set.left.col(static_cast<Eigen::Index>(i)) = ir.col(0);
    set.right.col(static_cast<Eigen::Index>(i)) = ir.col(1);
  }
  set.validate();
  return set;
}

void export_hrir(const HrirSet& set, const std::filesystem::path& dir) {
  set.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json doc;
  doc["sample_rate"] = set.sample_rate;
  doc["entries"] = nlohmann::json::array();
  for (int d = 0; d < set.size(); ++d) {
    char name[32];
    std::snprintf(name, sizeof name, "hrir_%05.1f.wav", set.azimuths[static_cast<std::size_t>(d)]);
    Signald ir(set.taps(), 2);
    ir.col(0) = set.left.col(d);
    ir.col(1) = set.right.col(d);
    write_wav(dir / name, ir, set.sample_rate, WavEncoding::float32);
    doc["entries"].push_back({{"azimuth_deg", set.azimuths[static_cast<std::size_t>(d)]}, {"wav_path", name}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << doc.dump(2) << "\n";
}

}  // namespace mmr
