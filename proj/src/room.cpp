#include "mmr/room.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <tuple>

#include "mmr/error.hpp"
#include "mmr/signal.hpp"

namespace mmr {

void ArrayGeometry::validate() const {
  if (mic_positions.empty()) throw ValidationError("array geometry needs at least one microphone");
  for (std::size_t i = 0; i < mic_positions.size(); ++i) {
    if (!mic_positions[i].allFinite()) throw ValidationError("array geometry: non-finite position");
    for (std::size_t j = i + 1; j < mic_positions.size(); ++j)
      if ((mic_positions[i] - mic_positions[j]).norm() < 1e-9)
        throw ValidationError("array geometry: microphones " + std::to_string(i) + " and " +
                              std::to_string(j) + " coincide");
  }
}

ArrayGeometry ArrayGeometry::uca(int n, double radius) {
  if (n < 1) throw ValidationError("uca: need at least one microphone");
  if (!(radius > 0.0)) throw ValidationError("uca: radius must be positive");
  ArrayGeometry g;
  for (int i = 0; i < n; ++i) {
    const double phi = 2.0 * kPi * i / n;
    g.mic_positions.emplace_back(radius * std::cos(phi), radius * std::sin(phi), 0.0);
  }
  return g;
}

bool RoomSpec::contains(const Vec3& p) const {
  return (p.array() > 0.0).all() && (p.array() < dimensions.array()).all();
}

void RoomSpec::validate() const {
  if (!(dimensions.array() > 0.0).all()) throw ValidationError("room: dimensions must be positive");
  if (!(t60 >= 0.0) || !std::isfinite(t60)) throw ValidationError("room: t60 must be >= 0");
  if (!(speed_of_sound > 0.0)) throw ValidationError("room: speed_of_sound must be positive");
  if (!contains(array_center)) throw ValidationError("room: array_center lies outside the room");
  if (t60 > 0.0) (void)reflection_coefficient();
}

namespace {

struct ImageRecord {
  double dist;
  int reflections;
};

std::vector<ImageRecord> enumerate_images(const RoomSpec& room, const Vec3& src, const Vec3& rcv,
                                          double max_dist);


// Amplitude-domain proxy: nearest-sample impulses at 16 kHz from a reference source 1.5 m
// from the array center at 30 degrees, received at the center. Coincident images (symmetric
// placements) add coherently, as they do in the full synthesis.
double solve_reflection(const RoomSpec& room) {
  constexpr int fs = 16000;
  const Vec3 rcv = room.array_center;
  Vec3 src = room.source_position(30.0, 1.5);
  if (!room.contains(src)) src = rcv + 0.5 * (room.dimensions / 2.0 - rcv) + Vec3(0.3, 0.2, 0.0);
  if (!room.contains(src)) throw ValidationError("room: cannot place calibration source");
  const double c = room.speed_of_sound;
  const double span = room.t60 + (src - rcv).norm() / c;
  const std::vector<ImageRecord> images = enumerate_images(room, src, rcv, span * c);
  const int order = room.image_order();
  const auto n_taps = static_cast<Eigen::Index>(std::ceil(span * fs)) + 1;

  const auto decay_for = [&](double log_beta) {
    Eigen::VectorXd h = Eigen::VectorXd::Zero(n_taps);
    for (const ImageRecord& im : images) {
      if (im.reflections > order) continue;
      const auto n = static_cast<Eigen::Index>(std::lround(im.dist / c * fs));
      if (n >= n_taps) continue;
      h(n) += std::exp(im.reflections * log_beta) / im.dist;
    }
    return estimate_t60(h, fs);
  };

  // Decay is monotone in beta only away from the lossless limit.
  double lo = std::log(1e-3), hi = std::log(0.995);
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    double t = 0.0;
    try {
      t = decay_for(mid);
    } catch (const NumericalError&) {
      t = 0.0;
    }
    (t < room.t60 ? lo : hi) = mid;
  }
  if (hi >= std::log(0.995) - 1e-9)
    throw ValidationError("room: t60 of " + std::to_string(room.t60) + " s is out of reach for this room");
  return std::exp(0.5 * (lo + hi));
}

}  // namespace

double calibrated_reflection(const RoomSpec& room) {
  using Key = std::tuple<double, double, double, double, double, double, double, double, int>;
  static std::mutex mutex;
  static std::map<Key, double> cache;
  const Key key{room.dimensions.x(), room.dimensions.y(), room.dimensions.z(),
                room.array_center.x(), room.array_center.y(), room.array_center.z(),
                room.t60, room.speed_of_sound, room.image_order()};
  {
    std::lock_guard<std::mutex> lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  const double beta = solve_reflection(room);
  std::lock_guard<std::mutex> lock(mutex);
  cache.emplace(key, beta);
  return beta;
}

int RoomSpec::image_order() const {
  if (max_image_order >= 0) return max_image_order;
  return static_cast<int>(std::ceil(speed_of_sound * t60 / dimensions.minCoeff())) + 1;
}

double RoomSpec::reflection_coefficient() const {
  if (t60 <= 0.0) return 0.0;
  const Vec3& d = dimensions;
  const double volume = d.prod();
  const double surface = 2.0 * (d.x() * d.y() + d.y() * d.z() + d.x() * d.z());
  // 24 ln(10) V / (c S T60): the Sabine absorption coefficient.
  const double sabine = 24.0 * std::log(10.0) * volume / (speed_of_sound * surface * t60);
  if (absorption == AbsorptionModel::calibrated) return calibrated_reflection(*this);
  double alpha = sabine;
  if (absorption == AbsorptionModel::eyring) alpha = 1.0 - std::exp(-sabine);
  if (alpha >= 1.0)
    throw ValidationError("room: t60 of " + std::to_string(t60) +
                          " s is too short for the room size (absorption coefficient >= 1)");
  return std::sqrt(1.0 - alpha);
}

Vec3 RoomSpec::source_position(double azimuth_deg, double distance) const {
  const double az = azimuth_deg * kPi / 180.0;
  return array_center + Vec3(distance * std::cos(az), distance * std::sin(az), 0.0);
}

Eigen::Index rir_length(const RoomSpec& room, double max_direct_delay_samples, int sample_rate) {
  const double decay = std::ceil(room.t60 * sample_rate);
  return static_cast<Eigen::Index>(decay + std::ceil(max_direct_delay_samples)) +
         kFractionalDelayTaps / 2 + 1;
}

namespace {

struct AxisImage {
  double offset;  // image coordinate minus receiver coordinate, meters
  int reflections;
};

// Image coordinates along one axis: (1 - 2q) s + 2 n L for |n| <= n_max, q in {0, 1}.
std::vector<AxisImage> axis_images(double s, double r, double length, int n_max) {
  std::vector<AxisImage> out;
  out.reserve(static_cast<std::size_t>(4 * n_max + 2));
  for (int n = -n_max; n <= n_max; ++n)
    for (int q = 0; q <= 1; ++q)
      out.push_back({(1 - 2 * q) * s + 2.0 * n * length - r, std::abs(n - q) + std::abs(n)});
  std::sort(out.begin(), out.end(),
            [](const AxisImage& a, const AxisImage& b) { return std::abs(a.offset) < std::abs(b.offset); });
  return out;
}

std::vector<ImageRecord> enumerate_images(const RoomSpec& room, const Vec3& src, const Vec3& rcv,
                                          double max_dist) {
  std::vector<std::vector<AxisImage>> axes(3);
  for (int a = 0; a < 3; ++a) {
    const int n_max = static_cast<int>(std::ceil(max_dist / (2.0 * room.dimensions(a)))) + 1;
    axes[static_cast<std::size_t>(a)] = axis_images(src(a), rcv(a), room.dimensions(a), n_max);
  }
  std::vector<ImageRecord> out;
  const double max_d2 = max_dist * max_dist;
  for (const AxisImage& ix : axes[0]) {
    const double dx2 = ix.offset * ix.offset;
    if (dx2 > max_d2) break;
    for (const AxisImage& iy : axes[1]) {
      const double dxy2 = dx2 + iy.offset * iy.offset;
      if (dxy2 > max_d2) break;
      for (const AxisImage& iz : axes[2]) {
        const double d2 = dxy2 + iz.offset * iz.offset;
        if (d2 > max_d2) break;
        out.push_back({std::sqrt(d2), ix.reflections + iy.reflections + iz.reflections});
      }
    }
  }
  return out;
}

// Windowed-sinc kernel tabulated at 1/kSteps sample resolution for reflected images.
class KernelTable {
 public:
  static constexpr int kSteps = 256;
  static const KernelTable& get() {
    static const KernelTable table;
    return table;
  }
  const double* row(int step) const { return rows_.data() + static_cast<std::size_t>(step) * kFractionalDelayTaps; }

 private:
  KernelTable() : rows_(static_cast<std::size_t>(kSteps + 1) * kFractionalDelayTaps, 0.0) {
    constexpr int half = kFractionalDelayTaps / 2;
    for (int s = 0; s <= kSteps; ++s) {
      Eigen::VectorXd k = Eigen::VectorXd::Zero(kFractionalDelayTaps + 1);
      add_fractional_impulse(k, half + static_cast<double>(s) / kSteps, 1.0);
      for (int n = 0; n < kFractionalDelayTaps; ++n) rows_[static_cast<std::size_t>(s) * kFractionalDelayTaps + n] = k(n);
    }
  }
  std::vector<double> rows_;
};

void add_tabulated_impulse(Eigen::Ref<Eigen::VectorXd> out, double delay, double gain) {
  constexpr int half = kFractionalDelayTaps / 2;
  const double scaled = std::round(delay * KernelTable::kSteps);
  const auto whole = static_cast<Eigen::Index>(std::floor(scaled / KernelTable::kSteps));
  const int step = static_cast<int>(scaled - static_cast<double>(whole) * KernelTable::kSteps);
  const double* k = KernelTable::get().row(step);
  const Eigen::Index first = whole - half;
  const Eigen::Index lo = std::max<Eigen::Index>(0, -first);
  const Eigen::Index hi = std::min<Eigen::Index>(kFractionalDelayTaps, out.size() - first);
  double* dst = out.data() + first;
  for (Eigen::Index n = lo; n < hi; ++n) dst[n] += gain * k[n];
}

}  // namespace

int worker_threads() {
  if (const char* env = std::getenv("MMR_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Rir simulate_rir_points(const RoomSpec& room, const Vec3& source, const std::vector<Vec3>& receivers,
                        int sample_rate) {
  room.validate();
  if (sample_rate <= 0) throw ValidationError("simulate_rir: sample_rate must be positive");
  if (!room.contains(source)) throw ValidationError("simulate_rir: source lies outside the room");
  for (const Vec3& r : receivers)
    if (!room.contains(r)) throw ValidationError("simulate_rir: receiver lies outside the room");

  const double c = room.speed_of_sound;
  double max_direct = 0.0;
  for (const Vec3& r : receivers) max_direct = std::max(max_direct, (source - r).norm() * sample_rate / c);
  const Eigen::Index len = rir_length(room, max_direct, sample_rate);
  const double beta = room.reflection_coefficient();
  const int order = room.image_order();
  const double max_dist = static_cast<double>(len) * c / sample_rate;

  // Reflection gains beta^k, looked up by total reflection count.
  const int max_refl = 6 * (static_cast<int>(max_dist / room.dimensions.minCoeff()) + 3);
  std::vector<double> beta_pow(static_cast<std::size_t>(max_refl + 1));
  for (int k = 0; k <= max_refl; ++k) beta_pow[static_cast<std::size_t>(k)] = k == 0 ? 1.0 : std::pow(beta, k);

  Rir out;
  out.sample_rate = sample_rate;
  out.taps = Signald::Zero(len, static_cast<Eigen::Index>(receivers.size()));
  double kept_energy = 0.0, dropped_energy = 0.0;

  for (std::size_t m = 0; m < receivers.size(); ++m) {
    const Vec3& rcv = receivers[m];
    Eigen::Ref<Eigen::VectorXd> col = out.taps.col(static_cast<Eigen::Index>(m));
    if (beta == 0.0) {
      const double dist = (source - rcv).norm();
      add_fractional_impulse(col, dist * sample_rate / c, 1.0 / (4.0 * kPi * dist));
      kept_energy += 1.0 / (16.0 * kPi * kPi * dist * dist);
      continue;
    }
    std::vector<std::vector<AxisImage>> axes(3);
    for (int a = 0; a < 3; ++a) {
      const int n_max = static_cast<int>(std::ceil(max_dist / (2.0 * room.dimensions(a)))) + 1;
      axes[static_cast<std::size_t>(a)] = axis_images(source(a), rcv(a), room.dimensions(a), n_max);
    }
    const double max_d2 = max_dist * max_dist;
    for (const AxisImage& ix : axes[0]) {
      const double dx2 = ix.offset * ix.offset;
      if (dx2 > max_d2) break;
      for (const AxisImage& iy : axes[1]) {
        const double dxy2 = dx2 + iy.offset * iy.offset;
        if (dxy2 > max_d2) break;
        for (const AxisImage& iz : axes[2]) {
          const double d2 = dxy2 + iz.offset * iz.offset;
          if (d2 > max_d2) break;
          const int refl = ix.reflections + iy.reflections + iz.reflections;
          const double dist = std::sqrt(d2);
          const double gain = beta_pow[static_cast<std::size_t>(std::min(refl, max_refl))] / (4.0 * kPi * dist);
          if (refl > order) {
            dropped_energy += gain * gain;
            continue;
          }
          kept_energy += gain * gain;
          if (refl == 0)
            add_fractional_impulse(col, dist * sample_rate / c, gain);
          else
            add_tabulated_impulse(col, dist * sample_rate / c, gain);
        }
      }
    }
  }
  const double total = kept_energy + dropped_energy;
  out.truncated_energy_fraction = total > 0.0 ? dropped_energy / total : 0.0;
  out.order_truncation_warning = out.truncated_energy_fraction > 0.05;
  return out;
}

Rir simulate_rir(const RoomSpec& room, const ArrayGeometry& geom, double src_azimuth_deg,
                 double src_distance, int sample_rate) {
  geom.validate();
  if (!(src_distance > 0.0)) throw ValidationError("simulate_rir: source distance must be positive");
  std::vector<Vec3> receivers;
  for (const Vec3& p : geom.mic_positions) receivers.push_back(room.array_center + p);
  return simulate_rir_points(room, room.source_position(src_azimuth_deg, src_distance), receivers,
                             sample_rate);
}

Eigen::VectorXd simulate_center_rir(const RoomSpec& room, double src_azimuth_deg, double src_distance,
                                    int sample_rate) {
  return simulate_rir_points(room, room.source_position(src_azimuth_deg, src_distance),
                             {room.array_center}, sample_rate)
      .taps.col(0);
}

Eigen::VectorXd schroeder_curve_db(const Eigen::Ref<const Eigen::VectorXd>& rir) {
  Eigen::VectorXd edc(rir.size());
  double acc = 0.0;
  for (Eigen::Index i = rir.size() - 1; i >= 0; --i) {
    acc += rir(i) * rir(i);
    edc(i) = acc;
  }
  const double total = acc > 0.0 ? acc : 1.0;
  for (Eigen::Index i = 0; i < edc.size(); ++i)
    edc(i) = 10.0 * std::log10(std::max(edc(i) / total, 1e-300));
  return edc;
}

double estimate_t60(const Eigen::Ref<const Eigen::VectorXd>& rir, int sample_rate, double upper_db,
                    double lower_db) {
  const Eigen::VectorXd edc = schroeder_curve_db(rir);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (Eigen::Index i = 0; i < edc.size(); ++i) {
    if (edc(i) > upper_db || edc(i) < lower_db) continue;
    const double t = static_cast<double>(i) / sample_rate;
    sx += t;
    sy += edc(i);
    sxx += t * t;
    sxy += t * edc(i);
    ++n;
  }
  if (n < 2) throw NumericalError("estimate_t60: decay range not covered by the impulse response");
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  if (!(slope < 0.0)) throw NumericalError("estimate_t60: energy decay is not decreasing");
  return -60.0 / slope;
}

}  // namespace mmr
