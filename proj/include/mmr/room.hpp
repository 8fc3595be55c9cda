#pragma once

#include <vector>

#include "mmr/types.hpp"

namespace mmr {

// Microphone positions in meters, relative to the array center.
struct ArrayGeometry {
  std::vector<Vec3> mic_positions;

  int size() const { return static_cast<int>(mic_positions.size()); }
  void validate() const;

  // Uniform circular array in the horizontal plane, mic i at angle 360 i / n degrees.
  static ArrayGeometry uca(int n = 6, double radius = 0.05);
};

// sabine/eyring: closed-form mapping with uniform absorption on the six walls.
// calibrated: reflection coefficient solved so that an image-source proxy RIR of this room
// (Schroeder curve, -5..-35 dB line fit) extrapolates to -60 dB at exactly t60.
enum class AbsorptionModel { sabine, eyring, calibrated };

struct RoomSpec {
  Vec3 dimensions{6.0, 5.0, 3.0};
  double t60 = 0.0;  // seconds; 0 means anechoic
  Vec3 array_center{3.0, 2.5, 1.5};
  double speed_of_sound = kSpeedOfSound;
  int max_image_order = -1;  // -1: ceil(c * t60 / min dimension) + 1
  AbsorptionModel absorption = AbsorptionModel::calibrated;

  void validate() const;
  bool contains(const Vec3& p) const;
  int image_order() const;
  // Uniform pressure reflection coefficient for all six walls.
  double reflection_coefficient() const;
  // Position of a source at `azimuth_deg` (counter-clockwise from +x) and `distance` in the
  // horizontal plane through the array center.
  Vec3 source_position(double azimuth_deg, double distance) const;
};

// Reflection coefficient for AbsorptionModel::calibrated (cached per room and t60).
double calibrated_reflection(const RoomSpec& room);

struct Rir {
  int sample_rate = 0;
  Signald taps;  // samples x receivers
  double truncated_energy_fraction = 0.0;  // energy of in-range images dropped by the order cap
  bool order_truncation_warning = false;   // set when the fraction exceeds 5 %
};

// Image-source RIRs from one source to a set of absolute receiver positions.
Rir simulate_rir_points(const RoomSpec& room, const Vec3& source, const std::vector<Vec3>& receivers,
                        int sample_rate);

// RIR from a source at (azimuth, distance) around the array center to each microphone.
Rir simulate_rir(const RoomSpec& room, const ArrayGeometry& geom, double src_azimuth_deg,
                 double src_distance, int sample_rate);

// Same source, omnidirectional receiver at the array center.
Eigen::VectorXd simulate_center_rir(const RoomSpec& room, double src_azimuth_deg, double src_distance,
                                    int sample_rate);

// RIR length used for a room: covers the decay plus the latest direct path.
Eigen::Index rir_length(const RoomSpec& room, double max_direct_delay_samples, int sample_rate);

// Backward-integrated energy decay in dB relative to total energy.
Eigen::VectorXd schroeder_curve_db(const Eigen::Ref<const Eigen::VectorXd>& rir);

// Decay time extrapolated to -60 dB from a line fit of the Schroeder curve over
// [upper_db, lower_db] (defaults -5 dB .. -35 dB).
double estimate_t60(const Eigen::Ref<const Eigen::VectorXd>& rir, int sample_rate,
                    double upper_db = -5.0, double lower_db = -35.0);

// Environment-controlled worker count (MMR_THREADS), at least 1.
int worker_threads();

}  // namespace mmr
