#pragma once

#include <filesystem>
#include <vector>

#include "mmr/types.hpp"

namespace mmr {

// Horizontal-plane HRIR set. Azimuth is counter-clockwise from the front (+x), so 90 degrees
// is the listener's left.
struct HrirSet {
  int sample_rate = 0;
  std::vector<double> azimuths;  // degrees, strictly increasing in [0, 360)
  Eigen::MatrixXd left;          // taps x directions
  Eigen::MatrixXd right;

  int size() const { return static_cast<int>(azimuths.size()); }
  int taps() const { return static_cast<int>(left.rows()); }
  void validate() const;
  // Index of the grid direction closest to `azimuth_deg` on the circle.
  int nearest(double azimuth_deg) const;
};

// Wraps to (-180, 180].
double wrap_degrees(double deg);
// Unsigned angular distance in degrees, in [0, 180].
double angular_distance(double a_deg, double b_deg);

struct SphericalHeadOptions {
  double speed_of_sound = kSpeedOfSound;
  int taps = 128;
  int bulk_delay = 40;   // samples, common to both ears
  int half_width = 32;   // taper half width around each ear's arrival
};

// Rigid-sphere stand-in: Woodworth ITD (a/c)(lat + sin lat) split symmetrically between the
// ears, plus the magnitude of a first-order head-shadow filter per ear (zero phase, so the
// interaural delay is carried by the arrival times alone).
HrirSet synth_spherical_hrir(int n_directions, double head_radius, int sample_rate,
                             const SphericalHeadOptions& options = {});

// Woodworth interaural time difference in seconds, positive when the left ear leads.
double woodworth_itd(double azimuth_deg, double head_radius, double speed_of_sound = kSpeedOfSound);

// Manifest: {"entries": [{"azimuth_deg": a, "wav_path": p}, ...]} (or a bare array of entries);
// paths relative to the manifest. Each WAV is stereo (L, R).
HrirSet import_hrir(const std::filesystem::path& manifest, int target_rate = 16000);

// Writes one stereo float32 WAV per direction plus manifest.json into `dir`.
void export_hrir(const HrirSet& set, const std::filesystem::path& dir);

}  // namespace mmr
