#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mmr/hrir.hpp"
#include "mmr/room.hpp"
#include "mmr/stft.hpp"

namespace mmr {

struct Keyframe {
  double time = 0.0;     // seconds
  double azimuth = 0.0;  // degrees in [0, 360)
};

// Azimuth at `time`: linear between keyframes along the shorter arc, held outside the range.
double trajectory_azimuth(const std::vector<Keyframe>& trajectory, double time);
void validate_trajectory(const std::vector<Keyframe>& trajectory);

struct SceneSource {
  Eigen::VectorXd signal;
  std::vector<Keyframe> trajectory;
  double distance = 1.5;
};

struct AmbienceSource {
  Eigen::VectorXd signal;
  double azimuth = 0.0;
};

struct Scene {
  std::vector<SceneSource> sources;
  std::vector<AmbienceSource> ambience;
  double sar_db = 15.0;
  double snr_db = 25.0;
  bool sensor_noise = true;
  RoomSpec room;
  ArrayGeometry geometry = ArrayGeometry::uca();
  std::uint64_t seed = 0;
  int sample_rate = 16000;
  double early_ms = 50.0;
  Eigen::Index length = 0;  // samples; 0 = longest source
  double ambience_distance = 1.5;

  void validate() const;
};

struct RenderedScene {
  Signald mic_signals;          // samples x N_m
  Signald reference_binaural;   // samples x 2
  Signald target_mics;          // target component alone at the mics
  Signald ambience_mics;        // scaled ambience component
  Signald noise_mics;           // scaled sensor noise
  std::vector<Eigen::VectorXd> dry_sources;
  double ambience_gain = 0.0;
  double noise_gain = 0.0;
  std::vector<std::string> warnings;
};

// Multichannel kernel (taps x channels) for a grid azimuth.
using RirProvider = std::function<Signald(double azimuth_deg)>;

struct MovingOptions {
  int block = 512;            // samples; segments overlap by half a block
  double grid_step = 5.0;     // degrees; angles are quantized to multiples of this
  std::function<double(double)> quantize;  // overrides grid_step when set
};

// Quantized angle per segment, in segment order (segment b is centered on sample b * block / 2).
std::vector<double> segment_angles(const std::vector<Keyframe>& trajectory, Eigen::Index samples, int sample_rate,
                                   const MovingOptions& options = {});

// Piecewise-stationary convolution: the source is split into half-overlapping triangular
// segments (which sum to one), each convolved with the kernel of its quantized angle.
Signald moving_source_convolve(const Eigen::VectorXd& source, const std::vector<Keyframe>& trajectory,
                               const RirProvider& provider, int sample_rate, const MovingOptions& options = {},
                               Eigen::Index out_len = -1);

// Keeps the RIR up to `early_ms` after the end of the direct-path kernel, with a raised-cosine
// taper (at most 5 ms) ending there. Taps past the window are dropped.
Eigen::VectorXd early_window(const Eigen::VectorXd& rir, double direct_delay_samples, double early_ms,
                             int sample_rate);

// Binaural target: source through the early part of its head-center RIR, then the HRIR pair of
// the nearest grid azimuth. Off-grid keyframes are snapped and reported in `warnings`.
Signald make_target(const Eigen::VectorXd& source, const std::vector<Keyframe>& trajectory, const HrirSet& hrirs,
                    const RoomSpec& room, double early_ms, double distance, Eigen::Index out_len = -1,
                    std::vector<std::string>* warnings = nullptr);

RenderedScene mix_scene(const Scene& scene, const HrirSet& hrirs);

// Microphone RIRs for every azimuth (in order), computed on worker_threads() threads.
std::vector<Rir> simulate_rir_grid(const RoomSpec& room, const ArrayGeometry& geom,
                                   const std::vector<double>& azimuths, double distance, int sample_rate);

// Deterministic test material.
Eigen::VectorXd synth_speech_like(double seconds, int sample_rate, std::uint64_t seed);
Eigen::VectorXd synth_music_like(double seconds, int sample_rate, std::uint64_t seed);
Eigen::VectorXd white_noise(Eigen::Index n, std::uint64_t seed);

// Scene description JSON; relative paths resolve against the file's directory. The HRIR set
// named by the "hrir" field is returned through `hrirs` when non-null.
struct AcousticSetup {
  RoomSpec room;
  ArrayGeometry geometry = ArrayGeometry::uca();
};

// Only the "room" and "geometry" sections of a scene-style JSON file.
AcousticSetup load_setup(const std::filesystem::path& path);

Scene load_scene(const std::filesystem::path& path, HrirSet* hrirs = nullptr);
Scene parse_scene(const std::string& json_text, const std::filesystem::path& base_dir, HrirSet* hrirs = nullptr);

}  // namespace mmr
