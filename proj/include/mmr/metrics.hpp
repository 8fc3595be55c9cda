#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmr/stft.hpp"

namespace mmr {

// Per-frame values at frame-center times; gated frames are omitted.
struct Trace {
  std::vector<double> times;   // seconds
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
};

double median(std::vector<double> values);

struct BinauralFrameOptions {
  double frame_ms = 32.0;
  double hop_ms = 16.0;
  double gate_db = 40.0;       // frames quieter than the loudest frame by more than this are skipped
  double max_lag_ms = 1.0;
  double lowpass_hz = 1500.0;
  int lowpass_order = 4;       // per pass; applied forward and backward
};

// Interaural time difference in seconds, positive when the left ear leads. Both ears are
// lowpassed, then the normalized cross-correlation peak over +-max_lag is refined parabolically.
Trace itd(const Signald& binaural, int sample_rate, const BinauralFrameOptions& options = {});

// 10 log10(E_L / E_R) per frame, full band.
Trace ild(const Signald& binaural, int sample_rate, const BinauralFrameOptions& options = {});

inline constexpr double kEatmFloor = 1e-12;

// 20 log10 of the mean over (f, t) of the ear-vector difference norm ||Y - Y_hat||.
double eatm(const Signald& rendered, const Signald& reference, const StftConfig& cfg);

// Median wall-clock time over `runs` calls (after one warm-up) divided by the input duration.
double rtf(const std::function<void(const Signald&)>& render, const Signald& input, int sample_rate, int runs = 5);

struct MetricsReport {
  std::optional<Trace> itd;
  std::optional<Trace> ild;
  std::optional<double> eatm_db;
  std::optional<double> rtf;
  std::map<std::string, std::string> metadata;

  std::string to_json() const;
  // Columns time_s, itd_s, ild_db (empty cells when a metric is absent at that time).
  void write_csv(const std::filesystem::path& path) const;
};

}  // namespace mmr
