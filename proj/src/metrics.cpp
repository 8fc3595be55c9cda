#include "mmr/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "mmr/error.hpp"
#include "mmr/signal.hpp"

namespace mmr {

double median(std::vector<double> v) {
  if (v.empty()) throw ValidationError("median: no values");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

namespace {

struct Framing {
  Eigen::Index len;
  Eigen::Index hop;
  Eigen::Index count;
};

Framing framing(Eigen::Index samples, int fs, const BinauralFrameOptions& opt) {
  if (!(opt.frame_ms > 0.0) || !(opt.hop_ms > 0.0)) throw ValidationError("metrics: frame and hop must be positive");
  const Eigen::Index len = std::max<Eigen::Index>(1, std::llround(opt.frame_ms * 1e-3 * fs));
  const Eigen::Index hop = std::max<Eigen::Index>(1, std::llround(opt.hop_ms * 1e-3 * fs));
  const Eigen::Index count = samples < len ? 1 : (samples - len) / hop + 1;
  return {len, hop, count};
}

void check_stereo(const Signald& x, const char* what) {
  if (x.cols() != 2)
    throw ValidationError(std::string(what) + ": expected 2 channels, got " + std::to_string(x.cols()));
  if (x.rows() == 0) throw ValidationError(std::string(what) + ": empty signal");
  if (!x.allFinite()) throw ValidationError(std::string(what) + ": non-finite samples");
}

// Frames that pass the energy gate, with their full-band energies.
std::vector<bool> gate(const Signald& x, const Framing& fr, double gate_db, std::vector<double>* el,
                       std::vector<double>* er) {
  std::vector<double> e(static_cast<std::size_t>(fr.count));
  for (Eigen::Index t = 0; t < fr.count; ++t) {
    const Eigen::Index n0 = t * fr.hop;
    const Eigen::Index n = std::min(fr.len, x.rows() - n0);
    const double l = x.col(0).segment(n0, n).squaredNorm();
    const double r = x.col(1).segment(n0, n).squaredNorm();
    if (el) el->push_back(l);
    if (er) er->push_back(r);
    e[static_cast<std::size_t>(t)] = l + r;
  }
  const double peak = *std::max_element(e.begin(), e.end());
  const double threshold = peak * std::pow(10.0, -gate_db / 10.0);
  std::vector<bool> keep(e.size());
  for (std::size_t t = 0; t < e.size(); ++t) keep[t] = peak > 0.0 && e[t] > 0.0 && e[t] >= threshold;
  return keep;
}

}  // namespace

Trace itd(const Signald& x, int fs, const BinauralFrameOptions& opt) {
  check_stereo(x, "itd");
  const Framing fr = framing(x.rows(), fs, opt);
  const std::vector<bool> keep = gate(x, fr, opt.gate_db, nullptr, nullptr);
  const auto sections = butterworth_lowpass(opt.lowpass_order, opt.lowpass_hz, fs);
  const Eigen::VectorXd l = filtfilt(sections, x.col(0));
  const Eigen::VectorXd r = filtfilt(sections, x.col(1));
  const int max_lag = static_cast<int>(std::floor(opt.max_lag_ms * 1e-3 * fs));

  Trace out;
  std::vector<double> cc(static_cast<std::size_t>(2 * max_lag + 1));
  for (Eigen::Index t = 0; t < fr.count; ++t) {
    if (!keep[static_cast<std::size_t>(t)]) continue;
    const Eigen::Index n0 = t * fr.hop;
    const Eigen::Index n = std::min(fr.len, x.rows() - n0);
    const double el = l.segment(n0, n).squaredNorm();
    const double er = r.segment(n0, n).squaredNorm();
    if (!(el > 0.0) || !(er > 0.0)) continue;
    // cc(k) = sum_n l(n) r(n + k): a right channel lagging by k samples peaks at +k.
    for (int k = -max_lag; k <= max_lag; ++k) {
      double acc = 0.0;
      for (Eigen::Index i = n0; i < n0 + n; ++i) {
        const Eigen::Index j = i + k;
        if (j >= 0 && j < r.size()) acc += l(i) * r(j);
      }
      cc[static_cast<std::size_t>(k + max_lag)] = acc / std::sqrt(el * er);
    }
    const auto best = static_cast<int>(std::max_element(cc.begin(), cc.end()) - cc.begin());
    double lag = best - max_lag;
    if (best > 0 && best < 2 * max_lag) {
      const double a = cc[static_cast<std::size_t>(best - 1)], b = cc[static_cast<std::size_t>(best)],
                   c = cc[static_cast<std::size_t>(best + 1)];
      const double denom = a - 2.0 * b + c;
      if (denom < 0.0) lag += 0.5 * (a - c) / denom;
    }
    out.times.push_back((static_cast<double>(n0) + 0.5 * static_cast<double>(fr.len)) / fs);
    out.values.push_back(lag / fs);
  }
  return out;
}

Trace ild(const Signald& x, int fs, const BinauralFrameOptions& opt) {
  check_stereo(x, "ild");
  const Framing fr = framing(x.rows(), fs, opt);
  std::vector<double> el, er;
  const std::vector<bool> keep = gate(x, fr, opt.gate_db, &el, &er);
  Trace out;
  for (Eigen::Index t = 0; t < fr.count; ++t) {
    const auto i = static_cast<std::size_t>(t);
    if (!keep[i] || !(el[i] > 0.0) || !(er[i] > 0.0)) continue;
    out.times.push_back((static_cast<double>(t * fr.hop) + 0.5 * static_cast<double>(fr.len)) / fs);
    out.values.push_back(10.0 * std::log10(el[i] / er[i]));
  }
  return out;
}

double eatm(const Signald& rendered, const Signald& reference, const StftConfig& cfg) {
  check_stereo(rendered, "eatm (rendered)");
  check_stereo(reference, "eatm (reference)");
  if (rendered.rows() != reference.rows())
    throw ValidationError("eatm: rendered has " + std::to_string(rendered.rows()) + " samples, reference has " +
                          std::to_string(reference.rows()));
  const Spectrogramd y = stft(reference, cfg);
  const Spectrogramd yh = stft(rendered, cfg);
  double acc = 0.0;
  for (int t = 0; t < y.frames(); ++t)
    for (int k = 0; k < y.bins(); ++k) {
      const double dl = std::norm(y.channels[0](k, t) - yh.channels[0](k, t));
      const double dr = std::norm(y.channels[1](k, t) - yh.channels[1](k, t));
      acc += std::sqrt(dl + dr);
    }
  const double mean = acc / (static_cast<double>(y.frames()) * y.bins());
  return 20.0 * std::log10(std::max(mean, kEatmFloor));
}

double rtf(const std::function<void(const Signald&)>& render, const Signald& input, int fs, int runs) {
  if (fs <= 0) throw ValidationError("rtf: sample rate must be positive");
  const double duration = static_cast<double>(input.rows()) / fs;
  if (duration < 1.0) throw ValidationError("rtf: input must be at least 1 s long");
  if (runs < 1) throw ValidationError("rtf: need at least one timed run");
  render(input);
  std::vector<double> times;
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    render(input);
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  return std::max(median(times), std::numeric_limits<double>::min()) / duration;
}

namespace {

nlohmann::json trace_json(const Trace& t) { return {{"times_s", t.times}, {"values", t.values}}; }

}  // namespace

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  if (itd) j["itd_s"] = trace_json(*itd);
  if (ild) j["ild_db"] = trace_json(*ild);
  if (eatm_db) j["eatm_db"] = *eatm_db;
  if (rtf) j["rtf"] = *rtf;
  j["metadata"] = metadata;
  return j.dump(2);
}

void MetricsReport::write_csv(const std::filesystem::path& path) const {
  std::map<double, std::pair<std::optional<double>, std::optional<double>>> rows;
  if (itd)
    for (std::size_t i = 0; i < itd->size(); ++i) rows[itd->times[i]].first = itd->values[i];
  if (ild)
    for (std::size_t i = 0; i < ild->size(); ++i) rows[ild->times[i]].second = ild->values[i];
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "time_s,itd_s,ild_db\n" << std::setprecision(10);
  for (const auto& [time, v] : rows) {
    out << time << ',';
    if (v.first) out << *v.first;
    out << ',';
    if (v.second) out << *v.second;
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace mmr
