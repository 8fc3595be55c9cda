#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "mmr/error.hpp"
#include "mmr/filter_io.hpp"
#include "mmr/hrir.hpp"
#include "mmr/lbh.hpp"
#include "mmr/metrics.hpp"
#include "mmr/model_matching.hpp"
#include "mmr/room.hpp"
#include "mmr/scene.hpp"
#include "mmr/wav.hpp"

#ifndef MMR_VERSION
#define MMR_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mmr;

namespace {

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string() + " for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

// Reproducibility record written after a command finishes.
struct RunManifest {
  std::string command;
  std::vector<std::string> args;
  std::vector<fs::path> configs;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  std::optional<std::uint64_t> seed;

  void write(const fs::path& path) const {
    json j;
    j["command"] = command;
    j["args"] = args;
    j["tool_version"] = MMR_VERSION;
    j["seed"] = seed ? json(*seed) : json(nullptr);
    j["config_paths"] = json::array();
    for (const auto& c : configs) j["config_paths"].push_back(c.string());
    j["inputs"] = json::object();
    for (const auto& p : inputs) j["inputs"][p.string()] = sha256_file(p);
    j["outputs"] = json::object();
    for (const auto& p : outputs) j["outputs"][p.filename().string()] = sha256_file(p);
    write_text_atomic(path, j.dump(2) + "\n");
  }
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": JSON parse error: " + e.what());
  }
}

HrirSet load_hrirs(const std::string& manifest, int n_synthetic, double head_radius, int rate) {
  if (!manifest.empty()) return import_hrir(manifest, rate);
  return synth_spherical_hrir(n_synthetic, head_radius, rate);
}

std::string angle_name(const char* prefix, double az) {
  char name[48];
  std::snprintf(name, sizeof name, "%s_%05.1f.wav", prefix, az);
  return name;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

struct Options {
  std::vector<std::string> argv;

  // make-hrir / import-hrir
  std::string hrir_out;
  int n_directions = 72;
  double head_radius = 0.0875;
  int sample_rate = 16000;
  std::string import_manifest;

  // sim-rir
  std::string setup_config;
  std::string rir_out;
  int rir_angles = 72;
  double rir_distance = 1.5;

  // design-mif
  std::string rir_dir;
  std::string hrir_manifest;
  double beta = 1e-4;
  std::string beta_mode = "absolute";
  std::string filters_out;

  // simulate
  std::string scene_path;
  std::string sim_out;
  std::optional<std::uint64_t> seed;

  // render
  std::string method;
  std::string render_in;
  std::string render_out;
  std::string filters_in;
  std::string render_config;
  std::string covariance = "block";

  // eval
  std::string rendered;
  std::string reference;
  std::string metrics = "itd,ild,eatm";
  bool trim = false;
  std::string csv;
  std::string eval_out;
};

int cmd_make_hrir(const Options& o) {
  const HrirSet set = synth_spherical_hrir(o.n_directions, o.head_radius, o.sample_rate);
  export_hrir(set, o.hrir_out);
  RunManifest m{"make-hrir", o.argv, {}, {}, {}, std::nullopt};
  for (double az : set.azimuths) m.outputs.push_back(fs::path(o.hrir_out) / angle_name("hrir", az));
  m.outputs.push_back(fs::path(o.hrir_out) / "manifest.json");
  m.write(fs::path(o.hrir_out) / "run.json");
  std::cout << "wrote " << set.size() << " directions to " << o.hrir_out << "\n";
  return 0;
}

int cmd_import_hrir(const Options& o) {
  const HrirSet set = import_hrir(o.import_manifest, o.sample_rate);
  export_hrir(set, o.hrir_out);
  RunManifest m{"import-hrir", o.argv, {o.import_manifest}, {}, {}, std::nullopt};
  for (double az : set.azimuths) m.outputs.push_back(fs::path(o.hrir_out) / angle_name("hrir", az));
  m.outputs.push_back(fs::path(o.hrir_out) / "manifest.json");
  m.write(fs::path(o.hrir_out) / "run.json");
  std::cout << "imported " << set.size() << " directions, " << set.taps() << " taps at " << set.sample_rate
            << " Hz\n";
  return 0;
}

int cmd_sim_rir(const Options& o) {
  AcousticSetup setup;
  if (!o.setup_config.empty()) setup = load_setup(o.setup_config);
  if (o.rir_angles < 1) throw ValidationError("sim-rir: --angles must be >= 1");
  std::vector<double> az;
  for (int d = 0; d < o.rir_angles; ++d) az.push_back(360.0 * d / o.rir_angles);
  const std::vector<Rir> rirs = simulate_rir_grid(setup.room, setup.geometry, az, o.rir_distance, o.sample_rate);

  const fs::path dir = o.rir_out;
  fs::create_directories(dir);
  json doc;
  doc["sample_rate"] = o.sample_rate;
  doc["n_mics"] = setup.geometry.size();
  doc["source_distance"] = o.rir_distance;
  doc["speed_of_sound"] = setup.room.speed_of_sound;
  doc["t60"] = setup.room.t60;
  doc["entries"] = json::array();
  RunManifest m{"sim-rir", o.argv, {}, {}, {}, std::nullopt};
  if (!o.setup_config.empty()) m.configs.push_back(o.setup_config);
  bool warned = false;
  for (std::size_t i = 0; i < rirs.size(); ++i) {
    const std::string name = angle_name("rir", az[i]);
    write_wav(dir / name, rirs[i].taps, o.sample_rate, WavEncoding::float32);
    doc["entries"].push_back({{"azimuth_deg", az[i]}, {"wav", name}});
    m.outputs.push_back(dir / name);
    if (rirs[i].order_truncation_warning && !warned) {
      std::cerr << "warning: image order cap drops " << std::setprecision(3)
                << 100.0 * rirs[i].truncated_energy_fraction << " % of the in-range energy\n";
      warned = true;
    }
  }
  write_text_atomic(dir / "rirs.json", doc.dump(2) + "\n");
  m.outputs.push_back(dir / "rirs.json");
  m.write(dir / "run.json");
  std::cout << "wrote " << rirs.size() << " RIRs (" << setup.geometry.size() << " mics, " << rirs.front().taps.rows()
            << " taps) to " << dir.string() << "\n";
  return 0;
}

int cmd_design_mif(const Options& o) {
  const fs::path dir = o.rir_dir;
  const json doc = read_json(dir / "rirs.json");
  const int rate = doc.value("sample_rate", 16000);
  const int n_mics = doc.value("n_mics", 0);
  if (n_mics < 1) throw ValidationError((dir / "rirs.json").string() + ": n_mics must be >= 1");
  const HrirSet hrirs = load_hrirs(o.hrir_manifest, o.n_directions, o.head_radius, rate);

  std::map<long, std::string> by_angle;  // keyed by tenths of a degree
  for (const auto& e : doc.value("entries", json::array()))
    by_angle[std::lround(e.at("azimuth_deg").get<double>() * 10.0)] = e.at("wav").get<std::string>();

  std::vector<Rir> rirs;
  std::vector<std::string> missing;
  std::vector<fs::path> inputs{dir / "rirs.json"};
  for (double az : hrirs.azimuths) {
    const auto it = by_angle.find(std::lround(az * 10.0));
    const fs::path p = it == by_angle.end() ? fs::path() : dir / it->second;
    int have = 0;
    Rir r;
    r.sample_rate = rate;
    if (it != by_angle.end() && fs::exists(p)) {
      WavData w = read_wav(p);
      if (w.sample_rate != rate)
        throw ValidationError(p.string() + ": sample rate " + std::to_string(w.sample_rate) + " differs from " +
                              std::to_string(rate));
      have = static_cast<int>(w.samples.cols());
      r.taps = std::move(w.samples);
      inputs.push_back(p);
    }
    for (int mic = have; mic < n_mics; ++mic) {
      std::ostringstream s;
      s << "(mic " << mic << ", " << az << " deg)";
      missing.push_back(s.str());
    }
    rirs.push_back(std::move(r));
  }
  if (!missing.empty()) {
    std::string msg = "design-mif: missing RIR pairs " + std::to_string(missing.size()) + ":";
    for (const auto& s : missing) msg += " " + s;
    throw ValidationError(msg);
  }

  StftConfig cfg;
  cfg.sample_rate = rate;
  const AcousticSystem<double> g = build_acoustic_system(rirs, cfg);
  const DesiredModel<double> model = build_desired_model(
      hrirs, cfg, Propagation{doc.value("source_distance", 1.5), doc.value("speed_of_sound", kSpeedOfSound)});
  MifConfig mif;
  mif.beta = o.beta;
  if (o.beta_mode == "relative") mif.beta_mode = BetaMode::relative_to_spectral_norm;
  else if (o.beta_mode != "absolute") throw ValidationError("design-mif: --beta-mode must be absolute or relative");
  const PostFilterBank<double> h = solve_mif(model, g, mif);
  write_filters(o.filters_out, h);

  const MatchResidual<double> res = match_residual(model, g, h);
  double m_norm = 0.0;
  for (const auto& mk : model.m) m_norm += mk.squaredNorm();
  m_norm = std::sqrt(m_norm);
  Eigen::VectorXd rel(res.bin_norm.size());
  for (Eigen::Index k = 0; k < rel.size(); ++k) {
    const double mk = model.m[static_cast<std::size_t>(k)].norm();
    rel(k) = mk > 0.0 ? res.bin_norm(k) / mk : 0.0;
  }
  std::cout << std::setprecision(4) << "beta " << o.beta << " (" << o.beta_mode << "), " << g.directions()
            << " directions x " << g.mics() << " mics, " << g.bins() << " bins\n"
            << "residual ||M - HG||_F / ||M||_F: total " << res.total_norm / m_norm << ", per-bin mean "
            << rel.mean() << ", max " << rel.maxCoeff() << "\n"
            << "RIR energy beyond fft_len: " << 100.0 * g.truncated_energy_fraction << " %\n";

  RunManifest m{"design-mif", o.argv, {}, inputs, {o.filters_out}, std::nullopt};
  if (!o.hrir_manifest.empty()) m.configs.push_back(o.hrir_manifest);
  m.write(o.filters_out + ".run.json");
  return 0;
}

int cmd_simulate(const Options& o) {
  HrirSet hrirs;
  Scene scene = load_scene(o.scene_path, &hrirs);
  if (o.seed) scene.seed = *o.seed;
  const RenderedScene r = mix_scene(scene, hrirs);
  print_warnings(r.warnings);
  const fs::path dir = o.sim_out;
  fs::create_directories(dir);
  write_wav(dir / "mic.wav", r.mic_signals, scene.sample_rate, WavEncoding::float32);
  write_wav(dir / "reference.wav", r.reference_binaural, scene.sample_rate, WavEncoding::float32);
  json info;
  info["sample_rate"] = scene.sample_rate;
  info["samples"] = r.mic_signals.rows();
  info["n_mics"] = r.mic_signals.cols();
  info["ambience_gain"] = r.ambience_gain;
  info["noise_gain"] = r.noise_gain;
  info["warnings"] = r.warnings;
  write_text_atomic(dir / "scene_info.json", info.dump(2) + "\n");
  RunManifest m{"simulate", o.argv, {o.scene_path}, {}, {dir / "mic.wav", dir / "reference.wav", dir / "scene_info.json"},
                scene.seed};
  m.write(dir / "run.json");
  std::cout << "wrote " << r.mic_signals.cols() << "-channel mic.wav and reference.wav ("
            << static_cast<double>(r.mic_signals.rows()) / scene.sample_rate << " s) to " << dir.string() << "\n";
  return 0;
}

int cmd_render(const Options& o) {
  const WavData in = read_wav(o.render_in);
  StftConfig cfg;
  cfg.sample_rate = in.sample_rate;
  Signald out;
  RunManifest m{"render", o.argv, {}, {o.render_in}, {}, std::nullopt};
  if (o.method == "mif" || o.method == "ext") {
    if (o.filters_in.empty()) throw ValidationError("render: --method " + o.method + " needs --filters");
    const PostFilterBank<double> h = read_filters(o.filters_in);
    m.inputs.push_back(o.filters_in);
    if (o.method == "mif" && !h.is_static())
      throw ValidationError("render: --method mif expects a static filter file; use --method ext");
    if (h.n_mics != in.samples.cols())
      throw ValidationError("render: filters expect " + std::to_string(h.n_mics) + " microphones, " + o.render_in +
                            " has " + std::to_string(in.samples.cols()) + " channels");
    const Spectrogramd x = stft(in.samples, cfg);
    out = istft(apply_postfilters(x, h), cfg, in.samples.rows());
  } else if (o.method == "lbh") {
    AcousticSetup setup;
    if (!o.render_config.empty()) {
      setup = load_setup(o.render_config);
      m.configs.push_back(o.render_config);
    }
    if (setup.geometry.size() != in.samples.cols())
      throw ValidationError("render: geometry has " + std::to_string(setup.geometry.size()) + " microphones, " +
                            o.render_in + " has " + std::to_string(in.samples.cols()) + " channels");
    const HrirSet hrirs = load_hrirs(o.hrir_manifest, o.n_directions, o.head_radius, in.sample_rate);
    if (!o.hrir_manifest.empty()) m.configs.push_back(o.hrir_manifest);
    MpdrConfig mpdr;
    if (o.covariance == "recursive") mpdr.covariance = CovarianceMode::recursive;
    else if (o.covariance != "block") throw ValidationError("render: --covariance must be block or recursive");
    const SteeringGrid grid = SteeringGrid::make(setup.geometry, cfg, hrirs.size(), setup.room.speed_of_sound);
    out = lbh_render(in.samples, grid, mpdr, hrirs, cfg).binaural;
  } else {
    throw ValidationError("render: --method must be mif, lbh or ext");
  }
  write_wav(o.render_out, out, in.sample_rate, WavEncoding::float32);
  m.outputs.push_back(o.render_out);
  m.write(o.render_out + ".run.json");
  std::cout << "wrote " << o.render_out << "\n";
  return 0;
}

int cmd_eval(const Options& o) {
  WavData y = read_wav(o.rendered);
  WavData ref = read_wav(o.reference);
  if (y.samples.cols() != 2 || ref.samples.cols() != 2)
    throw ValidationError("eval: both files must be stereo");
  if (y.sample_rate != ref.sample_rate) throw ValidationError("eval: sample rates differ");
  if (y.samples.rows() != ref.samples.rows()) {
    if (!o.trim)
      throw ValidationError("eval: " + o.rendered + " has " + std::to_string(y.samples.rows()) + " samples, " +
                            o.reference + " has " + std::to_string(ref.samples.rows()) + " (use --trim)");
    const Eigen::Index n = std::min(y.samples.rows(), ref.samples.rows());
    y.samples.conservativeResize(n, 2);
    ref.samples.conservativeResize(n, 2);
  }
  std::set<std::string> wanted;
  std::stringstream ss(o.metrics);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) wanted.insert(item);
  for (const auto& w : wanted)
    if (w != "itd" && w != "ild" && w != "eatm") throw ValidationError("eval: unknown metric '" + w + "'");

  MetricsReport rep;
  rep.metadata["rendered"] = o.rendered;
  rep.metadata["reference"] = o.reference;
  rep.metadata["sample_rate"] = std::to_string(y.sample_rate);
  if (wanted.count("itd")) rep.itd = itd(y.samples, y.sample_rate);
  if (wanted.count("ild")) rep.ild = ild(y.samples, y.sample_rate);
  if (wanted.count("eatm")) {
    StftConfig cfg;
    cfg.sample_rate = y.sample_rate;
    rep.eatm_db = eatm(y.samples, ref.samples, cfg);
  }
  RunManifest m{"eval", o.argv, {}, {o.rendered, o.reference}, {}, std::nullopt};
  write_text_atomic(o.eval_out, rep.to_json() + "\n");
  m.outputs.push_back(o.eval_out);
  if (!o.csv.empty()) {
    rep.write_csv(o.csv);
    m.outputs.push_back(o.csv);
  }
  m.write(o.eval_out + ".run.json");
  if (rep.eatm_db) std::cout << "E_ATM " << std::setprecision(5) << *rep.eatm_db << " dB\n";
  if (rep.itd && !rep.itd->empty()) std::cout << "median ITD " << median(rep.itd->values) * 1e3 << " ms\n";
  if (rep.ild && !rep.ild->empty()) std::cout << "median ILD " << median(rep.ild->values) << " dB\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  for (int i = 1; i < argc; ++i) o.argv.emplace_back(argv[i]);

  CLI::App app{"Binaural rendering from microphone-array recordings"};
  app.set_version_flag("--version", MMR_VERSION);
  app.require_subcommand(1);

  auto* make = app.add_subcommand("make-hrir", "Write a synthetic spherical-head HRIR set");
  make->add_option("--out", o.hrir_out, "Output directory")->required();
  make->add_option("--directions", o.n_directions, "Number of uniformly spaced azimuths");
  make->add_option("--head-radius", o.head_radius, "Head radius in meters");
  make->add_option("--rate", o.sample_rate, "Sample rate in Hz");

  auto* imp = app.add_subcommand("import-hrir", "Validate and resample an HRIR manifest");
  imp->add_option("--manifest", o.import_manifest, "Input manifest JSON")->required();
  imp->add_option("--out", o.hrir_out, "Output directory")->required();
  imp->add_option("--rate", o.sample_rate, "Target sample rate in Hz");

  auto* sim_rir = app.add_subcommand("sim-rir", "Simulate microphone RIRs for a grid of source angles");
  sim_rir->add_option("--config", o.setup_config, "JSON with room and geometry sections");
  sim_rir->add_option("--out", o.rir_out, "Output directory")->required();
  sim_rir->add_option("--angles", o.rir_angles, "Number of uniformly spaced source angles");
  sim_rir->add_option("--distance", o.rir_distance, "Source distance from the array center in meters");
  sim_rir->add_option("--rate", o.sample_rate, "Sample rate in Hz");

  auto* design = app.add_subcommand("design-mif", "Design static model-matching post-filters");
  design->add_option("--rirs", o.rir_dir, "Directory written by sim-rir")->required();
  design->add_option("--hrir", o.hrir_manifest, "HRIR manifest (default: synthetic spherical head)");
  design->add_option("--directions", o.n_directions, "Directions of the synthetic HRIR set");
  design->add_option("--head-radius", o.head_radius, "Head radius of the synthetic HRIR set");
  design->add_option("--beta", o.beta, "Tikhonov regularization");
  design->add_option("--beta-mode", o.beta_mode, "absolute or relative (scaled by the spectral norm of G)");
  design->add_option("--out", o.filters_out, "Output filter file")->required();

  auto* simulate = app.add_subcommand("simulate", "Render a scene to microphone and reference signals");
  simulate->add_option("--scene", o.scene_path, "Scene JSON")->required();
  simulate->add_option("--out", o.sim_out, "Output directory")->required();
  simulate->add_option("--seed", o.seed, "Override the scene seed");

  auto* render = app.add_subcommand("render", "Render binaural audio from microphone signals");
  render->add_option("--method", o.method, "mif, lbh or ext")->required();
  render->add_option("--input", o.render_in, "Multichannel microphone WAV")->required();
  render->add_option("--out", o.render_out, "Output stereo WAV")->required();
  render->add_option("--filters", o.filters_in, "Filter file (mif: static, ext: time-varying)");
  render->add_option("--config", o.render_config, "JSON with room and geometry sections (lbh)");
  render->add_option("--hrir", o.hrir_manifest, "HRIR manifest (lbh; default synthetic)");
  render->add_option("--covariance", o.covariance, "block or recursive (lbh)");

  auto* eval = app.add_subcommand("eval", "Binaural metrics of a rendering against a reference");
  eval->add_option("--rendered", o.rendered, "Rendered stereo WAV")->required();
  eval->add_option("--reference", o.reference, "Reference stereo WAV")->required();
  eval->add_option("--metrics", o.metrics, "Comma-separated subset of itd,ild,eatm");
  eval->add_flag("--trim", o.trim, "Trim both signals to the shorter length");
  eval->add_option("--csv", o.csv, "Write ITD/ILD traces as CSV");
  eval->add_option("--out", o.eval_out, "Report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*make) return cmd_make_hrir(o);
    if (*imp) return cmd_import_hrir(o);
    if (*sim_rir) return cmd_sim_rir(o);
    if (*design) return cmd_design_mif(o);
    if (*simulate) return cmd_simulate(o);
    if (*render) return cmd_render(o);
    if (*eval) return cmd_eval(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
