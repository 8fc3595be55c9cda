#include <doctest.h>

#include <cmath>

#include "mmr/stft.hpp"
#include "support.hpp"

using namespace mmr;
using mmr::testing::random_signal;

TEST_CASE("impulse at n=0 gives a flat frame-0 spectrum scaled by its window sample") {
  StftConfig cfg;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(512, 1);
  x(0, 0) = 1.0;
  const auto spec = stft(x, cfg);
  // Front padding puts sample 0 at window index frame_len - hop.
  const double w = make_window(cfg)(cfg.padding());
  for (int k = 0; k < cfg.bins(); ++k) CHECK(std::abs(spec.at(0, 0, k)) == doctest::Approx(w).epsilon(1e-12));
}

TEST_CASE("sinusoid at a bin centre: leakage follows the window's DTFT") {
  StftConfig cfg;
  const int k0 = 40;
  // Oracle: the window's DTFT evaluated directly at integer bin offsets.
  const Eigen::VectorXd w = make_window(cfg);
  auto dtft = [&](double bins_off) {
    std::complex<double> acc = 0.0;
    for (int n = 0; n < cfg.frame_len; ++n) acc += w(n) * std::polar(1.0, -2.0 * kPi * bins_off * n / cfg.fft_len);
    return std::abs(acc);
  };
  // The sine window leaks 1 / (4 d^2 - 1) at offset d: -23.5 dB at d = 2, below -30 dB from d = 3.
  CHECK(20.0 * std::log10(dtft(2) / dtft(0)) == doctest::Approx(20.0 * std::log10(1.0 / 15.0)).epsilon(1e-3));
  double worst_far = 0.0;
  for (int d = 3; d < 100; ++d) worst_far = std::max(worst_far, dtft(d) / dtft(0));
  CHECK(20.0 * std::log10(worst_far) < -30.0);

  Eigen::MatrixXd x(16000, 1);
  for (int n = 0; n < x.rows(); ++n) x(n, 0) = std::cos(2.0 * kPi * k0 * n / cfg.fft_len);
  const auto spec = stft(x, cfg);
  const int t = spec.frames() / 2;
  const double peak = std::abs(spec.at(0, t, k0));
  for (int k = 0; k < cfg.bins(); ++k) {
    const int d = std::abs(k - k0);
    if (d < 2) continue;
    // Bound from both the positive- and negative-frequency images of the cosine.
    const double rel = std::abs(spec.at(0, t, k)) / peak;
    CHECK(rel <= (dtft(d) + dtft(k + k0)) / (dtft(0) - dtft(2 * k0)) + 1e-12);
  }
}

TEST_CASE("one second of zeros gives 64 all-zero frames") {
  StftConfig cfg;
  const auto spec = stft(Eigen::MatrixXd::Zero(16000, 1), cfg);
  CHECK(spec.frames() == 64);
  CHECK(spec.bins() == 257);
  CHECK(spec.channels[0].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("round trip reconstructs white noise") {
  StftConfig cfg;
  const Eigen::MatrixXd x = random_signal(16000, 1, 1);
  const Eigen::MatrixXd y = istft(stft(x, cfg), cfg);
  REQUIRE(y.rows() == x.rows());
  CHECK((y - x).norm() / x.norm() < 1e-6);
}

TEST_CASE("zero spectrogram synthesizes silence") {
  StftConfig cfg;
  Spectrogramd spec(2, cfg.bins(), 10);
  const Eigen::MatrixXd y = istft(spec, cfg);
  CHECK(y.cols() == 2);
  CHECK(y.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("round trip keeps channel order") {
  StftConfig cfg;
  Eigen::MatrixXd x = random_signal(4000, 3, 2);
  x.col(1) *= 3.0;
  x.col(2).setZero();
  const Eigen::MatrixXd y = istft(stft(x, cfg), cfg);
  for (int c = 0; c < 2; ++c) CHECK((y.col(c) - x.col(c)).norm() / x.col(c).norm() < 1e-6);
  CHECK(y.col(2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("odd lengths and very short signals round trip") {
  StftConfig cfg;
  for (int len : {1, 17, 255, 256, 257, 511, 1001}) {
    const Eigen::MatrixXd x = random_signal(len, 1, static_cast<std::uint64_t>(len));
    const Eigen::MatrixXd y = istft(stft(x, cfg), cfg);
    REQUIRE(y.rows() == len);
    CHECK((y - x).norm() / x.norm() < 1e-9);
  }
}

TEST_CASE("errors") {
  StftConfig cfg;
  CHECK_THROWS_AS(stft(Eigen::MatrixXd(0, 1), cfg), ValidationError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(100, 1);
  bad(3, 0) = std::nan("");
  CHECK_THROWS_AS(stft(bad, cfg), ValidationError);
  Spectrogramd wrong(1, 100, 4);
  CHECK_THROWS_AS(istft(wrong, cfg), ValidationError);
  StftConfig odd = cfg;
  odd.hop = 200;
  CHECK_THROWS_AS(odd.validate(), ValidationError);
  odd = cfg;
  odd.fft_len = 256;
  CHECK_THROWS_AS(odd.validate(), ValidationError);
  odd = cfg;
  odd.hop = 512;  // sqrt-Hann without overlap is not COLA
  CHECK_THROWS_AS(odd.validate(), ValidationError);
}

TEST_CASE("zero-padded FFT config still reconstructs") {
  StftConfig cfg;
  cfg.fft_len = 1024;
  const Eigen::MatrixXd x = random_signal(5000, 2, 3);
  const auto spec = stft(x, cfg);
  CHECK(spec.bins() == 513);
  CHECK((istft(spec, cfg) - x).norm() / x.norm() < 1e-9);
}

TEST_CASE("property: Parseval per frame") {
  StftConfig cfg;
  const Eigen::VectorXd w = make_window(cfg);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Eigen::MatrixXd x = random_signal(3000, 1, seed);
    const auto spec = stft(x, cfg);
    for (int t : {0, 3, spec.frames() - 1}) {
      double frame_energy = 0.0;
      for (int n = 0; n < cfg.frame_len; ++n) {
        const int idx = t * cfg.hop - cfg.padding() + n;
        if (idx >= 0 && idx < x.rows()) frame_energy += std::pow(x(idx, 0) * w(n), 2);
      }
      double spec_energy = 0.0;
      for (int k = 0; k < cfg.bins(); ++k) {
        const double weight = (k == 0 || k == cfg.bins() - 1) ? 1.0 : 2.0;
        spec_energy += weight * std::norm(spec.at(0, t, k));
      }
      spec_energy /= cfg.fft_len;
      CHECK(std::abs(spec_energy - frame_energy) <= 1e-9 * frame_energy);
    }
  }
}

TEST_CASE("property: COLA sum is constant") {
  for (int hop : {128, 256}) {
    StftConfig cfg;
    cfg.hop = hop;
    const Eigen::VectorXd p = overlap_profile(cfg);
    CHECK(p.maxCoeff() - p.minCoeff() < 1e-12);
  }
}

TEST_CASE("property: linearity") {
  StftConfig cfg;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 8; ++trial) {
    const Eigen::MatrixXd x = random_signal(2000, 2, 100 + trial);
    const Eigen::MatrixXd y = random_signal(2000, 2, 200 + trial);
    const double a = u(rng), b = u(rng);
    const auto lhs = stft(Eigen::MatrixXd(a * x + b * y), cfg);
    const auto sx = stft(x, cfg), sy = stft(y, cfg);
    for (int c = 0; c < 2; ++c) {
      const CMatrixd rhs = a * sx.channels[c] + b * sy.channels[c];
      CHECK((lhs.channels[c] - rhs).norm() <= 1e-12 * rhs.norm());
    }
  }
}

TEST_CASE("single precision instantiation") {
  StftConfig cfg;
  const Eigen::MatrixXf x = random_signal(4000, 1, 9).cast<float>();
  const Eigen::MatrixXf y = istft(stft(x, cfg), cfg);
  CHECK((y - x).norm() / x.norm() < 1e-5f);
}
