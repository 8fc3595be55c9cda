#include <doctest.h>

#include <cmath>

#include "mmr/error.hpp"
#include "mmr/room.hpp"

using namespace mmr;

namespace {

constexpr int kFs = 16000;

// Band-limited reconstruction around the largest sample: (position, amplitude) of the peak.
std::pair<double, double> bandlimited_peak(const Eigen::VectorXd& h) {
  Eigen::Index n_max = 0;
  h.cwiseAbs().maxCoeff(&n_max);
  double best_t = static_cast<double>(n_max), best_v = 0.0;
  for (double t = n_max - 1.0; t <= n_max + 1.0; t += 1e-3) {
    double v = 0.0;
    for (Eigen::Index n = std::max<Eigen::Index>(0, n_max - 300); n < std::min<Eigen::Index>(h.size(), n_max + 300); ++n) {
      const double x = t - static_cast<double>(n);
      v += h(n) * (std::abs(x) < 1e-12 ? 1.0 : std::sin(kPi * x) / (kPi * x));
    }
    if (std::abs(v) > std::abs(best_v)) {
      best_v = v;
      best_t = t;
    }
  }
  return {best_t, best_v};
}

}  // namespace

TEST_CASE("anechoic direct path: delay d fs / c and amplitude 1 / (4 pi d)") {
  RoomSpec room;
  room.t60 = 0.0;
  const Vec3 rx = room.array_center;
  const Vec3 src = room.source_position(30.0, 1.0);
  const Rir rir = simulate_rir_points(room, src, {rx}, kFs);
  const double pos = bandlimited_peak(rir.taps.col(0)).first;
  CHECK(std::abs(pos - kFs / 343.0) <= 0.5);
  CHECK(std::abs(pos - 46.647) < 0.05);
  // Gain of the band-limited impulse is its DC response, the sum of its taps.
  const double gain = rir.taps.col(0).sum();
  CHECK(std::abs(gain - 1.0 / (4.0 * kPi)) <= 0.01 / (4.0 * kPi));
}

TEST_CASE("Schroeder decay matches the requested T60 within 20 %") {
  RoomSpec room;
  room.t60 = 0.4;
  const Rir rir = simulate_rir(room, ArrayGeometry::uca(), 45.0, 1.5, kFs);
  CHECK(rir.taps.rows() >= static_cast<Eigen::Index>(0.4 * kFs));
  for (int m = 0; m < rir.taps.cols(); ++m) {
    const double t = estimate_t60(rir.taps.col(m), kFs);
    CHECK(t == doctest::Approx(0.4).epsilon(0.2));
  }
}

TEST_CASE("inter-mic direct-path delay equals path difference / c") {
  RoomSpec room;
  const ArrayGeometry geom = ArrayGeometry::uca();  // mic 0 at 0 deg, mic 3 at 180 deg
  for (double az : {90.0, 0.0, 30.0}) {
    const Rir rir = simulate_rir(room, geom, az, 1.5, kFs);
    const Vec3 src = room.source_position(az, 1.5);
    const double d0 = (src - (room.array_center + geom.mic_positions[0])).norm();
    const double d3 = (src - (room.array_center + geom.mic_positions[3])).norm();
    const double p0 = bandlimited_peak(rir.taps.col(0)).first;
    const double p3 = bandlimited_peak(rir.taps.col(3)).first;
    CHECK(std::abs((p3 - p0) - (d3 - d0) / room.speed_of_sound * kFs) <= 0.5);
  }
}

TEST_CASE("source outside the room is rejected") {
  RoomSpec room;
  CHECK_THROWS_AS(simulate_rir(room, ArrayGeometry::uca(), 0.0, 4.0, kFs), ValidationError);
  RoomSpec bad;
  bad.t60 = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = RoomSpec{};
  bad.array_center = {7.0, 1.0, 1.0};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("an image-order cap that drops energy raises the warning flag") {
  RoomSpec room;
  room.t60 = 0.6;
  room.absorption = AbsorptionModel::eyring;
  room.max_image_order = 2;
  const Rir capped = simulate_rir(room, ArrayGeometry::uca(), 0.0, 1.5, kFs);
  CHECK(capped.order_truncation_warning);
  CHECK(capped.truncated_energy_fraction > 0.05);
  room.max_image_order = -1;
  const Rir full = simulate_rir(room, ArrayGeometry::uca(), 0.0, 1.5, kFs);
  CHECK_FALSE(full.order_truncation_warning);
}

TEST_CASE("default image order") {
  RoomSpec room;
  room.t60 = 0.4;
  CHECK(room.image_order() == static_cast<int>(std::ceil(343.0 * 0.4 / 3.0)) + 1);
  room.t60 = 0.0;
  CHECK(room.reflection_coefficient() == 0.0);
}

TEST_CASE("property: doubling distance halves the anechoic direct amplitude") {
  RoomSpec room;
  for (double az : {0.0, 77.0, 200.0}) {
    for (double d : {0.5, 0.8, 1.1}) {
      const double a1 = bandlimited_peak(simulate_rir_points(room, room.source_position(az, d), {room.array_center}, kFs).taps.col(0)).second;
      const double a2 = bandlimited_peak(simulate_rir_points(room, room.source_position(az, 2 * d), {room.array_center}, kFs).taps.col(0)).second;
      CHECK(a1 / a2 == doctest::Approx(2.0).epsilon(0.01));
    }
  }
}

TEST_CASE("property: Schroeder curves are non-increasing") {
  RoomSpec room;
  for (double t60 : {0.2, 0.5}) {
    room.t60 = t60;
    for (double az : {10.0, 135.0}) {
      const Rir rir = simulate_rir(room, ArrayGeometry::uca(4, 0.04), az, 1.2, kFs);
      for (int m = 0; m < rir.taps.cols(); ++m) {
        const Eigen::VectorXd c = schroeder_curve_db(rir.taps.col(m));
        for (Eigen::Index n = 1; n < c.size(); ++n) REQUIRE(c(n) <= c(n - 1) + 1e-9);
      }
    }
  }
}

TEST_CASE("property: UCA mics lie on the circle at uniform spacing") {
  for (int n : {2, 3, 6, 8}) {
    for (double r : {0.02, 0.05}) {
      const ArrayGeometry g = ArrayGeometry::uca(n, r);
      REQUIRE(g.size() == n);
      for (int i = 0; i < n; ++i) {
        CHECK(g.mic_positions[i].norm() == doctest::Approx(r).epsilon(1e-12));
        const double ang = std::atan2(g.mic_positions[i].y(), g.mic_positions[i].x()) * 180.0 / kPi;
        const double expect = 360.0 * i / n;
        CHECK(std::remainder(ang - expect, 360.0) == doctest::Approx(0.0).epsilon(1e-9));
      }
    }
  }
  ArrayGeometry dup{{Vec3::Zero(), Vec3::Zero()}};
  CHECK_THROWS_AS(dup.validate(), ValidationError);
  CHECK_THROWS_AS(ArrayGeometry{}.validate(), ValidationError);
}

TEST_CASE("simulation is deterministic") {
  RoomSpec room;
  room.t60 = 0.3;
  const Rir a = simulate_rir(room, ArrayGeometry::uca(), 20.0, 1.5, kFs);
  const Rir b = simulate_rir(room, ArrayGeometry::uca(), 20.0, 1.5, kFs);
  CHECK((a.taps - b.taps).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("closed-form absorption models stay selectable") {
  RoomSpec room;
  room.t60 = 0.4;
  room.absorption = AbsorptionModel::sabine;
  const double sabine = room.reflection_coefficient();
  room.absorption = AbsorptionModel::eyring;
  const double eyring = room.reflection_coefficient();
  CHECK(sabine > 0.0);
  CHECK(sabine < 1.0);
  CHECK(eyring > 0.0);
  CHECK(eyring < 1.0);
}
