#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "mmr/filter_io.hpp"
#include "support.hpp"

using namespace mmr;
using namespace mmr::testing;

namespace {

PostFilterBank<double> random_bank(int bins, int frames, int mics, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PostFilterBank<double> bank(bins, frames, mics);
  for (auto& h : bank.h) h = random_complex(2, mics, rng);
  return bank;
}

std::uint32_t u32_at(const std::vector<std::uint8_t>& b, std::size_t off) {
  std::uint32_t v;
  std::memcpy(&v, b.data() + off, 4);
  return v;
}

float f32_at(const std::vector<std::uint8_t>& b, std::size_t off) {
  float v;
  std::memcpy(&v, b.data() + off, 4);
  return v;
}

void set_u32(std::vector<std::uint8_t>& b, std::size_t off, std::uint32_t v) { std::memcpy(b.data() + off, &v, 4); }

}  // namespace

TEST_CASE("static bank round trip keeps float32 precision") {
  const auto bank = random_bank(257, 0, 6, 1);
  const auto back = decode_filters(encode_filters(bank));
  CHECK(back.n_bins == 257);
  CHECK(back.n_frames == 0);
  CHECK(back.n_mics == 6);
  for (int f = 0; f < 257; ++f) CHECK(rel_error(back.at(0, f), bank.at(0, f)) < 1e-7);
}

TEST_CASE("header layout and [t][f][ear][mic] ordering") {
  const auto bank = random_bank(5, 3, 4, 2);
  const auto bytes = encode_filters(bank);
  REQUIRE(bytes.size() == 24 + 3 * 5 * 2 * 4 * 8);
  CHECK(std::memcmp(bytes.data(), "MDF1", 4) == 0);
  CHECK(u32_at(bytes, 4) == 1);
  CHECK(u32_at(bytes, 8) == 5);
  CHECK(u32_at(bytes, 12) == 3);
  CHECK(u32_at(bytes, 16) == 2);
  CHECK(u32_at(bytes, 20) == 4);
  const int t = 2, f = 3, ear = 1, mic = 2;
  const std::size_t off = 24 + 8 * (((static_cast<std::size_t>(t) * 5 + f) * 2 + ear) * 4 + mic);
  CHECK(f32_at(bytes, off) == static_cast<float>(bank.at(t, f)(ear, mic).real()));
  CHECK(f32_at(bytes, off + 4) == static_cast<float>(bank.at(t, f)(ear, mic).imag()));

  const auto back = decode_filters(bytes);
  CHECK(back.n_frames == 3);
  for (int tt = 0; tt < 3; ++tt)
    for (int ff = 0; ff < 5; ++ff) CHECK(rel_error(back.at(tt, ff), bank.at(tt, ff)) < 1e-7);
}

TEST_CASE("malformed files are rejected") {
  const auto good = encode_filters(random_bank(4, 0, 2, 3));
  auto b = good;
  b[0] = 'X';
  CHECK_THROWS_AS(decode_filters(b), IoError);
  b = good;
  set_u32(b, 4, 2);
  CHECK_THROWS_AS(decode_filters(b), IoError);
  b = good;
  set_u32(b, 16, 1);
  CHECK_THROWS_AS(decode_filters(b), IoError);
  b = good;
  b.pop_back();
  CHECK_THROWS_AS(decode_filters(b), IoError);
  b = good;
  set_u32(b, 12, 2);
  CHECK_THROWS_AS(decode_filters(b), IoError);
  CHECK_THROWS_AS(decode_filters(std::vector<std::uint8_t>(10, 0)), IoError);
}

TEST_CASE("non-finite coefficients are refused on write") {
  auto bank = random_bank(3, 0, 2, 4);
  bank.at(0, 1)(0, 0) = {std::nan(""), 0.0};
  CHECK_THROWS_AS(encode_filters(bank), NumericalError);
}

TEST_CASE("file round trip and missing file") {
  const auto dir = std::filesystem::temp_directory_path() / "mmr_filter_io_test";
  std::filesystem::create_directories(dir);
  const auto bank = random_bank(9, 2, 3, 5);
  write_filters(dir / "h.mdf", bank);
  const auto back = read_filters(dir / "h.mdf");
  CHECK(back.n_frames == 2);
  CHECK(rel_error(back.at(1, 8), bank.at(1, 8)) < 1e-7);
  try {
    read_filters(dir / "missing.mdf");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("missing.mdf") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}
