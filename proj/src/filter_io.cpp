#include "mmr/filter_io.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace mmr {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(out, u);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float get_f32(const std::uint8_t* p) {
  const std::uint32_t u = get_u32(p);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

constexpr std::size_t kHeaderBytes = 4 + 5 * 4;

}  // namespace

std::vector<std::uint8_t> encode_filters(const PostFilterBank<double>& bank) {
  if (bank.n_bins <= 0 || bank.n_mics <= 0 || bank.n_frames < 0)
    throw ValidationError("encode_filters: empty filter bank");
  std::vector<std::uint8_t> out{'M', 'D', 'F', '1'};
  put_u32(out, kFilterFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(bank.n_bins));
  put_u32(out, static_cast<std::uint32_t>(bank.n_frames));
  put_u32(out, 2);
  put_u32(out, static_cast<std::uint32_t>(bank.n_mics));
  const int frames = std::max(bank.n_frames, 1);
  out.reserve(kHeaderBytes + static_cast<std::size_t>(frames) * bank.n_bins * 2 * bank.n_mics * 8);
  for (int t = 0; t < frames; ++t)
    for (int f = 0; f < bank.n_bins; ++f) {
      const CMatrixd& h = bank.at(t, f);
      if (!h.allFinite()) throw NumericalError("encode_filters: non-finite coefficient");
      for (int ear = 0; ear < 2; ++ear)
        for (int m = 0; m < bank.n_mics; ++m) {
          put_f32(out, h(ear, m).real());
          put_f32(out, h(ear, m).imag());
        }
    }
  return out;
}

PostFilterBank<double> decode_filters(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderBytes) throw IoError("filter file: truncated header");
  if (std::memcmp(bytes.data(), "MDF1", 4) != 0) throw IoError("filter file: bad magic (expected MDF1)");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kFilterFormatVersion)
    throw IoError("filter file: unsupported version " + std::to_string(version));
  const std::uint32_t bins = get_u32(bytes.data() + 8);
  const std::uint32_t frames = get_u32(bytes.data() + 12);
  const std::uint32_t ears = get_u32(bytes.data() + 16);
  const std::uint32_t mics = get_u32(bytes.data() + 20);
  if (ears != 2) throw IoError("filter file: n_ears must be 2, found " + std::to_string(ears));
  if (bins == 0 || mics == 0) throw IoError("filter file: zero bins or microphones");
  const std::uint64_t count = static_cast<std::uint64_t>(std::max<std::uint32_t>(frames, 1)) * bins * ears * mics;
  if (bytes.size() != kHeaderBytes + count * 8)
    throw IoError("filter file: payload is " + std::to_string(bytes.size() - kHeaderBytes) + " bytes, header implies " +
                  std::to_string(count * 8));
  PostFilterBank<double> bank(static_cast<int>(bins), static_cast<int>(frames), static_cast<int>(mics));
  const std::uint8_t* p = bytes.data() + kHeaderBytes;
  for (int t = 0; t < std::max(bank.n_frames, 1); ++t)
    for (int f = 0; f < bank.n_bins; ++f) {
      CMatrixd& h = bank.at(t, f);
      for (int ear = 0; ear < 2; ++ear)
        for (int m = 0; m < bank.n_mics; ++m, p += 8) h(ear, m) = {get_f32(p), get_f32(p + 4)};
    }
  return bank;
}

void write_filters(const std::filesystem::path& path, const PostFilterBank<double>& bank) {
  const std::vector<std::uint8_t> bytes = encode_filters(bank);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write filter file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

PostFilterBank<double> read_filters(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open filter file: " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_filters(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace mmr
