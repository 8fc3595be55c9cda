#pragma once

#include <filesystem>

#include "mmr/types.hpp"

namespace mmr {

enum class WavEncoding { pcm16, float32 };

struct WavData {
  int sample_rate = 0;
  Signald samples;  // frames x channels, nominal range [-1, 1]
};

// Reads RIFF/WAVE PCM 16/24/32-bit and IEEE float32/64, including WAVE_FORMAT_EXTENSIBLE.
WavData read_wav(const std::filesystem::path& path);

// PCM16 output is clipped to [-1, 1).
void write_wav(const std::filesystem::path& path, const Signald& samples, int sample_rate,
               WavEncoding encoding = WavEncoding::float32);

}  // namespace mmr
