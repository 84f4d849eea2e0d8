#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace specadv {

inline constexpr int kCanonicalSampleRate = 22050;

struct AudioSignal {
  std::vector<double> samples;  // in [-1, 1)
  int sample_rate = kCanonicalSampleRate;
};

// Reads a mono 16-bit PCM WAV file at the canonical rate. Samples are
// scaled by 1/32768.
AudioSignal load_audio(const std::filesystem::path& path);

// Writes a mono 16-bit PCM WAV file; samples are rounded and clipped to
// the int16 range. The file is written to a temporary name and renamed
// into place so readers never observe a partial file.
void store_audio(const std::filesystem::path& path, const AudioSignal& signal);

}  // namespace specadv
