#pragma once

#include <cstddef>
#include <vector>

#include "specadv/audio.hpp"
#include "specadv/matrix.hpp"

namespace specadv {

struct StftConfig {
  std::size_t window_length = 1024;
  std::size_t hop = 512;
};

// Periodic Hann window of the given length, values in [0, 1].
std::vector<double> hann_window(std::size_t length);

// Complex short-time spectrum: (window_length/2 + 1) bins by U frames.
struct ComplexSpectrogram {
  CMat bins;
  StftConfig config;

  std::size_t bin_count() const { return bins.rows(); }
  std::size_t frame_count() const { return bins.cols(); }
};

// Frames the signal with the configured window and hop and keeps the
// non-redundant half spectrum. Trailing samples that do not fill a whole
// window are dropped.
ComplexSpectrogram stft(const std::vector<double>& samples, const StftConfig& config = {});
ComplexSpectrogram stft(const AudioSignal& signal, const StftConfig& config = {});

// Weighted overlap-add inverse with the same Hann window; requires the hop
// to be half the window so the interior weight sum is constant. Returns
// (U-1)*hop + window_length samples.
std::vector<double> istft(const ComplexSpectrogram& spec);

}  // namespace specadv
