#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include "specadv/audio.hpp"
#include "specadv/matrix.hpp"
#include "specadv/stft.hpp"

namespace specadv {

// Sequence of magnitude-spectrum elements cut from one recording. Each
// element holds frames_per_element consecutive frames (bins x frames);
// the phase of every kept frame is carried alongside so the sequence can
// be projected back to a signal.
struct SpectralSequence {
  std::size_t frames_per_element = 1;
  std::vector<Mat> elements;
  std::optional<Mat> phase;  // bins x (N * frames_per_element), radians
  StftConfig stft_config;

  std::size_t element_count() const { return elements.size(); }
  std::size_t bin_count() const { return elements.empty() ? 0 : elements.front().rows(); }
  std::size_t total_frames() const { return elements.size() * frames_per_element; }
};

// Rounds tiny negative magnitudes (numeric noise) up to zero.
void clamp_nonnegative(Mat& magnitudes);

// Splits a spectrogram into magnitude elements of frames_per_element
// frames; trailing frames that do not fill an element are dropped.
SpectralSequence magnitude_sequence(const ComplexSpectrogram& spec,
                                    std::size_t frames_per_element);

// Projects a magnitude sequence onto the set realizable by some time
// signal: rebuilds a complex spectrum from the magnitudes and the carried
// phase, resynthesizes, re-analyzes and keeps the resulting magnitudes.
// The carried phase is refreshed to the projected spectrum's phase, which
// makes a second application the identity.
SpectralSequence gl_project(const SpectralSequence& seq);

// Per-element distortion bound epsilon for a target signal-to-noise ratio
// in dB: (1/N) * sqrt(sum of squared element norms) / 10^(snr/20).
double epsilon_snr(const SpectralSequence& seq, double snr_db);

// Achieved ratio 20*log10(|X| / |Xhat - X|) in dB; +infinity when the
// sequences are identical.
double perturbation_snr(const SpectralSequence& reference, const SpectralSequence& perturbed);

// sqrt of the summed squared Frobenius norms of the elements.
double total_norm(const SpectralSequence& seq);

// sqrt of the summed squared element-wise differences.
double total_distance(const SpectralSequence& a, const SpectralSequence& b);

// Resynthesizes the time signal encoded by the magnitudes and carried phase.
AudioSignal sequence_to_audio(const SpectralSequence& seq);

// Binary sequence container with magic "SPSQ"; 64-bit floats throughout.
void save_sequence(const std::filesystem::path& path, const SpectralSequence& seq);
SpectralSequence load_sequence(const std::filesystem::path& path);

}  // namespace specadv
