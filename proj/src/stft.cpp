#include "specadv/stft.hpp"

#include <cmath>
#include <complex>

#include "specadv/errors.hpp"
#include "specadv/fft.hpp"

namespace specadv {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kWeightFloor = 1e-12;

void check_config(const StftConfig& config) {
  const std::size_t n = config.window_length;
  if (n < 2 || (n & (n - 1)) != 0)
    throw DataError("window length must be a power of two, got " + std::to_string(n));
  if (config.hop == 0 || config.hop > n)
    throw DataError("hop must be in [1, window length], got " + std::to_string(config.hop));
}

}  // namespace

std::vector<double> hann_window(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t l = 0; l < length; ++l)
    w[l] = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(l) / static_cast<double>(length)));
  return w;
}

ComplexSpectrogram stft(const std::vector<double>& samples, const StftConfig& config) {
  check_config(config);
  const std::size_t win = config.window_length;
  const std::size_t hop = config.hop;
  if (samples.size() < win)
    throw DataError("signal shorter than one window: " + std::to_string(samples.size()) +
                    " < " + std::to_string(win));

  const std::size_t frames = (samples.size() - win) / hop + 1;
  const std::size_t bins = win / 2 + 1;
  const std::vector<double> w = hann_window(win);

  ComplexSpectrogram spec;
  spec.config = config;
  spec.bins = CMat(bins, frames);

  std::vector<std::complex<double>> buf(win);
  for (std::size_t u = 0; u < frames; ++u) {
    const double* x = samples.data() + u * hop;
    for (std::size_t l = 0; l < win; ++l) buf[l] = {w[l] * x[l], 0.0};
    fft(buf);
    for (std::size_t m = 0; m < bins; ++m) spec.bins(m, u) = buf[m];
  }
  return spec;
}

ComplexSpectrogram stft(const AudioSignal& signal, const StftConfig& config) {
  return stft(signal.samples, config);
}

std::vector<double> istft(const ComplexSpectrogram& spec) {
  check_config(spec.config);
  const std::size_t win = spec.config.window_length;
  const std::size_t hop = spec.config.hop;
  if (hop * 2 != win)
    throw DataError("inverse transform requires hop == window/2, got hop " + std::to_string(hop));
  const std::size_t bins = win / 2 + 1;
  if (spec.bins.rows() != bins)
    throw DataError("expected " + std::to_string(bins) + " bins, got " +
                    std::to_string(spec.bins.rows()));
  const std::size_t frames = spec.bins.cols();
  if (frames == 0) throw DataError("empty spectrogram");

  const std::vector<double> w = hann_window(win);
  const std::size_t out_len = (frames - 1) * hop + win;
  std::vector<double> num(out_len, 0.0);
  std::vector<double> den(out_len, 0.0);

  std::vector<std::complex<double>> buf(win);
  for (std::size_t u = 0; u < frames; ++u) {
    for (std::size_t m = 0; m < bins; ++m) buf[m] = spec.bins(m, u);
    for (std::size_t m = bins; m < win; ++m) buf[m] = std::conj(spec.bins(win - m, u));
    fft(buf, true);
    const std::size_t base = u * hop;
    for (std::size_t l = 0; l < win; ++l) {
      num[base + l] += w[l] * buf[l].real();
      den[base + l] += w[l] * w[l];
    }
  }

  std::vector<double> out(out_len);
  for (std::size_t t = 0; t < out_len; ++t)
    out[t] = num[t] / (den[t] > kWeightFloor ? den[t] : kWeightFloor);
  return out;
}

}  // namespace specadv
