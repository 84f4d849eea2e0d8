#include "specadv/sequence.hpp"

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "specadv/errors.hpp"

namespace specadv {
namespace {

static_assert(std::endian::native == std::endian::little,
              "sequence container assumes little-endian storage");

constexpr char kMagic[4] = {'S', 'P', 'S', 'Q'};
constexpr std::uint32_t kVersion = 1;

void check_projectable(const SpectralSequence& seq) {
  if (seq.elements.empty()) throw DataError("empty spectral sequence");
  if (!seq.phase) throw DataError("spectral sequence carries no phase");
  const std::size_t bins = seq.bin_count();
  if (bins != seq.stft_config.window_length / 2 + 1)
    throw DataError("sequence bin count " + std::to_string(bins) +
                    " does not match window length " +
                    std::to_string(seq.stft_config.window_length));
  for (const Mat& el : seq.elements)
    if (el.rows() != bins || el.cols() != seq.frames_per_element)
      throw DataError("inconsistent element shape in spectral sequence");
  if (seq.phase->rows() != bins || seq.phase->cols() != seq.total_frames())
    throw DataError("phase shape does not match sequence frames");
}

CMat rebuild_spectrum(const SpectralSequence& seq) {
  const std::size_t bins = seq.bin_count();
  const std::size_t frames = seq.total_frames();
  const Mat& phase = *seq.phase;
  CMat spec(bins, frames);
  for (std::size_t n = 0; n < seq.elements.size(); ++n) {
    const Mat& el = seq.elements[n];
    for (std::size_t m = 0; m < bins; ++m) {
      for (std::size_t t = 0; t < seq.frames_per_element; ++t) {
        const std::size_t u = n * seq.frames_per_element + t;
        spec(m, u) = std::polar(el(m, t), phase(m, u));
      }
    }
  }
  return spec;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void clamp_nonnegative(Mat& magnitudes) {
  for (double& v : magnitudes.values())
    if (v < 0.0) v = 0.0;
}

SpectralSequence magnitude_sequence(const ComplexSpectrogram& spec,
                                    std::size_t frames_per_element) {
  if (frames_per_element == 0) throw DataError("frames_per_element must be positive");
  const std::size_t frames = spec.frame_count();
  const std::size_t count = frames / frames_per_element;
  if (count == 0)
    throw DataError("recording too short: " + std::to_string(frames) + " frames < " +
                    std::to_string(frames_per_element));

  SpectralSequence seq;
  seq.frames_per_element = frames_per_element;
  seq.stft_config = spec.config;
  const std::size_t bins = spec.bin_count();
  const std::size_t kept = count * frames_per_element;
  seq.phase = Mat(bins, kept);

  seq.elements.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    Mat el(bins, frames_per_element);
    for (std::size_t m = 0; m < bins; ++m) {
      for (std::size_t t = 0; t < frames_per_element; ++t) {
        const std::size_t u = n * frames_per_element + t;
        const std::complex<double> c = spec.bins(m, u);
        el(m, t) = std::abs(c);
        (*seq.phase)(m, u) = std::arg(c);
      }
    }
    clamp_nonnegative(el);
    seq.elements.push_back(std::move(el));
  }
  return seq;
}

SpectralSequence gl_project(const SpectralSequence& seq) {
  check_projectable(seq);
  const CMat spec = rebuild_spectrum(seq);
  const std::vector<double> audio = istft({spec, seq.stft_config});
  const ComplexSpectrogram reanalyzed = stft(audio, seq.stft_config);
  SpectralSequence out = magnitude_sequence(reanalyzed, seq.frames_per_element);
  if (out.total_frames() != seq.total_frames())
    throw DataError("projection changed the frame count");
  return out;
}

double epsilon_snr(const SpectralSequence& seq, double snr_db) {
  if (seq.elements.empty()) throw DataError("empty spectral sequence");
  const double n = static_cast<double>(seq.element_count());
  return total_norm(seq) / (n * std::pow(10.0, snr_db / 20.0));
}

double perturbation_snr(const SpectralSequence& reference, const SpectralSequence& perturbed) {
  const double dist = total_distance(reference, perturbed);
  if (dist == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(total_norm(reference) / dist);
}

double total_norm(const SpectralSequence& seq) {
  double acc = 0.0;
  for (const Mat& el : seq.elements)
    for (const double v : el.values()) acc += v * v;
  return std::sqrt(acc);
}

double total_distance(const SpectralSequence& a, const SpectralSequence& b) {
  if (a.element_count() != b.element_count() || a.frames_per_element != b.frames_per_element)
    throw DataError("sequence shapes differ");
  double acc = 0.0;
  for (std::size_t n = 0; n < a.elements.size(); ++n) {
    const Mat& ea = a.elements[n];
    const Mat& eb = b.elements[n];
    if (!ea.same_shape(eb)) throw DataError("sequence element shapes differ");
    for (std::size_t i = 0; i < ea.size(); ++i) {
      const double d = ea.values()[i] - eb.values()[i];
      acc += d * d;
    }
  }
  return std::sqrt(acc);
}

AudioSignal sequence_to_audio(const SpectralSequence& seq) {
  check_projectable(seq);
  AudioSignal sig;
  sig.sample_rate = kCanonicalSampleRate;
  sig.samples = istft({rebuild_spectrum(seq), seq.stft_config});
  return sig;
}

void save_sequence(const std::filesystem::path& path, const SpectralSequence& seq) {
  if (seq.elements.empty()) throw DataError("refusing to save empty spectral sequence");
  const std::size_t bins = seq.bin_count();
  for (const Mat& el : seq.elements)
    if (el.rows() != bins || el.cols() != seq.frames_per_element)
      throw DataError("inconsistent element shape in spectral sequence");

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write sequence file: " + path.string());
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(seq.element_count()));
    write_u32(out, static_cast<std::uint32_t>(seq.frames_per_element));
    write_u32(out, static_cast<std::uint32_t>(bins));
    write_u32(out, static_cast<std::uint32_t>(seq.stft_config.window_length));
    write_u32(out, static_cast<std::uint32_t>(seq.stft_config.hop));
    write_u32(out, seq.phase ? 1u : 0u);
    for (const Mat& el : seq.elements)
      out.write(reinterpret_cast<const char*>(el.data()),
                static_cast<std::streamsize>(el.size() * sizeof(double)));
    if (seq.phase) {
      if (seq.phase->rows() != bins || seq.phase->cols() != seq.total_frames())
        throw DataError("phase shape does not match sequence frames");
      out.write(reinterpret_cast<const char*>(seq.phase->data()),
                static_cast<std::streamsize>(seq.phase->size() * sizeof(double)));
    }
    if (!out) throw DataError("failed writing sequence file: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

SpectralSequence load_sequence(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open sequence file: " + path.string());

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("not a sequence file: " + path.string());
  const std::uint32_t version = read_u32(in);
  if (version != kVersion)
    throw DataError("unsupported sequence version " + std::to_string(version) + ": " +
                    path.string());
  const std::uint32_t count = read_u32(in);
  const std::uint32_t per_element = read_u32(in);
  const std::uint32_t bins = read_u32(in);
  const std::uint32_t win = read_u32(in);
  const std::uint32_t hop = read_u32(in);
  const std::uint32_t has_phase = read_u32(in);
  if (!in) throw DataError("truncated sequence header: " + path.string());
  if (count == 0 || per_element == 0 || bins == 0)
    throw DataError("invalid sequence header: " + path.string());

  SpectralSequence seq;
  seq.frames_per_element = per_element;
  seq.stft_config.window_length = win;
  seq.stft_config.hop = hop;
  seq.elements.reserve(count);
  for (std::uint32_t n = 0; n < count; ++n) {
    Mat el(bins, per_element);
    in.read(reinterpret_cast<char*>(el.data()),
            static_cast<std::streamsize>(el.size() * sizeof(double)));
    seq.elements.push_back(std::move(el));
  }
  if (has_phase) {
    Mat phase(bins, static_cast<std::size_t>(count) * per_element);
    in.read(reinterpret_cast<char*>(phase.data()),
            static_cast<std::streamsize>(phase.size() * sizeof(double)));
    seq.phase = std::move(phase);
  }
  if (!in) throw DataError("truncated sequence payload: " + path.string());
  in.peek();
  if (!in.eof()) throw DataError("trailing bytes in sequence file: " + path.string());
  return seq;
}

}  // namespace specadv
