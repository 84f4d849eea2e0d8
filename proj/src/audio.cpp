#include "specadv/audio.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "specadv/errors.hpp"

namespace specadv {
namespace {

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

}  // namespace

AudioSignal load_audio(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audio file: " + path.string());

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    throw DataError("not a RIFF file: " + path.string());
  read_u32(in);  // chunk size
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0)
    throw DataError("not a WAVE file: " + path.string());

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::vector<char> data;

  while (in.read(tag, 4)) {
    const std::uint32_t size = read_u32(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_u16(in);
      channels = read_u16(in);
      rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data.resize(size);
      in.read(data.data(), size);
      if (!in) throw DataError("truncated data chunk: " + path.string());
      if (size % 2 != 0) in.seekg(1, std::ios::cur);
      break;
    } else {
      in.seekg(size + (size % 2), std::ios::cur);
    }
  }

  if (!have_fmt) throw DataError("missing fmt chunk: " + path.string());
  if (data.empty()) throw DataError("missing or empty data chunk: " + path.string());
  if (format != 1)
    throw DataError("expected PCM format, got format code " + std::to_string(format) + ": " +
                    path.string());
  if (channels != 1)
    throw DataError("expected mono audio, got " + std::to_string(channels) + " channels: " +
                    path.string());
  if (bits != 16)
    throw DataError("expected 16-bit samples, got " + std::to_string(bits) + ": " +
                    path.string());
  if (rate != static_cast<std::uint32_t>(kCanonicalSampleRate))
    throw DataError("expected sample rate " + std::to_string(kCanonicalSampleRate) + ", got " +
                    std::to_string(rate) + ": " + path.string());

  AudioSignal sig;
  sig.sample_rate = kCanonicalSampleRate;
  sig.samples.resize(data.size() / 2);
  for (std::size_t i = 0; i < sig.samples.size(); ++i) {
    const std::int16_t v = static_cast<std::int16_t>(
        static_cast<unsigned char>(data[2 * i]) |
        (static_cast<unsigned char>(data[2 * i + 1]) << 8));
    sig.samples[i] = static_cast<double>(v) / 32768.0;
  }
  return sig;
}

void store_audio(const std::filesystem::path& path, const AudioSignal& signal) {
  if (signal.sample_rate != kCanonicalSampleRate)
    throw DataError("expected sample rate " + std::to_string(kCanonicalSampleRate) + ", got " +
                    std::to_string(signal.sample_rate));

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write audio file: " + path.string());

    const std::uint32_t data_bytes = static_cast<std::uint32_t>(signal.samples.size() * 2);
    out.write("RIFF", 4);
    write_u32(out, 36 + data_bytes);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    write_u32(out, 16);
    write_u16(out, 1);  // PCM
    write_u16(out, 1);  // mono
    write_u32(out, static_cast<std::uint32_t>(signal.sample_rate));
    write_u32(out, static_cast<std::uint32_t>(signal.sample_rate * 2));
    write_u16(out, 2);   // block align
    write_u16(out, 16);  // bits
    out.write("data", 4);
    write_u32(out, data_bytes);

    for (const double s : signal.samples) {
      long long v = std::llround(s * 32768.0);
      if (v < -32768) v = -32768;
      if (v > 32767) v = 32767;
      write_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
    }
    if (!out) throw DataError("failed writing audio file: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace specadv
