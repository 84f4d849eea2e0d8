#include "specadv/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "specadv/errors.hpp"
#include "specadv/stft.hpp"

namespace specadv {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kEnergyFloor = 1e-10;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

MfccExtractor::MfccExtractor(std::size_t bins, int sample_rate, std::size_t filter_count,
                             std::size_t coefficient_count)
    : bins_(bins), filters_(filter_count), coefficients_(coefficient_count) {
  if (bins < 3) throw DataError("too few spectral bins for a filter bank");
  if (coefficient_count > filter_count)
    throw DataError("more cepstral coefficients than filters");

  const double nyquist = static_cast<double>(sample_rate) / 2.0;
  const std::size_t window = 2 * (bins - 1);
  std::vector<double> edges(filters_ + 2);
  const double mel_top = hz_to_mel(nyquist);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_top * static_cast<double>(i) / static_cast<double>(filters_ + 1));

  weights_ = Mat(filters_, bins_, 0.0);
  for (std::size_t f = 0; f < filters_; ++f) {
    const double lo = edges[f], mid = edges[f + 1], hi = edges[f + 2];
    double sum = 0.0;
    for (std::size_t m = 0; m < bins_; ++m) {
      const double hz =
          static_cast<double>(m) * static_cast<double>(sample_rate) / static_cast<double>(window);
      double w = 0.0;
      if (hz > lo && hz <= mid)
        w = (hz - lo) / (mid - lo);
      else if (hz > mid && hz < hi)
        w = (hi - hz) / (hi - mid);
      weights_(f, m) = w;
      sum += w;
    }
    if (sum <= 0.0)
      throw DataError("mel filter " + std::to_string(f) + " covers no spectral bin");
    for (std::size_t m = 0; m < bins_; ++m) weights_(f, m) /= sum;
  }

  dct_ = Mat(coefficients_, filters_, 0.0);
  const double fn = static_cast<double>(filters_);
  for (std::size_t j = 0; j < coefficients_; ++j) {
    const double scale = j == 0 ? std::sqrt(1.0 / fn) : std::sqrt(2.0 / fn);
    for (std::size_t f = 0; f < filters_; ++f)
      dct_(j, f) = scale * std::cos(kPi * static_cast<double>(j) *
                                    (2.0 * static_cast<double>(f) + 1.0) / (2.0 * fn));
  }
}

std::vector<double> MfccExtractor::coefficients(
    const std::vector<double>& frame_magnitudes) const {
  if (frame_magnitudes.size() != bins_)
    throw DataError("expected " + std::to_string(bins_) + " magnitudes, got " +
                    std::to_string(frame_magnitudes.size()));
  std::vector<double> log_energy(filters_);
  for (std::size_t f = 0; f < filters_; ++f) {
    double acc = 0.0;
    for (std::size_t m = 0; m < bins_; ++m) acc += weights_(f, m) * frame_magnitudes[m];
    log_energy[f] = std::log(std::max(acc, kEnergyFloor));
  }
  std::vector<double> out(coefficients_);
  for (std::size_t j = 0; j < coefficients_; ++j) {
    double acc = 0.0;
    for (std::size_t f = 0; f < filters_; ++f) acc += dct_(j, f) * log_energy[f];
    out[j] = acc;
  }
  return out;
}

std::vector<double> mfcc(const std::vector<double>& frame_magnitudes, int sample_rate) {
  const MfccExtractor extractor(frame_magnitudes.size(), sample_rate);
  return extractor.coefficients(frame_magnitudes);
}

double zero_crossing_rate(const std::vector<double>& frame) {
  if (frame.size() < 2) throw DataError("zero-crossing rate needs at least two samples");
  std::size_t changes = 0;
  for (std::size_t t = 1; t < frame.size(); ++t) {
    const bool prev = frame[t - 1] >= 0.0;
    const bool cur = frame[t] >= 0.0;
    if (prev != cur) ++changes;
  }
  return static_cast<double>(changes) / static_cast<double>(frame.size() - 1);
}

std::vector<FrameFeature> extract_frame_features(const AudioSignal& signal) {
  const StftConfig config;
  const ComplexSpectrogram spec = stft(signal, config);
  const MfccExtractor extractor(spec.bin_count(), signal.sample_rate);

  std::vector<FrameFeature> out;
  out.reserve(spec.frame_count());
  std::vector<double> magnitudes(spec.bin_count());
  std::vector<double> segment(config.window_length);
  for (std::size_t u = 0; u < spec.frame_count(); ++u) {
    for (std::size_t m = 0; m < spec.bin_count(); ++m) magnitudes[m] = std::abs(spec.bins(m, u));
    const double* base = signal.samples.data() + u * config.hop;
    segment.assign(base, base + config.window_length);
    FrameFeature feature;
    feature.mfcc = extractor.coefficients(magnitudes);
    feature.zcr = zero_crossing_rate(segment);
    out.push_back(std::move(feature));
  }
  return out;
}

std::vector<std::vector<double>> texture_aggregate(const std::vector<FrameFeature>& frames,
                                                   std::size_t window, std::size_t hop) {
  if (window == 0 || hop == 0) throw DataError("window and hop must be positive");
  if (frames.size() < window)
    throw DataError("recording too short for a texture window: " +
                    std::to_string(frames.size()) + " < " + std::to_string(window));
  const std::size_t dim = frames.front().mfcc.size() + 1;

  std::vector<std::vector<double>> out;
  for (std::size_t start = 0; start + window <= frames.size(); start += hop) {
    std::vector<double> feat(2 * dim, 0.0);
    for (std::size_t i = start; i < start + window; ++i) {
      const FrameFeature& f = frames[i];
      for (std::size_t d = 0; d + 1 < dim; ++d) feat[d] += f.mfcc[d];
      feat[dim - 1] += f.zcr;
    }
    const double count = static_cast<double>(window);
    for (std::size_t d = 0; d < dim; ++d) feat[d] /= count;
    for (std::size_t i = start; i < start + window; ++i) {
      const FrameFeature& f = frames[i];
      for (std::size_t d = 0; d + 1 < dim; ++d) {
        const double diff = f.mfcc[d] - feat[d];
        feat[dim + d] += diff * diff;
      }
      const double diff = f.zcr - feat[dim - 1];
      feat[2 * dim - 1] += diff * diff;
    }
    for (std::size_t d = 0; d < dim; ++d) feat[dim + d] /= count;
    out.push_back(std::move(feat));
  }
  return out;
}

MahalanobisModel fit_mahalanobis(const std::vector<std::vector<double>>& features,
                                 const std::vector<std::size_t>& labels) {
  if (features.empty()) throw DataError("no features to fit");
  if (features.size() != labels.size())
    throw DataError("feature and label counts differ");
  const std::size_t dim = features.front().size();
  for (const auto& f : features)
    if (f.size() != dim) throw DataError("inconsistent feature dimensions");

  const std::size_t classes = 1 + *std::max_element(labels.begin(), labels.end());
  if (classes < 2) throw DataError("classifier needs at least two classes");
  std::vector<std::size_t> counts(classes, 0);
  for (const std::size_t y : labels) ++counts[y];
  for (std::size_t k = 0; k < classes; ++k)
    if (counts[k] < 2)
      throw DataError("class " + std::to_string(k) + " has fewer than two samples");

  MahalanobisModel model;
  model.class_count = classes;
  model.means.assign(classes, std::vector<double>(dim, 0.0));
  for (std::size_t i = 0; i < features.size(); ++i)
    for (std::size_t d = 0; d < dim; ++d) model.means[labels[i]][d] += features[i][d];
  for (std::size_t k = 0; k < classes; ++k)
    for (double& v : model.means[k]) v /= static_cast<double>(counts[k]);

  model.covariance = Mat(dim, dim, 0.0);
  std::vector<double> centered(dim);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& mean = model.means[labels[i]];
    for (std::size_t d = 0; d < dim; ++d) centered[d] = features[i][d] - mean[d];
    for (std::size_t r = 0; r < dim; ++r)
      for (std::size_t c = r; c < dim; ++c)
        model.covariance(r, c) += centered[r] * centered[c];
  }
  const double n = static_cast<double>(features.size());
  double trace = 0.0;
  for (std::size_t r = 0; r < dim; ++r) {
    for (std::size_t c = r; c < dim; ++c) {
      model.covariance(r, c) /= n;
      model.covariance(c, r) = model.covariance(r, c);
    }
    trace += model.covariance(r, r);
  }
  const double ridge = std::max(1e-6 * trace / static_cast<double>(dim), 1e-8);
  for (std::size_t d = 0; d < dim; ++d) model.covariance(d, d) += ridge;

  model.cholesky = Mat(dim, dim, 0.0);
  for (std::size_t r = 0; r < dim; ++r) {
    for (std::size_t c = 0; c <= r; ++c) {
      double acc = model.covariance(r, c);
      for (std::size_t k = 0; k < c; ++k) acc -= model.cholesky(r, k) * model.cholesky(c, k);
      if (r == c) {
        if (acc <= 0.0) throw NumericError("pooled covariance is not positive definite");
        model.cholesky(r, r) = std::sqrt(acc);
      } else {
        model.cholesky(r, c) = acc / model.cholesky(c, c);
      }
    }
  }
  return model;
}

std::vector<double> mahalanobis_distances(const MahalanobisModel& model,
                                          const std::vector<double>& feature) {
  const std::size_t dim = model.covariance.rows();
  if (feature.size() != dim) throw DataError("feature dimension mismatch");
  std::vector<double> out(model.class_count);
  std::vector<double> z(dim);
  for (std::size_t k = 0; k < model.class_count; ++k) {
    for (std::size_t r = 0; r < dim; ++r) {
      double acc = feature[r] - model.means[k][r];
      for (std::size_t c = 0; c < r; ++c) acc -= model.cholesky(r, c) * z[c];
      z[r] = acc / model.cholesky(r, r);
    }
    double dist = 0.0;
    for (const double v : z) dist += v * v;
    out[k] = std::sqrt(dist);
  }
  return out;
}

std::size_t classify_majority(const MahalanobisModel& model,
                              const std::vector<std::vector<double>>& windows) {
  if (windows.empty()) throw DataError("no texture windows to classify");
  std::vector<std::size_t> votes(model.class_count, 0);
  for (const auto& window : windows) {
    const std::vector<double> dist = mahalanobis_distances(model, window);
    std::size_t best = 0;
    for (std::size_t k = 1; k < dist.size(); ++k)
      if (dist[k] < dist[best]) best = k;
    ++votes[best];
  }
  std::size_t winner = 0;
  for (std::size_t k = 1; k < votes.size(); ++k)
    if (votes[k] > votes[winner]) winner = k;
  return winner;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t take_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw DataError(std::string("truncated model file reading ") + what);
  return v;
}

void put_f64(std::ostream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
}

void take_f64(std::istream& in, double* data, std::size_t count, const char* what) {
  if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 8)))
    throw DataError(std::string("truncated model file reading ") + what);
}

}  // namespace

void save_mahalanobis(const std::filesystem::path& path, const MahalanobisModel& model) {
  if (model.class_count == 0 || model.means.size() != model.class_count)
    throw DataError("model has no fitted means");
  if (!model.label_names.empty() && model.label_names.size() != model.class_count)
    throw DataError("label name count does not match the class count");
  const std::size_t dim = model.covariance.rows();

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write model file: " + path.string());
    out.write("AMDL", 4);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(dim));
    put_u32(out, static_cast<std::uint32_t>(model.class_count));
    put_u32(out, static_cast<std::uint32_t>(model.label_names.size()));
    for (const auto& name : model.label_names) {
      put_u32(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    for (const auto& mean : model.means) {
      if (mean.size() != dim) throw DataError("mean dimension mismatch");
      put_f64(out, mean.data(), dim);
    }
    put_f64(out, model.covariance.values().data(), model.covariance.size());
    put_f64(out, model.cholesky.values().data(), model.cholesky.size());
    if (!out) throw DataError("failed writing model file: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

MahalanobisModel load_mahalanobis(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path.string());

  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, "AMDL", 4) != 0)
    throw DataError("not a model file: " + path.string());
  if (take_u32(in, "version") != 1) throw DataError("unsupported model version");

  const std::uint32_t dim = take_u32(in, "dimension");
  const std::uint32_t classes = take_u32(in, "class count");
  const std::uint32_t names = take_u32(in, "label count");
  if (dim == 0 || dim > 1u << 20 || classes == 0 || classes > 1u << 20)
    throw DataError("implausible model dimensions");
  if (names != 0 && names != classes)
    throw DataError("label name count does not match the class count");

  MahalanobisModel model;
  model.class_count = classes;
  for (std::uint32_t i = 0; i < names; ++i) {
    const std::uint32_t len = take_u32(in, "label length");
    if (len > 4096) throw DataError("implausible label length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw DataError("truncated model file reading label");
    model.label_names.push_back(std::move(name));
  }
  model.means.assign(classes, std::vector<double>(dim));
  for (auto& mean : model.means) take_f64(in, mean.data(), dim, "means");
  model.covariance = Mat(dim, dim);
  take_f64(in, model.covariance.values().data(), model.covariance.size(), "covariance");
  model.cholesky = Mat(dim, dim);
  take_f64(in, model.cholesky.values().data(), model.cholesky.size(), "factor");

  in.peek();
  if (!in.eof()) throw DataError("trailing bytes in model file: " + path.string());
  return model;
}

}  // namespace specadv
