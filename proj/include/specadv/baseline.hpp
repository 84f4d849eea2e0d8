#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "specadv/audio.hpp"
#include "specadv/matrix.hpp"

namespace specadv {

// Mel-frequency cepstrum extractor for half-spectrum magnitude frames:
// triangular filter bank, log energies, orthonormal cosine transform.
class MfccExtractor {
public:
  MfccExtractor(std::size_t bins, int sample_rate, std::size_t filter_count = 40,
                std::size_t coefficient_count = 13);

  std::vector<double> coefficients(const std::vector<double>& frame_magnitudes) const;

  std::size_t bins() const { return bins_; }
  std::size_t coefficient_count() const { return coefficients_; }

private:
  std::size_t bins_;
  std::size_t filters_;
  std::size_t coefficients_;
  Mat weights_;  // filter x bin, rows sum to one
  Mat dct_;      // coefficient x filter
};

// Convenience wrapper building the canonical extractor per call.
std::vector<double> mfcc(const std::vector<double>& frame_magnitudes, int sample_rate);

// Fraction of adjacent sample pairs whose sign differs; zero counts as
// positive.
double zero_crossing_rate(const std::vector<double>& frame);

// Hand-crafted description of one analysis frame.
struct FrameFeature {
  std::vector<double> mfcc;  // 13 coefficients
  double zcr = 0.0;
};

// Frame-level features of a whole recording on the canonical analysis grid.
std::vector<FrameFeature> extract_frame_features(const AudioSignal& signal);

// Mean and population variance of each frame feature over texture windows;
// each output row is means then variances (2 * 14 canonical dimensions).
std::vector<std::vector<double>> texture_aggregate(const std::vector<FrameFeature>& frames,
                                                   std::size_t window = 215,
                                                   std::size_t hop = 107);

// Gaussian classifier with one mean per class and a shared covariance.
struct MahalanobisModel {
  std::vector<std::vector<double>> means;  // class x dim
  Mat covariance;                          // pooled, ridge-regularized
  Mat cholesky;                            // lower factor of the covariance
  std::size_t class_count = 0;
  std::vector<std::string> label_names;    // optional, filled by callers
};

MahalanobisModel fit_mahalanobis(const std::vector<std::vector<double>>& features,
                                 const std::vector<std::size_t>& labels);

// Mahalanobis distance to each class mean; equals the Euclidean distance
// when the shared covariance is the identity.
std::vector<double> mahalanobis_distances(const MahalanobisModel& model,
                                          const std::vector<double>& feature);

// Nearest class per window, then a plurality vote; ties resolve to the
// lowest class index.
std::size_t classify_majority(const MahalanobisModel& model,
                              const std::vector<std::vector<double>>& windows);

// Binary model container with magic "AMDL"; 64-bit floats throughout.
void save_mahalanobis(const std::filesystem::path& path, const MahalanobisModel& model);
MahalanobisModel load_mahalanobis(const std::filesystem::path& path);

}  // namespace specadv
