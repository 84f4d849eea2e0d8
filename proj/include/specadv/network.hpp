#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "specadv/matrix.hpp"
#include "specadv/rng.hpp"
#include "specadv/sequence.hpp"

namespace specadv {

enum class ArchKind { dnn, cdnn };

// One convolution stage: valid correlation followed by ReLU and max pooling.
struct ConvStage {
  std::size_t filters = 0;
  std::size_t kernel_rows = 0;
  std::size_t kernel_cols = 0;
  std::size_t pool_rows = 0;
  std::size_t pool_cols = 0;
  std::size_t pool_row_stride = 0;
  std::size_t pool_col_stride = 0;
};

struct ArchitectureSpec {
  ArchKind kind = ArchKind::dnn;
  std::size_t input_rows = 513;
  std::size_t input_cols = 1;
  std::vector<ConvStage> conv;      // empty for dnn
  std::vector<std::size_t> hidden;  // fully connected widths after the conv stack
  std::size_t class_count = 0;

  // Three equal ReLU layers on single-frame inputs.
  static ArchitectureSpec dnn(std::size_t width, std::size_t classes);
  // Two conv/pool stages and one dense layer on 100-frame inputs.
  static ArchitectureSpec cdnn(std::size_t classes);

  void validate() const;
};

// Per-dimension affine normalization fitted on training elements.
struct Standardizer {
  Mat mean;
  Mat stdev;  // population standard deviation, floored at 1e-8
};

struct LabeledSequence {
  SpectralSequence seq;
  std::size_t label = 0;
};

Standardizer standardizer_fit(const std::vector<const Mat*>& elements);
Standardizer standardizer_fit(const std::vector<LabeledSequence>& data);

// Trainable state: architecture, normalization constants, class names and
// one flat parameter vector (layer weights then biases, in layer order).
class NetworkParams {
public:
  NetworkParams() = default;
  NetworkParams(ArchitectureSpec spec, Standardizer standardizer,
                std::vector<std::string> label_names, Rng& init_rng);

  const ArchitectureSpec& spec() const { return spec_; }
  const Standardizer& standardizer() const { return standardizer_; }
  const std::vector<std::string>& label_names() const { return labels_; }
  std::vector<double>& theta() { return theta_; }
  const std::vector<double>& theta() const { return theta_; }

private:
  ArchitectureSpec spec_;
  Standardizer standardizer_;
  std::vector<std::string> labels_;
  std::vector<double> theta_;
};

std::size_t parameter_count(const ArchitectureSpec& spec);

struct TrainingElement {
  const Mat* element = nullptr;
  std::size_t label = 0;
};

// Posterior rows, one per element of the sequence.
Mat forward(const NetworkParams& params, const SpectralSequence& seq);

// Cross-entropy of one element; the posterior is clamped at 1e-38.
double loss(const NetworkParams& params, const Mat& element, std::size_t label);

// Gradient of the mean cross-entropy over the batch, shaped like theta.
std::vector<double> grad_params(const NetworkParams& params,
                                const std::vector<TrainingElement>& batch);

// Per-element gradients of each element's own cross-entropy with respect
// to the raw magnitudes, including the 1/std chain factor.
std::vector<Mat> grad_input(const NetworkParams& params, const SpectralSequence& seq,
                            std::size_t label);

// Mean posterior per class over the sequence.
std::vector<double> confidence(const Mat& posteriors);

// Argmax of the confidence; ties resolve to the lowest class index.
std::size_t classify(const NetworkParams& params, const SpectralSequence& seq);

// Per-window mean and variance of the concatenated hidden-layer
// activations, one feature row per texture window.
std::vector<std::vector<double>> aggregate_activations(const NetworkParams& params,
                                                       const SpectralSequence& seq,
                                                       std::size_t window = 215,
                                                       std::size_t hop = 107);

// Binary checkpoint with magic "ADNN"; 64-bit floats throughout.
void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params);
NetworkParams load_checkpoint(const std::filesystem::path& path);

}  // namespace specadv
