#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specadv/network.hpp"

namespace specadv {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 20;
  double dropout = 0.0;
  std::uint64_t seed = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_recall = 0.0;
};

// Minibatch SGD with momentum on the mean element cross-entropy; returns
// the parameters from the epoch with the best validation mean recall.
// Deterministic for a given config seed.
NetworkParams fit(const ArchitectureSpec& spec, const std::vector<LabeledSequence>& train,
                  const std::vector<LabeledSequence>& valid, const TrainConfig& cfg,
                  const std::vector<std::string>& label_names,
                  std::vector<EpochStats>* log = nullptr);

// Mean per-class recall of the classifier over labeled sequences.
double mean_recall(const NetworkParams& params, const std::vector<LabeledSequence>& data);

}  // namespace specadv
