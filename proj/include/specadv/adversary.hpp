#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specadv/audio.hpp"
#include "specadv/network.hpp"
#include "specadv/sequence.hpp"
#include "specadv/train.hpp"

namespace specadv {

struct AdversaryConfig {
  double snr_db = 15.0;
  double mu = 0.1;
  double r_min = 0.9;
  std::size_t k_max = 100;
};

// How attack targets are assigned to a batch of recordings.
struct Directive {
  enum class Kind { correct_with_prob, always_wrong, fixed_label, all_labels };

  Kind kind = Kind::correct_with_prob;
  double p = 0.1;
  std::size_t label = 0;
  std::uint64_t seed = 0;

  static Directive correct_with_prob(double p, std::uint64_t seed);
  static Directive always_wrong(std::uint64_t seed);
  static Directive fixed_label(std::size_t label);
  static Directive all_labels();
};

struct AttackResult {
  SpectralSequence adversarial;
  std::size_t target = 0;
  std::size_t iterations = 0;
  double achieved_confidence = 0.0;
  double achieved_snr = 0.0;  // +infinity when the sequence is untouched
  bool succeeded = false;
};

// Nearest point of the distortion ball around the exemplar: mixes the
// candidate with the exemplar when the summed distance exceeds
// element_count * epsilon, otherwise returns the candidate unchanged.
SpectralSequence project_feasible(const SpectralSequence& candidate,
                                  const SpectralSequence& exemplar, double epsilon);

// Iterative gradient attack: step the magnitudes toward the target label,
// clamp to non-negative, project onto realizable sequences, project into
// the distortion ball; stop once the target confidence reaches r_min or
// after k_max steps. The returned sequence is realizable and inside the
// ball; the success flag reflects the returned sequence.
AttackResult attack(const NetworkParams& params, const SpectralSequence& exemplar,
                    std::size_t target, const AdversaryConfig& cfg);

// Per-recording target lists; singletons except under all_labels.
std::vector<std::vector<std::size_t>> choose_targets(std::size_t class_count,
                                                     const std::vector<std::size_t>& truths,
                                                     const Directive& directive);

// Training with one extra gradient step per element: each element is
// perturbed along the loss gradient of a uniformly drawn label (scaled per
// dimension by the training standard deviation) before the usual update.
// eps_scale of zero reproduces fit exactly.
NetworkParams adversarial_fit(const ArchitectureSpec& spec,
                              const std::vector<LabeledSequence>& train,
                              const std::vector<LabeledSequence>& valid, const TrainConfig& cfg,
                              const std::vector<std::string>& label_names, double eps_scale,
                              std::vector<EpochStats>* log = nullptr);

// Resynthesizes the attacked sequence into a time signal.
AudioSignal render_audio(const SpectralSequence& seq);

}  // namespace specadv
