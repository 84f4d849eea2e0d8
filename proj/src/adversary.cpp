#include "specadv/adversary.hpp"

#include <cmath>
#include <limits>

#include "specadv/errors.hpp"
#include "specadv/rng.hpp"

namespace specadv {
namespace {

// Alternates ball and realizability projections until the iterate sits in
// both sets. Both sets contain the exemplar, so the alternation contracts;
// a shrink toward the exemplar covers the rare non-converged case.
SpectralSequence settle_inside_ball(SpectralSequence z, const SpectralSequence& exemplar,
                                    double epsilon) {
  const double bound =
      static_cast<double>(exemplar.element_count()) * epsilon * (1.0 + 1e-12);
  for (int pass = 0; pass < 64; ++pass) {
    z = gl_project(project_feasible(z, exemplar, epsilon));
    if (total_distance(z, exemplar) <= bound) return z;
  }
  double alpha = 0.5;
  for (int pass = 0; pass < 64; ++pass) {
    SpectralSequence mixed = z;
    for (std::size_t n = 0; n < mixed.elements.size(); ++n)
      for (std::size_t i = 0; i < mixed.elements[n].size(); ++i)
        mixed.elements[n].values()[i] =
            exemplar.elements[n].values()[i] +
            alpha * (z.elements[n].values()[i] - exemplar.elements[n].values()[i]);
    SpectralSequence candidate = gl_project(mixed);
    if (total_distance(candidate, exemplar) <= bound) return candidate;
    alpha *= 0.5;
  }
  return gl_project(exemplar);
}

}  // namespace

Directive Directive::correct_with_prob(double p, std::uint64_t seed) {
  if (p < 0.0 || p > 1.0) throw DataError("target probability must be in [0, 1]");
  Directive d;
  d.kind = Kind::correct_with_prob;
  d.p = p;
  d.seed = seed;
  return d;
}

Directive Directive::always_wrong(std::uint64_t seed) {
  Directive d;
  d.kind = Kind::always_wrong;
  d.seed = seed;
  return d;
}

Directive Directive::fixed_label(std::size_t label) {
  Directive d;
  d.kind = Kind::fixed_label;
  d.label = label;
  return d;
}

Directive Directive::all_labels() {
  Directive d;
  d.kind = Kind::all_labels;
  return d;
}

SpectralSequence project_feasible(const SpectralSequence& candidate,
                                  const SpectralSequence& exemplar, double epsilon) {
  if (!(epsilon > 0.0)) throw DataError("distortion bound must be positive");
  const double n = static_cast<double>(exemplar.element_count());
  const double nu = std::max(0.0, total_distance(candidate, exemplar) / (n * epsilon) - 1.0);
  if (nu == 0.0) return candidate;

  SpectralSequence out = candidate;
  const double inv = 1.0 / (1.0 + nu);
  for (std::size_t i = 0; i < out.elements.size(); ++i)
    for (std::size_t d = 0; d < out.elements[i].size(); ++d)
      out.elements[i].values()[d] =
          inv * (candidate.elements[i].values()[d] + nu * exemplar.elements[i].values()[d]);
  return out;
}

AttackResult attack(const NetworkParams& params, const SpectralSequence& exemplar,
                    std::size_t target, const AdversaryConfig& cfg) {
  if (target >= params.spec().class_count) throw DataError("attack target out of range");
  if (!exemplar.phase) throw DataError("exemplar carries no phase");
  if (!(cfg.mu >= 0.0)) throw DataError("step size must not be negative");
  if (cfg.r_min < 0.0 || cfg.r_min > 1.0) throw DataError("confidence goal must be in [0, 1]");

  const double epsilon = epsilon_snr(exemplar, cfg.snr_db);
  SpectralSequence z = exemplar;
  std::size_t iterations = 0;

  while (true) {
    const double conf = confidence(forward(params, z))[target];
    if (conf >= cfg.r_min || iterations == cfg.k_max) break;
    const std::vector<Mat> grads = grad_input(params, z, target);
    for (std::size_t n = 0; n < z.elements.size(); ++n) {
      Mat& el = z.elements[n];
      for (std::size_t i = 0; i < el.size(); ++i)
        el.values()[i] -= cfg.mu * grads[n].values()[i];
      clamp_nonnegative(el);
    }
    z = project_feasible(gl_project(z), exemplar, epsilon);
    ++iterations;
  }

  AttackResult result;
  result.adversarial =
      iterations == 0 ? exemplar : settle_inside_ball(std::move(z), exemplar, epsilon);
  result.target = target;
  result.iterations = iterations;
  result.achieved_confidence = confidence(forward(params, result.adversarial))[target];
  result.achieved_snr = perturbation_snr(exemplar, result.adversarial);
  result.succeeded = result.achieved_confidence >= cfg.r_min;
  return result;
}

std::vector<std::vector<std::size_t>> choose_targets(std::size_t class_count,
                                                     const std::vector<std::size_t>& truths,
                                                     const Directive& directive) {
  if (class_count < 2) throw DataError("target choice needs at least two classes");
  for (const std::size_t y : truths)
    if (y >= class_count) throw DataError("true label out of range");

  std::vector<std::vector<std::size_t>> out(truths.size());
  switch (directive.kind) {
    case Directive::Kind::fixed_label: {
      if (directive.label >= class_count) throw DataError("fixed target label out of range");
      for (auto& t : out) t = {directive.label};
      break;
    }
    case Directive::Kind::all_labels: {
      std::vector<std::size_t> all(class_count);
      for (std::size_t k = 0; k < class_count; ++k) all[k] = k;
      for (auto& t : out) t = all;
      break;
    }
    case Directive::Kind::correct_with_prob: {
      Rng rng(directive.seed);
      for (std::size_t i = 0; i < truths.size(); ++i) {
        if (rng.uniform() < directive.p) {
          out[i] = {truths[i]};
        } else {
          std::size_t pick = rng.index(class_count - 1);
          if (pick >= truths[i]) ++pick;
          out[i] = {pick};
        }
      }
      break;
    }
    case Directive::Kind::always_wrong: {
      Rng rng(directive.seed);
      for (std::size_t i = 0; i < truths.size(); ++i) {
        std::size_t pick = rng.index(class_count - 1);
        if (pick >= truths[i]) ++pick;
        out[i] = {pick};
      }
      break;
    }
  }
  return out;
}

AudioSignal render_audio(const SpectralSequence& seq) { return sequence_to_audio(seq); }

}  // namespace specadv
