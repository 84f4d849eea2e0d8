#include "specadv/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "net_internal.hpp"
#include "specadv/adversary.hpp"
#include "specadv/errors.hpp"
#include "specadv/rng.hpp"

namespace specadv {
namespace {

constexpr double kPosteriorFloor = 1e-38;

struct ElementRef {
  const Mat* element;
  std::size_t label;
};

void check_split(const std::vector<LabeledSequence>& data, std::size_t classes,
                 const char* name) {
  if (data.empty()) throw DataError(std::string(name) + " split is empty");
  for (const LabeledSequence& item : data) {
    if (item.label >= classes)
      throw DataError(std::string("label out of range in ") + name + " split");
    if (item.seq.elements.empty())
      throw DataError(std::string("empty sequence in ") + name + " split");
  }
}

NetworkParams fit_engine(const ArchitectureSpec& spec, const std::vector<LabeledSequence>& train,
                         const std::vector<LabeledSequence>& valid, const TrainConfig& cfg,
                         const std::vector<std::string>& label_names, double eps_adv,
                         std::vector<EpochStats>* log) {
  spec.validate();
  check_split(train, spec.class_count, "train");
  check_split(valid, spec.class_count, "valid");
  if (cfg.batch_size == 0) throw DataError("batch size must be positive");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
    throw DataError("dropout probability must be in [0, 1)");

  Rng root(cfg.seed);
  Rng init_rng = root.substream(1);
  Rng shuffle_rng = root.substream(2);
  Rng dropout_rng = root.substream(3);
  Rng adv_rng = root.substream(4);

  NetworkParams params(spec, standardizer_fit(train), label_names, init_rng);
  const detail::Shapes shapes = detail::compute_shapes(spec);
  detail::Workspace ws;
  ws.init(shapes);

  std::vector<ElementRef> pool;
  for (const LabeledSequence& item : train)
    for (const Mat& el : item.seq.elements) pool.push_back({&el, item.label});

  std::vector<double> grad(shapes.params);
  std::vector<double> velocity(shapes.params, 0.0);
  std::vector<std::vector<double>> masks;
  for (const std::size_t w : spec.hidden) masks.emplace_back(w, 1.0);
  const bool use_dropout = cfg.dropout > 0.0;
  const double keep_scale = use_dropout ? 1.0 / (1.0 - cfg.dropout) : 1.0;

  std::vector<double> best_theta = params.theta();
  double best_recall = -1.0;
  std::size_t epochs_since_best = 0;

  Mat adv_grad(spec.input_rows, spec.input_cols);
  Mat adv_element(spec.input_rows, spec.input_cols);
  const std::vector<double>& stdev = params.standardizer().stdev.values();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(pool);
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < pool.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, pool.size());
      std::fill(grad.begin(), grad.end(), 0.0);

      for (std::size_t i = start; i < stop; ++i) {
        const Mat* element = pool[i].element;
        if (eps_adv != 0.0) {
          const std::size_t drawn = adv_rng.index(spec.class_count);
          detail::forward_element(params, shapes, *element, ws, nullptr);
          detail::backward_element(params, shapes, ws, drawn, nullptr, &adv_grad, nullptr);
          for (std::size_t d = 0; d < adv_element.size(); ++d)
            adv_element.values()[d] =
                element->values()[d] - eps_adv * stdev[d] * adv_grad.values()[d];
          element = &adv_element;
        }
        if (use_dropout)
          for (auto& layer : masks)
            for (double& m : layer)
              m = dropout_rng.uniform() < cfg.dropout ? 0.0 : keep_scale;

        detail::forward_element(params, shapes, *element, ws,
                                use_dropout ? &masks : nullptr);
        epoch_loss -=
            std::log(std::max(ws.dense_act.back()[pool[i].label], kPosteriorFloor));
        detail::backward_element(params, shapes, ws, pool[i].label, &grad, nullptr,
                                 use_dropout ? &masks : nullptr);
      }

      const double scale = 1.0 / static_cast<double>(stop - start);
      std::vector<double>& theta = params.theta();
      for (std::size_t d = 0; d < grad.size(); ++d) {
        velocity[d] = cfg.momentum * velocity[d] - cfg.learning_rate * grad[d] * scale;
        theta[d] += velocity[d];
      }
    }

    epoch_loss /= static_cast<double>(pool.size());
    if (!std::isfinite(epoch_loss))
      throw NumericError("training diverged at epoch " + std::to_string(epoch));

    const double recall = mean_recall(params, valid);
    if (log) log->push_back({epoch, epoch_loss, recall});

    // Ties keep the most recent epoch; only strict gains reset patience.
    const bool improved = recall > best_recall;
    if (recall >= best_recall) {
      best_recall = recall;
      best_theta = params.theta();
    }
    if (improved) {
      epochs_since_best = 0;
    } else if (++epochs_since_best >= cfg.patience) {
      break;
    }
  }

  params.theta() = std::move(best_theta);
  return params;
}

}  // namespace

double mean_recall(const NetworkParams& params, const std::vector<LabeledSequence>& data) {
  const std::size_t classes = params.spec().class_count;
  std::vector<std::size_t> total(classes, 0), correct(classes, 0);
  for (const LabeledSequence& item : data) {
    ++total[item.label];
    if (classify(params, item.seq) == item.label) ++correct[item.label];
  }
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    if (total[k] == 0) continue;
    sum += static_cast<double>(correct[k]) / static_cast<double>(total[k]);
    ++present;
  }
  if (present == 0) throw DataError("no labeled items to evaluate");
  return sum / static_cast<double>(present);
}

NetworkParams fit(const ArchitectureSpec& spec, const std::vector<LabeledSequence>& train,
                  const std::vector<LabeledSequence>& valid, const TrainConfig& cfg,
                  const std::vector<std::string>& label_names, std::vector<EpochStats>* log) {
  return fit_engine(spec, train, valid, cfg, label_names, 0.0, log);
}

NetworkParams adversarial_fit(const ArchitectureSpec& spec,
                              const std::vector<LabeledSequence>& train,
                              const std::vector<LabeledSequence>& valid, const TrainConfig& cfg,
                              const std::vector<std::string>& label_names, double eps_scale,
                              std::vector<EpochStats>* log) {
  if (eps_scale < 0.0) throw DataError("adversarial step scale must be non-negative");
  return fit_engine(spec, train, valid, cfg, label_names, eps_scale, log);
}

}  // namespace specadv
