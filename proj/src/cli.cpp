#include "specadv/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "specadv/adversary.hpp"
#include "specadv/audio.hpp"
#include "specadv/baseline.hpp"
#include "specadv/errors.hpp"
#include "specadv/eval.hpp"
#include "specadv/network.hpp"
#include "specadv/sequence.hpp"
#include "specadv/stft.hpp"
#include "specadv/train.hpp"

namespace specadv {
namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Config = std::map<std::string, std::string>;

std::string trimmed(const std::string& s) {
  const auto from = s.find_first_not_of(" \t");
  if (from == std::string::npos) return "";
  const auto to = s.find_last_not_of(" \t");
  return s.substr(from, to - from + 1);
}

Config parse_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path.string());
  Config config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trimmed(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(line_no) +
                       " is not key=value: " + line);
    const std::string key = trimmed(line.substr(0, eq));
    if (key.empty())
      throw UsageError("config line " + std::to_string(line_no) + " has an empty key");
    config[key] = trimmed(line.substr(eq + 1));
  }
  return config;
}

std::string get_str(const Config& config, const std::string& key, const std::string& def) {
  const auto it = config.find(key);
  return it == config.end() ? def : it->second;
}

std::string need_str(const Config& config, const std::string& key) {
  const auto it = config.find(key);
  if (it == config.end() || it->second.empty())
    throw UsageError("missing required setting: " + key);
  return it->second;
}

double get_f(const Config& config, const std::string& key, double def) {
  const auto it = config.find(key);
  if (it == config.end()) return def;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0')
    throw UsageError("setting " + key + " must be a number, got: " + it->second);
  return v;
}

std::size_t get_n(const Config& config, const std::string& key, std::size_t def) {
  const auto it = config.find(key);
  if (it == config.end()) return def;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0' || it->second.front() == '-')
    throw UsageError("setting " + key + " must be a non-negative integer, got: " + it->second);
  return static_cast<std::size_t>(v);
}

fs::path need_out(const Config& config) {
  const fs::path out = need_str(config, "out");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory: " + out.string());
  return out;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path.string());
    out << text;
    if (!out) throw DataError("failed writing file: " + path.string());
  }
  fs::rename(tmp, path);
}

std::ostream& log() { return std::cerr << "[specadv] "; }

std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::map<std::string, std::size_t> index_of(const std::vector<std::string>& names) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < names.size(); ++i) index[names[i]] = i;
  return index;
}

// Keeps every stride-th element; the carried phase no longer matches, so
// it is dropped (training and classification never use it).
void thin_elements(SpectralSequence& seq, std::size_t stride) {
  if (stride <= 1) return;
  std::vector<Mat> kept;
  for (std::size_t i = 0; i < seq.elements.size(); i += stride)
    kept.push_back(std::move(seq.elements[i]));
  seq.elements = std::move(kept);
  seq.phase.reset();
}

// Keeps the first n elements along with their phase columns.
void take_front(SpectralSequence& seq, std::size_t n) {
  if (n == 0 || n >= seq.elements.size()) return;
  seq.elements.resize(n);
  if (seq.phase) {
    const std::size_t cols = n * seq.frames_per_element;
    Mat phase(seq.phase->rows(), cols);
    for (std::size_t r = 0; r < phase.rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) phase(r, c) = (*seq.phase)(r, c);
    seq.phase = std::move(phase);
  }
}

SpectralSequence sequence_of(const DatasetManifest& manifest, const ManifestEntry& entry,
                             std::size_t frames_per_element) {
  const AudioSignal audio = load_audio(manifest.resolve(entry));
  return magnitude_sequence(stft(audio), frames_per_element);
}

std::vector<LabeledSequence> load_split(const DatasetManifest& manifest,
                                        const std::map<std::string, std::size_t>& label_index,
                                        std::size_t frames_per_element, std::size_t stride) {
  std::vector<LabeledSequence> data;
  data.reserve(manifest.entries.size());
  for (const auto& entry : manifest.entries) {
    const auto it = label_index.find(entry.label);
    if (it == label_index.end())
      throw DataError("label " + entry.label + " is not part of the training label set");
    LabeledSequence item;
    item.seq = sequence_of(manifest, entry, frames_per_element);
    thin_elements(item.seq, stride);
    item.label = it->second;
    data.push_back(std::move(item));
  }
  return data;
}

ArchitectureSpec arch_from(const Config& config, std::size_t class_count) {
  const std::string arch = get_str(config, "arch", "dnn");
  if (arch == "dnn") {
    const std::size_t width = get_n(config, "width", 50);
    if (width == 0) throw UsageError("setting width must be positive");
    return ArchitectureSpec::dnn(width, class_count);
  }
  if (arch == "cdnn") return ArchitectureSpec::cdnn(class_count);
  throw UsageError("setting arch must be dnn or cdnn, got: " + arch);
}

TrainConfig train_config_from(const Config& config) {
  TrainConfig cfg;
  cfg.learning_rate = get_f(config, "learning_rate", cfg.learning_rate);
  cfg.momentum = get_f(config, "momentum", cfg.momentum);
  cfg.batch_size = get_n(config, "batch_size", cfg.batch_size);
  cfg.max_epochs = get_n(config, "max_epochs", cfg.max_epochs);
  cfg.patience = get_n(config, "patience", cfg.patience);
  cfg.dropout = get_f(config, "dropout", cfg.dropout);
  cfg.seed = get_n(config, "seed", 0);
  return cfg;
}

std::string training_log_text(const std::vector<EpochStats>& stats) {
  std::string text = "epoch,train_loss,valid_mean_recall\n";
  for (const auto& s : stats)
    text += std::to_string(s.epoch) + ',' + format("%.9g", s.train_loss) + ',' +
            format("%.9g", s.valid_recall) + '\n';
  return text;
}

int run_synth(const Config& config) {
  const fs::path out = need_out(config);
  const std::size_t classes = get_n(config, "classes", 4);
  const std::size_t items = get_n(config, "items_per_class", 25);
  const std::size_t artists = get_n(config, "artists_per_class", 3);
  const std::size_t duration = get_n(config, "duration", 661794);
  const std::uint64_t seed = get_n(config, "seed", 0);

  const DatasetManifest manifest =
      synthesize_corpus(classes, items, artists, seed, out, duration);
  save_manifest(out / "manifest.csv", manifest);
  log() << "wrote " << manifest.entries.size() << " recordings and manifest.csv to " << out
        << "\n";
  return 0;
}

// Rewrites entry paths so they stay resolvable from new_base.
DatasetManifest rebased(const DatasetManifest& manifest, const fs::path& new_base) {
  DatasetManifest out = manifest;
  out.base_dir = new_base;
  for (auto& entry : out.entries) {
    const fs::path target = manifest.resolve(entry);
    std::error_code ec;
    const fs::path rel = fs::relative(target, new_base, ec);
    entry.path = (ec || rel.empty()) ? target.string() : rel.string();
  }
  return out;
}

int run_partition(const Config& config) {
  const fs::path out = need_out(config);
  const DatasetManifest manifest = load_manifest(need_str(config, "manifest"));
  const std::uint64_t seed = get_n(config, "seed", 0);
  const std::string mode = get_str(config, "mode", "random");

  Partition part;
  if (mode == "random") {
    SplitCounts counts;
    counts.train = get_n(config, "train_count", 15);
    counts.valid = get_n(config, "valid_count", 5);
    counts.test = get_n(config, "test_count", 5);
    part = partition_random(manifest, counts, seed);
  } else if (mode == "artist_filtered") {
    SplitRatios ratios;
    ratios.train = get_f(config, "train_ratio", 0.6);
    ratios.valid = get_f(config, "valid_ratio", 0.2);
    ratios.test = get_f(config, "test_ratio", 0.2);
    part = partition_artist_filtered(manifest, ratios, seed);
    const auto labels = manifest.label_names();
    for (std::size_t i = 0; i < part.ratio_deviation.size(); ++i)
      log() << "class " << labels[i] << " deviates from the requested ratios by "
            << format("%.4f", part.ratio_deviation[i]) << "\n";
  } else {
    throw UsageError("setting mode must be random or artist_filtered, got: " + mode);
  }

  save_manifest(out / "train.csv", rebased(part.train, out));
  save_manifest(out / "valid.csv", rebased(part.valid, out));
  save_manifest(out / "test.csv", rebased(part.test, out));
  log() << "wrote train.csv (" << part.train.entries.size() << "), valid.csv ("
        << part.valid.entries.size() << "), test.csv (" << part.test.entries.size() << ") to "
        << out << "\n";
  return 0;
}

int run_train(const Config& config, bool adversarial) {
  const fs::path out = need_out(config);
  const DatasetManifest train_manifest = load_manifest(need_str(config, "train_manifest"));
  const DatasetManifest valid_manifest = load_manifest(need_str(config, "valid_manifest"));
  if (train_manifest.entries.empty()) throw DataError("training manifest is empty");

  const std::vector<std::string> labels = train_manifest.label_names();
  if (labels.size() < 2) throw DataError("training needs at least two classes");
  const auto label_index = index_of(labels);

  const ArchitectureSpec spec = arch_from(config, labels.size());
  const std::size_t stride = get_n(config, "element_stride", 1);
  if (stride == 0) throw UsageError("setting element_stride must be positive");

  log() << "loading " << train_manifest.entries.size() << " training and "
        << valid_manifest.entries.size() << " validation recordings\n";
  const auto train_data = load_split(train_manifest, label_index, spec.input_cols, stride);
  const auto valid_data = load_split(valid_manifest, label_index, spec.input_cols, stride);

  const TrainConfig cfg = train_config_from(config);
  std::vector<EpochStats> stats;
  NetworkParams params;
  if (adversarial) {
    const double eps = get_f(config, "eps", 0.1);
    params = adversarial_fit(spec, train_data, valid_data, cfg, labels, eps, &stats);
  } else {
    params = fit(spec, train_data, valid_data, cfg, labels, &stats);
  }

  save_checkpoint(out / "checkpoint.adnn", params);
  write_text_atomic(out / "train_log.csv", training_log_text(stats));
  log() << "trained for " << stats.size() << " epochs; validation mean recall "
        << format("%.4f", mean_recall(params, valid_data)) << "; wrote checkpoint.adnn\n";
  return 0;
}

Directive directive_from(const Config& config,
                         const std::map<std::string, std::size_t>& label_index) {
  const std::string name = get_str(config, "directive", "correct_with_prob");
  const std::uint64_t seed = get_n(config, "seed", 0);
  if (name == "correct_with_prob")
    return Directive::correct_with_prob(get_f(config, "p", 0.1), seed);
  if (name == "always_wrong") return Directive::always_wrong(seed);
  if (name == "all_labels") return Directive::all_labels();
  if (name == "fixed_label") {
    const std::string target = need_str(config, "target");
    const auto it = label_index.find(target);
    if (it == label_index.end()) throw DataError("target label not in the model: " + target);
    return Directive::fixed_label(it->second);
  }
  throw UsageError(
      "setting directive must be correct_with_prob, always_wrong, fixed_label or all_labels, "
      "got: " +
      name);
}

int run_attack(const Config& config) {
  const fs::path out = need_out(config);
  const NetworkParams params = load_checkpoint(need_str(config, "checkpoint"));
  const DatasetManifest manifest = load_manifest(need_str(config, "manifest"));
  if (manifest.entries.empty()) throw DataError("attack manifest is empty");

  AdversaryConfig adv;
  adv.snr_db = get_f(config, "snr", adv.snr_db);
  adv.mu = get_f(config, "mu", adv.mu);
  adv.r_min = get_f(config, "rmin", adv.r_min);
  adv.k_max = get_n(config, "kmax", adv.k_max);

  const std::vector<std::string>& labels = params.label_names();
  const auto label_index = index_of(labels);
  const Directive directive = directive_from(config, label_index);

  const std::size_t max_files = get_n(config, "max_files", 0);
  const std::size_t max_elements = get_n(config, "max_elements", 0);

  std::vector<const ManifestEntry*> entries;
  for (const auto& entry : manifest.entries) {
    if (max_files != 0 && entries.size() >= max_files) break;
    entries.push_back(&entry);
  }

  std::vector<std::size_t> truths;
  for (const auto* entry : entries) {
    const auto it = label_index.find(entry->label);
    if (it == label_index.end())
      throw DataError("label " + entry->label + " is not part of the model: " + entry->path);
    truths.push_back(it->second);
  }
  const auto targets = choose_targets(labels.size(), truths, directive);

  std::string report = "file,true_label,target_label,predicted_label,confidence,snr_db,"
                       "iterations,succeeded\n";
  std::size_t attacks = 0, wins = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const ManifestEntry& entry = *entries[i];
    SpectralSequence exemplar = sequence_of(manifest, entry, params.spec().input_cols);
    take_front(exemplar, max_elements);

    for (const std::size_t target : targets[i]) {
      const AttackResult result = attack(params, exemplar, target, adv);
      ++attacks;
      if (result.succeeded) ++wins;

      const std::string target_name = labels[target];
      const std::size_t predicted = classify(params, result.adversarial);
      const std::string snr_text =
          std::isinf(result.achieved_snr) ? "inf" : format("%.4f", result.achieved_snr);
      report += entry.path + ',' + entry.label + ',' + target_name + ',' + labels[predicted] +
                ',' + format("%.6f", result.achieved_confidence) + ',' + snr_text + ',' +
                std::to_string(result.iterations) + ',' +
                (result.succeeded ? "true" : "false") + '\n';

      const fs::path wav =
          out / (fs::path(entry.path).stem().string() + ".adv-" + target_name + ".wav");
      store_audio(wav, render_audio(result.adversarial));
    }
  }

  write_text_atomic(out / "attack_report.csv", report);
  log() << "attacked " << entries.size() << " recordings (" << attacks << " runs); success rate "
        << format("%.4f", attacks ? static_cast<double>(wins) / attacks : 0.0)
        << "; wrote attack_report.csv\n";
  return 0;
}

int run_baseline(const Config& config) {
  const fs::path out = need_out(config);
  const DatasetManifest train_manifest = load_manifest(need_str(config, "train_manifest"));
  const DatasetManifest test_manifest = load_manifest(need_str(config, "test_manifest"));
  std::optional<DatasetManifest> valid_manifest;
  if (!get_str(config, "valid_manifest", "").empty())
    valid_manifest = load_manifest(get_str(config, "valid_manifest", ""));

  std::vector<const DatasetManifest*> fit_splits = {&train_manifest};
  if (valid_manifest) fit_splits.push_back(&*valid_manifest);

  std::set<std::string> label_set;
  for (const auto* split : fit_splits)
    for (const auto& e : split->entries) label_set.insert(e.label);
  const std::vector<std::string> labels(label_set.begin(), label_set.end());
  if (labels.size() < 2) throw DataError("baseline needs at least two classes");
  const auto label_index = index_of(labels);

  std::string features_csv = "file,window_index";
  for (int d = 0; d < 28; ++d) features_csv += ",f" + std::to_string(d);
  features_csv += '\n';
  const auto windows_of = [&](const DatasetManifest& manifest, const ManifestEntry& entry) {
    const AudioSignal audio = load_audio(manifest.resolve(entry));
    const auto windows = texture_aggregate(extract_frame_features(audio));
    for (std::size_t w = 0; w < windows.size(); ++w) {
      features_csv += entry.path + ',' + std::to_string(w);
      for (const double v : windows[w]) features_csv += ',' + format("%.9g", v);
      features_csv += '\n';
    }
    return windows;
  };

  std::vector<std::vector<double>> fit_features;
  std::vector<std::size_t> fit_labels;
  for (const auto* split : fit_splits)
    for (const auto& entry : split->entries) {
      const auto windows = windows_of(*split, entry);
      const std::size_t label = label_index.at(entry.label);
      for (const auto& w : windows) {
        fit_features.push_back(w);
        fit_labels.push_back(label);
      }
    }

  MahalanobisModel model = fit_mahalanobis(fit_features, fit_labels);
  model.label_names = labels;
  save_mahalanobis(out / "baseline_model.bin", model);

  std::string predictions = "file,true_label,predicted_label\n";
  std::size_t correct = 0;
  for (const auto& entry : test_manifest.entries) {
    if (!label_index.count(entry.label))
      throw DataError("label " + entry.label + " is not part of the training label set");
    const auto windows = windows_of(test_manifest, entry);
    const std::string predicted = labels[classify_majority(model, windows)];
    predictions += entry.path + ',' + entry.label + ',' + predicted + '\n';
    if (predicted == entry.label) ++correct;
  }

  write_text_atomic(out / "features.csv", features_csv);
  write_text_atomic(out / "predictions.csv", predictions);
  log() << "baseline classified " << test_manifest.entries.size() << " recordings, "
        << correct << " correct; wrote features.csv, baseline_model.bin, predictions.csv\n";
  return 0;
}

void split_csv_row(const std::string& line, std::vector<std::string>& fields) {
  fields.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

int run_eval(const Config& config) {
  const fs::path out = need_out(config);
  const bool have_predictions = !get_str(config, "predictions", "").empty();
  const bool have_checkpoint = !get_str(config, "checkpoint", "").empty();
  if (have_predictions == have_checkpoint)
    throw UsageError("eval needs either predictions= or checkpoint= plus manifest=");

  std::vector<std::string> truths, predictions, labels;
  if (have_predictions) {
    const fs::path path = get_str(config, "predictions", "");
    std::ifstream in(path);
    if (!in) throw DataError("cannot open predictions: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty predictions file: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> fields;
    split_csv_row(line, fields);
    std::size_t truth_col = fields.size(), pred_col = fields.size();
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (fields[i] == "true_label") truth_col = i;
      if (fields[i] == "predicted_label") pred_col = i;
    }
    if (truth_col == fields.size() || pred_col == fields.size())
      throw DataError("predictions header lacks true_label/predicted_label: " + path.string());

    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      split_csv_row(line, fields);
      if (fields.size() <= std::max(truth_col, pred_col))
        throw DataError("short predictions row: " + line);
      truths.push_back(fields[truth_col]);
      predictions.push_back(fields[pred_col]);
    }

    std::set<std::string> names(truths.begin(), truths.end());
    names.insert(predictions.begin(), predictions.end());
    labels.assign(names.begin(), names.end());
  } else {
    const NetworkParams params = load_checkpoint(get_str(config, "checkpoint", ""));
    const DatasetManifest manifest = load_manifest(need_str(config, "manifest"));
    labels = params.label_names();
    const auto label_index = index_of(labels);

    std::string rows = "file,true_label,predicted_label\n";
    for (const auto& entry : manifest.entries) {
      if (!label_index.count(entry.label))
        throw DataError("label " + entry.label + " is not part of the model: " + entry.path);
      const SpectralSequence seq = sequence_of(manifest, entry, params.spec().input_cols);
      const std::string predicted = labels[classify(params, seq)];
      truths.push_back(entry.label);
      predictions.push_back(predicted);
      rows += entry.path + ',' + entry.label + ',' + predicted + '\n';
    }
    write_text_atomic(out / "predictions.csv", rows);
  }

  if (truths.empty()) throw DataError("nothing to evaluate");
  const FoM fom = compute_fom(truths, predictions, labels);
  write_text_atomic(out / "fom.csv", fom_report(fom));

  std::size_t correct = 0;
  for (std::size_t i = 0; i < truths.size(); ++i)
    if (truths[i] == predictions[i]) ++correct;
  const double chance = 1.0 / static_cast<double>(labels.size());
  const double p_value = binomial_test(correct, truths.size(), chance);
  std::string sig = "correct,total,chance,p_value\n";
  sig += std::to_string(correct) + ',' + std::to_string(truths.size()) + ',' +
         format("%.9g", chance) + ',' + format("%.6e", p_value) + '\n';
  write_text_atomic(out / "significance.csv", sig);

  log() << "mean recall " << format("%.4f", fom.mean_recall) << "; binomial p "
        << format("%.3e", p_value) << "; wrote fom.csv, significance.csv\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"spectral adversary pipeline"};
  app.require_subcommand(1);

  struct CommonFlags {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    CLI::Option* config_opt = nullptr;
    CLI::Option* out_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
  };

  const char* names[] = {"synth", "partition", "train", "advtrain", "attack", "baseline", "eval"};
  const char* blurbs[] = {"write a synthetic corpus and its manifest",
                          "split a manifest into train/valid/test",
                          "train a classifier",
                          "train with adversarial perturbations",
                          "run the gradient attack over a manifest",
                          "fit and score the hand-crafted-feature classifier",
                          "compute figure-of-merit reports"};
  std::map<std::string, CLI::App*> subs;
  std::map<std::string, CommonFlags> flags;
  for (std::size_t i = 0; i < 7; ++i) {
    CLI::App* sub = app.add_subcommand(names[i], blurbs[i]);
    CommonFlags& f = flags[names[i]];
    f.config_opt = sub->add_option("--config", f.config, "key=value settings file");
    f.out_opt = sub->add_option("--out", f.out, "output directory");
    f.seed_opt = sub->add_option("--seed", f.seed, "random seed");
    subs[names[i]] = sub;
  }

  std::string target, directive;
  double snr = 0.0, rmin = 0.0, mu = 0.0;
  std::uint64_t kmax = 0;
  CLI::App* att = subs["attack"];
  CLI::Option* target_opt = att->add_option("--target", target, "fixed-label target class");
  CLI::Option* directive_opt = att->add_option("--directive", directive, "target assignment rule");
  CLI::Option* snr_opt = att->add_option("--snr", snr, "distortion bound in dB");
  CLI::Option* rmin_opt = att->add_option("--rmin", rmin, "confidence goal");
  CLI::Option* mu_opt = att->add_option("--mu", mu, "gradient step size");
  CLI::Option* kmax_opt = att->add_option("--kmax", kmax, "iteration cap");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    for (const char* name : names) {
      if (!app.got_subcommand(name)) continue;
      const CommonFlags& f = flags[name];

      Config config;
      if (f.config_opt->count()) config = parse_config_file(f.config);
      if (f.out_opt->count()) config["out"] = f.out;
      if (f.seed_opt->count()) config["seed"] = std::to_string(f.seed);
      if (std::string(name) == "attack") {
        if (target_opt->count()) config["target"] = target;
        if (directive_opt->count()) config["directive"] = directive;
        if (snr_opt->count()) config["snr"] = format("%.17g", snr);
        if (rmin_opt->count()) config["rmin"] = format("%.17g", rmin);
        if (mu_opt->count()) config["mu"] = format("%.17g", mu);
        if (kmax_opt->count()) config["kmax"] = std::to_string(kmax);
      }

      const std::string sub = name;
      if (sub == "synth") return run_synth(config);
      if (sub == "partition") return run_partition(config);
      if (sub == "train") return run_train(config, false);
      if (sub == "advtrain") return run_train(config, true);
      if (sub == "attack") return run_attack(config);
      if (sub == "baseline") return run_baseline(config);
      return run_eval(config);
    }
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    log() << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    log() << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    log() << "numeric error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace specadv
