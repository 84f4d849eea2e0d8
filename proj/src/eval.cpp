#include "specadv/eval.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "specadv/audio.hpp"
#include "specadv/errors.hpp"
#include "specadv/rng.hpp"

namespace specadv {
namespace {

constexpr double kPi = 3.14159265358979323846;

void check_field(const std::string& value, const char* what) {
  if (value.empty()) throw DataError(std::string("empty manifest field: ") + what);
  if (value.find_first_of(",\n\r") != std::string::npos)
    throw DataError(std::string("manifest field contains a comma or line break: ") + value);
}

std::string zero_pad(std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*zu", width, value);
  return buf;
}

}  // namespace

std::vector<std::string> DatasetManifest::label_names() const {
  std::set<std::string> names;
  for (const auto& e : entries) names.insert(e.label);
  return {names.begin(), names.end()};
}

std::filesystem::path DatasetManifest::resolve(const ManifestEntry& entry) const {
  const std::filesystem::path p(entry.path);
  return p.is_absolute() ? p : base_dir / p;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::set<std::string> seen;
  for (const auto& e : manifest.entries) {
    check_field(e.path, "path");
    check_field(e.label, "label");
    check_field(e.artist, "artist");
    if (!seen.insert(e.path).second) throw DataError("duplicate manifest path: " + e.path);
  }

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw DataError("cannot write manifest: " + path.string());
    out << "path,label,artist\n";
    for (const auto& e : manifest.entries)
      out << e.path << ',' << e.label << ',' << e.artist << '\n';
    if (!out) throw DataError("failed writing manifest: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty manifest: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "path,label,artist")
    throw DataError("manifest header must be \"path,label,artist\", got \"" + line + "\"");

  DatasetManifest manifest;
  manifest.base_dir = path.parent_path();
  std::set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    const std::size_t c1 = line.find(',');
    const std::size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos ||
        line.find(',', c2 + 1) != std::string::npos)
      throw DataError("manifest line " + std::to_string(line_no) +
                      " must have exactly three fields: " + line);

    ManifestEntry e;
    e.path = line.substr(0, c1);
    e.label = line.substr(c1 + 1, c2 - c1 - 1);
    e.artist = line.substr(c2 + 1);
    if (e.path.empty() || e.label.empty() || e.artist.empty())
      throw DataError("manifest line " + std::to_string(line_no) + " has an empty field");
    if (!seen.insert(e.path).second) throw DataError("duplicate manifest path: " + e.path);
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

Partition partition_random(const DatasetManifest& manifest, const SplitCounts& per_class,
                           std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    by_label[manifest.entries[i].label].push_back(i);

  const std::size_t need = per_class.train + per_class.valid + per_class.test;
  Partition part;
  part.mode = PartitionMode::random;
  part.seed = seed;
  part.train.base_dir = part.valid.base_dir = part.test.base_dir = manifest.base_dir;

  Rng rng(seed);
  for (auto& [label, indices] : by_label) {
    if (indices.size() < need)
      throw DataError("class " + label + " has " + std::to_string(indices.size()) +
                      " items, the split needs " + std::to_string(need));
    rng.shuffle(indices);
    std::size_t at = 0;
    for (std::size_t i = 0; i < per_class.train; ++i)
      part.train.entries.push_back(manifest.entries[indices[at++]]);
    for (std::size_t i = 0; i < per_class.valid; ++i)
      part.valid.entries.push_back(manifest.entries[indices[at++]]);
    for (std::size_t i = 0; i < per_class.test; ++i)
      part.test.entries.push_back(manifest.entries[indices[at++]]);
  }
  return part;
}

Partition partition_artist_filtered(const DatasetManifest& manifest, const SplitRatios& ratios,
                                    std::uint64_t seed) {
  if (!(ratios.train > 0.0) || !(ratios.valid > 0.0) || !(ratios.test > 0.0))
    throw DataError("all three split ratios must be positive");
  if (std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9)
    throw DataError("split ratios must sum to one");

  std::map<std::string, std::map<std::string, std::vector<std::size_t>>> by_label;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    by_label[e.label][e.artist].push_back(i);
  }

  Partition part;
  part.mode = PartitionMode::artist_filtered;
  part.seed = seed;
  part.train.base_dir = part.valid.base_dir = part.test.base_dir = manifest.base_dir;

  const double targets_of[3] = {ratios.train, ratios.valid, ratios.test};
  std::map<std::string, int> committed;  // artist -> split, across classes

  Rng rng(seed);
  for (auto& [label, artists] : by_label) {
    if (artists.size() < 3)
      throw DataError("class " + label + " has only " + std::to_string(artists.size()) +
                      " artists; three disjoint splits need at least three");

    std::vector<const std::pair<const std::string, std::vector<std::size_t>>*> order;
    order.reserve(artists.size());
    for (const auto& a : artists) order.push_back(&a);
    rng.shuffle(order);
    std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
      return a->second.size() > b->second.size();
    });

    std::size_t class_items = 0;
    for (const auto* a : order) class_items += a->second.size();

    double assigned[3] = {0.0, 0.0, 0.0};
    std::size_t artists_in[3] = {0, 0, 0};
    std::vector<std::vector<std::size_t>> member(3);
    for (const auto* a : order) {
      int chosen = -1;
      const auto it = committed.find(a->first);
      if (it != committed.end()) {
        chosen = it->second;
      } else {
        for (int s = 0; s < 3; ++s)
          if (artists_in[s] == 0 && (chosen < 0 || targets_of[s] > targets_of[chosen]))
            chosen = s;
        if (chosen < 0) {
          double best = -1.0;
          for (int s = 0; s < 3; ++s) {
            const double deficit =
                targets_of[s] * static_cast<double>(class_items) - assigned[s];
            if (deficit > best + 1e-12) {
              best = deficit;
              chosen = s;
            }
          }
        }
        committed[a->first] = chosen;
      }
      assigned[chosen] += static_cast<double>(a->second.size());
      ++artists_in[chosen];
      member[chosen].insert(member[chosen].end(), a->second.begin(), a->second.end());
    }

    for (int s = 0; s < 3; ++s)
      if (member[s].empty())
        throw DataError("class " + label +
                        ": artist commitments leave an empty split; partition impossible");

    double deviation = 0.0;
    for (int s = 0; s < 3; ++s)
      deviation = std::max(deviation, std::abs(assigned[s] / static_cast<double>(class_items) -
                                               targets_of[s]));
    part.ratio_deviation.push_back(deviation);

    DatasetManifest* const splits[3] = {&part.train, &part.valid, &part.test};
    for (int s = 0; s < 3; ++s) {
      std::sort(member[s].begin(), member[s].end());
      for (const std::size_t i : member[s]) splits[s]->entries.push_back(manifest.entries[i]);
    }
  }
  return part;
}

FoM compute_fom(const std::vector<std::string>& truths,
                const std::vector<std::string>& predictions,
                const std::vector<std::string>& label_names) {
  if (truths.empty()) throw DataError("no labels to score");
  if (truths.size() != predictions.size())
    throw DataError("got " + std::to_string(truths.size()) + " truths but " +
                    std::to_string(predictions.size()) + " predictions");
  if (label_names.empty()) throw DataError("no class names");

  std::map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < label_names.size(); ++k) index[label_names[k]] = k;
  if (index.size() != label_names.size()) throw DataError("duplicate class names");

  const std::size_t k = label_names.size();
  FoM fom;
  fom.labels = label_names;
  fom.confusion = Mat(k, k, 0.0);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const auto t = index.find(truths[i]);
    if (t == index.end()) throw DataError("unknown true label: " + truths[i]);
    const auto p = index.find(predictions[i]);
    if (p == index.end()) throw DataError("unknown predicted label: " + predictions[i]);
    fom.confusion(p->second, t->second) += 1.0;
  }

  fom.recall.assign(k, 0.0);
  fom.precision.assign(k, 0.0);
  fom.fscore.assign(k, 0.0);
  double recall_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    double col = 0.0, row = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
      col += fom.confusion(r, c);
      row += fom.confusion(c, r);
    }
    if (col > 0.0) {
      fom.recall[c] = fom.confusion(c, c) / col;
      recall_sum += fom.recall[c];
      ++present;
    }
    if (row > 0.0) fom.precision[c] = fom.confusion(c, c) / row;
    const double pr = fom.precision[c] + fom.recall[c];
    if (pr > 0.0) fom.fscore[c] = 2.0 * fom.precision[c] * fom.recall[c] / pr;
  }
  fom.mean_recall = recall_sum / static_cast<double>(present);
  return fom;
}

std::string fom_report(const FoM& fom) {
  const std::size_t k = fom.labels.size();
  std::vector<double> col_sum(k, 0.0);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t r = 0; r < k; ++r) col_sum[c] += fom.confusion(r, c);

  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  for (const auto& label : fom.labels) out << ',' << label;
  out << ",precision\n";
  for (std::size_t r = 0; r < k; ++r) {
    out << fom.labels[r];
    for (std::size_t c = 0; c < k; ++c) {
      const double share = col_sum[c] > 0.0 ? fom.confusion(r, c) / col_sum[c] : 0.0;
      out << ',' << 100.0 * share;
    }
    out << ',' << 100.0 * fom.precision[r] << '\n';
  }
  out << "fscore";
  for (std::size_t c = 0; c < k; ++c) out << ',' << 100.0 * fom.fscore[c];
  out << ',' << 100.0 * fom.mean_recall << '\n';
  return out.str();
}

double binomial_test(std::size_t correct, std::size_t total, double chance) {
  if (correct > total)
    throw DataError("correct count " + std::to_string(correct) + " exceeds total " +
                    std::to_string(total));
  if (!(chance > 0.0) || !(chance < 1.0))
    throw DataError("chance level must lie strictly between 0 and 1");
  if (correct == 0) return 1.0;

  const double log_p = std::log(chance);
  const double log_q = std::log1p(-chance);
  const double n = static_cast<double>(total);
  std::vector<double> terms;
  terms.reserve(total - correct + 1);
  for (std::size_t i = correct; i <= total; ++i) {
    const double x = static_cast<double>(i);
    terms.push_back(std::lgamma(n + 1.0) - std::lgamma(x + 1.0) - std::lgamma(n - x + 1.0) +
                    x * log_p + (n - x) * log_q);
  }
  const double peak = *std::max_element(terms.begin(), terms.end());
  double sum = 0.0;
  for (const double t : terms) sum += std::exp(t - peak);
  return std::min(1.0, std::exp(peak + std::log(sum)));
}

DatasetManifest synthesize_corpus(std::size_t class_count, std::size_t items_per_class,
                                  std::size_t artists_per_class, std::uint64_t seed,
                                  const std::filesystem::path& out_dir,
                                  std::size_t duration_samples) {
  if (class_count == 0 || items_per_class == 0 || artists_per_class == 0)
    throw DataError("corpus dimensions must be positive");
  if (items_per_class < artists_per_class)
    throw DataError("fewer items than artists in each class");
  if (duration_samples < 2048) throw DataError("corpus items must span at least 2048 samples");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create corpus directory: " + out_dir.string());

  const int label_width = class_count > 100 ? 3 : 2;
  const double sr = static_cast<double>(kCanonicalSampleRate);

  DatasetManifest manifest;
  manifest.base_dir = out_dir;

  std::vector<double> samples(duration_samples);
  for (std::size_t c = 0; c < class_count; ++c) {
    const std::string label = "class" + zero_pad(c, label_width);
    const double class_f0 = 130.81 * std::pow(2.0, static_cast<double>(c) * 4.0 / 12.0);
    const double rolloff = 0.7 + 0.25 * static_cast<double>(c);
    const double am_rate = 1.5 + 1.7 * static_cast<double>(c);
    const double noise_alpha = std::min(0.2 + 0.15 * static_cast<double>(c), 0.95);

    for (std::size_t a = 0; a < artists_per_class; ++a) {
      const std::string artist = label + "_a" + zero_pad(a, 2);
      const double spread =
          static_cast<double>(a) - static_cast<double>(artists_per_class - 1) / 2.0;
      const double detune = std::pow(2.0, spread * 0.5 / 12.0);
      const double even_gain =
          artists_per_class == 1
              ? 0.75
              : 0.55 + 0.4 * static_cast<double>(a) / static_cast<double>(artists_per_class - 1);

      for (std::size_t i = 0; i < items_per_class; ++i) {
        if (i % artists_per_class != a) continue;

        std::uint64_t h = mix64(seed + 0x51ed2701);
        h = mix64(h ^ (c + 1));
        h = mix64(h ^ ((a + 1) << 20));
        h = mix64(h ^ ((i + 1) << 40));
        Rng rng(h);

        const double f0 = class_f0 * detune * (1.0 + rng.uniform(-0.003, 0.003));
        const double am = am_rate * rng.uniform(0.95, 1.05);
        const double am_depth = rng.uniform(0.35, 0.5);
        const double noise_level = 0.04 * rng.uniform(0.8, 1.25);

        std::size_t harmonics = 0;
        while (harmonics < 24 && static_cast<double>(harmonics + 1) * f0 < 0.95 * sr / 2.0)
          ++harmonics;

        std::vector<std::complex<double>> osc(harmonics), step(harmonics);
        std::vector<double> gain(harmonics);
        for (std::size_t hx = 0; hx < harmonics; ++hx) {
          const double order = static_cast<double>(hx + 1);
          osc[hx] = std::polar(1.0, rng.uniform(0.0, 2.0 * kPi));
          step[hx] = std::polar(1.0, 2.0 * kPi * order * f0 / sr);
          gain[hx] = std::pow(order, -rolloff) * (hx % 2 == 1 ? even_gain : 1.0);
        }
        std::complex<double> am_osc = std::polar(1.0, rng.uniform(0.0, 2.0 * kPi));
        const std::complex<double> am_step = std::polar(1.0, 2.0 * kPi * am / sr);

        double noise_state = 0.0;
        double peak = 0.0;
        for (std::size_t t = 0; t < duration_samples; ++t) {
          double tone = 0.0;
          for (std::size_t hx = 0; hx < harmonics; ++hx) {
            tone += gain[hx] * osc[hx].real();
            osc[hx] *= step[hx];
          }
          const double envelope = 1.0 + am_depth * am_osc.real();
          am_osc *= am_step;
          noise_state = noise_alpha * noise_state + (1.0 - noise_alpha) * rng.uniform(-1.0, 1.0);
          samples[t] = envelope * tone + noise_level * noise_state;
          peak = std::max(peak, std::abs(samples[t]));

          if ((t & 0xfff) == 0xfff) {
            for (auto& z : osc) z /= std::abs(z);
            am_osc /= std::abs(am_osc);
          }
        }
        if (peak > 0.0)
          for (auto& v : samples) v *= 0.97 / peak;

        const std::string name =
            label + "_a" + zero_pad(a, 2) + "_t" + zero_pad(i, 3) + ".wav";
        store_audio(out_dir / name, AudioSignal{samples, kCanonicalSampleRate});
        manifest.entries.push_back({name, label, artist});
      }
    }
  }

  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const ManifestEntry& x, const ManifestEntry& y) { return x.path < y.path; });
  return manifest;
}

}  // namespace specadv
