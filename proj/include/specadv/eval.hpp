#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "specadv/matrix.hpp"

namespace specadv {

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  std::string label;
  std::string artist;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  // Sorted distinct labels.
  std::vector<std::string> label_names() const;
  std::filesystem::path resolve(const ManifestEntry& entry) const;
};

// Comma-separated text with header "path,label,artist"; fields must not
// contain commas or line breaks. Written atomically.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);

enum class PartitionMode { random, artist_filtered };

struct SplitCounts {
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
};

struct SplitRatios {
  double train = 0.6;
  double valid = 0.2;
  double test = 0.2;
};

struct Partition {
  DatasetManifest train;
  DatasetManifest valid;
  DatasetManifest test;
  PartitionMode mode = PartitionMode::random;
  std::uint64_t seed = 0;
  // Artist-filtered only: per class (sorted label order), the largest
  // deviation of any split's item share from its requested ratio.
  std::vector<double> ratio_deviation;
};

// Draws the requested number of items per class into each split, uniformly
// without replacement; leftovers stay unassigned.
Partition partition_random(const DatasetManifest& manifest, const SplitCounts& per_class,
                           std::uint64_t seed);

// Assigns whole artists to splits so no artist spans two splits. Greedy:
// per class, artists ordered largest first (seeded shuffle breaks ties),
// each assigned to the emptiest split first and then to the split with the
// largest remaining item deficit; ties favor train, then valid.
Partition partition_artist_filtered(const DatasetManifest& manifest, const SplitRatios& ratios,
                                    std::uint64_t seed);

// Confusion counts and derived metrics. confusion(r, c) counts items of
// true class c predicted as class r.
struct FoM {
  std::vector<std::string> labels;
  Mat confusion;
  std::vector<double> recall;
  std::vector<double> precision;
  std::vector<double> fscore;
  double mean_recall = 0.0;
};

FoM compute_fom(const std::vector<std::string>& truths,
                const std::vector<std::string>& predictions,
                const std::vector<std::string>& label_names);

// Comma-separated grid, everything x100 with two decimals: one row per
// predicted class over the true-class columns (column-normalized, so the
// diagonal is the recall), a trailing precision column, an F-score bottom
// row, and the mean recall in the bottom-right corner.
std::string fom_report(const FoM& fom);

// Upper-tail probability P[X >= correct] for X ~ Binomial(total, chance),
// evaluated in log space.
double binomial_test(std::size_t correct, std::size_t total, double chance);

// Writes a deterministic synthetic corpus of mono 22050 Hz WAV files and
// returns its manifest (based at out_dir). Each class is a distinct audio
// family; each artist within a class is a fixed parameter offset.
DatasetManifest synthesize_corpus(std::size_t class_count, std::size_t items_per_class,
                                  std::size_t artists_per_class, std::uint64_t seed,
                                  const std::filesystem::path& out_dir,
                                  std::size_t duration_samples = 661794);

}  // namespace specadv
