#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <vector>

#include "specadv/baseline.hpp"
#include "specadv/errors.hpp"
#include "specadv/rng.hpp"
#include "specadv/stft.hpp"

using namespace specadv;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Direct filterbank-then-DCT evaluation, written from the formulas and
// sharing no code with the library.
std::vector<double> oracle_mfcc(const std::vector<double>& magnitudes, int sample_rate,
                                std::size_t filters = 40, std::size_t coeffs = 13) {
  const std::size_t bins = magnitudes.size();
  const std::size_t window = 2 * (bins - 1);
  const auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  const auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };

  const double top = mel(sample_rate / 2.0);
  std::vector<double> energy(filters, 0.0);
  for (std::size_t f = 0; f < filters; ++f) {
    const double lo = hz(top * f / (filters + 1.0));
    const double mid = hz(top * (f + 1) / (filters + 1.0));
    const double hi = hz(top * (f + 2) / (filters + 1.0));
    double weight_sum = 0.0;
    double acc = 0.0;
    for (std::size_t m = 0; m < bins; ++m) {
      const double freq = static_cast<double>(m) * sample_rate / static_cast<double>(window);
      double w = 0.0;
      if (freq > lo && freq <= mid)
        w = (freq - lo) / (mid - lo);
      else if (freq > mid && freq < hi)
        w = (hi - freq) / (hi - mid);
      weight_sum += w;
      acc += w * magnitudes[m];
    }
    energy[f] = std::log(std::max(acc / weight_sum, 1e-10));
  }

  std::vector<double> out(coeffs, 0.0);
  for (std::size_t j = 0; j < coeffs; ++j) {
    double acc = 0.0;
    for (std::size_t f = 0; f < filters; ++f)
      acc += energy[f] * std::cos(kPi * j * (2.0 * f + 1.0) / (2.0 * filters));
    out[j] = acc * std::sqrt((j == 0 ? 1.0 : 2.0) / filters);
  }
  return out;
}

std::vector<double> random_frame(std::size_t bins, Rng& rng) {
  std::vector<double> frame(bins);
  for (auto& v : frame) v = rng.uniform(0.0, 2.0);
  return frame;
}

// Blobs around well-separated 2-D centers.
void make_blobs(std::size_t per_class, Rng& rng, std::vector<std::vector<double>>& features,
                std::vector<std::size_t>& labels) {
  const double centers[3][2] = {{0.0, 0.0}, {8.0, 0.0}, {0.0, 8.0}};
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < per_class; ++i) {
      features.push_back({centers[k][0] + 0.5 * rng.normal(), centers[k][1] + 0.5 * rng.normal()});
      labels.push_back(k);
    }
}

}  // namespace

TEST_CASE("constant spectra concentrate in the first cepstral coefficient") {
  const std::vector<double> ones(513, 1.0);
  const std::vector<double> flat = mfcc(ones, 22050);
  REQUIRE(flat.size() == 13);
  for (const double c : flat) CHECK(std::abs(c) < 1e-9);

  const std::vector<double> scaled(513, std::exp(1.0));
  const std::vector<double> lifted = mfcc(scaled, 22050);
  CHECK(lifted[0] == doctest::Approx(std::sqrt(40.0)).epsilon(1e-12));
  for (std::size_t j = 1; j < lifted.size(); ++j) CHECK(std::abs(lifted[j]) < 1e-9);
}

TEST_CASE("an all-zero spectrum hits the energy floor") {
  const std::vector<double> silent(513, 0.0);
  const std::vector<double> c = mfcc(silent, 22050);
  CHECK(c[0] == doctest::Approx(std::sqrt(40.0) * std::log(1e-10)).epsilon(1e-12));
  for (std::size_t j = 1; j < c.size(); ++j) CHECK(std::abs(c[j]) < 1e-9);
  for (const double v : c) CHECK(std::isfinite(v));
}

TEST_CASE("scaling the spectrum shifts only the first coefficient") {
  Rng rng(11);
  const std::vector<double> frame = random_frame(513, rng);
  std::vector<double> louder = frame;
  for (auto& v : louder) v *= 7.25;

  const std::vector<double> base = mfcc(frame, 22050);
  const std::vector<double> shifted = mfcc(louder, 22050);
  CHECK(shifted[0] - base[0] ==
        doctest::Approx(std::sqrt(40.0) * std::log(7.25)).epsilon(1e-9));
  for (std::size_t j = 1; j < base.size(); ++j)
    CHECK(std::abs(shifted[j] - base[j]) < 1e-9);
}

TEST_CASE("mfcc matches the direct filterbank evaluation") {
  Rng rng(29);
  const MfccExtractor extractor(513, 22050);
  for (int rep = 0; rep < 100; ++rep) {
    const std::vector<double> frame = random_frame(513, rng);
    const std::vector<double> got = extractor.coefficients(frame);
    const std::vector<double> want = oracle_mfcc(frame, 22050);
    REQUIRE(got.size() == want.size());
    for (std::size_t j = 0; j < got.size(); ++j) CHECK(std::abs(got[j] - want[j]) < 1e-9);
  }
}

TEST_CASE("mfcc validates its inputs") {
  CHECK_THROWS_AS((void)mfcc(std::vector<double>(100, 1.0), 22050), DataError);
  const MfccExtractor extractor(513, 22050);
  CHECK_THROWS_AS((void)extractor.coefficients(std::vector<double>(512, 1.0)), DataError);
  CHECK_THROWS_AS(MfccExtractor(2, 22050), DataError);
  CHECK_THROWS_AS(MfccExtractor(513, 22050, 10, 11), DataError);
}

TEST_CASE("zero crossing rate counts sign changes") {
  CHECK(zero_crossing_rate({1.0, -1.0, 1.0, -1.0, 1.0}) == 1.0);
  CHECK(zero_crossing_rate({0.5, 0.5, 0.5}) == 0.0);
  CHECK(zero_crossing_rate({1.0, 0.0, -1.0, 1.0}) == doctest::Approx(2.0 / 3.0));
  CHECK(zero_crossing_rate({0.0, 0.0, 0.0, 0.0}) == 0.0);
  CHECK(zero_crossing_rate({1.0, 1.0, -1.0, -1.0}) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS((void)zero_crossing_rate({}), DataError);
  CHECK_THROWS_AS((void)zero_crossing_rate({1.0}), DataError);
}

TEST_CASE("frame features follow the canonical analysis grid") {
  AudioSignal tone;
  tone.sample_rate = 22050;
  tone.samples.resize(44100);
  for (std::size_t t = 0; t < tone.samples.size(); ++t)
    tone.samples[t] = 0.6 * std::sin(2.0 * kPi * 440.0 * t / 22050.0);

  const std::vector<FrameFeature> features = extract_frame_features(tone);
  REQUIRE(features.size() == 85);

  const ComplexSpectrogram spec = stft(tone);
  const std::size_t checks[] = {0, 42, 84};
  for (const std::size_t u : checks) {
    std::vector<double> magnitudes(spec.bin_count());
    for (std::size_t m = 0; m < magnitudes.size(); ++m) magnitudes[m] = std::abs(spec.bins(m, u));
    const std::vector<double> want = mfcc(magnitudes, tone.sample_rate);
    REQUIRE(features[u].mfcc.size() == want.size());
    for (std::size_t j = 0; j < want.size(); ++j)
      CHECK(features[u].mfcc[j] == doctest::Approx(want[j]).epsilon(1e-12));

    const std::vector<double> segment(tone.samples.begin() + u * 512,
                                      tone.samples.begin() + u * 512 + 1024);
    CHECK(features[u].zcr == zero_crossing_rate(segment));
  }

  // A 440 Hz tone crosses zero twice per period: about 2*440/22050 per pair.
  CHECK(features[10].zcr == doctest::Approx(2.0 * 440.0 / 22050.0).epsilon(0.05));
}

TEST_CASE("texture windows follow the five second grid") {
  std::vector<FrameFeature> frames(430);
  for (auto& f : frames) {
    f.mfcc.assign(13, 2.5);
    f.zcr = 0.125;
  }

  const auto windows = texture_aggregate(frames);
  REQUIRE(windows.size() == 3);
  for (const auto& w : windows) {
    REQUIRE(w.size() == 28);
    for (std::size_t d = 0; d < 13; ++d) {
      CHECK(w[d] == doctest::Approx(2.5).epsilon(1e-12));
      CHECK(std::abs(w[14 + d]) < 1e-18);
    }
    CHECK(w[13] == doctest::Approx(0.125).epsilon(1e-12));
    CHECK(std::abs(w[27]) < 1e-18);
  }

  frames.resize(215);
  CHECK(texture_aggregate(frames).size() == 1);
  frames.resize(214);
  CHECK_THROWS_AS((void)texture_aggregate(frames), DataError);
}

TEST_CASE("texture statistics match a direct computation") {
  std::vector<FrameFeature> frames(9);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    frames[i].mfcc.resize(13);
    for (std::size_t d = 0; d < 13; ++d)
      frames[i].mfcc[d] = std::sin(static_cast<double>(i) + 0.37 * static_cast<double>(d));
    frames[i].zcr = 0.5 + 0.4 * std::cos(static_cast<double>(i));
  }

  const std::size_t window = 4, hop = 2;
  const auto windows = texture_aggregate(frames, window, hop);
  REQUIRE(windows.size() == 3);

  for (std::size_t w = 0; w < windows.size(); ++w) {
    const std::size_t start = w * hop;
    for (std::size_t d = 0; d < 14; ++d) {
      double mean = 0.0;
      for (std::size_t i = start; i < start + window; ++i)
        mean += d < 13 ? frames[i].mfcc[d] : frames[i].zcr;
      mean /= window;
      double var = 0.0;
      for (std::size_t i = start; i < start + window; ++i) {
        const double v = (d < 13 ? frames[i].mfcc[d] : frames[i].zcr) - mean;
        var += v * v;
      }
      var /= window;
      CHECK(windows[w][d] == doctest::Approx(mean).epsilon(1e-12));
      CHECK(windows[w][14 + d] == doctest::Approx(var).epsilon(1e-12));
    }
  }
}

TEST_CASE("tiling windows average to the global mean") {
  Rng rng(47);
  std::vector<FrameFeature> frames(15);
  for (auto& f : frames) {
    f.mfcc.resize(13);
    for (auto& v : f.mfcc) v = rng.uniform(-3.0, 3.0);
    f.zcr = rng.uniform();
  }

  const auto windows = texture_aggregate(frames, 5, 5);
  REQUIRE(windows.size() == 3);
  for (std::size_t d = 0; d < 14; ++d) {
    double global = 0.0;
    for (const auto& f : frames) global += d < 13 ? f.mfcc[d] : f.zcr;
    global /= static_cast<double>(frames.size());
    const double of_means = (windows[0][d] + windows[1][d] + windows[2][d]) / 3.0;
    CHECK(of_means == doctest::Approx(global).epsilon(1e-12));
  }
}

TEST_CASE("identity covariance reduces the distance to euclidean") {
  const double r = std::sqrt(2.0);
  const std::vector<std::vector<double>> features = {
      {r, 0.0},        {-r, 0.0},        {0.0, r},        {0.0, -r},
      {10.0 + r, 10.0}, {10.0 - r, 10.0}, {10.0, 10.0 + r}, {10.0, 10.0 - r}};
  const std::vector<std::size_t> labels = {0, 0, 0, 0, 1, 1, 1, 1};
  const MahalanobisModel model = fit_mahalanobis(features, labels);

  CHECK(model.covariance(0, 0) == doctest::Approx(1.0 + 1e-6).epsilon(1e-12));
  CHECK(model.covariance(1, 1) == doctest::Approx(1.0 + 1e-6).epsilon(1e-12));
  CHECK(std::abs(model.covariance(0, 1)) < 1e-12);

  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const std::vector<double> x = {rng.uniform(-5.0, 15.0), rng.uniform(-5.0, 15.0)};
    const std::vector<double> dist = mahalanobis_distances(model, x);
    REQUIRE(dist.size() == 2);
    const double e0 = std::hypot(x[0], x[1]);
    const double e1 = std::hypot(x[0] - 10.0, x[1] - 10.0);
    CHECK(std::abs(dist[0] - e0 / std::sqrt(1.0 + 1e-6)) < 1e-9);
    CHECK(std::abs(dist[1] - e1 / std::sqrt(1.0 + 1e-6)) < 1e-9);
    CHECK(dist[0] == doctest::Approx(e0).epsilon(1e-4));
    CHECK(dist[1] == doctest::Approx(e1).epsilon(1e-4));
  }
}

TEST_CASE("a one dimensional model reproduces hand computed distances") {
  const std::vector<std::vector<double>> features = {{-1.0}, {1.0}, {3.0}, {5.0}};
  const std::vector<std::size_t> labels = {0, 0, 1, 1};
  const MahalanobisModel model = fit_mahalanobis(features, labels);

  CHECK(model.means[0][0] == 0.0);
  CHECK(model.means[1][0] == 4.0);
  CHECK(model.covariance(0, 0) == doctest::Approx(1.0 + 1e-6).epsilon(1e-12));

  const std::vector<double> near0 = mahalanobis_distances(model, {1.9});
  CHECK(near0[0] == doctest::Approx(1.9).epsilon(1e-5));
  CHECK(near0[1] == doctest::Approx(2.1).epsilon(1e-5));
  CHECK(classify_majority(model, {{1.9}}) == 0);
  CHECK(classify_majority(model, {{2.1}}) == 1);
}

TEST_CASE("separable blobs classify perfectly") {
  Rng rng(83);
  std::vector<std::vector<double>> train;
  std::vector<std::size_t> labels;
  make_blobs(30, rng, train, labels);
  const MahalanobisModel model = fit_mahalanobis(train, labels);

  std::vector<std::vector<double>> held_out;
  std::vector<std::size_t> truth;
  make_blobs(10, rng, held_out, truth);
  for (std::size_t i = 0; i < held_out.size(); ++i)
    CHECK(classify_majority(model, {held_out[i]}) == truth[i]);
}

TEST_CASE("decisions survive an affine remapping of the features") {
  Rng rng(59);
  std::vector<std::vector<double>> train;
  std::vector<std::size_t> labels;
  make_blobs(25, rng, train, labels);

  const double a[2][2] = {{1.2, 0.3}, {-0.2, 0.9}};
  const double b[2] = {4.0, -7.0};
  std::vector<std::vector<double>> mapped;
  for (const auto& x : train)
    mapped.push_back({a[0][0] * x[0] + a[0][1] * x[1] + b[0],
                      a[1][0] * x[0] + a[1][1] * x[1] + b[1]});

  const MahalanobisModel plain = fit_mahalanobis(train, labels);
  const MahalanobisModel warped = fit_mahalanobis(mapped, labels);

  std::vector<std::vector<double>> held_out;
  std::vector<std::size_t> truth;
  make_blobs(12, rng, held_out, truth);
  for (const auto& x : held_out) {
    const std::vector<double> y = {a[0][0] * x[0] + a[0][1] * x[1] + b[0],
                                   a[1][0] * x[0] + a[1][1] * x[1] + b[1]};
    CHECK(classify_majority(plain, {x}) == classify_majority(warped, {y}));
  }
}

TEST_CASE("duplicating the dataset leaves the model unchanged") {
  Rng rng(91);
  std::vector<std::vector<double>> train;
  std::vector<std::size_t> labels;
  make_blobs(10, rng, train, labels);

  std::vector<std::vector<double>> doubled = train;
  doubled.insert(doubled.end(), train.begin(), train.end());
  std::vector<std::size_t> doubled_labels = labels;
  doubled_labels.insert(doubled_labels.end(), labels.begin(), labels.end());

  const MahalanobisModel once = fit_mahalanobis(train, labels);
  const MahalanobisModel twice = fit_mahalanobis(doubled, doubled_labels);
  for (std::size_t k = 0; k < once.class_count; ++k)
    for (std::size_t d = 0; d < once.means[k].size(); ++d)
      CHECK(twice.means[k][d] == doctest::Approx(once.means[k][d]).epsilon(1e-12));
  for (std::size_t i = 0; i < once.covariance.size(); ++i)
    CHECK(twice.covariance.values()[i] ==
          doctest::Approx(once.covariance.values()[i]).epsilon(1e-12));
}

TEST_CASE("degenerate feature dimensions stay solvable") {
  Rng rng(17);
  std::vector<std::vector<double>> train;
  std::vector<std::size_t> labels;
  make_blobs(20, rng, train, labels);
  for (auto& x : train) {
    x.push_back(3.0);       // constant dimension
    x.push_back(2.0 * x[0]);  // exact copy of another, rank deficient
  }

  const MahalanobisModel model = fit_mahalanobis(train, labels);
  std::vector<std::vector<double>> held_out;
  std::vector<std::size_t> truth;
  make_blobs(8, rng, held_out, truth);
  for (std::size_t i = 0; i < held_out.size(); ++i) {
    std::vector<double> x = held_out[i];
    x.push_back(3.0);
    x.push_back(2.0 * x[0]);
    CHECK(classify_majority(model, {x}) == truth[i]);
  }
}

TEST_CASE("votes and distance ties resolve to the lowest class") {
  const std::vector<std::vector<double>> features = {{-3.0}, {-1.0}, {1.0}, {3.0}};
  const std::vector<std::size_t> labels = {0, 0, 1, 1};
  const MahalanobisModel model = fit_mahalanobis(features, labels);

  CHECK(classify_majority(model, {{0.0}}) == 0);                    // equidistant window
  CHECK(classify_majority(model, {{-2.0}, {2.0}}) == 0);            // split vote
  CHECK(classify_majority(model, {{-2.0}, {-2.0}, {2.0}}) == 0);    // plurality
  CHECK(classify_majority(model, {{2.0}, {2.0}, {-2.0}}) == 1);
  CHECK(classify_majority(model, {{2.0}, {2.0}, {2.0}}) == 1);      // unanimity
}

TEST_CASE("models round trip through their binary form") {
  Rng rng(7);
  std::vector<std::vector<double>> train;
  std::vector<std::size_t> labels;
  make_blobs(10, rng, train, labels);
  MahalanobisModel model = fit_mahalanobis(train, labels);
  model.label_names = {"low", "mid", "high"};

  const auto dir = std::filesystem::temp_directory_path() / "specadv_baseline";
  std::filesystem::create_directories(dir);
  const auto file = dir / "model.bin";
  save_mahalanobis(file, model);
  CHECK_FALSE(std::filesystem::exists(dir / "model.bin.tmp"));

  const MahalanobisModel loaded = load_mahalanobis(file);
  CHECK(loaded.class_count == model.class_count);
  CHECK(loaded.label_names == model.label_names);
  for (std::size_t k = 0; k < model.class_count; ++k)
    CHECK(loaded.means[k] == model.means[k]);
  CHECK(loaded.covariance.values() == model.covariance.values());
  CHECK(loaded.cholesky.values() == model.cholesky.values());

  const std::vector<double> probe = {1.0, 2.0};
  CHECK(mahalanobis_distances(loaded, probe) == mahalanobis_distances(model, probe));

  std::ofstream(dir / "junk.bin") << "AMDLgarbage";
  CHECK_THROWS_AS((void)load_mahalanobis(dir / "junk.bin"), DataError);
  CHECK_THROWS_AS((void)load_mahalanobis(dir / "absent.bin"), DataError);
}

TEST_CASE("the classifier validates its inputs") {
  CHECK_THROWS_AS((void)fit_mahalanobis({}, {}), DataError);
  CHECK_THROWS_AS((void)fit_mahalanobis({{1.0}, {2.0}}, {0}), DataError);
  CHECK_THROWS_AS((void)fit_mahalanobis({{1.0}, {2.0}, {3.0}}, {0, 0, 1}), DataError);
  CHECK_THROWS_AS((void)fit_mahalanobis({{1.0}, {2.0}, {3.0}}, {0, 0, 0}), DataError);
  CHECK_THROWS_AS((void)fit_mahalanobis({{1.0}, {2.0, 3.0}}, {0, 0}), DataError);

  const MahalanobisModel model =
      fit_mahalanobis({{-1.0}, {1.0}, {3.0}, {5.0}}, {0, 0, 1, 1});
  CHECK_THROWS_AS((void)mahalanobis_distances(model, {1.0, 2.0}), DataError);
  CHECK_THROWS_AS((void)classify_majority(model, {}), DataError);
}
