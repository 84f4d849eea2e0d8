#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "specadv/audio.hpp"
#include "specadv/baseline.hpp"
#include "specadv/cli.hpp"
#include "specadv/errors.hpp"
#include "specadv/eval.hpp"
#include "specadv/network.hpp"

namespace fs = std::filesystem;
using namespace specadv;

namespace {

int cli(std::initializer_list<std::string> args) {
  return run_cli(std::vector<std::string>(args));
}

fs::path scratch_root() {
  const fs::path root = fs::temp_directory_path() / "specadv_cli";
  return root;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = scratch_root() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  return fields;
}

// Shared corpus, random split, and a small trained model.  Built once; every
// case that mutates state writes into its own directory instead.
struct Pipeline {
  fs::path corpus;
  fs::path splits;
  fs::path model;
};

const Pipeline& pipeline() {
  static const Pipeline p = [] {
    Pipeline out;
    out.corpus = scratch_root() / "corpus";
    out.splits = scratch_root() / "splits";
    out.model = scratch_root() / "model";
    fs::remove_all(out.corpus);
    fs::remove_all(out.splits);
    fs::remove_all(out.model);
    fs::create_directories(scratch_root());

    const fs::path synth_cfg = scratch_root() / "synth.cfg";
    write_file(synth_cfg,
               "classes=3\n"
               "items_per_class=6\n"
               "artists_per_class=3\n"
               "duration=112640\n");
    if (cli({"synth", "--config", synth_cfg.string(), "--out", out.corpus.string(), "--seed",
             "7"}) != 0)
      throw std::runtime_error("fixture synth failed");

    const fs::path part_cfg = scratch_root() / "part.cfg";
    write_file(part_cfg, "manifest=" + (out.corpus / "manifest.csv").string() +
                             "\n"
                             "mode=random\n"
                             "train_count=4\n"
                             "valid_count=1\n"
                             "test_count=1\n");
    if (cli({"partition", "--config", part_cfg.string(), "--out", out.splits.string(), "--seed",
             "1"}) != 0)
      throw std::runtime_error("fixture partition failed");

    const fs::path train_cfg = scratch_root() / "train.cfg";
    write_file(train_cfg, "train_manifest=" + (out.splits / "train.csv").string() +
                              "\n"
                              "valid_manifest=" +
                              (out.splits / "valid.csv").string() +
                              "\n"
                              "arch=dnn\n"
                              "width=12\n"
                              "element_stride=3\n"
                              "batch_size=32\n"
                              "max_epochs=8\n"
                              "patience=8\n");
    if (cli({"train", "--config", train_cfg.string(), "--out", out.model.string(), "--seed",
             "11"}) != 0)
      throw std::runtime_error("fixture train failed");
    return out;
  }();
  return p;
}

}  // namespace

TEST_CASE("usage errors and help map to the right exit codes") {
  CHECK(cli({}) == 1);
  CHECK(cli({"frobnicate"}) == 1);
  CHECK(cli({"synth", "--bogus-flag"}) == 1);
  CHECK(cli({"--help"}) == 0);
  CHECK(cli({"synth", "--help"}) == 0);

  CHECK(cli({"synth"}) == 1);
  CHECK(cli({"train", "--out", fresh_dir("usage_train").string()}) == 1);

  const fs::path dir = fresh_dir("usage_cfg");
  CHECK(cli({"synth", "--config", (dir / "absent.cfg").string(), "--out", dir.string()}) == 1);

  write_file(dir / "broken.cfg", "classes\n");
  CHECK(cli({"synth", "--config", (dir / "broken.cfg").string(), "--out", dir.string()}) == 1);

  write_file(dir / "nonnum.cfg", "classes=three\n");
  CHECK(cli({"synth", "--config", (dir / "nonnum.cfg").string(), "--out", dir.string()}) == 1);
}

TEST_CASE("synth writes a deterministic corpus") {
  const fs::path a = fresh_dir("synth_a");
  const fs::path b = fresh_dir("synth_b");
  const fs::path cfg = a / "synth.cfg";
  write_file(cfg,
             "classes=2\n"
             "items_per_class=2\n"
             "artists_per_class=2\n"
             "duration=4096\n");

  REQUIRE(cli({"synth", "--config", cfg.string(), "--out", (a / "c").string(), "--seed", "5"}) ==
          0);
  REQUIRE(cli({"synth", "--config", cfg.string(), "--out", (b / "c").string(), "--seed", "5"}) ==
          0);

  const DatasetManifest manifest = load_manifest(a / "c" / "manifest.csv");
  CHECK(manifest.entries.size() == 4);
  for (const auto& entry : manifest.entries) CHECK(fs::exists(manifest.resolve(entry)));

  CHECK(read_file(a / "c" / "manifest.csv") == read_file(b / "c" / "manifest.csv"));
  const std::string name = manifest.entries.front().path;
  CHECK(read_file(a / "c" / name) == read_file(b / "c" / name));

  const fs::path blocker = a / "blocker";
  write_file(blocker, "plain file\n");
  CHECK(cli({"synth", "--config", cfg.string(), "--out", (blocker / "sub").string()}) == 2);
}

TEST_CASE("partition splits the fixture corpus") {
  const Pipeline& p = pipeline();

  const DatasetManifest train = load_manifest(p.splits / "train.csv");
  const DatasetManifest valid = load_manifest(p.splits / "valid.csv");
  const DatasetManifest test = load_manifest(p.splits / "test.csv");
  CHECK(train.entries.size() == 12);
  CHECK(valid.entries.size() == 3);
  CHECK(test.entries.size() == 3);

  std::set<std::string> seen;
  for (const auto* split : {&train, &valid, &test})
    for (const auto& entry : split->entries) {
      const fs::path resolved = split->resolve(entry);
      CHECK(fs::exists(resolved));
      CHECK(seen.insert(fs::weakly_canonical(resolved).string()).second);
    }

  const fs::path dir = fresh_dir("part_artist");
  write_file(dir / "p.cfg", "manifest=" + (p.corpus / "manifest.csv").string() +
                                "\n"
                                "mode=artist_filtered\n"
                                "train_ratio=0.34\n"
                                "valid_ratio=0.33\n"
                                "test_ratio=0.33\n");
  REQUIRE(cli({"partition", "--config", (dir / "p.cfg").string(), "--out",
               (dir / "s").string()}) == 0);
  const DatasetManifest at = load_manifest(dir / "s" / "train.csv");
  const DatasetManifest av = load_manifest(dir / "s" / "valid.csv");
  const DatasetManifest ae = load_manifest(dir / "s" / "test.csv");
  CHECK(at.entries.size() + av.entries.size() + ae.entries.size() == 18);
  std::set<std::string> train_artists, other_artists;
  for (const auto& e : at.entries) train_artists.insert(e.artist);
  for (const auto& e : av.entries) other_artists.insert(e.artist);
  for (const auto& e : ae.entries) other_artists.insert(e.artist);
  for (const auto& artist : train_artists) CHECK(other_artists.count(artist) == 0);

  write_file(dir / "bad_mode.cfg",
             "manifest=" + (p.corpus / "manifest.csv").string() + "\nmode=sideways\n");
  CHECK(cli({"partition", "--config", (dir / "bad_mode.cfg").string(), "--out",
             (dir / "x").string()}) == 1);

  write_file(dir / "greedy.cfg", "manifest=" + (p.corpus / "manifest.csv").string() +
                                     "\nmode=random\ntrain_count=100\n");
  CHECK(cli({"partition", "--config", (dir / "greedy.cfg").string(), "--out",
             (dir / "y").string()}) == 2);

  CHECK(cli({"partition", "--config", (dir / "p.cfg").string()}) == 1);
}

TEST_CASE("train writes a loadable checkpoint and a log, deterministically") {
  const Pipeline& p = pipeline();
  REQUIRE(fs::exists(p.model / "checkpoint.adnn"));
  REQUIRE(fs::exists(p.model / "train_log.csv"));

  const NetworkParams params = load_checkpoint(p.model / "checkpoint.adnn");
  CHECK(params.label_names() == std::vector<std::string>{"class00", "class01", "class02"});

  const auto lines = split_lines(read_file(p.model / "train_log.csv"));
  REQUIRE(!lines.empty());
  CHECK(lines.front() == "epoch,train_loss,valid_mean_recall");
  CHECK(lines.size() >= 2);

  const fs::path redo = fresh_dir("train_redo");
  write_file(redo / "t.cfg", "train_manifest=" + (p.splits / "train.csv").string() +
                                 "\nvalid_manifest=" + (p.splits / "valid.csv").string() +
                                 "\narch=dnn\nwidth=12\nelement_stride=3\nbatch_size=32\n"
                                 "max_epochs=8\npatience=8\n");
  REQUIRE(cli({"train", "--config", (redo / "t.cfg").string(), "--out", (redo / "m").string(),
               "--seed", "11"}) == 0);
  CHECK(read_file(redo / "m" / "checkpoint.adnn") == read_file(p.model / "checkpoint.adnn"));
  CHECK(read_file(redo / "m" / "train_log.csv") == read_file(p.model / "train_log.csv"));
}

TEST_CASE("train rejects labels outside the training set and diverging runs") {
  const Pipeline& p = pipeline();
  const fs::path dir = fresh_dir("train_bad");

  const DatasetManifest train = load_manifest(p.splits / "train.csv");
  DatasetManifest rogue;
  rogue.base_dir = train.base_dir;
  rogue.entries.push_back(train.entries.front());
  rogue.entries.front().label = "interloper";
  save_manifest(dir / "rogue.csv", rogue);

  write_file(dir / "t.cfg", "train_manifest=" + (p.splits / "train.csv").string() +
                                "\nvalid_manifest=" + (dir / "rogue.csv").string() +
                                "\nwidth=8\nelement_stride=16\nmax_epochs=1\npatience=1\n");
  CHECK(cli({"train", "--config", (dir / "t.cfg").string(), "--out", (dir / "m").string()}) == 2);

  write_file(dir / "diverge.cfg", "train_manifest=" + (p.splits / "train.csv").string() +
                                      "\nvalid_manifest=" + (p.splits / "valid.csv").string() +
                                      "\nwidth=8\nelement_stride=8\nbatch_size=32\n"
                                      "max_epochs=20\npatience=20\nlearning_rate=1e300\n");
  CHECK(cli({"train", "--config", (dir / "diverge.cfg").string(), "--out",
             (dir / "m2").string()}) == 3);

  CHECK(cli({"train", "--config", (dir / "t.cfg").string()}) == 1);
  write_file(dir / "missing.cfg",
             "train_manifest=" + (dir / "nope.csv").string() +
                 "\nvalid_manifest=" + (p.splits / "valid.csv").string() + "\n");
  CHECK(cli({"train", "--config", (dir / "missing.cfg").string(), "--out",
             (dir / "m3").string()}) == 2);
}

TEST_CASE("advtrain produces a checkpoint distinct from plain training") {
  const Pipeline& p = pipeline();
  const fs::path dir = fresh_dir("advtrain");
  write_file(dir / "t.cfg", "train_manifest=" + (p.splits / "train.csv").string() +
                                "\nvalid_manifest=" + (p.splits / "valid.csv").string() +
                                "\narch=dnn\nwidth=12\nelement_stride=3\nbatch_size=32\n"
                                "max_epochs=8\npatience=8\neps=0.1\n");
  REQUIRE(cli({"advtrain", "--config", (dir / "t.cfg").string(), "--out", (dir / "m").string(),
               "--seed", "11"}) == 0);
  REQUIRE(fs::exists(dir / "m" / "checkpoint.adnn"));
  CHECK(read_file(dir / "m" / "checkpoint.adnn") != read_file(p.model / "checkpoint.adnn"));

  const NetworkParams params = load_checkpoint(dir / "m" / "checkpoint.adnn");
  CHECK(params.label_names().size() == 3);
}

TEST_CASE("attack writes a report with audio and honours a one-step budget") {
  const Pipeline& p = pipeline();
  const fs::path dir = fresh_dir("attack");

  write_file(dir / "a.cfg", "checkpoint=" + (p.model / "checkpoint.adnn").string() +
                                "\nmanifest=" + (p.splits / "test.csv").string() +
                                "\nmax_elements=40\n");

  REQUIRE(cli({"attack", "--config", (dir / "a.cfg").string(), "--out", (dir / "one").string(),
               "--directive", "fixed_label", "--target", "class00", "--kmax", "1", "--mu",
               "0"}) == 0);

  const auto lines = split_lines(read_file(dir / "one" / "attack_report.csv"));
  REQUIRE(lines.size() == 4);
  CHECK(lines.front() ==
        "file,true_label,target_label,predicted_label,confidence,snr_db,iterations,succeeded");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split_fields(lines[i]);
    REQUIRE(fields.size() == 8);
    CHECK(fields[2] == "class00");
    if (fields[6] == "0") {
      CHECK(fields[1] == "class00");
      CHECK(fields[5] == "inf");
      CHECK(fields[7] == "true");
    } else {
      CHECK(fields[7] == "false");
    }
    const fs::path wav = dir / "one" / (fs::path(fields[0]).stem().string() + ".adv-class00.wav");
    CHECK(fs::exists(wav));
    const AudioSignal audio = load_audio(wav);
    CHECK(audio.samples.size() > 0);
  }

  REQUIRE(cli({"attack", "--config", (dir / "a.cfg").string(), "--out", (dir / "full").string(),
               "--directive", "all_labels", "--snr", "15", "--kmax", "60"}) == 0);
  const auto full = split_lines(read_file(dir / "full" / "attack_report.csv"));
  CHECK(full.size() == 1 + 3 * 3);
  std::set<std::string> targets_seen;
  for (std::size_t i = 1; i < full.size(); ++i) {
    const auto fields = split_fields(full[i]);
    REQUIRE(fields.size() == 8);
    targets_seen.insert(fields[2]);
    if (fields[5] != "inf") CHECK(std::stod(fields[5]) >= 15.0 - 0.01);
  }
  CHECK(targets_seen.size() == 3);

  REQUIRE(cli({"attack", "--config", (dir / "a.cfg").string(), "--out", (dir / "redo").string(),
               "--directive", "all_labels", "--snr", "15", "--kmax", "60"}) == 0);
  CHECK(read_file(dir / "redo" / "attack_report.csv") ==
        read_file(dir / "full" / "attack_report.csv"));

  CHECK(cli({"attack", "--config", (dir / "a.cfg").string(), "--out", (dir / "x").string(),
             "--directive", "fixed_label", "--target", "classZZ"}) == 2);
  CHECK(cli({"attack", "--config", (dir / "a.cfg").string(), "--out", (dir / "y").string(),
             "--directive", "sideways"}) == 1);

  write_file(dir / "bad.cfg", "checkpoint=" + (dir / "absent.adnn").string() +
                                  "\nmanifest=" + (p.splits / "test.csv").string() + "\n");
  CHECK(cli({"attack", "--config", (dir / "bad.cfg").string(), "--out", (dir / "z").string()}) ==
        2);
}

TEST_CASE("baseline fits, scores, and repeats byte for byte") {
  const Pipeline& p = pipeline();
  const fs::path dir = fresh_dir("baseline");
  write_file(dir / "b.cfg", "train_manifest=" + (p.splits / "train.csv").string() +
                                "\nvalid_manifest=" + (p.splits / "valid.csv").string() +
                                "\ntest_manifest=" + (p.splits / "test.csv").string() + "\n");

  REQUIRE(cli({"baseline", "--config", (dir / "b.cfg").string(), "--out",
               (dir / "one").string()}) == 0);
  REQUIRE(fs::exists(dir / "one" / "features.csv"));
  REQUIRE(fs::exists(dir / "one" / "predictions.csv"));
  REQUIRE(fs::exists(dir / "one" / "baseline_model.bin"));

  const MahalanobisModel model = load_mahalanobis(dir / "one" / "baseline_model.bin");
  CHECK(model.class_count == 3);
  CHECK(model.label_names == std::vector<std::string>{"class00", "class01", "class02"});
  CHECK(model.means.size() == 3);
  CHECK(model.means.front().size() == 28);

  const auto preds = split_lines(read_file(dir / "one" / "predictions.csv"));
  REQUIRE(preds.size() == 4);
  CHECK(preds.front() == "file,true_label,predicted_label");
  for (std::size_t i = 1; i < preds.size(); ++i) {
    const auto fields = split_fields(preds[i]);
    REQUIRE(fields.size() == 3);
    CHECK(model.label_names.end() !=
          std::find(model.label_names.begin(), model.label_names.end(), fields[2]));
  }

  const auto features = split_lines(read_file(dir / "one" / "features.csv"));
  REQUIRE(features.size() >= 2);
  CHECK(split_fields(features.front()).size() == 30);
  CHECK(features.size() == 1 + 18);

  REQUIRE(cli({"baseline", "--config", (dir / "b.cfg").string(), "--out",
               (dir / "two").string()}) == 0);
  CHECK(read_file(dir / "two" / "features.csv") == read_file(dir / "one" / "features.csv"));
  CHECK(read_file(dir / "two" / "predictions.csv") == read_file(dir / "one" / "predictions.csv"));
  CHECK(read_file(dir / "two" / "baseline_model.bin") ==
        read_file(dir / "one" / "baseline_model.bin"));
}

TEST_CASE("eval scores a hand-written predictions table exactly") {
  const fs::path dir = fresh_dir("eval_pred");
  write_file(dir / "preds.csv",
             "file,true_label,predicted_label\n"
             "f0.wav,A,A\n"
             "f1.wav,A,B\n"
             "f2.wav,B,B\n"
             "f3.wav,B,B\n");
  write_file(dir / "e.cfg", "predictions=" + (dir / "preds.csv").string() + "\n");
  REQUIRE(cli({"eval", "--config", (dir / "e.cfg").string(), "--out", (dir / "r").string()}) ==
          0);

  CHECK(read_file(dir / "r" / "fom.csv") ==
        ",A,B,precision\n"
        "A,50.00,0.00,100.00\n"
        "B,50.00,100.00,66.67\n"
        "fscore,66.67,80.00,75.00\n");
  CHECK(read_file(dir / "r" / "significance.csv") ==
        "correct,total,chance,p_value\n"
        "3,4,0.5,3.125000e-01\n");

  write_file(dir / "perfect.csv",
             "extra,predicted_label,true_label\n"
             "x,A,A\n"
             "x,B,B\n"
             "x,C,C\n");
  write_file(dir / "e2.cfg", "predictions=" + (dir / "perfect.csv").string() + "\n");
  REQUIRE(cli({"eval", "--config", (dir / "e2.cfg").string(), "--out", (dir / "r2").string()}) ==
          0);
  const auto lines = split_lines(read_file(dir / "r2" / "fom.csv"));
  REQUIRE(!lines.empty());
  const auto last = split_fields(lines.back());
  CHECK(last.front() == "fscore");
  CHECK(last.back() == "100.00");

  write_file(dir / "headerless.csv", "a,b\nx,y\n");
  write_file(dir / "e3.cfg", "predictions=" + (dir / "headerless.csv").string() + "\n");
  CHECK(cli({"eval", "--config", (dir / "e3.cfg").string(), "--out", (dir / "r3").string()}) ==
        2);
}

TEST_CASE("eval scores a checkpoint over a manifest") {
  const Pipeline& p = pipeline();
  const fs::path dir = fresh_dir("eval_ckpt");
  write_file(dir / "e.cfg", "checkpoint=" + (p.model / "checkpoint.adnn").string() +
                                "\nmanifest=" + (p.splits / "test.csv").string() + "\n");
  REQUIRE(cli({"eval", "--config", (dir / "e.cfg").string(), "--out", (dir / "r").string()}) ==
          0);
  REQUIRE(fs::exists(dir / "r" / "fom.csv"));
  REQUIRE(fs::exists(dir / "r" / "significance.csv"));

  const auto preds = split_lines(read_file(dir / "r" / "predictions.csv"));
  CHECK(preds.size() == 1 + 3);
  const auto sig = split_fields(split_lines(read_file(dir / "r" / "significance.csv")).back());
  REQUIRE(sig.size() == 4);
  CHECK(sig[1] == "3");

  write_file(dir / "both.cfg", "checkpoint=" + (p.model / "checkpoint.adnn").string() +
                                   "\nmanifest=" + (p.splits / "test.csv").string() +
                                   "\npredictions=" + (dir / "whatever.csv").string() + "\n");
  CHECK(cli({"eval", "--config", (dir / "both.cfg").string(), "--out", (dir / "x").string()}) ==
        1);
  CHECK(cli({"eval", "--out", (dir / "y").string()}) == 1);
}

TEST_CASE("no temporary files survive in any output directory") {
  pipeline();
  std::size_t leftovers = 0;
  for (const auto& entry : fs::recursive_directory_iterator(scratch_root()))
    if (entry.path().extension() == ".tmp") ++leftovers;
  CHECK(leftovers == 0);
}
