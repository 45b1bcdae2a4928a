#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>

#include "singalign/corpus.hpp"
#include "singalign/wav.hpp"
#include "testutil.hpp"

using namespace singalign;
using namespace singalign::test;

namespace {

// Writes a constant-amplitude wav of the given duration at 1 kHz sample rate
// (duration checks only care about the header).
std::string tiny_wav(const TempDir& dir, const std::string& name, double seconds,
                     int sample_rate = 1000) {
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples = Vector::Constant(static_cast<Eigen::Index>(seconds * sample_rate), 0.1f);
  const std::string path = dir.file(name);
  write_wav(w, path);
  return path;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

TEST_CASE("two-fragment manifest loads with metadata") {
  TempDir dir("corpus");
  const std::string a = tiny_wav(dir, "a.wav", 12.0);
  const std::string b = tiny_wav(dir, "b.wav", 15.0);
  write_lines(dir.file("m.tsv"),
              {"# comment line",
               "f1\tsongA\tsinger1\tpop,rock\ttrain\t" + a + "\thello world",
               "f2\tsongB\tsinger2\telectronic\ttest\t" + b + "\tbye now"});
  const CorpusManifest m = load_manifest(dir.file("m.tsv"));
  REQUIRE(m.fragments.size() == 2);
  CHECK(m.sample_rate == 1000);
  CHECK(m.fragments[0].genres == std::vector<std::string>{"pop", "rock"});
  CHECK(m.fragments[0].transcript == std::vector<std::string>{"hello", "world"});
  CHECK(m.fragments[0].duration == doctest::Approx(12.0));
  CHECK(m.fragments[1].split == Split::test);
  CHECK(m.split_fragments(Split::train).size() == 1);
}

TEST_CASE("singer overlap between splits is rejected") {
  TempDir dir("corpus");
  const std::string a = tiny_wav(dir, "a.wav", 12.0);
  const std::string b = tiny_wav(dir, "b.wav", 15.0);
  write_lines(dir.file("m.tsv"), {"f1\ts1\tS1\tpop\ttrain\t" + a + "\thello",
                                  "f2\ts2\tS1\tpop\ttest\t" + b + "\tworld"});
  CHECK_THROWS_WITH_AS(load_manifest(dir.file("m.tsv")),
                       doctest::Contains("singer overlap"), Error);
}

TEST_CASE("duplicate fragment ids and missing audio are parse errors") {
  TempDir dir("corpus");
  const std::string a = tiny_wav(dir, "a.wav", 12.0);
  write_lines(dir.file("dup.tsv"), {"f1\ts1\tA\tpop\ttrain\t" + a + "\thello",
                                    "f1\ts1\tA\tpop\ttrain\t" + a + "\tworld"});
  CHECK_THROWS_AS(load_manifest(dir.file("dup.tsv")), Error);

  write_lines(dir.file("missing.tsv"),
              {"f1\ts1\tA\tpop\ttrain\t" + dir.file("nope.wav") + "\thello"});
  CHECK_THROWS_AS(load_manifest(dir.file("missing.tsv")), Error);

  write_lines(dir.file("short.tsv"), {"f1\ts1\tA\tpop"});
  CHECK_THROWS_AS(load_manifest(dir.file("short.tsv")), Error);
}

TEST_CASE("mixed sample rates are rejected") {
  TempDir dir("corpus");
  const std::string a = tiny_wav(dir, "a.wav", 12.0, 1000);
  const std::string b = tiny_wav(dir, "b.wav", 12.0, 2000);
  write_lines(dir.file("m.tsv"), {"f1\ts1\tA\tpop\ttrain\t" + a + "\thello",
                                  "f2\ts2\tB\tpop\ttrain\t" + b + "\tworld"});
  CHECK_THROWS_WITH_AS(load_manifest(dir.file("m.tsv")),
                       doctest::Contains("sample rate"), Error);
}

TEST_CASE("paper-scale split shape: 640 train + 97 test fragments") {
  TempDir dir("corpus");
  // Reuse two physical files to keep the fixture light.
  const std::string train_wav = tiny_wav(dir, "train.wav", 11.0);
  const std::string test_wav = tiny_wav(dir, "test.wav", 11.0);
  std::vector<std::string> lines;
  for (int i = 0; i < 640; ++i)
    lines.push_back("tr" + std::to_string(i) + "\tsong" + std::to_string(i / 6) + "\tsingerA" +
                    std::to_string(i / 13) + "\tpop\ttrain\t" + train_wav + "\tla la");
  for (int i = 0; i < 97; ++i)
    lines.push_back("te" + std::to_string(i) + "\tsongX" + std::to_string(i / 6) + "\tsingerB" +
                    std::to_string(i / 7) + "\tpop\ttest\t" + test_wav + "\tla la");
  write_lines(dir.file("m.tsv"), lines);
  const CorpusManifest m = load_manifest(dir.file("m.tsv"));
  CHECK(m.split_fragments(Split::train).size() == 640);
  CHECK(m.split_fragments(Split::test).size() == 97);
}

TEST_CASE("duration validation warns without rejecting") {
  TempDir dir("corpus");
  const std::string ok = tiny_wav(dir, "ok.wav", 20.0);
  const std::string lng = tiny_wav(dir, "long.wav", 40.0);
  write_lines(dir.file("m.tsv"), {"f1\ts1\tA\tpop\ttrain\t" + ok + "\thello",
                                  "f2\ts1\tA\tpop\ttrain\t" + lng + "\tworld"});
  const CorpusManifest m = load_manifest(dir.file("m.tsv"));
  const auto warnings = validate_durations(m, 10.0, 35.0);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("f2") != std::string::npos);

  const CorpusManifest empty;
  CHECK(validate_durations(empty, 10.0, 35.0).empty());
}

TEST_CASE("save/load round-trip is the identity") {
  TempDir dir("corpus");
  std::mt19937 rng(7);
  const std::string wav_a = tiny_wav(dir, "a.wav", 13.5);
  const std::string wav_b = tiny_wav(dir, "b.wav", 18.25);

  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> lines;
    std::uniform_int_distribution<int> count(1, 12);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      const bool test_split = rng() % 3 == 0;
      const std::string singer = (test_split ? "ts" : "tr") + std::to_string(rng() % 5);
      lines.push_back("f" + std::to_string(i) + "\tsong" + std::to_string(rng() % 4) + "\t" +
                      singer + "\tpop,r&b\t" + (test_split ? "test" : "train") + "\t" +
                      (rng() % 2 ? wav_a : wav_b) + "\tword" + std::to_string(rng() % 9) +
                      " word" + std::to_string(rng() % 9));
    }
    write_lines(dir.file("m.tsv"), lines);
    const CorpusManifest m1 = load_manifest(dir.file("m.tsv"));
    save_manifest(m1, dir.file("m2.tsv"));
    const CorpusManifest m2 = load_manifest(dir.file("m2.tsv"));
    REQUIRE(m1.fragments.size() == m2.fragments.size());
    for (size_t i = 0; i < m1.fragments.size(); ++i) {
      CHECK(m1.fragments[i].fragment_id == m2.fragments[i].fragment_id);
      CHECK(m1.fragments[i].song_id == m2.fragments[i].song_id);
      CHECK(m1.fragments[i].singer_id == m2.fragments[i].singer_id);
      CHECK(m1.fragments[i].genres == m2.fragments[i].genres);
      CHECK(m1.fragments[i].split == m2.fragments[i].split);
      CHECK(m1.fragments[i].transcript == m2.fragments[i].transcript);
      CHECK(m1.fragments[i].duration == m2.fragments[i].duration);
    }
  }
}

TEST_CASE("singer-disjointness property over random manifests") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    CorpusManifest m;
    m.sample_rate = 1000;
    const int n = 2 + static_cast<int>(rng() % 10);
    const bool inject_overlap = trial % 2 == 0;
    for (int i = 0; i < n; ++i) {
      FragmentMeta f;
      f.fragment_id = "f" + std::to_string(i);
      f.song_id = "s";
      f.split = rng() % 2 ? Split::train : Split::test;
      f.singer_id =
          (f.split == Split::train ? "tr" : "te") + std::to_string(rng() % 4);
      f.genres = {"pop"};
      f.duration = 11.0;
      m.fragments.push_back(std::move(f));
    }
    bool has_train = false, has_test = false;
    for (auto& f : m.fragments) {
      has_train |= f.split == Split::train;
      has_test |= f.split == Split::test;
    }
    if (inject_overlap && has_train && has_test) {
      // Force a shared singer across the splits.
      std::string shared = "shared";
      bool put_train = false, put_test = false;
      for (auto& f : m.fragments) {
        if (f.split == Split::train && !put_train) {
          f.singer_id = shared;
          put_train = true;
        } else if (f.split == Split::test && !put_test) {
          f.singer_id = shared;
          put_test = true;
        }
      }
      CHECK_THROWS_AS(check_manifest(m), Error);
    } else {
      CHECK_NOTHROW(check_manifest(m));
    }
  }
}
