#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "singalign/am.hpp"
#include "singalign/tree.hpp"
#include "testutil.hpp"

using namespace singalign;
using namespace singalign::test;

namespace {

std::vector<Phone> small_phones() {
  return {{"V0", true, false}, {"V1", true, false}, {"C0", false, false}, {"SIL", false, true}};
}

FeatureMatrix random_features(int frames, int dim, uint32_t seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  FeatureMatrix f;
  f.frames.resize(frames, dim);
  for (int t = 0; t < frames; ++t)
    for (int j = 0; j < dim; ++j) f.frames(t, j) = dist(rng) + 0.3f * j;
  return f;
}

// Trivial single-phone alignment: every frame in state `position`.
AlignmentResult flat_alignment(int frames, int phone, int pdf, int position = 0) {
  AlignmentResult a;
  for (int t = 0; t < frames; ++t) a.frames.push_back({pdf, phone, position});
  a.segments.push_back({phone, 0, frames});
  return a;
}

}  // namespace

TEST_CASE("flat start initializes every state to the global statistics") {
  const auto phones = small_phones();
  const FeatureMatrix f1 = random_features(50, 4, 1);
  const FeatureMatrix f2 = random_features(70, 4, 2);
  const AcousticModel model = flat_start(phones, {&f1, &f2}, 3, 5);

  CHECK(model.num_pdfs() == 3 * 3 + 5);
  CHECK(model.dim == 4);
  for (int p = 0; p < model.num_phones(); ++p)
    for (double fwd : model.topo.forward[p]) CHECK(fwd == 0.5);

  // Brute-force global stats oracle.
  MatrixD all(120, 4);
  all.topRows(50) = f1.frames.cast<double>();
  all.bottomRows(70) = f2.frames.cast<double>();
  const VectorD mean = all.colwise().mean();
  const VectorD var =
      (all.array().square().colwise().mean().transpose().matrix() - mean.cwiseProduct(mean));
  for (const auto& g : model.pdfs) {
    CHECK((g.means.row(0).transpose() - mean).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((g.vars.row(0).transpose() - var).cwiseAbs().maxCoeff() < 1e-8);
  }
  CHECK_THROWS_AS(flat_start(phones, {}, 3, 5), Error);
}

TEST_CASE("single-state EM update reproduces sample statistics exactly") {
  const std::vector<Phone> phones = {{"A", false, false}};
  const FeatureMatrix f = random_features(200, 3, 7);
  AcousticModel model = flat_start(phones, {&f}, 1, 1);
  const AlignmentResult align = flat_alignment(200, 0, 0);

  EmStats stats;
  stats.init(model);
  accumulate_em_stats(model, f, align, &stats);
  EmUpdateOptions opts;
  opts.variance_floor_scale = 0;  // closed-form check wants the raw ML answer
  const AcousticModel updated = em_update(model, stats, opts);

  const MatrixD x = f.frames.cast<double>();
  const VectorD mean = x.colwise().mean();
  const VectorD var =
      x.array().square().colwise().mean().transpose().matrix() - mean.cwiseProduct(mean);
  CHECK((updated.pdfs[0].means.row(0).transpose() - mean).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((updated.pdfs[0].vars.row(0).transpose() - var).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("zero-occupancy states hold their parameters with a warning") {
  const std::vector<Phone> phones = {{"A", false, false}, {"B", false, false}};
  const FeatureMatrix f = random_features(50, 2, 3);
  AcousticModel model = flat_start(phones, {&f}, 1, 1);
  const AlignmentResult align = flat_alignment(50, 0, 0);  // phone B never seen

  WarningCollector warnings;
  EmStats stats;
  stats.init(model);
  accumulate_em_stats(model, f, align, &stats);
  const AcousticModel updated = em_update(model, stats, EmUpdateOptions{});
  CHECK(warnings.contains("zero occupancy"));
  CHECK(updated.pdfs[1].means == model.pdfs[1].means);
  CHECK(updated.pdfs[1].vars == model.pdfs[1].vars);
}

TEST_CASE("EM statistics merge associatively") {
  const std::vector<Phone> phones = {{"A", false, false}};
  const FeatureMatrix f1 = random_features(60, 3, 11);
  const FeatureMatrix f2 = random_features(40, 3, 12);
  AcousticModel model = flat_start(phones, {&f1, &f2}, 1, 1);

  EmStats separate1, separate2, pooled;
  separate1.init(model);
  separate2.init(model);
  pooled.init(model);
  accumulate_em_stats(model, f1, flat_alignment(60, 0, 0), &separate1);
  accumulate_em_stats(model, f2, flat_alignment(40, 0, 0), &separate2);
  accumulate_em_stats(model, f1, flat_alignment(60, 0, 0), &pooled);
  accumulate_em_stats(model, f2, flat_alignment(40, 0, 0), &pooled);
  separate1.merge(separate2);
  CHECK((separate1.pdf_stats[0].mean_acc - pooled.pdf_stats[0].mean_acc).cwiseAbs().maxCoeff() <
        1e-9);
  CHECK(separate1.num_frames == pooled.num_frames);
}

TEST_CASE("mixture splitting") {
  std::mt19937 rng(17);
  AcousticModel model = make_random_model(small_phones(), 3, rng);

  const AcousticModel split = split_mixtures(model, 2);
  for (int i = 0; i < split.num_pdfs(); ++i) {
    const auto& g = split.pdfs[i];
    REQUIRE(g.num_components() == 2);
    CHECK(g.weights[0] == doctest::Approx(0.5));
    CHECK(g.weights[1] == doctest::Approx(0.5));
    const VectorD sigma = model.pdfs[i].vars.row(0).cwiseSqrt();
    CHECK((g.means.row(0).transpose() -
           (model.pdfs[i].means.row(0).transpose() + 0.1 * sigma))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
    CHECK((g.means.row(1).transpose() -
           (model.pdfs[i].means.row(0).transpose() - 0.1 * sigma))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }
  // target == current -> identity
  const AcousticModel same = split_mixtures(split, 2);
  CHECK(same.pdfs[0].means == split.pdfs[0].means);
}

TEST_CASE("split then EM separates a bimodal sample") {
  const std::vector<Phone> phones = {{"A", false, false}};
  std::mt19937 rng(23);
  std::normal_distribution<float> noise(0.0f, 0.5f);
  FeatureMatrix f;
  f.frames.resize(400, 2);
  for (int t = 0; t < 400; ++t) {
    const float center = t % 2 == 0 ? -3.0f : 3.0f;
    f.frames(t, 0) = center + noise(rng);
    f.frames(t, 1) = center + noise(rng);
  }
  AcousticModel model = flat_start(phones, {&f}, 1, 1);
  model = split_mixtures(model, 2);
  const AlignmentResult align = flat_alignment(400, 0, 0);
  for (int iter = 0; iter < 8; ++iter) {
    EmStats stats;
    stats.init(model);
    accumulate_em_stats(model, f, align, &stats);
    model = em_update(model, stats, EmUpdateOptions{});
  }
  std::vector<double> centers = {model.pdfs[0].means(0, 0), model.pdfs[0].means(1, 0)};
  std::sort(centers.begin(), centers.end());
  CHECK(centers[0] == doctest::Approx(-3.0).epsilon(0.1));
  CHECK(centers[1] == doctest::Approx(3.0).epsilon(0.1));
}

TEST_CASE("self-loop scaling follows the vowel rule") {
  std::mt19937 rng(29);
  AcousticModel model = make_random_model(small_phones(), 3, rng);

  const AcousticModel scaled = scale_self_loops(model, 0.9);
  for (int p = 0; p < model.num_phones(); ++p) {
    for (int s = 0; s < model.topo.num_states(p); ++s) {
      const double expected =
          model.phones[p].is_vowel ? 0.9 * model.topo.forward[p][s] : model.topo.forward[p][s];
      CHECK(scaled.topo.forward[p][s] == doctest::Approx(expected).epsilon(1e-15));
    }
  }
  CHECK(scaled.topo.forward[0][0] == doctest::Approx(0.45));  // p=0.5, r=0.9

  const AcousticModel unchanged = scale_self_loops(model, 1.0);
  for (int p = 0; p < model.num_phones(); ++p)
    CHECK(unchanged.topo.forward[p] == model.topo.forward[p]);

  CHECK_THROWS_AS(scale_self_loops(model, -0.5), Error);
  AcousticModel at_one = model;
  at_one.topo.forward[0][0] = 0.9;
  CHECK_THROWS_AS(scale_self_loops(at_one, 1.2), Error);

  WarningCollector warnings;
  scale_self_loops(model, 1.1);
  CHECK(warnings.contains("shortens"));
}

TEST_CASE("Monte-Carlo dwell time matches 1/(r*p)") {
  std::mt19937 rng(97);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (double p : {0.5}) {
    for (double r : {0.9, 1.0}) {
      const double q = r * p;
      double total = 0;
      const int samples = 20000;
      for (int i = 0; i < samples; ++i) {
        int dwell = 1;
        while (unif(rng) > q) ++dwell;
        total += dwell;
      }
      CHECK(total / samples == doctest::Approx(1.0 / q).epsilon(0.03));
    }
  }
}

TEST_CASE("triphone tree separates constructed context modes") {
  // Phone A's first state has mean +5 after left context B, -5 after C.
  const std::vector<Phone> phones = {{"A", true, false},
                                     {"B", false, false},
                                     {"C", false, false},
                                     {"SIL", false, true}};
  std::mt19937 rng(37);
  std::normal_distribution<float> noise(0.0f, 0.5f);
  const int dim = 2;

  std::vector<FeatureMatrix> feats;
  std::vector<AlignmentResult> aligns;
  for (int utt = 0; utt < 40; ++utt) {
    const int left = utt % 2 == 0 ? 1 : 2;  // B or C
    FeatureMatrix f;
    f.frames.resize(6, dim);
    AlignmentResult a;
    // left-context phone: 3 frames, then phone A: 3 frames (one per state)
    for (int t = 0; t < 3; ++t) {
      for (int j = 0; j < dim; ++j) f.frames(t, j) = (left == 1 ? 1.0f : -1.0f) + noise(rng);
      a.frames.push_back({-1, left, t});
    }
    for (int t = 3; t < 6; ++t) {
      const float mode = left == 1 ? 5.0f : -5.0f;
      for (int j = 0; j < dim; ++j) f.frames(t, j) = mode + noise(rng);
      a.frames.push_back({-1, 0, t - 3});
    }
    a.segments.push_back({left, 0, 3});
    a.segments.push_back({0, 3, 6});
    // pdf ids are irrelevant for tree stats but must be valid
    feats.push_back(std::move(f));
    aligns.push_back(std::move(a));
  }

  std::vector<const FeatureMatrix*> fp;
  std::vector<const AlignmentResult*> ap;
  AcousticModel mono = flat_start(phones, [&] {
    std::vector<const FeatureMatrix*> all;
    for (auto& f : feats) all.push_back(&f);
    return all;
  }(), 3, 3);
  for (auto& a : aligns)
    for (auto& fr : a.frames) fr.pdf = mono.pdf_id(fr.phone, fr.position);
  for (auto& f : feats) fp.push_back(&f);
  for (auto& a : aligns) ap.push_back(&a);

  TreeBuildOptions opts;
  opts.max_leaves = mono.num_pdfs() + 6;
  const AcousticModel tri =
      build_triphone_tying(mono, fp, ap, auto_questions(mono), opts);
  CHECK(tri.context == ContextMode::triphone);
  // The B/C left contexts of phone A must land in different tied states.
  for (int pos = 0; pos < 3; ++pos)
    CHECK(tri.pdf_id(1, 0, -1, pos) != tri.pdf_id(2, 0, -1, pos));
  // Unseen triphone contexts still map somewhere valid.
  const int unseen = tri.pdf_id(3, 0, 3, 0);
  CHECK(unseen >= 0);
  CHECK(unseen < tri.num_pdfs());
}

TEST_CASE("degenerate tree matches the monophone inventory") {
  std::mt19937 rng(57);
  const auto phones = small_phones();
  AcousticModel mono = make_random_model(phones, 2, rng);
  mono.global_var = VectorD::Ones(2);

  const SynthTask task = make_synth_task(2, 1, 4, rng);
  std::vector<FeatureMatrix> feats;
  std::vector<AlignmentResult> aligns;
  for (int utt = 0; utt < 10; ++utt) {
    auto sampled = sample_utterance(mono, task.lexicon,
                                    random_transcript(task.vocab, 3, rng), rng);
    feats.push_back(std::move(sampled.features));
    aligns.push_back(std::move(sampled.alignment));
  }
  std::vector<const FeatureMatrix*> fp;
  std::vector<const AlignmentResult*> ap;
  for (auto& f : feats) fp.push_back(&f);
  for (auto& a : aligns) ap.push_back(&a);

  WarningCollector warnings;
  TreeBuildOptions opts;
  opts.max_leaves = mono.num_pdfs();  // no room to split
  const AcousticModel tri = build_triphone_tying(mono, fp, ap, auto_questions(mono), opts);
  CHECK(tri.num_pdfs() == mono.num_pdfs());
  CHECK(warnings.contains("monophone"));
  // Context never changes the pdf once the tree is degenerate.
  for (int p = 0; p < mono.num_phones(); ++p)
    for (int s = 0; s < mono.topo.num_states(p); ++s) {
      const int a = tri.pdf_id(0, p, 1, s);
      const int b = tri.pdf_id(2, p, -1, s);
      CHECK(a == b);
    }
}

TEST_CASE("model binary round trip") {
  TempDir dir("am");
  std::mt19937 rng(61);
  AcousticModel model = make_random_model(small_phones(), 5, rng);
  model = split_mixtures(model, 2);
  save_model(model, dir.file("model.bin"));
  const AcousticModel back = load_model(dir.file("model.bin"));
  CHECK(dump_model_text(model) == dump_model_text(back));
  CHECK(back.context == model.context);
  CHECK(back.dim == model.dim);
}
