// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failures. Each criterion pins its tolerances in code.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "singalign/adapt.hpp"
#include "singalign/am.hpp"
#include "singalign/decoder.hpp"
#include "singalign/lexicon.hpp"
#include "singalign/lm.hpp"
#include "singalign/pipeline.hpp"
#include "singalign/score.hpp"
#include "oracle_util.hpp"
#include "testutil.hpp"

using namespace singalign;
using namespace singalign::test;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

double wer_percent(const std::map<std::string, std::vector<std::string>>& refs,
                   const std::map<std::string, std::vector<std::string>>& hyps) {
  return score_corpus(refs, hyps).error_rate();
}

// ---------------------------------------------------------------------------
// 1. EM monotonicity on a five-minute synthetic corpus.

Check criterion_em_monotonicity() {
  Check c;
  std::mt19937 rng(20240601);
  SynthTask task = make_synth_task(4, 5, 15, rng);  // 10 phones incl. silence
  AcousticModel truth = make_random_model(task.phones, 6, rng, 3.0);

  std::vector<SampledUtterance> utts;
  int64_t frames = 0;
  while (frames < 30000) {  // 5 minutes at 10 ms per frame
    utts.push_back(
        sample_utterance(truth, task.lexicon, random_transcript(task.vocab, 8, rng), rng));
    frames += utts.back().features.num_frames();
  }

  std::vector<const FeatureMatrix*> sample;
  for (const auto& u : utts) sample.push_back(&u.features);
  AcousticModel model = flat_start(task.phones, sample, 3, 3);

  std::vector<double> trace;
  for (int iter = 0; iter < 10; ++iter) {
    EmStats stats;
    stats.init(model);
    for (const auto& u : utts) {
      const AlignmentResult ali = align_transcript(u.words, task.lexicon, model, u.features);
      accumulate_em_stats(model, u.features, ali, &stats);
    }
    model = em_update(model, stats, EmUpdateOptions{});
    trace.push_back(stats.total_log_like);
  }
  for (size_t i = 1; i < trace.size(); ++i) {
    if (!(trace[i] >= trace[i - 1] - 1e-6 * std::abs(trace[i - 1]))) {
      std::ostringstream msg;
      msg << "iteration " << i << ": " << trace[i] << " < " << trace[i - 1];
      c.expect(false, msg.str());
    }
  }
  c.detail += c.detail.empty() ? "" : "; ";
  {
    std::ostringstream msg;
    msg << frames << " frames, ll " << trace.front() << " -> " << trace.back();
    c.detail += msg.str();
  }
  return c;
}

// ---------------------------------------------------------------------------
// 2. Beam = inf decoding equals the brute-force DP on 500 random instances.

Check criterion_viterbi_oracle() {
  Check c;
  std::mt19937 rng(7741);
  int feasible = 0;
  for (int trial = 0; trial < 500 && c.ok; ++trial) {
    const RandomInstance inst = make_random_instance(rng, 200, 50);
    const OracleResult oracle = oracle_best_path(inst.graph, inst.emissions);
    MatrixScorer scorer(inst.emissions);
    if (!oracle.found) {
      bool threw = false;
      try {
        viterbi_align(inst.graph, scorer);
      } catch (const Error&) {
        threw = true;
      }
      c.expect(threw, "trial " + std::to_string(trial) + ": oracle infeasible, search found a path");
      continue;
    }
    ++feasible;
    AlignmentResult ali;
    try {
      ali = viterbi_align(inst.graph, scorer);
    } catch (const Error&) {
      c.expect(false, "trial " + std::to_string(trial) + ": search infeasible, oracle found " +
                          std::to_string(oracle.score));
      continue;
    }
    if (std::abs(ali.total_score - oracle.score) > 1e-6) {
      c.expect(false, "trial " + std::to_string(trial) + ": score " +
                          std::to_string(ali.total_score) + " vs oracle " +
                          std::to_string(oracle.score));
      continue;
    }
    bool same_path = ali.frames.size() == oracle.frame_pdfs.size();
    for (size_t t = 0; same_path && t < oracle.frame_pdfs.size(); ++t)
      same_path = ali.frames[t].pdf == oracle.frame_pdfs[t];
    c.expect(same_path, "trial " + std::to_string(trial) + ": path mismatch");
  }
  c.detail = std::to_string(feasible) + "/500 feasible instances";
  return c;
}

// ---------------------------------------------------------------------------
// 3. Generative round trip: synthesized utterances decode to their transcripts.

Check criterion_generative_round_trip() {
  Check c;
  std::mt19937 rng(515);
  SynthTask task = make_synth_task(4, 6, 20, rng);  // 20-word vocabulary
  AcousticModel model = make_random_model(task.phones, 6, rng, 3.5);

  TextCorpus corpus;
  for (int i = 0; i < 60; ++i)
    corpus.sentences.push_back(random_transcript(task.vocab, 5 + rng() % 3, rng));
  const NgramModel lm = train_trigram(corpus);
  const DecodingGraph graph = build_decode_graph(task.lexicon, lm, model);

  DecodeConfig cfg;
  cfg.beam = 100.0;
  cfg.max_active = 20000;
  std::map<std::string, std::vector<std::string>> refs, hyps;
  for (int i = 0; i < 20; ++i) {
    const auto& words = corpus.sentences[i];
    auto sampled = sample_utterance(model, task.lexicon, words, rng);
    const Hypothesis hyp = decode(graph, sampled.features, model, cfg);
    c.expect(!hyp.search_failure, "utterance " + std::to_string(i) + ": search failure");
    refs["u" + std::to_string(i)] = words;
    hyps["u" + std::to_string(i)] = hyp.words;
  }
  const double wer = wer_percent(refs, hyps);
  c.expect(wer == 0.0, "WER " + std::to_string(wer) + "% != 0%");
  c.detail = "20 utterances, WER " + std::to_string(wer) + "%";
  return c;
}

// ---------------------------------------------------------------------------
// 4. fMLLR recovery from a random affine corruption.

Check criterion_fmllr_recovery() {
  Check c;
  std::mt19937 rng(8912);
  const std::vector<Phone> phones = {{"V0", true, false},
                                     {"V1", true, false},
                                     {"C0", false, false},
                                     {"SIL", false, true}};
  AcousticModel model = make_random_model(phones, 5, rng, 3.0);
  SynthTask task;
  task.phones = phones;
  task.lexicon.phones = phones;
  task.lexicon.entries["WA"] = {{0, 2}};
  task.lexicon.entries["WB"] = {{2, 1}};
  task.vocab = {"WA", "WB"};

  // Random affine with condition number < 10.
  MatrixD a0;
  VectorD b0(5);
  std::normal_distribution<double> n(0.0, 0.25);
  double cond = 1e9;
  do {
    a0 = MatrixD::Identity(5, 5);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) a0(i, j) += n(rng) / (i == j ? 1.0 : 2.0);
    Eigen::JacobiSVD<MatrixD> svd(a0);
    cond = svd.singularValues()(0) / svd.singularValues()(4);
  } while (cond >= 10.0);
  for (int i = 0; i < 5; ++i) b0[i] = n(rng);

  FmllrStats stats;
  double ll_clean = 0, ll_corrupt = 0;
  std::vector<std::pair<FeatureMatrix, AlignmentResult>> utts;
  int64_t frames = 0;
  while (frames < 10000) {
    auto u = sample_utterance(model, task.lexicon,
                              random_transcript(task.vocab, 6, rng), rng);
    FeatureMatrix bad = u.features;
    bad.frames = ((u.features.frames.cast<double>() * a0.transpose()).rowwise() +
                  b0.transpose())
                     .cast<float>();
    frames += u.features.num_frames();
    for (int t = 0; t < u.features.num_frames(); ++t) {
      const int pdf = u.alignment.frames[t].pdf;
      ll_clean += model.pdfs[pdf].log_like(u.features.frames.row(t).cast<double>().transpose());
      ll_corrupt += model.pdfs[pdf].log_like(bad.frames.row(t).cast<double>().transpose());
    }
    accumulate_fmllr_stats(model, bad, u.alignment, &stats);
    utts.emplace_back(std::move(bad), std::move(u.alignment));
  }
  const FmllrTransform t = estimate_fmllr(stats, FmllrOptions{});

  const MatrixD comp_a = t.A() * a0;
  const VectorD comp_b = t.A() * b0 + t.b();
  const double dev =
      std::max((comp_a - MatrixD::Identity(5, 5)).cwiseAbs().maxCoeff(),
               comp_b.cwiseAbs().maxCoeff());
  c.expect(dev < 0.05, "composition deviates from identity by " + std::to_string(dev));

  double ll_adapted = 0;
  for (const auto& [bad, ali] : utts) {
    const FeatureMatrix fixed = apply_fmllr(t, bad);
    for (int ti = 0; ti < fixed.num_frames(); ++ti)
      ll_adapted +=
          model.pdfs[ali.frames[ti].pdf].log_like(fixed.frames.row(ti).cast<double>().transpose());
  }
  const double closure = (ll_adapted - ll_corrupt) / (ll_clean - ll_corrupt);
  c.expect(closure >= 0.9, "closed only " + std::to_string(100 * closure) + "% of the gap");
  std::ostringstream msg;
  msg << frames << " frames, cond " << cond << ", max dev " << dev << ", gap closure "
      << 100 * closure << "%";
  c.detail = msg.str();
  return c;
}

// ---------------------------------------------------------------------------
// 5. Adaptation-level ordering on per-fragment distinct corruptions.

Check criterion_adaptation_ordering() {
  Check c;
  std::mt19937 rng(3344);
  SynthTask task = make_synth_task(3, 5, 10, rng);
  AcousticModel model = make_random_model(task.phones, 4, rng, 2.0);

  TextCorpus corpus;
  for (int i = 0; i < 50; ++i)
    corpus.sentences.push_back(random_transcript(task.vocab, 6, rng));
  const NgramModel lm = train_trigram(corpus);
  const DecodingGraph graph = build_decode_graph(task.lexicon, lm, model);

  std::normal_distribution<double> strong(0.0, 0.45), mild(0.0, 0.12);
  auto affine = [&](std::normal_distribution<double>& d) {
    MatrixD a = MatrixD::Identity(4, 4);
    VectorD b(4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) a(i, j) += d(rng) / (i == j ? 1.0 : 2.0);
    for (int i = 0; i < 4; ++i) b[i] = d(rng) * 2.0;
    return std::make_pair(a, b);
  };

  // 3 songs x 3 fragments; song-level base corruption plus fragment jitter.
  struct Frag {
    std::string id, song;
    FeatureMatrix corrupted;
    AlignmentResult align;
    std::vector<std::string> words;
  };
  std::vector<Frag> frags;
  for (int song = 0; song < 3; ++song) {
    const auto [sa, sb] = affine(strong);
    for (int k = 0; k < 3; ++k) {
      const auto [ja, jb] = affine(mild);
      const MatrixD a = ja * sa;
      const VectorD b = ja * sb + jb;
      Frag frag;
      frag.id = "s" + std::to_string(song) + "f" + std::to_string(k);
      frag.song = "song" + std::to_string(song);
      frag.words = random_transcript(task.vocab, 24, rng);
      auto u = sample_utterance(model, task.lexicon, frag.words, rng);
      frag.corrupted = u.features;
      frag.corrupted.frames =
          ((u.features.frames.cast<double>() * a.transpose()).rowwise() + b.transpose())
              .cast<float>();
      frag.align = std::move(u.alignment);
      frags.push_back(std::move(frag));
    }
  }

  DecodeConfig cfg;
  cfg.beam = 120.0;
  cfg.max_active = 30000;
  FmllrOptions fopts;
  fopts.min_occupancy = 100;

  auto decode_with_groups =
      [&](const std::function<std::string(const Frag&)>& group_of) {
        std::map<std::string, FmllrStats> stats;
        for (const auto& f : frags)
          accumulate_fmllr_stats(model, f.corrupted, f.align, &stats[group_of(f)]);
        std::map<std::string, FmllrTransform> trans;
        for (auto& [g, st] : stats) trans[g] = estimate_fmllr(st, fopts);
        std::map<std::string, std::vector<std::string>> refs, hyps;
        for (const auto& f : frags) {
          const FeatureMatrix adapted = apply_fmllr(trans.at(group_of(f)), f.corrupted);
          const Hypothesis hyp = decode(graph, adapted, model, cfg);
          refs[f.id] = f.words;
          hyps[f.id] = hyp.words;
        }
        return wer_percent(refs, hyps);
      };

  const double wer_fragment = decode_with_groups([](const Frag& f) { return f.id; });
  const double wer_song = decode_with_groups([](const Frag& f) { return f.song; });
  const double wer_pooled = decode_with_groups([](const Frag&) { return std::string("all"); });

  c.expect(wer_fragment <= wer_song,
           "fragment " + std::to_string(wer_fragment) + "% > song " + std::to_string(wer_song) + "%");
  c.expect(wer_song <= wer_pooled,
           "song " + std::to_string(wer_song) + "% > pooled " + std::to_string(wer_pooled) + "%");
  std::ostringstream msg;
  msg << "WER fragment " << wer_fragment << "% <= song " << wer_song << "% <= pooled "
      << wer_pooled << "%";
  c.detail = msg.str();
  return c;
}

// ---------------------------------------------------------------------------
// 6. Prolonged-vowel treatments: extended lexicon, then r = 0.9 on top.

Check criterion_prolonged_vowels() {
  Check c;
  std::mt19937 rng(6001);
  // Two acoustically close vowels and well-separated consonants; the
  // vocabulary pairs single-vowel words with two-vowel near-homophones so
  // duration modeling decides.
  std::vector<Phone> phones = {{"V0", true, false},
                               {"V1", true, false},
                               {"C0", false, false},
                               {"C1", false, false},
                               {"C2", false, false},
                               {"SIL", false, true}};
  const int dim = 4;
  AcousticModel model = make_random_model(phones, dim, rng, 0.0, 3, 3);
  std::normal_distribution<double> spread(0.0, 2.5);
  // Consonants and silence: distinct random state means.
  for (int p = 2; p < model.num_phones(); ++p)
    for (int s = 0; s < model.topo.num_states(p); ++s)
      for (int j = 0; j < dim; ++j) model.pdfs[model.pdf_id(p, s)].means(0, j) = spread(rng);
  // Vowels: shared base with a small offset between V0 and V1.
  VectorD vowel_base(dim);
  for (int j = 0; j < dim; ++j) vowel_base[j] = spread(rng);
  for (int s = 0; s < 3; ++s) {
    for (int j = 0; j < dim; ++j) {
      model.pdfs[model.pdf_id(0, s)].means(0, j) = vowel_base[j] + 0.3 * s;
      model.pdfs[model.pdf_id(1, s)].means(0, j) = vowel_base[j] + 0.3 * s + 0.9;
    }
  }
  for (auto& g : model.pdfs) g.refresh();

  SynthTask task;
  task.phones = phones;
  task.lexicon.phones = phones;
  // Minimal pairs: C V0 C vs C V0 V1 C.
  task.lexicon.entries["WA"] = {{2, 0, 3}};
  task.lexicon.entries["WB"] = {{2, 0, 1, 3}};
  task.lexicon.entries["WC"] = {{3, 0, 4}};
  task.lexicon.entries["WD"] = {{3, 0, 1, 4}};
  task.lexicon.entries["WE"] = {{4, 1, 2}};
  task.lexicon.entries["WF"] = {{4, 1, 0, 2}};
  task.vocab = {"WA", "WB", "WC", "WD", "WE", "WF"};

  TextCorpus corpus;
  for (int i = 0; i < 80; ++i)
    corpus.sentences.push_back(random_transcript(task.vocab, 6, rng));
  const NgramModel lm = train_trigram(corpus);

  // Test fragments with vowels sung 3-6x longer than the trained prior.
  std::uniform_real_distribution<double> mult(3.0, 6.0);
  std::map<std::string, std::vector<std::string>> refs;
  std::vector<std::pair<std::string, FeatureMatrix>> feats;
  for (int i = 0; i < 25; ++i) {
    SampleOptions opts;
    opts.vowel_dwell_multiplier = mult(rng);
    const auto words = random_transcript(task.vocab, 8, rng);
    auto u = sample_utterance(model, task.lexicon, words, rng, opts);
    refs["u" + std::to_string(i)] = words;
    feats.emplace_back("u" + std::to_string(i), std::move(u.features));
  }

  DecodeConfig cfg;
  cfg.beam = 120.0;
  cfg.max_active = 30000;
  auto run = [&](const Lexicon& lex, const AcousticModel& m) {
    const DecodingGraph graph = build_decode_graph(lex, lm, m);
    std::map<std::string, std::vector<std::string>> hyps;
    for (const auto& [id, f] : feats) hyps[id] = decode(graph, f, m, cfg).words;
    return wer_percent(refs, hyps);
  };

  const Lexicon extended = extend_prolonged_vowels(task.lexicon, 3);
  const double wer_base = run(task.lexicon, model);
  const double wer_ext = run(extended, model);
  const double wer_ext_scaled = run(extended, scale_self_loops(model, 0.9));

  c.expect(wer_ext < wer_base, "extended " + std::to_string(wer_ext) + "% !< base " +
                                   std::to_string(wer_base) + "%");
  c.expect(wer_ext_scaled <= wer_ext, "r=0.9 " + std::to_string(wer_ext_scaled) + "% > " +
                                          std::to_string(wer_ext) + "%");
  std::ostringstream msg;
  msg << "WER base " << wer_base << "% ext " << wer_ext << "% ext+r0.9 " << wer_ext_scaled
      << "%";
  c.detail = msg.str();
  return c;
}

// ---------------------------------------------------------------------------
// 7. Lexicon expansion counts over a fuzzed 1000-word lexicon.

Check criterion_lexicon_counts() {
  Check c;
  std::mt19937 rng(12);
  const SynthTask task = make_synth_task(4, 5, 1000, rng, 1, 6);
  const Lexicon ext = extend_prolonged_vowels(task.lexicon, 3);
  for (const auto& [word, prons] : task.lexicon.entries) {
    const int n = count_vowels(task.lexicon, prons.front());
    const size_t got = ext.entries.at(word).size();
    const size_t expected = n <= 3 ? (1u << n) : 1u;
    if (got != expected) {
      c.expect(false, word + ": " + std::to_string(got) + " variants, expected " +
                          std::to_string(expected));
      break;
    }
  }
  c.detail = "1000 words exhaustively checked";
  return c;
}

// ---------------------------------------------------------------------------
// 8. Monte-Carlo dwell time of a scaled vowel state.

Check criterion_dwell_time() {
  Check c;
  std::mt19937 rng(777);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::vector<Phone> phones = {{"V0", true, false}, {"SIL", false, true}};
  std::ostringstream msg;
  for (double p : {0.3, 0.5, 0.7}) {
    for (double r : {0.8, 0.9, 1.0}) {
      AcousticModel model = make_random_model(phones, 2, rng, 1.0, 1, 1, p);
      const AcousticModel scaled = scale_self_loops(model, r);
      const double q = scaled.topo.forward[0][0];
      double total = 0;
      const int samples = 100000;
      for (int i = 0; i < samples; ++i) {
        int dwell = 1;
        while (unif(rng) > q) ++dwell;
        total += dwell;
      }
      const double mean = total / samples;
      const double expected = 1.0 / (r * p);
      if (std::abs(mean - expected) / expected > 0.03) {
        c.expect(false, "p=" + std::to_string(p) + " r=" + std::to_string(r) + ": mean " +
                            std::to_string(mean) + " vs " + std::to_string(expected));
      }
    }
  }
  c.detail = "9 (p, r) grid points at 1e5 samples";
  return c;
}

// ---------------------------------------------------------------------------
// 9. LM correctness: frozen toy perplexity, ARPA round trip, normalization.

Check criterion_lm_correctness() {
  Check c;
  TextCorpus toy;
  toy.sentences = {{"A", "B", "C"}, {"A", "B", "A"}, {"C", "A", "B"}};
  const NgramModel m = train_trigram(toy);
  const PerplexityResult r = perplexity(m, toy);
  // Frozen from an exact-fraction oracle of the smoothing recursion.
  c.expect(std::abs(r.ppl - 2.2050241455) < 1e-4,
           "toy ppl " + std::to_string(r.ppl) + " != 2.20502");

  TempDir dir("acc_lm");
  write_arpa(m, dir.file("lm.arpa"));
  const NgramModel back = read_arpa(dir.file("lm.arpa"));
  const PerplexityResult r2 = perplexity(back, toy);
  c.expect(std::abs(r2.ppl - r.ppl) / r.ppl < 1e-4,
           "round-trip ppl drift " + std::to_string(std::abs(r2.ppl - r.ppl)));

  // Exhaustive normalization on a richer corpus, |V| <= 20.
  std::mt19937 rng(9);
  std::vector<std::vector<std::string>> sentences;
  for (int i = 0; i < 60; ++i) {
    std::vector<std::string> s;
    for (int j = 0; j < 6; ++j) s.push_back("w" + std::to_string(rng() % 12));
    sentences.push_back(std::move(s));
  }
  TextCorpus corpus;
  corpus.sentences = sentences;
  for (const NgramModel& model : {train_trigram(corpus), prune(train_trigram(corpus), 1e-4)}) {
    double worst = 0;
    worst = std::max(worst, std::abs(model.history_prob_sum({}) - 1.0));
    for (int v = 0; v < model.vocab_size() && worst < 1e-5; ++v) {
      const std::array<int, 1> h1{v};
      worst = std::max(worst, std::abs(model.history_prob_sum(h1) - 1.0));
      for (int u = 0; u < model.vocab_size() && worst < 1e-5; ++u) {
        if (v == model.bos_id() || u == model.eos_id()) continue;
        const std::array<int, 2> h2{u, v};
        worst = std::max(worst, std::abs(model.history_prob_sum(h2) - 1.0));
      }
    }
    c.expect(worst < 1e-5, "normalization off by " + std::to_string(worst));
  }
  c.detail = "toy ppl " + std::to_string(r.ppl);
  return c;
}

// ---------------------------------------------------------------------------
// 10. Scoring against the quadratic oracle plus the pooling fixture.

Check criterion_scoring_oracle() {
  Check c;
  std::mt19937 rng(2718);
  for (int trial = 0; trial < 1000 && c.ok; ++trial) {
    std::uniform_int_distribution<int> len(0, 30), tok(0, 6);
    std::vector<std::string> ref, hyp;
    for (int i = len(rng); i > 0; --i) ref.push_back("t" + std::to_string(tok(rng)));
    for (int i = len(rng); i > 0; --i) hyp.push_back("t" + std::to_string(tok(rng)));
    const EditAlignment a = edit_align(ref, hyp);
    c.expect(a.errors() == oracle_edit_distance(ref, hyp),
             "trial " + std::to_string(trial) + ": counts disagree with oracle");
  }

  const std::map<std::string, std::vector<std::string>> refs{
      {"u1", {"a", "b"}}, {"u2", {"c", "d", "e", "f", "g", "h", "i", "j"}}};
  const std::map<std::string, std::vector<std::string>> hyps{
      {"u1", {"a", "x"}}, {"u2", {"c", "d", "e", "f", "g", "h", "i", "j"}}};
  const double pooled = wer_percent(refs, hyps);
  c.expect(std::abs(pooled - 10.0) < 1e-12,
           "pooled WER " + std::to_string(pooled) + " != 10 (averaging bug)");
  c.detail = "1000 random pairs + pooling fixture";
  return c;
}

// ---------------------------------------------------------------------------
// 11. Augmentation bookkeeping and perturbed pitch.

Check criterion_augmentation() {
  Check c;
  TempDir dir("acc_aug");
  std::mt19937 rng(31);
  const SynthTask task = make_synth_task(2, 3, 6, rng);
  const DiskCorpus corpus = make_disk_corpus(dir, task, 12, 5, 3, 44);
  const CorpusManifest manifest = load_manifest(corpus.manifest);

  const CorpusManifest three = augment_corpus(manifest, {0.9, 1.1}, dir.file("sp3"));
  c.expect(three.split_fragments(Split::train).size() == 36,
           "3-fold train count " + std::to_string(three.split_fragments(Split::train).size()));
  c.expect(three.split_fragments(Split::test).size() == 5, "3-fold touched the test split");

  const CorpusManifest five =
      augment_corpus(manifest, {0.9, 0.95, 1.05, 1.1}, dir.file("sp5"));
  c.expect(five.split_fragments(Split::train).size() == 60,
           "5-fold train count " + std::to_string(five.split_fragments(Split::train).size()));
  c.expect(five.split_fragments(Split::test).size() == 5, "5-fold touched the test split");

  for (double alpha : {0.9, 1.1}) {
    const Waveform sine = make_sine(220.0, 1.0, 16000);
    const PitchTrack track = extract_pitch(speed_perturb(sine, alpha), PitchConfig{});
    double sum = 0;
    int n = 0;
    for (size_t t = 0; t < track.f0_hz.size(); ++t)
      if (track.voiced[t]) {
        sum += track.f0_hz[t];
        ++n;
      }
    const double f0 = n ? sum / n : 0.0;
    const double expected = 220.0 * alpha;
    c.expect(std::abs(f0 - expected) / expected < 0.02,
             "alpha " + std::to_string(alpha) + ": pitch " + std::to_string(f0));
  }
  c.detail = "3-fold and 5-fold counts, perturbed pitch within 2%";
  return c;
}

// ---------------------------------------------------------------------------
// 12. Full-pipeline determinism: two fresh runs, byte-identical results.

Check criterion_pipeline_determinism() {
  Check c;
  TempDir dir("acc_pipe");
  std::mt19937 rng(99);
  const SynthTask task = make_synth_task(2, 3, 6, rng);
  const DiskCorpus corpus = make_disk_corpus(dir, task, 6, 3, 4, 55);

  auto write_config = [&](const std::string& path, const std::string& outdir) {
    std::ofstream out(path);
    out << "seed 20240601\nmanifest " << corpus.manifest << "\nlexicon " << corpus.lexicon
        << "\nphones " << corpus.phones << "\nlm_corpus " << corpus.lm_text << "\noutdir "
        << outdir << "\n";
    out << "stage augment factors=0.9,1.1\n";
    out << "stage features ceps=6 mel=12\n";
    out << "stage train_mono iters=4\n";
    out << "stage train_lm\n";
    out << "stage extend_lexicon max_vowels=3\n";
    out << "stage realign\n";
    out << "stage fmllr level=fragment min_occupancy=100\n";
    out << "stage train_tri leaves=40 iters=2\n";
    out << "stage scale_self_loops r=0.9\n";
    out << "stage decode beam=80 max_active=5000 acoustic_scale=0.1 adapt=fragment "
           "min_occupancy=100\n";
    out << "stage score label=full per_genre=true\n";
  };

  auto slurp = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
  };

  write_config(dir.file("a.cfg"), dir.file("exp_a"));
  write_config(dir.file("b.cfg"), dir.file("exp_b"));
  const std::string out_a = run_pipeline(dir.file("a.cfg"));
  const std::string out_b = run_pipeline(dir.file("b.cfg"));
  const std::string results_a = slurp(out_a + "/results.tsv");
  const std::string results_b = slurp(out_b + "/results.tsv");
  c.expect(!results_a.empty(), "first run produced no results table");
  c.expect(results_a == results_b, "results tables differ between runs");
  std::istringstream summary(results_a);
  std::string line;
  std::getline(summary, line);
  std::getline(summary, line);
  c.detail = "results row: " + line;
  return c;
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    std::function<Check()> fn;
  };
  const std::vector<Entry> criteria = {
      {"em-monotonicity", criterion_em_monotonicity},
      {"viterbi-oracle-equivalence", criterion_viterbi_oracle},
      {"generative-round-trip", criterion_generative_round_trip},
      {"fmllr-recovery", criterion_fmllr_recovery},
      {"adaptation-level-ordering", criterion_adaptation_ordering},
      {"prolonged-vowel-treatments", criterion_prolonged_vowels},
      {"lexicon-expansion-counts", criterion_lexicon_counts},
      {"self-loop-dwell-time", criterion_dwell_time},
      {"lm-correctness", criterion_lm_correctness},
      {"scoring-oracle", criterion_scoring_oracle},
      {"augmentation-bookkeeping", criterion_augmentation},
      {"pipeline-determinism", criterion_pipeline_determinism},
  };

  set_warning_handler([](const std::string&) {});  // keep the report readable

  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Check result;
    try {
      result = criteria[i].fn();
    } catch (const std::exception& e) {
      result.ok = false;
      result.detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %2zu %-28s (%.1fs)%s%s\n", result.ok ? "PASS" : "FAIL", i + 1,
                criteria[i].name, seconds, result.detail.empty() ? "" : " - ",
                result.detail.c_str());
    std::fflush(stdout);
    if (!result.ok) ++failures;
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
