#include "singalign/decoder.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

namespace singalign {

GmmScorer::GmmScorer(const AcousticModel& model, const FeatureMatrix& features)
    : model_(model), feats_(features.frames.cast<double>()) {
  if (features.dim() != model.dim)
    throw Error("GmmScorer: feature dim " + std::to_string(features.dim()) +
                " != model dim " + std::to_string(model.dim));
  cache_.assign(static_cast<size_t>(feats_.rows()) * model.num_pdfs(),
                std::numeric_limits<double>::quiet_NaN());
}

double GmmScorer::log_like(int frame, int pdf) const {
  double& slot = cache_[static_cast<size_t>(frame) * model_.num_pdfs() + pdf];
  if (std::isnan(slot)) slot = model_.pdfs[pdf].log_like(feats_.row(frame).transpose());
  return slot;
}

namespace {

// LM history: (u, v) word ids, u == -1 for a length-1 history.
struct HistoryTable {
  std::map<std::pair<int, int>, int> ids;
  std::vector<std::pair<int, int>> pairs;

  int intern(std::pair<int, int> h) {
    auto [it, inserted] = ids.emplace(h, static_cast<int>(pairs.size()));
    if (inserted) pairs.push_back(h);
    return it->second;
  }
};

struct TbEntry {
  int prev = -1;
  const Arc* arc = nullptr;
  int src_state = -1;
  bool emitting = false;
};

struct Token {
  double score = kLogZero;
  int tb = -1;
  int tie_src = std::numeric_limits<int>::max();
};

// (state << 32 | history) -> token. Unordered for speed; every
// order-sensitive step (epsilon sweeps, final pick, max_active ranking)
// sorts explicitly so results do not depend on iteration order.
using TokenMap = std::unordered_map<uint64_t, Token>;

uint64_t token_key(int state, int hist) {
  return (static_cast<uint64_t>(state) << 32) | static_cast<uint32_t>(hist);
}

struct SearchState {
  std::vector<TbEntry> arena;
  HistoryTable histories;
  std::vector<int> word_lm_ids;  // graph word index -> lm id
  const NgramModel* lm = nullptr;

  double word_score(int hist, int word, int* next_hist) {
    if (!lm) {
      *next_hist = hist;
      return 0.0;
    }
    const auto [u, v] = histories.pairs[hist];
    const int w = word_lm_ids[word];
    double s;
    if (u < 0) {
      s = lm->ln_prob({&v, 1}, w);
    } else {
      const std::array<int, 2> ctx{u, v};
      s = lm->ln_prob(ctx, w);
    }
    *next_hist = histories.intern({v, w});
    return s;
  }

  double final_score(int hist) {
    if (!lm) return 0.0;
    const auto [u, v] = histories.pairs[hist];
    if (u < 0) return lm->ln_prob({&v, 1}, lm->eos_id());
    const std::array<int, 2> ctx{u, v};
    return lm->ln_prob(ctx, lm->eos_id());
  }
};

// Relax with a deterministic tie-break: equal scores prefer the lower source
// state id. Returns whether the new traceback was adopted.
bool relax(TokenMap* toks, uint64_t key, double score, int tb, int src_state) {
  auto [it, inserted] = toks->emplace(key, Token{score, tb, src_state});
  if (inserted) return true;
  Token& tok = it->second;
  if (score > tok.score || (score == tok.score && src_state < tok.tie_src)) {
    tok.score = score;
    tok.tb = tb;
    tok.tie_src = src_state;
    return true;
  }
  return false;
}

void process_epsilons(const DecodingGraph& graph, SearchState* ss, TokenMap* toks) {
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<uint64_t> keys;
    keys.reserve(toks->size());
    for (const auto& [k, t] : *toks) {
      (void)t;
      keys.push_back(k);
    }
    std::sort(keys.begin(), keys.end());
    for (uint64_t key : keys) {
      const Token tok = toks->at(key);
      const int state = static_cast<int>(key >> 32);
      const int hist = static_cast<int>(key & 0xffffffffu);
      for (const auto& arc : graph.arcs[state]) {
        if (arc.pdf >= 0) continue;
        int next_hist = hist;
        double score = tok.score + arc.weight;
        if (arc.word >= 0) score += ss->word_score(hist, arc.word, &next_hist);
        if (score == kLogZero) continue;
        ss->arena.push_back({tok.tb, &arc, state, false});
        const int tb = static_cast<int>(ss->arena.size()) - 1;
        if (relax(toks, token_key(arc.dst, next_hist), score, tb, state))
          changed = true;
        else
          ss->arena.pop_back();
      }
    }
  }
}

struct BestToken {
  bool found = false;
  double score = kLogZero;
  double final_lm = 0.0;
  int tb = -1;
  int hist = 0;
};

BestToken run_search(const DecodingGraph& graph, const AcousticScorer& scorer,
                     const DecodeConfig& cfg, SearchState* ss) {
  if (graph.lm) {
    ss->lm = graph.lm;
    ss->word_lm_ids.resize(graph.words.size());
    for (size_t i = 0; i < graph.words.size(); ++i) {
      ss->word_lm_ids[i] = graph.lm->word_id(graph.words[i]);
      if (ss->word_lm_ids[i] < 0)
        throw Error("decode: graph word '" + graph.words[i] + "' missing from LM");
    }
  }
  const int init_hist =
      ss->histories.intern({-1, graph.lm ? graph.lm->bos_id() : 0});

  TokenMap cur;
  relax(&cur, token_key(graph.start, init_hist), 0.0, -1, -1);
  process_epsilons(graph, ss, &cur);

  const int T = scorer.num_frames();
  for (int t = 0; t < T; ++t) {
    TokenMap next;
    for (const auto& [key, tok] : cur) {
      const int state = static_cast<int>(key >> 32);
      const int hist = static_cast<int>(key & 0xffffffffu);
      for (const auto& arc : graph.arcs[state]) {
        if (arc.pdf < 0) continue;
        int next_hist = hist;
        double score =
            tok.score + arc.weight + cfg.acoustic_scale * scorer.log_like(t, arc.pdf);
        if (arc.word >= 0) score += ss->word_score(hist, arc.word, &next_hist);
        if (score == kLogZero || std::isnan(score)) continue;
        ss->arena.push_back({tok.tb, &arc, state, true});
        const int tb = static_cast<int>(ss->arena.size()) - 1;
        if (!relax(&next, token_key(arc.dst, next_hist), score, tb, state))
          ss->arena.pop_back();
      }
    }
    process_epsilons(graph, ss, &next);

    if (next.empty()) return {};
    double best = kLogZero;
    for (const auto& [k, tok] : next) {
      (void)k;
      best = std::max(best, tok.score);
    }
    if (cfg.beam < std::numeric_limits<double>::infinity()) {
      for (auto it = next.begin(); it != next.end();)
        it = it->second.score < best - cfg.beam ? next.erase(it) : std::next(it);
    }
    if (static_cast<int>(next.size()) > cfg.max_active) {
      std::vector<std::pair<double, uint64_t>> ranked;
      ranked.reserve(next.size());
      for (const auto& [k, tok] : next) ranked.emplace_back(-tok.score, k);
      std::nth_element(ranked.begin(), ranked.begin() + cfg.max_active, ranked.end());
      std::sort(ranked.begin(), ranked.begin() + cfg.max_active);
      TokenMap kept;
      for (int i = 0; i < cfg.max_active; ++i)
        kept.emplace(ranked[i].second, next.at(ranked[i].second));
      next = std::move(kept);
    }
    cur = std::move(next);
  }

  BestToken best;
  std::vector<uint64_t> final_keys;
  for (const auto& [key, tok] : cur) {
    (void)tok;
    if (graph.final_state[static_cast<int>(key >> 32)]) final_keys.push_back(key);
  }
  std::sort(final_keys.begin(), final_keys.end());
  for (uint64_t key : final_keys) {
    const Token& tok = cur.at(key);
    const int hist = static_cast<int>(key & 0xffffffffu);
    const double fin = ss->final_score(hist);
    const double total = tok.score + fin;
    if (!best.found || total > best.score) {
      best.found = true;
      best.score = total;
      best.final_lm = fin;
      best.tb = tok.tb;
      best.hist = hist;
    }
  }
  return best;
}

std::vector<const TbEntry*> unwind(const SearchState& ss, int tb) {
  std::vector<const TbEntry*> path;
  for (int i = tb; i >= 0; i = ss.arena[i].prev) path.push_back(&ss.arena[i]);
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace

AlignmentResult viterbi_align(const DecodingGraph& graph, const AcousticScorer& scorer) {
  if (graph.lm) throw Error("viterbi_align: alignment graphs must not carry an LM");
  SearchState ss;
  DecodeConfig cfg;  // exact: infinite beam, unit scale
  BestToken best = run_search(graph, scorer, cfg, &ss);
  if (!best.found)
    throw Error("alignment infeasible: " + std::to_string(scorer.num_frames()) +
                " frames cannot realize the transcript graph");

  AlignmentResult result;
  result.total_score = best.score;
  const auto path = unwind(ss, best.tb);
  for (const auto* e : path) {
    if (!e->emitting) continue;
    result.frames.push_back({e->arc->pdf, e->arc->phone, e->arc->position});
    const bool new_segment =
        e->arc->position == 0 && e->src_state != e->arc->dst;  // phone entry arc
    if (new_segment) {
      if (!result.segments.empty())
        result.segments.back().end_frame = static_cast<int>(result.frames.size()) - 1;
      result.segments.push_back(
          {e->arc->phone, static_cast<int>(result.frames.size()) - 1, 0});
    }
  }
  if (!result.segments.empty())
    result.segments.back().end_frame = static_cast<int>(result.frames.size());
  return result;
}

AlignmentResult viterbi_align(const DecodingGraph& graph, const FeatureMatrix& features,
                              const AcousticModel& model) {
  GmmScorer scorer(model, features);
  return viterbi_align(graph, scorer);
}

Hypothesis decode(const DecodingGraph& graph, const AcousticScorer& scorer,
                  const DecodeConfig& cfg) {
  if (!(cfg.beam > 0)) throw Error("decode: beam must be positive");
  if (!(cfg.acoustic_scale > 0)) throw Error("decode: acoustic scale must be positive");
  if (cfg.max_active < 1) throw Error("decode: max_active must be >= 1");

  SearchState ss;
  BestToken best = run_search(graph, scorer, cfg, &ss);
  Hypothesis hyp;
  if (!best.found) {
    hyp.search_failure = true;
    return hyp;
  }
  hyp.total_score = best.score;
  hyp.lm_score = best.final_lm;

  const auto path = unwind(ss, best.tb);
  int frame = 0;
  for (const auto* e : path) {
    hyp.graph_score += e->arc->weight;
    if (e->emitting) {
      hyp.acoustic_score += scorer.log_like(frame, e->arc->pdf);
      if (e->arc->position == 0 && e->src_state != e->arc->dst)
        hyp.phones.push_back(e->arc->phone);
      ++frame;
    }
    if (e->arc->word >= 0) {
      hyp.words.push_back(graph.words[e->arc->word]);
      hyp.word_end_frames.push_back(frame);
    }
  }
  // LM component from the word sequence (the engine folded it into the path
  // score; rebuild it so the breakdown is reportable).
  if (graph.lm) {
    const auto* lm = graph.lm;
    std::vector<int> ctx{lm->bos_id()};
    double lm_sum = 0;
    for (const auto& w : hyp.words) {
      const int id = lm->word_id(w);
      lm_sum += lm->ln_prob(ctx, id);
      ctx.push_back(id);
      if (ctx.size() > 2) ctx.erase(ctx.begin());
    }
    hyp.lm_score = lm_sum + best.final_lm;
  }
  return hyp;
}

Hypothesis decode(const DecodingGraph& graph, const FeatureMatrix& features,
                  const AcousticModel& model, const DecodeConfig& cfg) {
  GmmScorer scorer(model, features);
  return decode(graph, scorer, cfg);
}

AlignmentResult align_transcript(const std::vector<std::string>& transcript,
                                 const Lexicon& lexicon, const AcousticModel& model,
                                 const FeatureMatrix& features, double optional_silence_prob) {
  DecodingGraph graph = compile_training_graph(transcript, lexicon, model, optional_silence_prob);
  return viterbi_align(graph, features, model);
}

}  // namespace singalign
