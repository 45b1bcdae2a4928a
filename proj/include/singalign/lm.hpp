#pragma once

#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "singalign/common.hpp"

namespace singalign {

struct TextCorpus {
  std::vector<std::vector<std::string>> sentences;
  std::string source_tag;
};

// Removes bracketed annotation tokens and stop-pattern tokens, strips
// punctuation (intra-word apostrophes survive), upper-cases, one sentence per
// input line.
TextCorpus normalize_lyrics(std::istream& raw, const std::vector<std::string>& stop_patterns = {},
                            const std::string& source_tag = "");
TextCorpus normalize_lyrics(const std::string& raw,
                            const std::vector<std::string>& stop_patterns = {},
                            const std::string& source_tag = "");

// Normalized-corpus format: one sentence per line, space-separated tokens.
TextCorpus load_text_corpus(const std::string& path);
void save_text_corpus(const TextCorpus& corpus, const std::string& path);

struct ProbEntry {
  double log10_prob = 0.0;
  double log10_bow = 0.0;
};

struct SmoothingConfig {
  double fixed_discount = 0.75;  // used when count-of-counts cannot be estimated
};

// Order-3 backoff model in ARPA semantics: explicit entries carry interpolated
// probabilities, absent n-grams back off through the history's weight.
class NgramModel {
 public:
  static constexpr const char* kBos = "<s>";
  static constexpr const char* kEos = "</s>";
  static constexpr const char* kUnk = "<unk>";

  int order() const { return 3; }

  int word_id(const std::string& w) const;
  const std::string& word(int id) const { return vocab_.at(id); }
  int vocab_size() const { return static_cast<int>(vocab_.size()); }
  int bos_id() const { return bos_id_; }
  int eos_id() const { return eos_id_; }
  int unk_id() const { return unk_id_; }

  // Backoff score; history is the up-to-2 most recent words, oldest first.
  double log10_prob(std::span<const int> history, int word) const;

  // Natural-log convenience for the decoder.
  double ln_prob(std::span<const int> history, int word) const {
    return log10_prob(history, word) * std::numbers::ln10;
  }

  // Sum over the whole prediction vocabulary (everything but <s>).
  double history_prob_sum(std::span<const int> history) const;

  static uint64_t pack2(int u, int v);
  static uint64_t pack3(int u, int v, int w);

  std::vector<std::string> vocab_;  // id -> word; specials first
  std::unordered_map<std::string, int> word_ids_;
  int bos_id_ = -1, eos_id_ = -1, unk_id_ = -1;

  std::vector<ProbEntry> unigrams_;                 // indexed by word id
  std::unordered_map<uint64_t, ProbEntry> bigrams_;  // pack2(v, w)
  std::unordered_map<uint64_t, double> trigrams_;    // pack3(u, v, w) -> log10 prob

  void finalize_vocab();  // rebuilds word_ids_ and special ids from vocab_
};

// Interpolated Kneser-Ney with modified discounts estimated from
// count-of-counts; degenerate corpora fall back to a fixed discount.
NgramModel train_trigram(const TextCorpus& corpus, const SmoothingConfig& cfg = {});

// Stolcke entropy pruning: drops n-grams (order >= 2) whose removal raises
// weighted model entropy by less than threshold_nats, then rebuilds backoff
// weights.
NgramModel prune(const NgramModel& model, double threshold_nats);

struct PerplexityResult {
  double ppl = 0.0;
  double oov_rate = 0.0;
  int64_t oov_count = 0;
  int64_t token_count = 0;   // word tokens (sentence-ends not included)
  int64_t scored_count = 0;  // in-vocab tokens plus sentence ends
  double log10_sum = 0.0;
};

// OOV tokens are excluded from the product and counted separately;
// sentence-end is scored, sentence-begin is context only.
PerplexityResult perplexity(const NgramModel& model, const TextCorpus& test);

void write_arpa(const NgramModel& model, const std::string& path);
void write_arpa(const NgramModel& model, std::ostream& out);
NgramModel read_arpa(const std::string& path);
NgramModel read_arpa(std::istream& in);

}  // namespace singalign
