#include "singalign/lm.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace singalign {

namespace {
constexpr double kLog10Floor = -99.0;  // conventional "never predicted" score
constexpr int kMaxWordBits = 21;
}  // namespace

// ---------------------------------------------------------------- corpus ---

namespace {

std::string normalize_token(const std::string& tok) {
  std::string out;
  for (size_t i = 0; i < tok.size(); ++i) {
    unsigned char c = tok[i];
    if (std::isalnum(c)) {
      out += static_cast<char>(std::toupper(c));
    } else if (c == '\'' && !out.empty() && i + 1 < tok.size() &&
               std::isalnum(static_cast<unsigned char>(tok[i + 1]))) {
      out += '\'';
    } else if (c >= 0x80) {
      out += static_cast<char>(c);  // pass non-ASCII bytes through
    }
  }
  return out;
}

bool is_bracketed(const std::string& tok) {
  return tok.size() >= 2 && tok.front() == '[' && tok.back() == ']';
}

}  // namespace

TextCorpus normalize_lyrics(std::istream& raw, const std::vector<std::string>& stop_patterns,
                            const std::string& source_tag) {
  std::vector<std::string> stops;
  for (const auto& s : stop_patterns) stops.push_back(normalize_token(s));

  TextCorpus corpus;
  corpus.source_tag = source_tag;
  std::string line;
  while (std::getline(raw, line)) {
    std::istringstream ls(line);
    std::vector<std::string> sentence;
    std::string tok;
    while (ls >> tok) {
      if (is_bracketed(tok)) continue;
      std::string norm = normalize_token(tok);
      if (norm.empty()) continue;
      if (std::find(stops.begin(), stops.end(), norm) != stops.end()) continue;
      sentence.push_back(std::move(norm));
    }
    if (!sentence.empty()) corpus.sentences.push_back(std::move(sentence));
  }
  if (corpus.sentences.empty()) warn("normalize_lyrics: normalized corpus is empty");
  return corpus;
}

TextCorpus normalize_lyrics(const std::string& raw, const std::vector<std::string>& stop_patterns,
                            const std::string& source_tag) {
  std::istringstream in(raw);
  return normalize_lyrics(in, stop_patterns, source_tag);
}

TextCorpus load_text_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open text corpus: " + path);
  TextCorpus corpus;
  corpus.source_tag = path;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<std::string> sentence;
    std::string tok;
    while (ls >> tok) sentence.push_back(tok);
    if (!sentence.empty()) corpus.sentences.push_back(std::move(sentence));
  }
  return corpus;
}

void save_text_corpus(const TextCorpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write text corpus: " + path);
  for (const auto& s : corpus.sentences) {
    for (size_t i = 0; i < s.size(); ++i) out << (i ? " " : "") << s[i];
    out << '\n';
  }
}

// ----------------------------------------------------------------- model ---

uint64_t NgramModel::pack2(int u, int v) {
  return (static_cast<uint64_t>(u) << kMaxWordBits) | static_cast<uint64_t>(v);
}

uint64_t NgramModel::pack3(int u, int v, int w) {
  return (static_cast<uint64_t>(u) << (2 * kMaxWordBits)) |
         (static_cast<uint64_t>(v) << kMaxWordBits) | static_cast<uint64_t>(w);
}

void NgramModel::finalize_vocab() {
  if (vocab_.size() >= (1u << kMaxWordBits)) throw Error("vocabulary too large");
  word_ids_.clear();
  for (size_t i = 0; i < vocab_.size(); ++i) word_ids_[vocab_[i]] = static_cast<int>(i);
  auto find = [&](const char* w) {
    auto it = word_ids_.find(w);
    return it == word_ids_.end() ? -1 : it->second;
  };
  bos_id_ = find(kBos);
  eos_id_ = find(kEos);
  unk_id_ = find(kUnk);
  if (bos_id_ < 0 || eos_id_ < 0) throw Error("model vocabulary lacks <s> or </s>");
}

int NgramModel::word_id(const std::string& w) const {
  auto it = word_ids_.find(w);
  return it == word_ids_.end() ? -1 : it->second;
}

double NgramModel::log10_prob(std::span<const int> history, int word) const {
  if (word < 0 || word >= vocab_size()) throw Error("log10_prob: word id out of range");
  if (history.size() >= 2) {
    const int u = history[history.size() - 2], v = history[history.size() - 1];
    auto it = trigrams_.find(pack3(u, v, word));
    if (it != trigrams_.end()) return it->second;
    auto hist = bigrams_.find(pack2(u, v));
    const double bow = hist != bigrams_.end() ? hist->second.log10_bow : 0.0;
    return bow + log10_prob(history.subspan(history.size() - 1), word);
  }
  if (history.size() == 1) {
    const int v = history[0];
    auto it = bigrams_.find(pack2(v, word));
    if (it != bigrams_.end()) return it->second.log10_prob;
    return unigrams_.at(v).log10_bow + unigrams_.at(word).log10_prob;
  }
  return unigrams_.at(word).log10_prob;
}

double NgramModel::history_prob_sum(std::span<const int> history) const {
  double sum = 0.0;
  for (int w = 0; w < vocab_size(); ++w) {
    if (w == bos_id_) continue;
    sum += std::pow(10.0, log10_prob(history, w));
  }
  return sum;
}

// -------------------------------------------------------------- training ---

namespace {

struct Discounts {
  double d1 = 0.75, d2 = 0.75, d3 = 0.75;
  double of(int64_t count) const { return count == 1 ? d1 : count == 2 ? d2 : d3; }
};

Discounts estimate_discounts(const std::map<int64_t, int64_t>& count_of_counts, double fixed,
                             int order, bool* fell_back) {
  auto n = [&](int64_t c) {
    auto it = count_of_counts.find(c);
    return it == count_of_counts.end() ? int64_t{0} : it->second;
  };
  const double n1 = static_cast<double>(n(1)), n2 = static_cast<double>(n(2));
  const double n3 = static_cast<double>(n(3)), n4 = static_cast<double>(n(4));
  Discounts d{fixed, fixed, fixed};
  if (n1 > 0 && n2 > 0 && n3 > 0 && n4 > 0) {
    const double y = n1 / (n1 + 2 * n2);
    Discounts est;
    est.d1 = 1 - 2 * y * n2 / n1;
    est.d2 = 2 - 3 * y * n3 / n2;
    est.d3 = 3 - 4 * y * n4 / n3;
    if (est.d1 > 0 && est.d1 <= 1 && est.d2 > 0 && est.d2 <= 2 && est.d3 > 0 && est.d3 <= 3)
      return est;
  }
  *fell_back = true;
  warn("train_trigram: count-of-counts degenerate at order " + std::to_string(order) +
       "; using fixed discount");
  return d;
}

}  // namespace

NgramModel train_trigram(const TextCorpus& corpus, const SmoothingConfig& cfg) {
  if (corpus.sentences.empty()) throw Error("train_trigram: empty corpus");

  NgramModel m;
  // Specials first, then corpus words sorted for reproducible ids.
  std::set<std::string> words;
  for (const auto& s : corpus.sentences)
    for (const auto& w : s) words.insert(w);
  words.erase(NgramModel::kBos);
  words.erase(NgramModel::kEos);
  words.erase(NgramModel::kUnk);
  m.vocab_ = {NgramModel::kBos, NgramModel::kEos, NgramModel::kUnk};
  m.vocab_.insert(m.vocab_.end(), words.begin(), words.end());
  m.finalize_vocab();

  const int bos = m.bos_id(), eos = m.eos_id();

  // Raw counts.
  std::map<uint64_t, int64_t> raw2, raw3;
  for (const auto& s : corpus.sentences) {
    std::vector<int> toks;
    toks.push_back(bos);
    for (const auto& w : s) toks.push_back(m.word_id(w));
    toks.push_back(eos);
    for (size_t i = 1; i < toks.size(); ++i) {
      ++raw2[NgramModel::pack2(toks[i - 1], toks[i])];
      if (i >= 2) ++raw3[NgramModel::pack3(toks[i - 2], toks[i - 1], toks[i])];
    }
  }

  // Adjusted (continuation) counts for the lower orders; n-grams whose first
  // token is <s> keep raw counts since nothing can precede them.
  std::map<uint64_t, int64_t> adj2;
  for (const auto& [key, c] : raw3) {
    (void)c;
    const auto v = static_cast<int>((key >> kMaxWordBits) & ((1u << kMaxWordBits) - 1));
    const auto w = static_cast<int>(key & ((1u << kMaxWordBits) - 1));
    ++adj2[NgramModel::pack2(v, w)];
  }
  for (const auto& [key, c] : raw2) {
    const auto v = static_cast<int>(key >> kMaxWordBits);
    if (v == bos) adj2[key] = c;
  }
  std::map<int, int64_t> adj1;
  for (const auto& [key, c] : adj2) {
    (void)c;
    ++adj1[static_cast<int>(key & ((1u << kMaxWordBits) - 1))];
  }

  // Per-order discounts from count-of-counts of the counts actually used.
  bool fell_back = false;
  auto counts_of = [](const auto& table) {
    std::map<int64_t, int64_t> cc;
    for (const auto& [k, c] : table) {
      (void)k;
      ++cc[c];
    }
    return cc;
  };
  const Discounts disc1 =
      estimate_discounts(counts_of(adj1), cfg.fixed_discount, 1, &fell_back);
  const Discounts disc2 =
      estimate_discounts(counts_of(adj2), cfg.fixed_discount, 2, &fell_back);
  const Discounts disc3 =
      estimate_discounts(counts_of(raw3), cfg.fixed_discount, 3, &fell_back);
  (void)fell_back;

  const int num_predictable = m.vocab_size() - 1;  // everything but <s>
  const double uniform = 1.0 / num_predictable;

  // Unigrams.
  double tot1 = 0;
  for (const auto& [w, c] : adj1) {
    (void)w;
    tot1 += static_cast<double>(c);
  }
  double gamma1_mass = 0;
  for (const auto& [w, c] : adj1) {
    (void)w;
    gamma1_mass += disc1.of(c);
  }
  const double gamma1 = gamma1_mass / tot1;
  m.unigrams_.assign(m.vocab_size(), ProbEntry{kLog10Floor, 0.0});
  for (int w = 0; w < m.vocab_size(); ++w) {
    if (w == bos) continue;
    auto it = adj1.find(w);
    const double c = it == adj1.end() ? 0.0 : static_cast<double>(it->second);
    const double discounted = it == adj1.end() ? 0.0 : std::max(0.0, c - disc1.of(it->second));
    m.unigrams_[w].log10_prob = std::log10(discounted / tot1 + gamma1 * uniform);
  }

  // Bigrams, grouped by history.
  std::map<int, std::vector<std::pair<int, int64_t>>> by_hist2;
  for (const auto& [key, c] : adj2) {
    const auto v = static_cast<int>(key >> kMaxWordBits);
    const auto w = static_cast<int>(key & ((1u << kMaxWordBits) - 1));
    by_hist2[v].emplace_back(w, c);
  }
  for (const auto& [v, ws] : by_hist2) {
    double tot = 0, gamma_mass = 0;
    for (const auto& [w, c] : ws) {
      (void)w;
      tot += static_cast<double>(c);
      gamma_mass += disc2.of(c);
    }
    const double gamma = gamma_mass / tot;
    for (const auto& [w, c] : ws) {
      const double p = std::max(0.0, static_cast<double>(c) - disc2.of(c)) / tot +
                       gamma * std::pow(10.0, m.unigrams_[w].log10_prob);
      m.bigrams_[NgramModel::pack2(v, w)] = ProbEntry{std::log10(p), 0.0};
    }
    m.unigrams_[v].log10_bow = std::log10(gamma);
  }

  // Trigrams, grouped by history; backoff weights land on the history bigram.
  std::map<uint64_t, std::vector<std::pair<int, int64_t>>> by_hist3;
  for (const auto& [key, c] : raw3) {
    by_hist3[key >> kMaxWordBits].emplace_back(
        static_cast<int>(key & ((1u << kMaxWordBits) - 1)), c);
  }
  for (const auto& [hist, ws] : by_hist3) {
    const auto u = static_cast<int>(hist >> kMaxWordBits);
    const auto v = static_cast<int>(hist & ((1u << kMaxWordBits) - 1));
    double tot = 0, gamma_mass = 0;
    for (const auto& [w, c] : ws) {
      (void)w;
      tot += static_cast<double>(c);
      gamma_mass += disc3.of(c);
    }
    const double gamma = gamma_mass / tot;
    const std::array<int, 1> ctx{v};
    for (const auto& [w, c] : ws) {
      const double lower = std::pow(10.0, m.log10_prob(ctx, w));
      const double p = std::max(0.0, static_cast<double>(c) - disc3.of(c)) / tot + gamma * lower;
      m.trigrams_[NgramModel::pack3(u, v, w)] = std::log10(p);
    }
    auto hist_entry = m.bigrams_.find(NgramModel::pack2(u, v));
    if (hist_entry == m.bigrams_.end())
      throw Error("train_trigram: trigram history missing from bigram table");
    hist_entry->second.log10_bow = std::log10(gamma);
  }

  return m;
}

// --------------------------------------------------------------- pruning ---

namespace {

struct HistoryMass {
  double num = 1.0;  // 1 - sum of explicit probs
  double den = 1.0;  // 1 - sum of lower-order probs of explicit words
};

}  // namespace

NgramModel prune(const NgramModel& model, double threshold_nats) {
  if (threshold_nats < 0) throw Error("prune: threshold must be >= 0");
  NgramModel out = model;
  if (threshold_nats == 0) return out;

  // Sentence-start mass: use p(</s>) in place of the floored p(<s>) so
  // sentence-initial histories carry their real weight.
  auto uni_prob = [&](int w) {
    const int eff = w == model.bos_id() ? model.eos_id() : w;
    return std::pow(10.0, model.unigrams_[eff].log10_prob);
  };

  auto prune_order = [&](int order) {
    // Group explicit n-grams of this order by history.
    std::map<uint64_t, std::vector<int>> groups;
    if (order == 3) {
      for (const auto& [key, p] : out.trigrams_) {
        (void)p;
        groups[key >> kMaxWordBits].push_back(
            static_cast<int>(key & ((1u << kMaxWordBits) - 1)));
      }
    } else {
      for (const auto& [key, e] : out.bigrams_) {
        (void)e;
        groups[key >> kMaxWordBits].push_back(
            static_cast<int>(key & ((1u << kMaxWordBits) - 1)));
      }
    }

    // Bigrams still serving as trigram histories are protected.
    std::set<uint64_t> protected_bigrams;
    if (order == 2) {
      for (const auto& [key, p] : out.trigrams_) {
        (void)p;
        protected_bigrams.insert(key >> kMaxWordBits);
      }
    }

    std::vector<uint64_t> to_remove;
    for (const auto& [hist, words] : groups) {
      const auto u = static_cast<int>(hist >> kMaxWordBits);
      const auto v = static_cast<int>(hist & ((1u << kMaxWordBits) - 1));
      std::array<int, 2> hist2{u, v};
      std::array<int, 1> hist1{v};
      std::span<const int> hspan = order == 3 ? std::span<const int>(hist2)
                                              : std::span<const int>(hist1.data(), 1);
      std::span<const int> lower_span =
          order == 3 ? std::span<const int>(hist2.data() + 1, 1) : std::span<const int>();

      double p_hist;
      if (order == 3) {
        p_hist = uni_prob(u) * std::pow(10.0, model.log10_prob({&u, 1}, v));
      } else {
        p_hist = uni_prob(order == 2 ? v : u);
      }

      HistoryMass mass;
      std::vector<double> p_expl(words.size()), p_low(words.size());
      for (size_t i = 0; i < words.size(); ++i) {
        p_expl[i] = std::pow(10.0, out.log10_prob(hspan, words[i]));
        p_low[i] = std::pow(10.0, out.log10_prob(lower_span, words[i]));
        mass.num -= p_expl[i];
        mass.den -= p_low[i];
      }
      if (mass.den <= 0 || mass.num <= 0) continue;  // fully explicit history
      const double ln_alpha = std::log(mass.num) - std::log(mass.den);

      for (size_t i = 0; i < words.size(); ++i) {
        const double num2 = mass.num + p_expl[i], den2 = mass.den + p_low[i];
        const double ln_alpha2 = std::log(num2) - std::log(den2);
        const double kl = p_expl[i] * (std::log(p_expl[i]) - ln_alpha2 - std::log(p_low[i])) +
                          mass.num * (ln_alpha - ln_alpha2);
        if (p_hist * kl < threshold_nats) {
          const uint64_t key = order == 3 ? NgramModel::pack3(u, v, words[i])
                                          : NgramModel::pack2(v, words[i]);
          if (order == 2 && protected_bigrams.count(key)) continue;
          to_remove.push_back(key);
        }
      }
    }
    for (uint64_t key : to_remove) {
      if (order == 3)
        out.trigrams_.erase(key);
      else
        out.bigrams_.erase(key);
    }
  };

  if (threshold_nats == std::numeric_limits<double>::infinity()) {
    out.trigrams_.clear();
    // Keep nothing at order 2 either; unigrams always survive.
    out.bigrams_.clear();
  } else {
    prune_order(3);
    prune_order(2);
  }

  // Rebuild backoff weights from the survivors, lower order first: trigram
  // backoff masses depend on final bigram-level scores, which in turn need
  // the rebuilt unigram backoff weights (a surviving trigram may back off
  // through a pruned bigram).
  for (auto& [key, e] : out.bigrams_) {
    (void)key;
    e.log10_bow = 0.0;
  }
  for (auto& e : out.unigrams_) e.log10_bow = 0.0;

  std::map<int, HistoryMass> bi_hist;
  for (const auto& [key, e] : out.bigrams_) {
    auto& mass = bi_hist[static_cast<int>(key >> kMaxWordBits)];
    const auto w = static_cast<int>(key & ((1u << kMaxWordBits) - 1));
    mass.num -= std::pow(10.0, e.log10_prob);
    mass.den -= std::pow(10.0, out.unigrams_[w].log10_prob);
  }
  for (const auto& [v, mass] : bi_hist)
    out.unigrams_[v].log10_bow = std::log10(mass.num) - std::log10(mass.den);

  std::map<uint64_t, HistoryMass> tri_hist;
  for (const auto& [key, p] : out.trigrams_) {
    auto& mass = tri_hist[key >> kMaxWordBits];
    const auto v = static_cast<int>((key >> kMaxWordBits) & ((1u << kMaxWordBits) - 1));
    const auto w = static_cast<int>(key & ((1u << kMaxWordBits) - 1));
    mass.num -= std::pow(10.0, p);
    mass.den -= std::pow(10.0, out.log10_prob({&v, 1}, w));
  }
  for (const auto& [hist, mass] : tri_hist) {
    auto it = out.bigrams_.find(hist);
    if (it == out.bigrams_.end()) throw Error("prune: orphaned trigram history");
    it->second.log10_bow = std::log10(mass.num) - std::log10(mass.den);
  }

  return out;
}

// ------------------------------------------------------------ perplexity ---

PerplexityResult perplexity(const NgramModel& model, const TextCorpus& test) {
  PerplexityResult r;
  std::vector<int> ctx;
  auto push_ctx = [&](int id) {
    ctx.push_back(id);
    if (ctx.size() > 2) ctx.erase(ctx.begin());
  };
  for (const auto& sentence : test.sentences) {
    ctx.assign(1, model.bos_id());
    for (const auto& w : sentence) {
      ++r.token_count;
      const int id = model.word_id(w);
      if (id < 0 || id == model.unk_id() || id == model.bos_id()) {
        ++r.oov_count;
        push_ctx(model.unk_id() >= 0 ? model.unk_id() : model.eos_id());
        continue;
      }
      r.log10_sum += model.log10_prob(ctx, id);
      ++r.scored_count;
      push_ctx(id);
    }
    r.log10_sum += model.log10_prob(ctx, model.eos_id());
    ++r.scored_count;
  }
  r.oov_rate = r.token_count > 0 ? static_cast<double>(r.oov_count) / r.token_count : 0.0;
  r.ppl = r.scored_count > 0 ? std::pow(10.0, -r.log10_sum / r.scored_count) : 0.0;
  return r;
}

// ------------------------------------------------------------------ ARPA ---

void write_arpa(const NgramModel& model, std::ostream& out) {
  std::vector<uint64_t> bi_keys, tri_keys;
  bi_keys.reserve(model.bigrams_.size());
  for (const auto& [k, e] : model.bigrams_) {
    (void)e;
    bi_keys.push_back(k);
  }
  tri_keys.reserve(model.trigrams_.size());
  for (const auto& [k, p] : model.trigrams_) {
    (void)p;
    tri_keys.push_back(k);
  }
  std::sort(bi_keys.begin(), bi_keys.end());
  std::sort(tri_keys.begin(), tri_keys.end());

  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };

  out << "\\data\\\n";
  out << "ngram 1=" << model.unigrams_.size() << "\n";
  out << "ngram 2=" << bi_keys.size() << "\n";
  out << "ngram 3=" << tri_keys.size() << "\n";
  out << "\n\\1-grams:\n";
  for (size_t w = 0; w < model.unigrams_.size(); ++w) {
    out << fmt(model.unigrams_[w].log10_prob) << '\t' << model.vocab_[w];
    if (model.unigrams_[w].log10_bow != 0.0) out << '\t' << fmt(model.unigrams_[w].log10_bow);
    out << '\n';
  }
  out << "\n\\2-grams:\n";
  const uint64_t mask = (1u << kMaxWordBits) - 1;
  for (uint64_t k : bi_keys) {
    const auto& e = model.bigrams_.at(k);
    out << fmt(e.log10_prob) << '\t' << model.vocab_[k >> kMaxWordBits] << ' '
        << model.vocab_[k & mask];
    if (e.log10_bow != 0.0) out << '\t' << fmt(e.log10_bow);
    out << '\n';
  }
  out << "\n\\3-grams:\n";
  for (uint64_t k : tri_keys) {
    out << fmt(model.trigrams_.at(k)) << '\t' << model.vocab_[k >> (2 * kMaxWordBits)] << ' '
        << model.vocab_[(k >> kMaxWordBits) & mask] << ' ' << model.vocab_[k & mask] << '\n';
  }
  out << "\n\\end\\\n";
}

void write_arpa(const NgramModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write ARPA file: " + path);
  write_arpa(model, out);
  if (!out) throw Error("failed writing ARPA file: " + path);
}

NgramModel read_arpa(std::istream& in) {
  std::string line;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  };

  if (!next_line() || line != "\\data\\") throw Error("ARPA: missing \\data\\ header");
  std::array<int64_t, 4> counts{0, 0, 0, 0};
  while (next_line() && line.rfind("ngram ", 0) == 0) {
    int order = 0;
    long long n = 0;
    if (std::sscanf(line.c_str(), "ngram %d=%lld", &order, &n) != 2 || order < 1 || order > 3)
      throw Error("ARPA: bad count line: " + line);
    counts[order] = n;
  }

  NgramModel m;
  std::unordered_map<std::string, int> ids;
  auto intern = [&](const std::string& w) {
    auto it = ids.find(w);
    if (it != ids.end()) return it->second;
    const int id = static_cast<int>(m.vocab_.size());
    m.vocab_.push_back(w);
    ids.emplace(w, id);
    return id;
  };

  for (int order = 1; order <= 3; ++order) {
    const std::string header = "\\" + std::to_string(order) + "-grams:";
    if (line != header)
      throw Error("ARPA: expected section " + header + ", found '" + line + "'");
    int64_t seen = 0;
    while (next_line() && line[0] != '\\') {
      std::istringstream ls(line);
      double logp;
      if (!(ls >> logp)) throw Error("ARPA: bad probability in line: " + line);
      std::vector<std::string> words(order);
      for (auto& w : words)
        if (!(ls >> w)) throw Error("ARPA: truncated n-gram line: " + line);
      double bow = 0.0;
      ls >> bow;  // optional
      if (order == 1) {
        const int id = intern(words[0]);
        if (static_cast<size_t>(id) >= m.unigrams_.size())
          m.unigrams_.resize(id + 1, ProbEntry{kLog10Floor, 0.0});
        m.unigrams_[id] = ProbEntry{logp, bow};
      } else if (order == 2) {
        m.bigrams_[NgramModel::pack2(intern(words[0]), intern(words[1]))] =
            ProbEntry{logp, bow};
      } else {
        m.trigrams_[NgramModel::pack3(intern(words[0]), intern(words[1]), intern(words[2]))] =
            logp;
      }
      ++seen;
    }
    if (seen != counts[order])
      throw Error("ARPA: section " + std::to_string(order) + " declares " +
                  std::to_string(counts[order]) + " entries but contains " +
                  std::to_string(seen));
  }
  if (line != "\\end\\") throw Error("ARPA: missing \\end\\ marker");

  m.unigrams_.resize(m.vocab_.size(), ProbEntry{kLog10Floor, 0.0});
  if (ids.find(NgramModel::kUnk) == ids.end()) {
    intern(NgramModel::kUnk);
    m.unigrams_.push_back(ProbEntry{kLog10Floor, 0.0});
  }
  m.finalize_vocab();
  return m;
}

NgramModel read_arpa(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open ARPA file: " + path);
  return read_arpa(in);
}

}  // namespace singalign
