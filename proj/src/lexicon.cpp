#include "singalign/lexicon.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace singalign {

int Lexicon::phone_id(const std::string& symbol) const {
  for (size_t i = 0; i < phones.size(); ++i)
    if (phones[i].symbol == symbol) return static_cast<int>(i);
  return -1;
}

int Lexicon::silence_phone() const {
  for (size_t i = 0; i < phones.size(); ++i)
    if (phones[i].is_silence) return static_cast<int>(i);
  return -1;
}

std::string Lexicon::pron_string(const Pronunciation& p) const {
  std::string out;
  for (size_t i = 0; i < p.size(); ++i) {
    if (i) out += ' ';
    out += phones.at(p[i]).symbol;
  }
  return out;
}

std::vector<Phone> load_phone_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open phone table: " + path);
  std::vector<Phone> phones;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0, silence_count = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string symbol, kind;
    if (!(ls >> symbol >> kind))
      throw Error("phone table parse error at " + path + ":" + std::to_string(lineno));
    if (!seen.insert(symbol).second)
      throw Error("duplicate phone declaration '" + symbol + "' at " + path + ":" +
                  std::to_string(lineno));
    Phone p;
    p.symbol = symbol;
    if (kind == "vowel") {
      p.is_vowel = true;
    } else if (kind == "silence") {
      p.is_silence = true;
      ++silence_count;
    } else if (kind != "consonant") {
      throw Error("unknown phone class '" + kind + "' at " + path + ":" + std::to_string(lineno));
    }
    phones.push_back(std::move(p));
  }
  if (silence_count != 1)
    throw Error("phone table must declare exactly one silence phone, found " +
                std::to_string(silence_count));
  return phones;
}

Lexicon load_lexicon(const std::string& lexicon_path, const std::string& phone_table_path) {
  Lexicon lex;
  lex.phones = load_phone_table(phone_table_path);

  std::ifstream in(lexicon_path);
  if (!in) throw Error("cannot open lexicon: " + lexicon_path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string word, phone;
    if (!(ls >> word))
      throw Error("lexicon parse error at " + lexicon_path + ":" + std::to_string(lineno));
    Pronunciation pron;
    while (ls >> phone) {
      int id = lex.phone_id(phone);
      if (id < 0)
        throw Error("lexicon entry for '" + word + "' uses undeclared phone '" + phone + "' at " +
                    lexicon_path + ":" + std::to_string(lineno));
      pron.push_back(id);
    }
    if (pron.empty())
      throw Error("word '" + word + "' has an empty pronunciation at " + lexicon_path + ":" +
                  std::to_string(lineno));
    auto& variants = lex.entries[word];
    if (std::find(variants.begin(), variants.end(), pron) != variants.end()) {
      warn("duplicate pronunciation for word '" + word + "' at " + lexicon_path + ":" +
           std::to_string(lineno) + ", ignored");
      continue;
    }
    variants.push_back(std::move(pron));
  }
  return lex;
}

void save_lexicon(const Lexicon& lex, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write lexicon: " + path);
  for (const auto& [word, variants] : lex.entries)
    for (const auto& pron : variants) out << word << '\t' << lex.pron_string(pron) << '\n';
}

int count_vowels(const Lexicon& lex, const Pronunciation& p) {
  int n = 0;
  for (int id : p)
    if (lex.phone(id).is_vowel) ++n;
  return n;
}

namespace {

std::vector<Pronunciation> expand_one(const Lexicon& lex, const Pronunciation& base,
                                      int max_vowels) {
  std::vector<int> vowel_pos;
  for (size_t i = 0; i < base.size(); ++i)
    if (lex.phone(base[i]).is_vowel) vowel_pos.push_back(static_cast<int>(i));
  const int n = static_cast<int>(vowel_pos.size());
  if (n > max_vowels) return {base};

  std::vector<Pronunciation> variants;
  for (uint32_t mask = 0; mask < (1u << n); ++mask) {
    Pronunciation v;
    int vowel_index = 0;
    for (size_t i = 0; i < base.size(); ++i) {
      v.push_back(base[i]);
      if (lex.phone(base[i]).is_vowel) {
        if (mask & (1u << vowel_index)) v.push_back(base[i]);
        ++vowel_index;
      }
    }
    variants.push_back(std::move(v));
  }
  return variants;
}

}  // namespace

Lexicon extend_prolonged_vowels(const Lexicon& lex, int max_vowels) {
  Lexicon out;
  out.phones = lex.phones;
  for (const auto& [word, variants] : lex.entries) {
    std::vector<Pronunciation> expanded;
    for (const auto& base : variants) {
      for (auto& v : expand_one(lex, base, max_vowels)) {
        if (std::find(expanded.begin(), expanded.end(), v) == expanded.end())
          expanded.push_back(std::move(v));
      }
    }
    out.entries[word] = std::move(expanded);
  }
  return out;
}

Pronunciation collapse_doubled_vowels(const Lexicon& lex, const Pronunciation& p) {
  Pronunciation out;
  for (size_t i = 0; i < p.size(); ++i) {
    if (!out.empty() && out.back() == p[i] && lex.phone(p[i]).is_vowel) continue;
    out.push_back(p[i]);
  }
  return out;
}

}  // namespace singalign
