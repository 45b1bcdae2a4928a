#pragma once

#include <map>
#include <string>
#include <vector>

#include "singalign/common.hpp"

namespace singalign {

struct Phone {
  std::string symbol;
  bool is_vowel = false;
  bool is_silence = false;
};

using Pronunciation = std::vector<int>;  // phone ids

struct Lexicon {
  std::vector<Phone> phones;                           // id -> phone
  std::map<std::string, std::vector<Pronunciation>> entries;  // word -> variants

  int phone_id(const std::string& symbol) const;  // -1 if absent
  int silence_phone() const;
  const Phone& phone(int id) const { return phones.at(id); }
  std::string pron_string(const Pronunciation& p) const;
  bool has_word(const std::string& w) const { return entries.count(w) > 0; }
};

// Phone table lines: `PHONE vowel|consonant|silence`. Exactly one silence phone.
std::vector<Phone> load_phone_table(const std::string& path);

// Lexicon lines: `WORD PHONE PHONE ...` over a declared phone table.
Lexicon load_lexicon(const std::string& lexicon_path, const std::string& phone_table_path);

void save_lexicon(const Lexicon& lex, const std::string& path);

// Every base pronunciation with n <= max_vowels vowel phones expands to all
// 2^n variants where each vowel is independently doubled; pronunciations with
// more vowels pass through unchanged.
Lexicon extend_prolonged_vowels(const Lexicon& lex, int max_vowels = 3);

// Collapses immediate repeats of the same vowel phone; inverse of the
// expansion for any extended variant.
Pronunciation collapse_doubled_vowels(const Lexicon& lex, const Pronunciation& p);

int count_vowels(const Lexicon& lex, const Pronunciation& p);

}  // namespace singalign
