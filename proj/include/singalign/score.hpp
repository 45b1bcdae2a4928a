#pragma once

#include <map>
#include <string>
#include <vector>

#include "singalign/common.hpp"
#include "singalign/corpus.hpp"

namespace singalign {

enum class EditOp { match, substitute, del, ins };

struct AlignedPair {
  std::string ref;  // empty on insertion
  std::string hyp;  // empty on deletion
  EditOp op = EditOp::match;
};

struct EditAlignment {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  std::vector<AlignedPair> pairs;

  int errors() const { return substitutions + deletions + insertions; }
};

// Levenshtein with unit costs; ties prefer substitution over insertion over
// deletion. Tokens are case-folded before comparison.
EditAlignment edit_align(const std::vector<std::string>& ref,
                         const std::vector<std::string>& hyp);

struct UtteranceScore {
  EditAlignment alignment;
  int ref_length = 0;
};

struct EvalReport {
  std::map<std::string, UtteranceScore> utterances;
  int substitutions = 0, deletions = 0, insertions = 0;
  int64_t ref_length = 0;
  std::map<std::string, EvalReport> by_genre;  // aggregate sub-reports only

  double error_rate() const {  // percent; may exceed 100
    return ref_length > 0
               ? 100.0 * (substitutions + deletions + insertions) / ref_length
               : 0.0;
  }
  std::string summary(const std::string& label) const;
};

// Pooled counts, not averaged per-utterance percentages. With a manifest,
// per-genre sub-reports count each fragment under all of its genres.
EvalReport score_corpus(const std::map<std::string, std::vector<std::string>>& refs,
                        const std::map<std::string, std::vector<std::string>>& hyps,
                        const CorpusManifest* manifest = nullptr);

// Fixed-width three-row REF / HYP / tag display; deletions show as `*`.
std::string render_alignment(const EditAlignment& alignment);

}  // namespace singalign
