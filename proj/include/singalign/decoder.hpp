#pragma once

#include <memory>
#include <string>
#include <vector>

#include "singalign/alignment.hpp"
#include "singalign/frontend.hpp"
#include "singalign/graph.hpp"

namespace singalign {

// Frame/pdf log-likelihood source; lets tests drive the search with synthetic
// emission tables.
class AcousticScorer {
 public:
  virtual ~AcousticScorer() = default;
  virtual int num_frames() const = 0;
  virtual double log_like(int frame, int pdf) const = 0;
};

class GmmScorer : public AcousticScorer {
 public:
  GmmScorer(const AcousticModel& model, const FeatureMatrix& features);
  int num_frames() const override { return static_cast<int>(feats_.rows()); }
  double log_like(int frame, int pdf) const override;

 private:
  const AcousticModel& model_;
  MatrixD feats_;
  mutable std::vector<double> cache_;
};

class MatrixScorer : public AcousticScorer {
 public:
  explicit MatrixScorer(MatrixD scores) : scores_(std::move(scores)) {}
  int num_frames() const override { return static_cast<int>(scores_.rows()); }
  double log_like(int frame, int pdf) const override { return scores_(frame, pdf); }

 private:
  MatrixD scores_;
};

struct DecodeConfig {
  double beam = std::numeric_limits<double>::infinity();
  int max_active = std::numeric_limits<int>::max();
  double acoustic_scale = 1.0;
};

struct Hypothesis {
  std::vector<std::string> words;
  std::vector<int> word_end_frames;  // frame where each word completed
  std::vector<int> phones;           // decoded phone sequence, silences included
  double acoustic_score = 0.0;       // unscaled sum of frame log-likelihoods
  double lm_score = 0.0;             // natural log
  double graph_score = 0.0;          // transition + pronunciation weights
  double total_score = kLogZero;
  bool search_failure = false;
};

// Exact (un-pruned) forced alignment; throws when the graph cannot emit
// exactly num_frames frames.
AlignmentResult viterbi_align(const DecodingGraph& graph, const AcousticScorer& scorer);
AlignmentResult viterbi_align(const DecodingGraph& graph, const FeatureMatrix& features,
                              const AcousticModel& model);

// Beam-pruned token passing; graph.lm (when set) is composed on the fly.
Hypothesis decode(const DecodingGraph& graph, const AcousticScorer& scorer,
                  const DecodeConfig& cfg);
Hypothesis decode(const DecodingGraph& graph, const FeatureMatrix& features,
                  const AcousticModel& model, const DecodeConfig& cfg);

// Alignment restricted to a known transcript; convenience for the cascade.
AlignmentResult align_transcript(const std::vector<std::string>& transcript,
                                 const Lexicon& lexicon, const AcousticModel& model,
                                 const FeatureMatrix& features,
                                 double optional_silence_prob = 0.5);

}  // namespace singalign
