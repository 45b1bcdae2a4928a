#pragma once

#include <map>
#include <string>
#include <vector>

#include "singalign/am.hpp"
#include "singalign/corpus.hpp"
#include "singalign/decoder.hpp"
#include "singalign/frontend.hpp"

namespace singalign {

struct FmllrTransform {
  MatrixD W;  // d x (d+1), feature x maps to A*x + b with W = [A | b]
  std::string group;
  int64_t frames = 0;

  static FmllrTransform identity(int dim, const std::string& group = "");
  MatrixD A() const { return W.leftCols(W.rows()); }
  VectorD b() const { return W.col(W.cols() - 1); }
};

enum class AdaptationLevel { fragment, song, singer, genre };

std::string level_name(AdaptationLevel level);
AdaptationLevel parse_adaptation_level(const std::string& name);

// Multi-genre fragments group under their first listed genre.
std::map<std::string, std::vector<std::string>> group_fragments(const CorpusManifest& manifest,
                                                                AdaptationLevel level);

// Row statistics of the constrained-MLLR auxiliary function:
//   G_i = sum_t sum_m gamma_m(t)/var_{m,i} * xi_t xi_t^T
//   k_i = sum_t sum_m gamma_m(t)*mean_{m,i}/var_{m,i} * xi_t,  xi_t = [x_t; 1].
struct FmllrStats {
  std::vector<MatrixD> G;  // d matrices of (d+1)x(d+1)
  MatrixD K;               // d x (d+1), k_i rows
  double beta = 0.0;       // total posterior mass

  void init(int dim);
  void merge(const FmllrStats& other);
  int dim() const { return static_cast<int>(K.rows()); }
};

// Hard state occupancy from the alignment, soft within-state mixture
// posteriors.
void accumulate_fmllr_stats(const AcousticModel& model, const FeatureMatrix& features,
                            const AlignmentResult& alignment, FmllrStats* stats);

struct FmllrOptions {
  int iterations = 20;
  double min_occupancy = 200.0;  // frames; below this the identity is returned
  double rel_tolerance = 1e-6;
};

// Row-by-row cofactor updates maximizing
//   Q(W) = beta*log|det A| - 1/2 sum_i w_i G_i w_i^T + sum_i w_i k_i^T,
// starting from the identity. aux_trace (optional) records Q per sweep.
FmllrTransform estimate_fmllr(const FmllrStats& stats, const FmllrOptions& opts = {},
                              std::vector<double>* aux_trace = nullptr);

// Feature III: every frame x -> A*x + b.
FeatureMatrix apply_fmllr(const FmllrTransform& t, const FeatureMatrix& f);

// Text archive: header line `group_key frames_used`, then d rows of d+1 values.
void save_transforms(const std::map<std::string, FmllrTransform>& transforms,
                     const std::string& path);
std::map<std::string, FmllrTransform> load_transforms(const std::string& path);

struct SatOptions {
  int rounds = 2;
  FmllrOptions fmllr;
  EmUpdateOptions em;
  double optional_silence_prob = 0.5;
};

struct SatResult {
  AcousticModel model;
  std::map<std::string, FmllrTransform> transforms;
  std::vector<double> round_log_likes;  // includes the Jacobian term
};

// Alternates per-group fMLLR estimation with EM re-estimation on transformed
// features.
SatResult sat_retrain(const AcousticModel& model, const std::vector<FeatureMatrix>& features,
                      const std::vector<std::vector<std::string>>& transcripts,
                      const std::vector<std::string>& group_keys, const Lexicon& lexicon,
                      const SatOptions& opts = {});

}  // namespace singalign
