#pragma once

#include <vector>

#include "singalign/am.hpp"

namespace singalign {

struct TreeBuildOptions {
  int max_leaves = 0;  // required; counts tied states across all phones
  double min_split_gain = 1e-3;
  double min_leaf_occupancy = 3.0;
};

// Context questions from bottom-up clustering of the monophone state means,
// plus the vowel/consonant split from the phone table. Silence never appears
// in a question set.
std::vector<std::vector<int>> auto_questions(const AcousticModel& mono);

// Greedy likelihood-gain decision trees per (center phone, state position)
// over left/right context-membership questions. Silence stays context
// independent. Degenerates to the monophone inventory when data is thin.
AcousticModel build_triphone_tying(const AcousticModel& mono,
                                   const std::vector<const FeatureMatrix*>& features,
                                   const std::vector<const AlignmentResult*>& alignments,
                                   const std::vector<std::vector<int>>& questions,
                                   const TreeBuildOptions& opts);

}  // namespace singalign
