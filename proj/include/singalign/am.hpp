#pragma once

#include <map>
#include <string>
#include <vector>

#include "singalign/alignment.hpp"
#include "singalign/common.hpp"
#include "singalign/frontend.hpp"
#include "singalign/lexicon.hpp"

namespace singalign {

struct Gmm {
  VectorD weights;  // M
  MatrixD means;    // M x d
  MatrixD vars;     // M x d, diagonal covariances

  int num_components() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(means.cols()); }

  void refresh();  // recompute per-component log normalizers
  double log_like(const Eigen::Ref<const VectorD>& x) const;
  // Returns total log-likelihood, fills per-component posteriors.
  double posteriors(const Eigen::Ref<const VectorD>& x, VectorD* gamma) const;

  VectorD gconsts_;  // cached by refresh()
};

// Left-to-right, no skips: state i self-loops with 1-p_i and advances with p_i.
struct HmmTopology {
  std::vector<std::vector<double>> forward;  // per phone, per emitting state

  int num_states(int phone) const { return static_cast<int>(forward.at(phone).size()); }
};

enum class ContextMode { monophone, triphone };

// Phonetic decision tree for tied-triphone states. Questions are phone sets;
// unseen phones (or missing context, id -1) take the "no" branch, so lookup
// is total.
struct TyingTree {
  struct Node {
    int question = -1;  // index into questions; -1 marks a leaf
    bool on_left_context = true;
    int yes_child = -1;
    int no_child = -1;
    int leaf_pdf = -1;
  };

  std::vector<std::vector<int>> questions;  // phone-id sets, sorted
  std::vector<Node> nodes;
  std::map<std::pair<int, int>, int> roots;  // (center phone, position) -> node

  bool empty() const { return nodes.empty(); }
  int map(int left, int center, int right, int position) const;
};

struct AcousticModel {
  std::vector<Phone> phones;
  HmmTopology topo;
  ContextMode context = ContextMode::monophone;
  TyingTree tree;
  std::vector<int> mono_pdf_base;  // per phone, offset of its first pdf
  std::vector<Gmm> pdfs;
  int dim = 0;
  VectorD global_var;  // reference scale for variance flooring

  int num_pdfs() const { return static_cast<int>(pdfs.size()); }
  int num_phones() const { return static_cast<int>(phones.size()); }
  int pdf_id(int phone, int position) const;  // monophone lookup
  int pdf_id(int left, int phone, int right, int position) const;
};

// Single-Gaussian monophone model; every state starts at the global
// mean/variance, every forward probability at 0.5.
AcousticModel flat_start(const std::vector<Phone>& phones,
                         const std::vector<const FeatureMatrix*>& sample,
                         int states_per_phone = 3, int silence_states = 5);

struct EmStats {
  // Per pdf: occupancy, first- and second-order sums per component.
  struct PdfStats {
    VectorD occupancy;  // M
    MatrixD mean_acc;   // M x d
    MatrixD var_acc;    // M x d
  };
  std::vector<PdfStats> pdf_stats;
  std::vector<std::vector<double>> self_count, forward_count;  // per phone/state
  double total_log_like = 0.0;
  int64_t num_frames = 0;

  void init(const AcousticModel& model);
  void merge(const EmStats& other);
};

void accumulate_em_stats(const AcousticModel& model, const FeatureMatrix& features,
                         const AlignmentResult& alignment, EmStats* stats);

struct EmUpdateOptions {
  double variance_floor_scale = 1e-4;
  double min_occupancy = 1e-3;       // below this a state's parameters are held
  double transition_floor = 1e-4;    // keeps forward probabilities in (0, 1)
  double weight_floor = 1e-5;
};

// M-step. Returns the updated model; stats carry the input model's training
// log-likelihood for monotonicity tracking.
AcousticModel em_update(const AcousticModel& model, const EmStats& stats,
                        const EmUpdateOptions& opts = {});

// Occupancy-weighted mixture growth: heaviest components split into
// mean +/- 0.1 stddev pairs with halved weights.
AcousticModel split_mixtures(const AcousticModel& model, int target_components,
                             const std::vector<double>* pdf_occupancy = nullptr);

// Prolonged-vowel treatment: forward := r * p_i for every vowel state;
// consonants and silence untouched.
AcousticModel scale_self_loops(const AcousticModel& model, double r, bool vowels_only = true);

void save_model(const AcousticModel& model, const std::string& path);
AcousticModel load_model(const std::string& path);
std::string dump_model_text(const AcousticModel& model);

uint64_t phone_table_hash(const std::vector<Phone>& phones);

}  // namespace singalign
