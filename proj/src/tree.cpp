#include "singalign/tree.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <numbers>
#include <set>

namespace singalign {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

struct GaussStats {
  double count = 0;
  VectorD sum, sum_sq;

  void init(int d) {
    count = 0;
    sum = VectorD::Zero(d);
    sum_sq = VectorD::Zero(d);
  }
  void add(const GaussStats& o) {
    count += o.count;
    sum += o.sum;
    sum_sq += o.sum_sq;
  }
  // Diagonal-Gaussian data log-likelihood at the ML fit.
  double log_like(const VectorD& var_floor) const {
    if (count < 1e-3) return 0.0;
    VectorD mean = sum / count;
    VectorD var = (sum_sq / count - mean.cwiseProduct(mean)).cwiseMax(var_floor);
    return -0.5 * count * (var.array().log().sum() + var.size() * (1.0 + kLog2Pi));
  }
};

// Context key: (left, right); -1 marks an utterance edge.
using ContextStats = std::map<std::pair<int, int>, GaussStats>;

struct Leaf {
  std::vector<std::pair<std::pair<int, int>, const GaussStats*>> contexts;
  double log_like = 0;
  // Best candidate split.
  double gain = -1;
  int question = -1;
  bool on_left = true;
};

double set_log_like(const std::vector<std::pair<std::pair<int, int>, const GaussStats*>>& ctxs,
                    const VectorD& var_floor, int dim) {
  GaussStats all;
  all.init(dim);
  for (const auto& [key, st] : ctxs) {
    (void)key;
    all.add(*st);
  }
  return all.log_like(var_floor);
}

void find_best_split(Leaf* leaf, const std::vector<std::vector<int>>& questions,
                     const VectorD& var_floor, int dim, double min_occupancy) {
  leaf->gain = -1;
  for (size_t q = 0; q < questions.size(); ++q) {
    for (int side = 0; side < 2; ++side) {
      const bool on_left = side == 0;
      GaussStats yes, no;
      yes.init(dim);
      no.init(dim);
      for (const auto& [key, st] : leaf->contexts) {
        const int ctx = on_left ? key.first : key.second;
        const bool is_yes =
            ctx >= 0 && std::binary_search(questions[q].begin(), questions[q].end(), ctx);
        (is_yes ? yes : no).add(*st);
      }
      if (yes.count < min_occupancy || no.count < min_occupancy) continue;
      const double gain = yes.log_like(var_floor) + no.log_like(var_floor) - leaf->log_like;
      if (gain > leaf->gain) {
        leaf->gain = gain;
        leaf->question = static_cast<int>(q);
        leaf->on_left = on_left;
      }
    }
  }
}

}  // namespace

std::vector<std::vector<int>> auto_questions(const AcousticModel& mono) {
  std::vector<std::vector<int>> questions;
  std::vector<int> vowels, consonants, real_phones;
  for (int p = 0; p < mono.num_phones(); ++p) {
    if (mono.phones[p].is_silence) continue;
    real_phones.push_back(p);
    (mono.phones[p].is_vowel ? vowels : consonants).push_back(p);
  }
  if (!vowels.empty()) questions.push_back(vowels);
  if (!consonants.empty()) questions.push_back(consonants);

  // Bottom-up clustering on per-phone mean vectors (state means averaged);
  // every merge's member set becomes a question.
  std::vector<std::vector<int>> clusters;
  std::vector<VectorD> centroids;
  for (int p : real_phones) {
    clusters.push_back({p});
    VectorD c = VectorD::Zero(mono.dim);
    const int states = mono.topo.num_states(p);
    for (int s = 0; s < states; ++s)
      c += mono.pdfs[mono.pdf_id(p, s)].means.colwise().mean().transpose();
    centroids.push_back(c / states);
  }

  while (clusters.size() > 2) {
    double best = std::numeric_limits<double>::max();
    size_t bi = 0, bj = 1;
    for (size_t i = 0; i < clusters.size(); ++i)
      for (size_t j = i + 1; j < clusters.size(); ++j) {
        const double d = (centroids[i] - centroids[j]).squaredNorm();
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    const double wi = static_cast<double>(clusters[bi].size());
    const double wj = static_cast<double>(clusters[bj].size());
    centroids[bi] = (wi * centroids[bi] + wj * centroids[bj]) / (wi + wj);
    clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
    std::sort(clusters[bi].begin(), clusters[bi].end());
    clusters.erase(clusters.begin() + bj);
    centroids.erase(centroids.begin() + bj);
    questions.push_back(clusters[bi]);
  }
  for (int p : real_phones) questions.push_back({p});

  std::sort(questions.begin(), questions.end());
  questions.erase(std::unique(questions.begin(), questions.end()), questions.end());
  return questions;
}

AcousticModel build_triphone_tying(const AcousticModel& mono,
                                   const std::vector<const FeatureMatrix*>& features,
                                   const std::vector<const AlignmentResult*>& alignments,
                                   const std::vector<std::vector<int>>& questions,
                                   const TreeBuildOptions& opts) {
  if (features.size() != alignments.size())
    throw Error("build_triphone_tying: feature/alignment count mismatch");
  const int d = mono.dim;
  const VectorD var_floor = (mono.global_var * 1e-4).cwiseMax(1e-20);
  const int sil = [&] {
    for (int p = 0; p < mono.num_phones(); ++p)
      if (mono.phones[p].is_silence) return p;
    return -1;
  }();

  // Accumulate single-Gaussian stats per (center, position, left, right).
  std::map<std::array<int, 2>, ContextStats> stats;  // key: (center, position)
  for (size_t u = 0; u < features.size(); ++u) {
    const auto& align = *alignments[u];
    const auto& feats = features[u]->frames;
    for (size_t si = 0; si < align.segments.size(); ++si) {
      const auto& seg = align.segments[si];
      const int left = si > 0 ? align.segments[si - 1].phone : -1;
      const int right = si + 1 < align.segments.size() ? align.segments[si + 1].phone : -1;
      for (int t = seg.start_frame; t < seg.end_frame; ++t) {
        auto& ctx = stats[{seg.phone, align.frames[t].position}][{left, right}];
        if (ctx.count == 0 && ctx.sum.size() == 0) ctx.init(d);
        ctx.count += 1;
        const VectorD x = feats.row(t).cast<double>();
        ctx.sum += x;
        ctx.sum_sq += x.cwiseProduct(x);
      }
    }
  }

  AcousticModel out = mono;
  out.context = ContextMode::triphone;
  out.tree = TyingTree();
  out.tree.questions = questions;
  out.pdfs.clear();

  struct PendingLeaf {
    int node = -1;
    std::array<int, 2> root_key{};
    Leaf leaf;
  };
  std::vector<PendingLeaf> leaves;

  // One root leaf per (phone, position); splitting only for non-silence.
  for (int p = 0; p < mono.num_phones(); ++p) {
    for (int s = 0; s < mono.topo.num_states(p); ++s) {
      TyingTree::Node node;
      const int node_id = static_cast<int>(out.tree.nodes.size());
      out.tree.nodes.push_back(node);
      out.tree.roots[{p, s}] = node_id;

      PendingLeaf pl;
      pl.node = node_id;
      pl.root_key = {p, s};
      auto it = stats.find({p, s});
      if (it != stats.end()) {
        for (const auto& [key, st] : it->second) pl.leaf.contexts.emplace_back(key, &st);
        pl.leaf.log_like = set_log_like(pl.leaf.contexts, var_floor, d);
        if (p != sil)
          find_best_split(&pl.leaf, questions, var_floor, d, opts.min_leaf_occupancy);
      }
      leaves.push_back(std::move(pl));
    }
  }

  int num_leaves = static_cast<int>(leaves.size());
  const int max_leaves = std::max(opts.max_leaves, num_leaves);
  int splits = 0;
  while (num_leaves < max_leaves) {
    int best = -1;
    for (size_t i = 0; i < leaves.size(); ++i)
      if (leaves[i].leaf.gain > opts.min_split_gain &&
          (best < 0 || leaves[i].leaf.gain > leaves[best].leaf.gain))
        best = static_cast<int>(i);
    if (best < 0) break;

    PendingLeaf pl = std::move(leaves[best]);
    leaves.erase(leaves.begin() + best);

    PendingLeaf yes_leaf, no_leaf;
    yes_leaf.root_key = no_leaf.root_key = pl.root_key;
    const auto& q = questions[pl.leaf.question];
    for (const auto& entry : pl.leaf.contexts) {
      const int ctx = pl.leaf.on_left ? entry.first.first : entry.first.second;
      const bool is_yes = ctx >= 0 && std::binary_search(q.begin(), q.end(), ctx);
      (is_yes ? yes_leaf : no_leaf).leaf.contexts.push_back(entry);
    }
    yes_leaf.node = static_cast<int>(out.tree.nodes.size());
    out.tree.nodes.emplace_back();
    no_leaf.node = static_cast<int>(out.tree.nodes.size());
    out.tree.nodes.emplace_back();

    auto& parent = out.tree.nodes[pl.node];
    parent.question = pl.leaf.question;
    parent.on_left_context = pl.leaf.on_left;
    parent.yes_child = yes_leaf.node;
    parent.no_child = no_leaf.node;

    for (PendingLeaf* child : {&yes_leaf, &no_leaf}) {
      child->leaf.log_like = set_log_like(child->leaf.contexts, var_floor, d);
      find_best_split(&child->leaf, questions, var_floor, d, opts.min_leaf_occupancy);
    }
    leaves.push_back(std::move(yes_leaf));
    leaves.push_back(std::move(no_leaf));
    ++num_leaves;
    ++splits;
  }
  if (splits == 0)
    warn("build_triphone_tying: no context split had enough data; tree equals monophone");

  // Assign pdf ids in node order for stable numbering, seed Gaussians from
  // the pooled leaf stats (falling back to the monophone pdf when unseen).
  std::sort(leaves.begin(), leaves.end(),
            [](const PendingLeaf& a, const PendingLeaf& b) { return a.node < b.node; });
  for (auto& pl : leaves) {
    const int pdf = static_cast<int>(out.pdfs.size());
    out.tree.nodes[pl.node].leaf_pdf = pdf;
    GaussStats all;
    all.init(d);
    for (const auto& [key, st] : pl.leaf.contexts) {
      (void)key;
      all.add(*st);
    }
    Gmm g;
    if (all.count >= 1.0) {
      VectorD mean = all.sum / all.count;
      VectorD var = (all.sum_sq / all.count - mean.cwiseProduct(mean)).cwiseMax(var_floor);
      g.weights = VectorD::Ones(1);
      g.means = mean.transpose();
      g.vars = var.transpose();
    } else {
      g = mono.pdfs[mono.pdf_id(pl.root_key[0], pl.root_key[1])];
    }
    g.refresh();
    out.pdfs.push_back(std::move(g));
  }
  return out;
}

}  // namespace singalign
