#include "singalign/adapt.hpp"

#include <fstream>
#include <sstream>

namespace singalign {

FmllrTransform FmllrTransform::identity(int dim, const std::string& group) {
  FmllrTransform t;
  t.W = MatrixD::Zero(dim, dim + 1);
  t.W.leftCols(dim).setIdentity();
  t.group = group;
  return t;
}

std::string level_name(AdaptationLevel level) {
  switch (level) {
    case AdaptationLevel::fragment: return "fragment";
    case AdaptationLevel::song: return "song";
    case AdaptationLevel::singer: return "singer";
    case AdaptationLevel::genre: return "genre";
  }
  return "?";
}

AdaptationLevel parse_adaptation_level(const std::string& name) {
  if (name == "fragment") return AdaptationLevel::fragment;
  if (name == "song") return AdaptationLevel::song;
  if (name == "singer") return AdaptationLevel::singer;
  if (name == "genre") return AdaptationLevel::genre;
  throw Error("unknown adaptation level '" + name + "'");
}

std::map<std::string, std::vector<std::string>> group_fragments(const CorpusManifest& manifest,
                                                                AdaptationLevel level) {
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& f : manifest.fragments) {
    std::string key;
    switch (level) {
      case AdaptationLevel::fragment: key = f.fragment_id; break;
      case AdaptationLevel::song: key = f.song_id; break;
      case AdaptationLevel::singer: key = f.singer_id; break;
      case AdaptationLevel::genre: key = f.genres.front(); break;
    }
    groups[key].push_back(f.fragment_id);
  }
  return groups;
}

void FmllrStats::init(int dim) {
  G.assign(dim, MatrixD::Zero(dim + 1, dim + 1));
  K = MatrixD::Zero(dim, dim + 1);
  beta = 0.0;
}

void FmllrStats::merge(const FmllrStats& other) {
  if (other.beta == 0 && other.G.empty()) return;
  if (G.empty()) {
    *this = other;
    return;
  }
  if (dim() != other.dim()) throw Error("FmllrStats: dimension mismatch in merge");
  for (size_t i = 0; i < G.size(); ++i) G[i] += other.G[i];
  K += other.K;
  beta += other.beta;
}

void accumulate_fmllr_stats(const AcousticModel& model, const FeatureMatrix& features,
                            const AlignmentResult& alignment, FmllrStats* stats) {
  const int d = model.dim;
  if (features.dim() != d) throw Error("accumulate_fmllr_stats: dimension mismatch");
  if (static_cast<int>(alignment.frames.size()) != features.num_frames())
    throw Error("accumulate_fmllr_stats: alignment/feature frame mismatch");
  if (stats->G.empty()) stats->init(d);

  VectorD xi(d + 1), gamma;
  MatrixD outer(d + 1, d + 1);
  for (int t = 0; t < features.num_frames(); ++t) {
    const auto& gmm = model.pdfs.at(alignment.frames[t].pdf);
    xi.head(d) = features.frames.row(t).cast<double>();
    xi[d] = 1.0;
    gmm.posteriors(xi.head(d), &gamma);
    outer.noalias() = xi * xi.transpose();

    // Per-dimension precision and mean*precision weights, summed over
    // components.
    for (int i = 0; i < d; ++i) {
      double c = 0, a = 0;
      for (int m = 0; m < gmm.num_components(); ++m) {
        const double inv_var = gamma[m] / gmm.vars(m, i);
        c += inv_var;
        a += inv_var * gmm.means(m, i);
      }
      stats->G[i] += c * outer;
      stats->K.row(i) += a * xi.transpose();
    }
    stats->beta += 1.0;
  }
}

namespace {

double fmllr_aux(const FmllrStats& stats, const MatrixD& W) {
  const int d = stats.dim();
  const double det = W.leftCols(d).determinant();
  double q = stats.beta * std::log(std::abs(det));
  for (int i = 0; i < d; ++i) {
    const VectorD w = W.row(i).transpose();
    q += -0.5 * w.dot(stats.G[i] * w) + w.dot(stats.K.row(i).transpose());
  }
  return q;
}

}  // namespace

FmllrTransform estimate_fmllr(const FmllrStats& stats, const FmllrOptions& opts,
                              std::vector<double>* aux_trace) {
  const int d = stats.dim();
  if (stats.beta < opts.min_occupancy) {
    warn("estimate_fmllr: occupancy " + std::to_string(stats.beta) + " below minimum " +
         std::to_string(opts.min_occupancy) + "; returning identity");
    FmllrTransform t = FmllrTransform::identity(d);
    t.frames = static_cast<int64_t>(stats.beta);
    return t;
  }

  // Factor each row's G once; a small ridge keeps near-singular stats usable.
  std::vector<Eigen::LDLT<MatrixD>> solvers(d);
  for (int i = 0; i < d; ++i) {
    MatrixD g = stats.G[i];
    const double ridge = 1e-9 * std::max(1.0, g.trace() / (d + 1));
    g.diagonal().array() += ridge;
    solvers[i].compute(g);
  }

  FmllrTransform t = FmllrTransform::identity(d);
  t.frames = static_cast<int64_t>(stats.beta);
  MatrixD& W = t.W;

  double prev_q = fmllr_aux(stats, W);
  if (aux_trace) aux_trace->push_back(prev_q);
  for (int iter = 0; iter < opts.iterations; ++iter) {
    for (int i = 0; i < d; ++i) {
      const MatrixD A = W.leftCols(d);
      const double det = A.determinant();
      // Extended cofactor row: d(det)/d(row i), zero in the bias column.
      VectorD cof = VectorD::Zero(d + 1);
      cof.head(d) = det * A.inverse().col(i);

      const VectorD g_cof = solvers[i].solve(cof);
      const VectorD g_k = solvers[i].solve(stats.K.row(i).transpose());
      const double a = cof.dot(g_cof);
      const double b = cof.dot(g_k);
      if (a <= 0) continue;  // degenerate row; keep current value

      const double disc = std::sqrt(b * b + 4 * a * stats.beta);
      double best_q = -std::numeric_limits<double>::infinity();
      VectorD best_w = W.row(i).transpose();
      for (const double alpha : {(-b + disc) / (2 * a), (-b - disc) / (2 * a)}) {
        const VectorD w = g_cof * alpha + g_k;
        const double log_det_term = std::abs(w.dot(cof));
        if (log_det_term <= 0) continue;
        const double q = stats.beta * std::log(log_det_term) - 0.5 * w.dot(stats.G[i] * w) +
                         w.dot(stats.K.row(i).transpose());
        if (q > best_q) {
          best_q = q;
          best_w = w;
        }
      }
      W.row(i) = best_w.transpose();
    }
    const double q = fmllr_aux(stats, W);
    if (aux_trace) aux_trace->push_back(q);
    if (q - prev_q < opts.rel_tolerance * std::abs(prev_q)) {
      prev_q = q;
      break;
    }
    prev_q = q;
  }

  if (std::abs(t.A().determinant()) <= 1e-10)
    throw Error("estimate_fmllr: estimated transform is singular");
  return t;
}

FeatureMatrix apply_fmllr(const FmllrTransform& t, const FeatureMatrix& f) {
  const int d = static_cast<int>(t.W.rows());
  if (f.dim() != d) throw Error("apply_fmllr: dimension mismatch");
  FeatureMatrix out = f;
  const MatrixD a = t.A();
  const VectorD b = t.b();
  out.frames = ((f.frames.cast<double>() * a.transpose()).rowwise() + b.transpose())
                   .cast<float>();
  out.stage = FeatureStage::III;
  return out;
}

void save_transforms(const std::map<std::string, FmllrTransform>& transforms,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write transform archive: " + path);
  out.precision(17);
  for (const auto& [key, t] : transforms) {
    out << key << '\t' << t.frames << '\n';
    for (int i = 0; i < t.W.rows(); ++i) {
      for (int j = 0; j < t.W.cols(); ++j) out << (j ? " " : "") << t.W(i, j);
      out << '\n';
    }
  }
}

std::map<std::string, FmllrTransform> load_transforms(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open transform archive: " + path);
  std::map<std::string, FmllrTransform> transforms;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream hs(line);
    FmllrTransform t;
    if (!(hs >> t.group >> t.frames))
      throw Error("transform archive: bad header line: " + line);
    std::vector<std::vector<double>> rows;
    // d rows of d+1 values; the first row fixes d.
    do {
      if (!std::getline(in, line))
        throw Error("transform archive: truncated matrix for group " + t.group);
      std::istringstream ls(line);
      std::vector<double> row;
      double v;
      while (ls >> v) row.push_back(v);
      if (row.size() < 2 || (!rows.empty() && row.size() != rows.front().size()))
        throw Error("transform archive: malformed matrix row for group " + t.group);
      rows.push_back(std::move(row));
    } while (rows.size() + 1 < rows.front().size());
    t.W.resize(rows.size(), rows.front().size());
    for (size_t i = 0; i < rows.size(); ++i)
      for (size_t j = 0; j < rows[i].size(); ++j) t.W(i, j) = rows[i][j];
    transforms[t.group] = std::move(t);
  }
  return transforms;
}

SatResult sat_retrain(const AcousticModel& model, const std::vector<FeatureMatrix>& features,
                      const std::vector<std::vector<std::string>>& transcripts,
                      const std::vector<std::string>& group_keys, const Lexicon& lexicon,
                      const SatOptions& opts) {
  if (features.size() != transcripts.size() || features.size() != group_keys.size())
    throw Error("sat_retrain: per-utterance input sizes disagree");

  SatResult result;
  result.model = model;
  for (const auto& key : group_keys)
    if (!result.transforms.count(key))
      result.transforms[key] = FmllrTransform::identity(model.dim, key);

  for (int round = 0; round < opts.rounds; ++round) {
    // Align transformed features under the current model.
    std::vector<AlignmentResult> alignments(features.size());
    double ll = 0;
    for (size_t u = 0; u < features.size(); ++u) {
      const auto& t = result.transforms.at(group_keys[u]);
      const FeatureMatrix ft = apply_fmllr(t, features[u]);
      alignments[u] = align_transcript(transcripts[u], lexicon, result.model, ft,
                                       opts.optional_silence_prob);
      ll += alignments[u].total_score +
            features[u].num_frames() * std::log(std::abs(t.A().determinant()));
    }
    result.round_log_likes.push_back(ll);

    // Re-estimate per-group transforms on the original features.
    std::map<std::string, FmllrStats> group_stats;
    for (size_t u = 0; u < features.size(); ++u)
      accumulate_fmllr_stats(result.model, features[u], alignments[u],
                             &group_stats[group_keys[u]]);
    for (auto& [key, stats] : group_stats) {
      FmllrTransform t = estimate_fmllr(stats, opts.fmllr);
      t.group = key;
      result.transforms[key] = std::move(t);
    }

    // EM re-estimation on the newly transformed features.
    EmStats stats;
    stats.init(result.model);
    for (size_t u = 0; u < features.size(); ++u) {
      const FeatureMatrix ft = apply_fmllr(result.transforms.at(group_keys[u]), features[u]);
      accumulate_em_stats(result.model, ft, alignments[u], &stats);
    }
    result.model = em_update(result.model, stats, opts.em);
  }
  return result;
}

}  // namespace singalign
