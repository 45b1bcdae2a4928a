#include "singalign/am.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace singalign {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
}

// ------------------------------------------------------------------- GMM ---

void Gmm::refresh() {
  const int m = num_components();
  gconsts_.resize(m);
  for (int i = 0; i < m; ++i) {
    gconsts_[i] = std::log(weights[i]) - 0.5 * (dim() * kLog2Pi + vars.row(i).array().log().sum());
  }
}

double Gmm::log_like(const Eigen::Ref<const VectorD>& x) const {
  double best = kLogZero;
  const int m = num_components();
  Eigen::ArrayXd ll(m);
  for (int i = 0; i < m; ++i) {
    const double quad =
        ((x.transpose().array() - means.row(i).array()).square() / vars.row(i).array()).sum();
    ll[i] = gconsts_[i] - 0.5 * quad;
    best = std::max(best, ll[i]);
  }
  if (best == kLogZero) return kLogZero;
  return best + std::log((ll - best).exp().sum());
}

double Gmm::posteriors(const Eigen::Ref<const VectorD>& x, VectorD* gamma) const {
  const int m = num_components();
  gamma->resize(m);
  double best = kLogZero;
  for (int i = 0; i < m; ++i) {
    const double quad =
        ((x.transpose().array() - means.row(i).array()).square() / vars.row(i).array()).sum();
    (*gamma)[i] = gconsts_[i] - 0.5 * quad;
    best = std::max(best, (*gamma)[i]);
  }
  const double total = best + std::log((gamma->array() - best).exp().sum());
  *gamma = (gamma->array() - total).exp();
  return total;
}

// ----------------------------------------------------------------- model ---

int TyingTree::map(int left, int center, int right, int position) const {
  auto it = roots.find({center, position});
  if (it == roots.end()) throw Error("TyingTree: no root for phone/state");
  int n = it->second;
  while (nodes[n].question >= 0) {
    const auto& node = nodes[n];
    const int ctx = node.on_left_context ? left : right;
    const auto& q = questions[node.question];
    const bool yes = ctx >= 0 && std::binary_search(q.begin(), q.end(), ctx);
    n = yes ? node.yes_child : node.no_child;
  }
  return nodes[n].leaf_pdf;
}

int AcousticModel::pdf_id(int phone, int position) const {
  return mono_pdf_base.at(phone) + position;
}

int AcousticModel::pdf_id(int left, int phone, int right, int position) const {
  if (context == ContextMode::monophone) return pdf_id(phone, position);
  return tree.map(left, phone, right, position);
}

uint64_t phone_table_hash(const std::vector<Phone>& phones) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : phones) {
    h = fnv1a64(p.symbol, h);
    const char flags[2] = {p.is_vowel ? 'v' : 'c', p.is_silence ? 's' : '-'};
    h = fnv1a64(flags, 2, h);
  }
  return h;
}

AcousticModel flat_start(const std::vector<Phone>& phones,
                         const std::vector<const FeatureMatrix*>& sample, int states_per_phone,
                         int silence_states) {
  if (sample.empty()) throw Error("flat_start: empty feature sample");
  const int d = sample.front()->dim();

  VectorD sum = VectorD::Zero(d), sum_sq = VectorD::Zero(d);
  int64_t count = 0;
  for (const auto* f : sample) {
    if (f->dim() != d) throw Error("flat_start: inconsistent feature dimensions");
    const MatrixD x = f->frames.cast<double>();
    sum += x.colwise().sum().transpose();
    sum_sq += x.array().square().colwise().sum().transpose().matrix();
    count += f->num_frames();
  }
  if (count == 0) throw Error("flat_start: no frames in sample");
  VectorD mean = sum / static_cast<double>(count);
  VectorD var =
      (sum_sq / static_cast<double>(count) - mean.cwiseProduct(mean)).cwiseMax(1e-10);

  AcousticModel model;
  model.phones = phones;
  model.dim = d;
  model.global_var = var;
  model.context = ContextMode::monophone;
  model.topo.forward.resize(phones.size());
  model.mono_pdf_base.resize(phones.size());
  int pdf = 0;
  for (size_t p = 0; p < phones.size(); ++p) {
    const int states = phones[p].is_silence ? silence_states : states_per_phone;
    model.topo.forward[p].assign(states, 0.5);
    model.mono_pdf_base[p] = pdf;
    pdf += states;
  }
  Gmm proto;
  proto.weights = VectorD::Ones(1);
  proto.means = mean.transpose();
  proto.vars = var.transpose();
  proto.refresh();
  model.pdfs.assign(pdf, proto);
  return model;
}

// -------------------------------------------------------------------- EM ---

void EmStats::init(const AcousticModel& model) {
  pdf_stats.resize(model.num_pdfs());
  for (int i = 0; i < model.num_pdfs(); ++i) {
    const auto& g = model.pdfs[i];
    pdf_stats[i].occupancy = VectorD::Zero(g.num_components());
    pdf_stats[i].mean_acc = MatrixD::Zero(g.num_components(), model.dim);
    pdf_stats[i].var_acc = MatrixD::Zero(g.num_components(), model.dim);
  }
  self_count.resize(model.num_phones());
  forward_count.resize(model.num_phones());
  for (int p = 0; p < model.num_phones(); ++p) {
    self_count[p].assign(model.topo.num_states(p), 0.0);
    forward_count[p].assign(model.topo.num_states(p), 0.0);
  }
  total_log_like = 0.0;
  num_frames = 0;
}

void EmStats::merge(const EmStats& other) {
  if (pdf_stats.size() != other.pdf_stats.size()) throw Error("EmStats: merge size mismatch");
  for (size_t i = 0; i < pdf_stats.size(); ++i) {
    pdf_stats[i].occupancy += other.pdf_stats[i].occupancy;
    pdf_stats[i].mean_acc += other.pdf_stats[i].mean_acc;
    pdf_stats[i].var_acc += other.pdf_stats[i].var_acc;
  }
  for (size_t p = 0; p < self_count.size(); ++p)
    for (size_t s = 0; s < self_count[p].size(); ++s) {
      self_count[p][s] += other.self_count[p][s];
      forward_count[p][s] += other.forward_count[p][s];
    }
  total_log_like += other.total_log_like;
  num_frames += other.num_frames;
}

void accumulate_em_stats(const AcousticModel& model, const FeatureMatrix& features,
                         const AlignmentResult& alignment, EmStats* stats) {
  if (stats->pdf_stats.empty()) stats->init(model);
  const int T = features.num_frames();
  if (static_cast<int>(alignment.frames.size()) != T)
    throw Error("accumulate_em_stats: alignment/feature frame mismatch");

  VectorD gamma;
  for (int t = 0; t < T; ++t) {
    const auto& af = alignment.frames[t];
    const VectorD x = features.frames.row(t).cast<double>();
    const auto& gmm = model.pdfs.at(af.pdf);
    gmm.posteriors(x, &gamma);
    auto& ps = stats->pdf_stats[af.pdf];
    ps.occupancy += gamma;
    ps.mean_acc += gamma * x.transpose();
    ps.var_acc += gamma * x.cwiseProduct(x).transpose();
  }
  for (const auto& seg : alignment.segments) {
    std::vector<int> dwell(model.topo.num_states(seg.phone), 0);
    for (int t = seg.start_frame; t < seg.end_frame; ++t)
      ++dwell.at(alignment.frames[t].position);
    for (size_t s = 0; s < dwell.size(); ++s) {
      if (dwell[s] == 0) continue;
      stats->self_count[seg.phone][s] += dwell[s] - 1;
      stats->forward_count[seg.phone][s] += 1;
    }
  }
  stats->total_log_like += alignment.total_score;
  stats->num_frames += T;
}

AcousticModel em_update(const AcousticModel& model, const EmStats& stats,
                        const EmUpdateOptions& opts) {
  AcousticModel out = model;
  const VectorD floor = (model.global_var * opts.variance_floor_scale).cwiseMax(1e-20);

  int held = 0;
  for (int i = 0; i < model.num_pdfs(); ++i) {
    const auto& ps = stats.pdf_stats[i];
    auto& g = out.pdfs[i];
    const double occ = ps.occupancy.sum();
    if (occ < opts.min_occupancy) {
      ++held;
      continue;
    }
    for (int m = 0; m < g.num_components(); ++m) {
      if (ps.occupancy[m] < opts.min_occupancy) continue;
      const VectorD mean = ps.mean_acc.row(m) / ps.occupancy[m];
      VectorD var =
          (ps.var_acc.row(m).transpose() / ps.occupancy[m] - mean.cwiseProduct(mean))
              .cwiseMax(floor);
      g.means.row(m) = mean.transpose();
      g.vars.row(m) = var.transpose();
    }
    g.weights = (ps.occupancy / occ).cwiseMax(opts.weight_floor);
    g.weights /= g.weights.sum();
    g.refresh();
  }
  if (held > 0)
    warn("em_update: " + std::to_string(held) + " states had zero occupancy; parameters held");

  for (int p = 0; p < model.num_phones(); ++p) {
    for (int s = 0; s < model.topo.num_states(p); ++s) {
      const double fwd = stats.forward_count[p][s], self = stats.self_count[p][s];
      if (fwd + self <= 0) continue;
      out.topo.forward[p][s] =
          std::clamp(fwd / (fwd + self), opts.transition_floor, 1.0 - opts.transition_floor);
    }
  }
  return out;
}

AcousticModel split_mixtures(const AcousticModel& model, int target_components,
                             const std::vector<double>* pdf_occupancy) {
  AcousticModel out = model;
  double total_occ = 0;
  if (pdf_occupancy) {
    if (static_cast<int>(pdf_occupancy->size()) != model.num_pdfs())
      throw Error("split_mixtures: occupancy size mismatch");
    for (double o : *pdf_occupancy) total_occ += o;
  }

  for (int i = 0; i < model.num_pdfs(); ++i) {
    int target = target_components;
    if (pdf_occupancy && total_occ > 0) {
      // Occupancy-weighted budget, at least one component per state.
      const double share = (*pdf_occupancy)[i] / total_occ * target_components * model.num_pdfs();
      target = std::max(1, static_cast<int>(std::lround(share)));
    }
    auto& g = out.pdfs[i];
    if (target < g.num_components()) continue;
    while (g.num_components() < target) {
      int heaviest = 0;
      for (int m = 1; m < g.num_components(); ++m)
        if (g.weights[m] > g.weights[heaviest]) heaviest = m;
      const int m = g.num_components();
      g.weights.conservativeResize(m + 1);
      g.means.conservativeResize(m + 1, Eigen::NoChange);
      g.vars.conservativeResize(m + 1, Eigen::NoChange);
      const VectorD sigma = g.vars.row(heaviest).cwiseSqrt();
      g.weights[heaviest] *= 0.5;
      g.weights[m] = g.weights[heaviest];
      g.means.row(m) = g.means.row(heaviest) - 0.1 * sigma.transpose();
      g.means.row(heaviest) += 0.1 * sigma.transpose();
      g.vars.row(m) = g.vars.row(heaviest);
    }
    g.refresh();
  }
  return out;
}

AcousticModel scale_self_loops(const AcousticModel& model, double r, bool vowels_only) {
  if (r <= 0) throw Error("scale_self_loops: r must be positive");
  if (r > 1) warn("scale_self_loops: r > 1 shortens vowel dwell");
  AcousticModel out = model;
  for (int p = 0; p < model.num_phones(); ++p) {
    const auto& phone = model.phones[p];
    if (phone.is_silence) continue;
    if (vowels_only && !phone.is_vowel) continue;
    for (auto& fwd : out.topo.forward[p]) {
      const double scaled = r * fwd;
      if (scaled >= 1.0)
        throw Error("scale_self_loops: r*p >= 1 for phone '" + phone.symbol + "'");
      fwd = scaled;
    }
  }
  return out;
}

// --------------------------------------------------------------- file IO ---

namespace {

void write_bytes(std::ostream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::istream& in, void* p, size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw Error("model file truncated");
}

void write_vec(std::ostream& out, const VectorD& v) {
  const int64_t n = v.size();
  write_bytes(out, &n, sizeof(n));
  write_bytes(out, v.data(), sizeof(double) * n);
}

VectorD read_vec(std::istream& in) {
  int64_t n = 0;
  read_bytes(in, &n, sizeof(n));
  VectorD v(n);
  read_bytes(in, v.data(), sizeof(double) * n);
  return v;
}

void write_mat(std::ostream& out, const MatrixD& m) {
  const int64_t r = m.rows(), c = m.cols();
  write_bytes(out, &r, sizeof(r));
  write_bytes(out, &c, sizeof(c));
  for (int64_t i = 0; i < r; ++i)
    write_bytes(out, m.row(i).eval().data(), sizeof(double) * c);
}

MatrixD read_mat(std::istream& in) {
  int64_t r = 0, c = 0;
  read_bytes(in, &r, sizeof(r));
  read_bytes(in, &c, sizeof(c));
  MatrixD m(r, c);
  std::vector<double> row(c);
  for (int64_t i = 0; i < r; ++i) {
    read_bytes(in, row.data(), sizeof(double) * c);
    for (int64_t j = 0; j < c; ++j) m(i, j) = row[j];
  }
  return m;
}

}  // namespace

void save_model(const AcousticModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model: " + path);
  out << "SINGALIGN_AM v1\n";
  out << "phone_table " << to_hex(phone_table_hash(model.phones)) << "\n";
  out << "context " << (model.context == ContextMode::monophone ? "monophone" : "triphone")
      << "\n";
  out << "dim " << model.dim << "\n";
  out << "binary\n";

  const int32_t num_phones = model.num_phones();
  write_bytes(out, &num_phones, sizeof(num_phones));
  for (const auto& p : model.phones) {
    const int32_t len = static_cast<int32_t>(p.symbol.size());
    write_bytes(out, &len, sizeof(len));
    write_bytes(out, p.symbol.data(), len);
    const uint8_t flags = (p.is_vowel ? 1 : 0) | (p.is_silence ? 2 : 0);
    write_bytes(out, &flags, 1);
  }
  for (int p = 0; p < num_phones; ++p) {
    VectorD fwd = Eigen::Map<const VectorD>(model.topo.forward[p].data(),
                                            model.topo.forward[p].size());
    write_vec(out, fwd);
  }
  for (int p = 0; p < num_phones; ++p) {
    const int32_t base = model.mono_pdf_base[p];
    write_bytes(out, &base, sizeof(base));
  }
  write_vec(out, model.global_var);

  const int32_t num_pdfs = model.num_pdfs();
  write_bytes(out, &num_pdfs, sizeof(num_pdfs));
  for (const auto& g : model.pdfs) {
    write_vec(out, g.weights);
    write_mat(out, g.means);
    write_mat(out, g.vars);
  }

  const int32_t num_questions = static_cast<int32_t>(model.tree.questions.size());
  write_bytes(out, &num_questions, sizeof(num_questions));
  for (const auto& q : model.tree.questions) {
    const int32_t n = static_cast<int32_t>(q.size());
    write_bytes(out, &n, sizeof(n));
    write_bytes(out, q.data(), sizeof(int) * q.size());
  }
  const int32_t num_nodes = static_cast<int32_t>(model.tree.nodes.size());
  write_bytes(out, &num_nodes, sizeof(num_nodes));
  for (const auto& n : model.tree.nodes) {
    write_bytes(out, &n.question, sizeof(int));
    const uint8_t left = n.on_left_context ? 1 : 0;
    write_bytes(out, &left, 1);
    write_bytes(out, &n.yes_child, sizeof(int));
    write_bytes(out, &n.no_child, sizeof(int));
    write_bytes(out, &n.leaf_pdf, sizeof(int));
  }
  const int32_t num_roots = static_cast<int32_t>(model.tree.roots.size());
  write_bytes(out, &num_roots, sizeof(num_roots));
  for (const auto& [key, node] : model.tree.roots) {
    write_bytes(out, &key.first, sizeof(int));
    write_bytes(out, &key.second, sizeof(int));
    write_bytes(out, &node, sizeof(int));
  }
  if (!out) throw Error("failed writing model: " + path);
}

AcousticModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "SINGALIGN_AM v1")
    throw Error("not a model file (bad magic): " + path);

  AcousticModel model;
  while (std::getline(in, line) && line != "binary") {
    std::istringstream ls(line);
    std::string key, value;
    ls >> key >> value;
    if (key == "context") {
      model.context = value == "triphone" ? ContextMode::triphone : ContextMode::monophone;
    } else if (key == "dim") {
      model.dim = std::stoi(value);
    }
  }

  int32_t num_phones = 0;
  read_bytes(in, &num_phones, sizeof(num_phones));
  model.phones.resize(num_phones);
  for (auto& p : model.phones) {
    int32_t len = 0;
    read_bytes(in, &len, sizeof(len));
    p.symbol.resize(len);
    read_bytes(in, p.symbol.data(), len);
    uint8_t flags = 0;
    read_bytes(in, &flags, 1);
    p.is_vowel = flags & 1;
    p.is_silence = flags & 2;
  }
  model.topo.forward.resize(num_phones);
  for (int p = 0; p < num_phones; ++p) {
    VectorD fwd = read_vec(in);
    model.topo.forward[p].assign(fwd.data(), fwd.data() + fwd.size());
  }
  model.mono_pdf_base.resize(num_phones);
  for (int p = 0; p < num_phones; ++p) read_bytes(in, &model.mono_pdf_base[p], sizeof(int32_t));
  model.global_var = read_vec(in);

  int32_t num_pdfs = 0;
  read_bytes(in, &num_pdfs, sizeof(num_pdfs));
  model.pdfs.resize(num_pdfs);
  for (auto& g : model.pdfs) {
    g.weights = read_vec(in);
    g.means = read_mat(in);
    g.vars = read_mat(in);
    g.refresh();
  }

  int32_t num_questions = 0;
  read_bytes(in, &num_questions, sizeof(num_questions));
  model.tree.questions.resize(num_questions);
  for (auto& q : model.tree.questions) {
    int32_t n = 0;
    read_bytes(in, &n, sizeof(n));
    q.resize(n);
    read_bytes(in, q.data(), sizeof(int) * n);
  }
  int32_t num_nodes = 0;
  read_bytes(in, &num_nodes, sizeof(num_nodes));
  model.tree.nodes.resize(num_nodes);
  for (auto& n : model.tree.nodes) {
    read_bytes(in, &n.question, sizeof(int));
    uint8_t left = 0;
    read_bytes(in, &left, 1);
    n.on_left_context = left != 0;
    read_bytes(in, &n.yes_child, sizeof(int));
    read_bytes(in, &n.no_child, sizeof(int));
    read_bytes(in, &n.leaf_pdf, sizeof(int));
  }
  int32_t num_roots = 0;
  read_bytes(in, &num_roots, sizeof(num_roots));
  for (int i = 0; i < num_roots; ++i) {
    std::pair<int, int> key;
    int node = 0;
    read_bytes(in, &key.first, sizeof(int));
    read_bytes(in, &key.second, sizeof(int));
    read_bytes(in, &node, sizeof(int));
    model.tree.roots[key] = node;
  }
  return model;
}

std::string dump_model_text(const AcousticModel& model) {
  std::ostringstream out;
  out << "context " << (model.context == ContextMode::monophone ? "monophone" : "triphone")
      << "\ndim " << model.dim << "\nphones " << model.num_phones() << "\npdfs "
      << model.num_pdfs() << "\n";
  for (int p = 0; p < model.num_phones(); ++p) {
    out << "phone " << model.phones[p].symbol
        << (model.phones[p].is_vowel ? " vowel" : model.phones[p].is_silence ? " silence"
                                                                             : " consonant")
        << " forward";
    for (double f : model.topo.forward[p]) out << ' ' << f;
    out << '\n';
  }
  for (int i = 0; i < model.num_pdfs(); ++i) {
    const auto& g = model.pdfs[i];
    out << "pdf " << i << " components " << g.num_components() << '\n';
    for (int m = 0; m < g.num_components(); ++m) {
      out << "  w " << g.weights[m] << " mean";
      for (int dd = 0; dd < g.dim(); ++dd) out << ' ' << g.means(m, dd);
      out << " var";
      for (int dd = 0; dd < g.dim(); ++dd) out << ' ' << g.vars(m, dd);
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace singalign
