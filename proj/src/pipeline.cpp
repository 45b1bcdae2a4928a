#include "singalign/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "singalign/am.hpp"
#include "singalign/decoder.hpp"
#include "singalign/featio.hpp"
#include "singalign/graph.hpp"
#include "singalign/lexicon.hpp"
#include "singalign/lm.hpp"
#include "singalign/score.hpp"
#include "singalign/tree.hpp"
#include "singalign/wav.hpp"

namespace fs = std::filesystem;

namespace singalign {

// ---------------------------------------------------------------- config ---

std::string StageSpec::get(const std::string& key, const std::string& fallback) const {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

double StageSpec::get_num(const std::string& key, double fallback) const {
  auto it = params.find(key);
  return it == params.end() ? fallback : std::stod(it->second);
}

double StageSpec::require_num(const std::string& key) const {
  auto it = params.find(key);
  if (it == params.end())
    throw Error("stage '" + name + "' requires parameter '" + key + "'");
  return std::stod(it->second);
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config: " + path);
  ExperimentConfig cfg;
  cfg.jobs = default_jobs();
  bool have_seed = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "stage") {
      StageSpec stage;
      stage.raw = line;
      if (!(ls >> stage.name))
        throw ValidationError("config: stage line without a name at line " + std::to_string(lineno));
      std::string kv;
      while (ls >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
          throw ValidationError("config: stage parameter '" + kv + "' is not key=value at line " +
                      std::to_string(lineno));
        stage.params[kv.substr(0, eq)] = kv.substr(eq + 1);
      }
      cfg.stages.push_back(std::move(stage));
    } else {
      std::string value;
      std::getline(ls, value);
      const auto start = value.find_first_not_of(" \t");
      value = start == std::string::npos ? "" : value.substr(start);
      if (key == "seed") {
        cfg.seed = std::stoull(value);
        have_seed = true;
      } else if (key == "manifest") {
        cfg.manifest_path = value;
      } else if (key == "lexicon") {
        cfg.lexicon_path = value;
      } else if (key == "phones") {
        cfg.phones_path = value;
      } else if (key == "lm_corpus") {
        cfg.lm_corpus_path = value;
      } else if (key == "outdir") {
        cfg.outdir = value;
      } else if (key == "jobs") {
        cfg.jobs = std::stoi(value);
      } else {
        throw ValidationError("config: unknown key '" + key + "' at line " + std::to_string(lineno));
      }
    }
  }
  if (!have_seed) throw ValidationError("config: 'seed' is required");
  if (cfg.manifest_path.empty()) throw ValidationError("config: 'manifest' is required");
  if (cfg.lexicon_path.empty()) throw ValidationError("config: 'lexicon' is required");
  if (cfg.phones_path.empty()) throw ValidationError("config: 'phones' is required");
  if (cfg.outdir.empty()) throw ValidationError("config: 'outdir' is required");
  return cfg;
}

void validate_pipeline(const ExperimentConfig& cfg) {
  static const std::set<std::string> known = {
      "augment",   "features",       "deltas",           "splice", "train_mono",
      "realign",   "train_tri",      "mixup",            "fmllr",  "sat",
      "train_lm",  "extend_lexicon", "scale_self_loops", "decode", "score"};
  bool features = false, model = false, alignments = false, lm = false, hyp = false;
  for (size_t i = 0; i < cfg.stages.size(); ++i) {
    const auto& s = cfg.stages[i];
    const std::string where = "stage " + std::to_string(i + 1) + " (" + s.name + ")";
    if (!known.count(s.name)) throw ValidationError(where + ": unknown stage name");
    auto need = [&](bool ok, const std::string& what) {
      if (!ok) throw ValidationError(where + ": requires " + what + " from an earlier stage");
    };
    if (s.name == "augment") {
      if (features) throw ValidationError(where + ": augment must precede feature extraction");
    } else if (s.name == "features") {
      features = true;
    } else if (s.name == "deltas" || s.name == "splice") {
      need(features, "features");
    } else if (s.name == "train_mono") {
      need(features, "features");
      model = true;
      alignments = true;
    } else if (s.name == "realign") {
      need(model, "a trained model");
      alignments = true;
    } else if (s.name == "train_tri" || s.name == "mixup") {
      need(model, "a trained model");
      need(alignments, "alignments");
    } else if (s.name == "fmllr" || s.name == "sat") {
      need(model, "a trained model");
      need(alignments, "alignments");
    } else if (s.name == "train_lm") {
      if (cfg.lm_corpus_path.empty()) throw ValidationError(where + ": config lacks lm_corpus");
      lm = true;
    } else if (s.name == "extend_lexicon" || s.name == "scale_self_loops") {
      if (s.name == "scale_self_loops") need(model, "a trained model");
    } else if (s.name == "decode") {
      need(model, "a trained model");
      need(lm, "a language model (train_lm)");
      need(features, "features");
      if (!s.has("beam") || !s.has("max_active"))
        throw ValidationError(where + ": beam and max_active are required");
      hyp = true;
    } else if (s.name == "score") {
      need(hyp, "a decode stage");
    }
  }
}

// ------------------------------------------------------------- utilities ---

int default_jobs() {
  const char* env = std::getenv("SINGALIGN_JOBS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return n > 0 ? n : 1;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  for (int w = 0; w < jobs; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

std::string format_factor(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", alpha);
  return buf;
}

std::string format_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

CorpusManifest augment_corpus(const CorpusManifest& manifest, const std::vector<double>& factors,
                              const std::string& wav_dir) {
  for (size_t i = 0; i < factors.size(); ++i) {
    if (factors[i] <= 0) throw Error("augment_corpus: factors must be positive");
    for (size_t j = i + 1; j < factors.size(); ++j)
      if (factors[i] == factors[j])
        throw Error("augment_corpus: duplicate factor " + format_factor(factors[i]));
  }
  fs::create_directories(wav_dir);

  CorpusManifest out = manifest;
  for (double alpha : factors) {
    if (alpha == 1.0) continue;
    const std::string suffix = "#sp" + format_factor(alpha);
    for (const auto& f : manifest.fragments) {
      if (f.split != Split::train) continue;
      const Waveform w = read_wav(f.audio_path);
      const Waveform perturbed = speed_perturb(w, alpha);
      FragmentMeta copy = f;
      copy.fragment_id = f.fragment_id + suffix;
      copy.audio_path = (fs::path(wav_dir) / (copy.fragment_id + ".wav")).string();
      copy.duration = perturbed.duration();
      write_wav(perturbed, copy.audio_path);
      out.fragments.push_back(std::move(copy));
    }
  }
  check_manifest(out);
  return out;
}

// ---------------------------------------------------- alignment archives ---

namespace {

void save_alignments(const std::map<std::string, AlignmentResult>& alignments,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write alignments: " + path);
  out << "SINGALIGN_ALI v1\n";
  const int32_t count = static_cast<int32_t>(alignments.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& [key, ali] : alignments) {
    const int32_t klen = static_cast<int32_t>(key.size());
    out.write(reinterpret_cast<const char*>(&klen), sizeof(klen));
    out.write(key.data(), klen);
    const int32_t frames = static_cast<int32_t>(ali.frames.size());
    out.write(reinterpret_cast<const char*>(&frames), sizeof(frames));
    for (const auto& f : ali.frames) {
      out.write(reinterpret_cast<const char*>(&f.pdf), sizeof(int));
      out.write(reinterpret_cast<const char*>(&f.phone), sizeof(int));
      out.write(reinterpret_cast<const char*>(&f.position), sizeof(int));
    }
    const int32_t segs = static_cast<int32_t>(ali.segments.size());
    out.write(reinterpret_cast<const char*>(&segs), sizeof(segs));
    for (const auto& s : ali.segments) {
      out.write(reinterpret_cast<const char*>(&s.phone), sizeof(int));
      out.write(reinterpret_cast<const char*>(&s.start_frame), sizeof(int));
      out.write(reinterpret_cast<const char*>(&s.end_frame), sizeof(int));
    }
    out.write(reinterpret_cast<const char*>(&ali.total_score), sizeof(double));
  }
}

std::map<std::string, AlignmentResult> load_alignments(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open alignments: " + path);
  std::string line;
  std::getline(in, line);
  if (line != "SINGALIGN_ALI v1") throw Error("not an alignment archive: " + path);
  std::map<std::string, AlignmentResult> alignments;
  int32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  for (int i = 0; i < count; ++i) {
    int32_t klen = 0;
    in.read(reinterpret_cast<char*>(&klen), sizeof(klen));
    std::string key(klen, '\0');
    in.read(key.data(), klen);
    AlignmentResult ali;
    int32_t frames = 0;
    in.read(reinterpret_cast<char*>(&frames), sizeof(frames));
    ali.frames.resize(frames);
    for (auto& f : ali.frames) {
      in.read(reinterpret_cast<char*>(&f.pdf), sizeof(int));
      in.read(reinterpret_cast<char*>(&f.phone), sizeof(int));
      in.read(reinterpret_cast<char*>(&f.position), sizeof(int));
    }
    int32_t segs = 0;
    in.read(reinterpret_cast<char*>(&segs), sizeof(segs));
    ali.segments.resize(segs);
    for (auto& s : ali.segments) {
      in.read(reinterpret_cast<char*>(&s.phone), sizeof(int));
      in.read(reinterpret_cast<char*>(&s.start_frame), sizeof(int));
      in.read(reinterpret_cast<char*>(&s.end_frame), sizeof(int));
    }
    in.read(reinterpret_cast<char*>(&ali.total_score), sizeof(double));
    alignments.emplace(std::move(key), std::move(ali));
  }
  if (!in) throw Error("alignment archive truncated: " + path);
  return alignments;
}

// --------------------------------------------------------------- context ---

struct Ctx {
  ExperimentConfig cfg;
  uint64_t chain_hash = 0;

  CorpusManifest manifest;
  std::map<std::string, FeatureMatrix> features;
  Lexicon base_lexicon;  // as loaded; PER references always use this
  Lexicon lexicon;
  NgramModel lm;
  bool has_lm = false;
  AcousticModel model;
  bool has_model = false;
  std::map<std::string, AlignmentResult> alignments;
  std::map<std::string, FmllrTransform> transforms;
  std::string hyp_path, phones_path_out;
  std::vector<std::array<std::string, 3>> result_rows;  // label, WER, PER

  std::vector<const FragmentMeta*> train() const {
    return manifest.split_fragments(Split::train);
  }
  std::vector<const FragmentMeta*> test() const { return manifest.split_fragments(Split::test); }
};

struct StageIo {
  fs::path dir;
  std::vector<std::pair<std::string, std::string>> artifacts;  // name, path

  std::string path(const std::string& name) {
    artifacts.emplace_back(name, (dir / name).string());
    return (dir / name).string();
  }
};

void write_feature_archive(const Ctx& ctx, const std::string& path) {
  FeatureArchiveWriter writer(path);
  for (const auto& f : ctx.manifest.fragments) writer.write(f.fragment_id, ctx.features.at(f.fragment_id));
}

void load_feature_archive(Ctx* ctx, const std::string& path) {
  FeatureArchiveReader reader(path);
  ctx->features.clear();
  for (const auto& key : reader.keys()) ctx->features[key] = reader.read(key);
}

// Forced alignment of every training fragment under the current model.
std::map<std::string, AlignmentResult> align_train(const Ctx& ctx) {
  const auto frags = ctx.train();
  std::vector<AlignmentResult> results(frags.size());
  parallel_for(static_cast<int>(frags.size()), ctx.cfg.jobs, [&](int i) {
    results[i] = align_transcript(frags[i]->transcript, ctx.lexicon, ctx.model,
                                  ctx.features.at(frags[i]->fragment_id));
  });
  std::map<std::string, AlignmentResult> out;
  for (size_t i = 0; i < frags.size(); ++i)
    out.emplace(frags[i]->fragment_id, std::move(results[i]));
  return out;
}

// One Viterbi-EM generation: realign, accumulate, update. Returns the input
// model's training log-likelihood.
double em_generation(Ctx* ctx, const EmUpdateOptions& opts) {
  ctx->alignments = align_train(*ctx);
  EmStats stats;
  stats.init(ctx->model);
  for (const auto& [key, ali] : ctx->alignments)
    accumulate_em_stats(ctx->model, ctx->features.at(key), ali, &stats);
  ctx->model = em_update(ctx->model, stats, opts);
  return stats.total_log_like;
}

std::vector<double> train_generations(Ctx* ctx, int iters) {
  std::vector<double> trace;
  EmUpdateOptions opts;
  for (int i = 0; i < iters; ++i) trace.push_back(em_generation(ctx, opts));
  return trace;
}

void write_loglike_trace(const std::vector<double>& trace, const std::string& path) {
  std::ofstream out(path);
  out.precision(10);
  for (size_t i = 0; i < trace.size(); ++i) out << i << '\t' << trace[i] << '\n';
}

// PER-convention phone string: silences dropped, doubled vowels collapsed.
std::vector<std::string> per_phone_tokens(const Lexicon& lex, const std::vector<int>& phones) {
  std::vector<int> no_sil;
  for (int p : phones)
    if (!lex.phone(p).is_silence) no_sil.push_back(p);
  const Pronunciation collapsed = collapse_doubled_vowels(lex, no_sil);
  std::vector<std::string> out;
  for (int p : collapsed) out.push_back(lex.phone(p).symbol);
  return out;
}

std::vector<std::string> reference_phones(const Lexicon& base_lex,
                                          const std::vector<std::string>& transcript) {
  std::vector<std::string> out;
  for (const auto& w : transcript) {
    auto it = base_lex.entries.find(w);
    if (it == base_lex.entries.end()) continue;  // unscorable word
    for (int p : it->second.front()) out.push_back(base_lex.phone(p).symbol);
  }
  return out;
}

// ---------------------------------------------------------------- stages ---

void stage_augment(Ctx* ctx, const StageSpec& spec, StageIo* io) {
  std::vector<double> factors;
  std::istringstream fs_list(spec.get("factors", ""));
  std::string tok;
  while (std::getline(fs_list, tok, ',')) factors.push_back(std::stod(tok));
  ctx->manifest = augment_corpus(ctx->manifest, factors, (io->dir / "wav").string());
  save_manifest(ctx->manifest, io->path("manifest.tsv"));
}

void load_augment(Ctx* ctx, StageIo* io) {
  ctx->manifest = load_manifest(io->path("manifest.tsv"));
}

void stage_features(Ctx* ctx, const StageSpec& spec, StageIo* io) {
  MfccConfig mfcc;
  mfcc.num_ceps = static_cast<int>(spec.get_num("ceps", 13));
  mfcc.num_mel = static_cast<int>(spec.get_num("mel", 23));
  mfcc.window_s = spec.get_num("window", 0.025);
  mfcc.shift_s = spec.get_num("shift", 0.010);
  mfcc.use_energy = spec.get("energy", "true") == "true";
  const std::string cmvn_mode = spec.get("cmvn", "utterance");

  const auto& frags = ctx->manifest.fragments;
  std::vector<FeatureMatrix> raw(frags.size());
  parallel_for(static_cast<int>(frags.size()), ctx->cfg.jobs, [&](int i) {
    raw[i] = compute_mfcc(read_wav(frags[i].audio_path), mfcc);
  });

  ctx->features.clear();
  if (cmvn_mode == "singer") {
    std::map<std::string, CmvnStats> by_singer;
    for (size_t i = 0; i < frags.size(); ++i)
      by_singer[frags[i].singer_id].accumulate(raw[i].frames);
    for (size_t i = 0; i < frags.size(); ++i)
      ctx->features[frags[i].fragment_id] =
          apply_cmvn(raw[i], by_singer.at(frags[i].singer_id));
  } else {
    for (size_t i = 0; i < frags.size(); ++i) {
      CmvnStats stats;
      stats.accumulate(raw[i].frames);
      ctx->features[frags[i].fragment_id] = apply_cmvn(raw[i], stats);
    }
  }
  write_feature_archive(*ctx, io->path("feats.ark"));
  io->artifacts.emplace_back("feats.ark.idx", (io->dir / "feats.ark.idx").string());
}

void stage_deltas(Ctx* ctx, const StageSpec& spec, StageIo* io) {
  const int window = static_cast<int>(spec.get_num("window", 2));
  for (auto& [key, f] : ctx->features) f = add_deltas(f, window);
  write_feature_archive(*ctx, io->path("feats.ark"));
  io->artifacts.emplace_back("feats.ark.idx", (io->dir / "feats.ark.idx").string());
}

void stage_splice(Ctx* ctx, const StageSpec& spec, StageIo* io) {
  const int left = static_cast<int>(spec.get_num("left", 4));
  const int right = static_cast<int>(spec.get_num("right", 4));
  for (auto& [key, f] : ctx->features) f = splice(f, left, right);
  write_feature_archive(*ctx, io->path("feats.ark"));
  io->artifacts.emplace_back("feats.ark.idx", (io->dir / "feats.ark.idx").string());
}

void load_features_stage(Ctx* ctx, StageIo* io) {
  load_feature_archive(ctx, io->path("feats.ark"));
  io->artifacts.emplace_back("feats.ark.idx", (io->dir / "feats.ark.idx").string());
}

void stage_train_mono(Ctx* ctx, const StageSpec& spec, StageIo* io) {
  const int iters = static_cast<int>(spec.get_num("iters", 10));
  const int states = static_cast<int>(spec.get_num("states", 3));
  const int sil_states = static_cast<int>(spec.get_num("sil_states", 5));
  std::vector<const FeatureMatrix*> sample;
  for (const auto* f : ctx->train()) sample.push_back(&ctx->features.at(f->fragment_id));
  ctx->model = flat_start(ctx->lexicon.phones, sample, states, sil_states);
  ctx->has_model = true;
  write_loglike_trace(train_generations(ctx, iters), io->path("loglike.txt"));
  save_model(ctx->model, io->path("model.bin"));
  save_alignments(ctx->alignments, io->path("alignments.bin"));
}

void stage_realign(Ctx* ctx, const StageSpec&, StageIo* io) {
  ctx->alignments = align_train(*ctx);
  save_alignments(ctx->alignments, io->path("alignments.bin"));
}

void stage_train_tri(Ctx* ctx, const StageSpec& spec, StageIo* io) {
  const int leaves = static_cast<int>(spec.get_num("leaves", 200));
  const int iters = static_cast<int>(spec.get_num("iters", 10));
  std::vector<const FeatureMatrix*> feats;
  std::vector<const AlignmentResult*> alis;
  for (const auto* f : ctx->train()) {
    feats.push_back(&ctx->features.at(f->fragment_id));
    alis.push_back(&ctx->alignments.at(f->fragment_id));
  }
  TreeBuildOptions opts;
  opts.max_leaves = leaves;
  ctx->model = build_triphone_tying(ctx->model, feats, alis, auto_questions(ctx->model), opts);
  write_loglike_trace(train_generations(ctx, iters), io->path("loglike.txt"));
  save_model(ctx->model, io->path("model.bin"));
  save_alignments(ctx->alignments, io->path("alignments.bin"));
}

void stage_mixup(Ctx* ctx, const StageSpec& spec, StageIo* io) {
  const int target = static_cast<int>(spec.require_num("target"));
  const int iters = static_cast<int>(spec.get_num("iters", 5));
  std::vector<double> occupancy(ctx->model.num_pdfs(), 0.0);
  for (const auto& [key, ali] : ctx->alignments) {
    (void)key;
    for (const auto& f : ali.frames) occupancy[f.pdf] += 1.0;
  }
  ctx->model = split_mixtures(ctx->model, target, &occupancy);
  write_loglike_trace(train_generations(ctx, iters), io->path("loglike.txt"));
  save_model(ctx->model, io->path("model.bin"));
  save_alignments(ctx->alignments, io->path("alignments.bin"));
}

void load_model_stage(Ctx* ctx, StageIo* io, bool with_alignments) {
  ctx->model = load_model(io->path("model.bin"));
  ctx->has_model = true;
  if (with_alignments) ctx->alignments = load_alignments(io->path("alignments.bin"));
}

void stage_fmllr(Ctx* ctx, const StageSpec& spec, StageIo* io) {
  const AdaptationLevel level = parse_adaptation_level(spec.get("level", "fragment"));
  FmllrOptions opts;
  opts.min_occupancy = spec.get_num("min_occupancy", 200.0);

  CorpusManifest train_manifest;
  train_manifest.sample_rate = ctx->manifest.sample_rate;
  for (const auto* f : ctx->train()) train_manifest.fragments.push_back(*f);
  const auto groups = group_fragments(train_manifest, level);

  std::map<std::string, FmllrStats> stats;
  std::map<std::string, std::string> frag_group;
  for (const auto& [group, ids] : groups)
    for (const auto& id : ids) {
      frag_group[id] = group;
      accumulate_fmllr_stats(ctx->model, ctx->features.at(id), ctx->alignments.at(id),
                             &stats[group]);
    }
  ctx->transforms.clear();
  for (auto& [group, st] : stats) {
    FmllrTransform t = estimate_fmllr(st, opts);
    t.group = group;
    ctx->transforms[group] = std::move(t);
  }
  for (const auto& [id, group] : frag_group)
    ctx->features[id] = apply_fmllr(ctx->transforms.at(group), ctx->features.at(id));

  save_transforms(ctx->transforms, io->path("trans.txt"));
  write_feature_archive(*ctx, io->path("feats.ark"));
  io->artifacts.emplace_back("feats.ark.idx", (io->dir / "feats.ark.idx").string());
}

void load_fmllr(Ctx* ctx, StageIo* io) {
  ctx->transforms = load_transforms(io->path("trans.txt"));
  load_feature_archive(ctx, io->path("feats.ark"));
  io->artifacts.emplace_back("feats.ark.idx", (io->dir / "feats.ark.idx").string());
}

void stage_sat(Ctx* ctx, const StageSpec& spec, StageIo* io) {
  const int rounds = static_cast<int>(spec.get_num("rounds", 2));
  const AdaptationLevel level = parse_adaptation_level(spec.get("level", "fragment"));

  CorpusManifest train_manifest;
  train_manifest.sample_rate = ctx->manifest.sample_rate;
  for (const auto* f : ctx->train()) train_manifest.fragments.push_back(*f);
  const auto groups = group_fragments(train_manifest, level);
  std::map<std::string, std::string> frag_group;
  for (const auto& [group, ids] : groups)
    for (const auto& id : ids) frag_group[id] = group;

  std::vector<FeatureMatrix> feats;
  std::vector<std::vector<std::string>> transcripts;
  std::vector<std::string> keys;
  for (const auto* f : ctx->train()) {
    feats.push_back(ctx->features.at(f->fragment_id));
    transcripts.push_back(f->transcript);
    keys.push_back(frag_group.at(f->fragment_id));
  }
  SatOptions opts;
  opts.rounds = rounds;
  SatResult result = sat_retrain(ctx->model, feats, transcripts, keys, ctx->lexicon, opts);
  ctx->model = result.model;
  ctx->transforms = result.transforms;
  for (const auto* f : ctx->train())
    ctx->features[f->fragment_id] = apply_fmllr(
        ctx->transforms.at(frag_group.at(f->fragment_id)), ctx->features.at(f->fragment_id));
  ctx->alignments = align_train(*ctx);

  write_loglike_trace(result.round_log_likes, io->path("loglike.txt"));
  save_model(ctx->model, io->path("model.bin"));
  save_transforms(ctx->transforms, io->path("trans.txt"));
  write_feature_archive(*ctx, io->path("feats.ark"));
  io->artifacts.emplace_back("feats.ark.idx", (io->dir / "feats.ark.idx").string());
  save_alignments(ctx->alignments, io->path("alignments.bin"));
}

void load_sat(Ctx* ctx, StageIo* io) {
  ctx->model = load_model(io->path("model.bin"));
  ctx->has_model = true;
  ctx->transforms = load_transforms(io->path("trans.txt"));
  load_feature_archive(ctx, io->path("feats.ark"));
  io->artifacts.emplace_back("feats.ark.idx", (io->dir / "feats.ark.idx").string());
  ctx->alignments = load_alignments(io->path("alignments.bin"));
}

void stage_train_lm(Ctx* ctx, const StageSpec& spec, StageIo* io) {
  std::ifstream raw(ctx->cfg.lm_corpus_path);
  if (!raw) throw Error("cannot open lm_corpus: " + ctx->cfg.lm_corpus_path);
  const TextCorpus corpus = normalize_lyrics(raw, {}, ctx->cfg.lm_corpus_path);
  ctx->lm = train_trigram(corpus);
  const double threshold = spec.get_num("prune", 0.0);
  if (threshold > 0) ctx->lm = prune(ctx->lm, threshold);
  ctx->has_lm = true;
  write_arpa(ctx->lm, io->path("lm.arpa"));
}

void load_train_lm(Ctx* ctx, StageIo* io) {
  ctx->lm = read_arpa(io->path("lm.arpa"));
  ctx->has_lm = true;
}

void stage_extend_lexicon(Ctx* ctx, const StageSpec& spec, StageIo* io) {
  const int max_vowels = static_cast<int>(spec.get_num("max_vowels", 3));
  ctx->lexicon = extend_prolonged_vowels(ctx->lexicon, max_vowels);
  save_lexicon(ctx->lexicon, io->path("lexicon.txt"));
}

void load_extend_lexicon(Ctx* ctx, StageIo* io) {
  ctx->lexicon = load_lexicon(io->path("lexicon.txt"), ctx->cfg.phones_path);
}

void stage_scale_self_loops(Ctx* ctx, const StageSpec& spec, StageIo* io) {
  const double r = spec.require_num("r");
  ctx->model = scale_self_loops(ctx->model, r, spec.get("vowels_only", "true") == "true");
  save_model(ctx->model, io->path("model.bin"));
}

void stage_decode(Ctx* ctx, const StageSpec& spec, StageIo* io) {
  DecodeConfig dc;
  dc.beam = spec.require_num("beam");
  dc.max_active = static_cast<int>(spec.require_num("max_active"));
  dc.acoustic_scale = spec.get_num("acoustic_scale", 0.1);
  const std::string adapt = spec.get("adapt", "");
  const bool oracle = spec.get("oracle", "false") == "true";

  const DecodingGraph graph = build_decode_graph(ctx->lexicon, ctx->lm, ctx->model);
  const auto frags = ctx->test();

  auto decode_all = [&](const std::map<std::string, FmllrTransform>* transforms,
                        const std::map<std::string, std::string>* frag_group) {
    std::vector<Hypothesis> hyps(frags.size());
    parallel_for(static_cast<int>(frags.size()), ctx->cfg.jobs, [&](int i) {
      FeatureMatrix f = ctx->features.at(frags[i]->fragment_id);
      if (transforms)
        f = apply_fmllr(transforms->at(frag_group->at(frags[i]->fragment_id)), f);
      hyps[i] = decode(graph, f, ctx->model, dc);
    });
    return hyps;
  };

  std::vector<Hypothesis> hyps = decode_all(nullptr, nullptr);

  if (!adapt.empty()) {
    const AdaptationLevel level = parse_adaptation_level(adapt);
    CorpusManifest test_manifest;
    test_manifest.sample_rate = ctx->manifest.sample_rate;
    for (const auto* f : frags) test_manifest.fragments.push_back(*f);
    const auto groups = group_fragments(test_manifest, level);
    std::map<std::string, std::string> frag_group;
    for (const auto& [group, ids] : groups)
      for (const auto& id : ids) frag_group[id] = group;

    // Supervision: first-pass hypotheses (unsupervised) or reference text.
    std::map<std::string, FmllrStats> stats;
    for (size_t i = 0; i < frags.size(); ++i) {
      const auto& id = frags[i]->fragment_id;
      const std::vector<std::string>& words =
          oracle ? frags[i]->transcript : hyps[i].words;
      if (words.empty()) continue;
      AlignmentResult ali;
      try {
        ali = align_transcript(words, ctx->lexicon, ctx->model, ctx->features.at(id));
      } catch (const Error&) {
        continue;  // unalignable supervision; group falls back toward identity
      }
      accumulate_fmllr_stats(ctx->model, ctx->features.at(id), ali, &stats[frag_group.at(id)]);
    }
    std::map<std::string, FmllrTransform> transforms;
    FmllrOptions fopts;
    fopts.min_occupancy = spec.get_num("min_occupancy", 200.0);
    for (const auto& [group, ids] : groups) {
      auto it = stats.find(group);
      FmllrTransform t = it == stats.end()
                             ? FmllrTransform::identity(ctx->model.dim, group)
                             : estimate_fmllr(it->second, fopts);
      t.group = group;
      transforms[group] = std::move(t);
    }
    save_transforms(transforms, io->path("trans.txt"));
    hyps = decode_all(&transforms, &frag_group);
  }

  std::ofstream hyp_out(io->path("hyp.txt"));
  std::ofstream phones_out(io->path("phones.txt"));
  std::ofstream trace_out(io->path("trace.tsv"));
  for (size_t i = 0; i < frags.size(); ++i) {
    const auto& id = frags[i]->fragment_id;
    hyp_out << id << '\t';
    for (size_t w = 0; w < hyps[i].words.size(); ++w)
      hyp_out << (w ? " " : "") << hyps[i].words[w];
    hyp_out << '\n';

    phones_out << id << '\t';
    const auto tokens = per_phone_tokens(ctx->lexicon, hyps[i].phones);
    for (size_t p = 0; p < tokens.size(); ++p) phones_out << (p ? " " : "") << tokens[p];
    phones_out << '\n';

    const auto& f = ctx->features.at(id);
    for (size_t w = 0; w < hyps[i].words.size(); ++w) {
      const int end = w < hyps[i].word_end_frames.size() ? hyps[i].word_end_frames[w] : -1;
      trace_out << id << '\t' << hyps[i].words[w] << '\t' << end << '\t'
                << (end >= 0 ? end * f.frame_shift : -1.0) << '\n';
    }
    trace_out << id << "\t<scores>\t" << hyps[i].total_score << '\t' << hyps[i].acoustic_score
              << '\t' << hyps[i].lm_score << '\t' << hyps[i].graph_score << '\t'
              << (hyps[i].search_failure ? "FAIL" : "OK") << '\n';
  }
  ctx->hyp_path = (io->dir / "hyp.txt").string();
  ctx->phones_path_out = (io->dir / "phones.txt").string();
}

void load_decode(Ctx* ctx, StageIo* io) {
  ctx->hyp_path = io->path("hyp.txt");
  ctx->phones_path_out = io->path("phones.txt");
  io->artifacts.emplace_back("trace.tsv", (io->dir / "trace.tsv").string());
}

std::map<std::string, std::vector<std::string>> read_keyed_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open hypothesis file: " + path);
  std::map<std::string, std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string id = tab == std::string::npos ? line : line.substr(0, tab);
    std::vector<std::string> tokens;
    if (tab != std::string::npos) {
      std::istringstream ls(line.substr(tab + 1));
      std::string tok;
      while (ls >> tok) tokens.push_back(tok);
    }
    out[id] = std::move(tokens);
  }
  return out;
}

void stage_score(Ctx* ctx, const StageSpec& spec, StageIo* io, const std::string& default_label) {
  const bool per_genre = spec.get("per_genre", "false") == "true";
  const std::string label = spec.get("label", default_label);

  std::map<std::string, std::vector<std::string>> word_refs, phone_refs;
  for (const auto* f : ctx->test()) {
    word_refs[f->fragment_id] = f->transcript;
    phone_refs[f->fragment_id] = reference_phones(ctx->base_lexicon, f->transcript);
  }
  const auto word_hyps = read_keyed_tokens(ctx->hyp_path);
  const auto phone_hyps = read_keyed_tokens(ctx->phones_path_out);

  const EvalReport wer = score_corpus(word_refs, word_hyps, per_genre ? &ctx->manifest : nullptr);
  const EvalReport per = score_corpus(phone_refs, phone_hyps, nullptr);

  std::ofstream out(io->path("score.tsv"));
  out << "label\t" << label << "\n";
  out << "WER\t" << format_pct(wer.error_rate()) << "\n";
  out << "PER\t" << format_pct(per.error_rate()) << "\n";
  out << wer.summary("words") << "\n" << per.summary("phones") << "\n";
  if (per_genre)
    for (const auto& [genre, sub] : wer.by_genre) out << sub.summary("genre:" + genre) << "\n";
  std::ofstream detail(io->path("per_utt.tsv"));
  for (const auto& [id, u] : wer.utterances) {
    detail << id << "\tS=" << u.alignment.substitutions << "\tD=" << u.alignment.deletions
           << "\tI=" << u.alignment.insertions << "\tN=" << u.ref_length << "\n"
           << render_alignment(u.alignment);
  }
  ctx->result_rows.push_back({label, format_pct(wer.error_rate()), format_pct(per.error_rate())});
}

void load_score(Ctx* ctx, StageIo* io) {
  std::ifstream in(io->path("score.tsv"));
  io->artifacts.emplace_back("per_utt.tsv", (io->dir / "per_utt.tsv").string());
  std::string label, wer, per, key;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    ls >> key;
    if (key == "label") ls >> label;
    else if (key == "WER") ls >> wer;
    else if (key == "PER") ls >> per;
  }
  ctx->result_rows.push_back({label, wer, per});
}

// ------------------------------------------------------------- execution ---

uint64_t hash_file_or_die(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw Error(what + " does not exist: " + path);
  return fnv1a64_file(path);
}

}  // namespace

std::string run_pipeline(const std::string& config_path) {
  Ctx ctx;
  ctx.cfg = load_experiment_config(config_path);
  validate_pipeline(ctx.cfg);

  fs::create_directories(ctx.cfg.outdir);

  // Inputs are fingerprinted up front; stage hashes chain from here.
  uint64_t h = fnv1a64("singalign-pipeline-v1");
  h = fnv1a64(std::to_string(ctx.cfg.seed), h);
  h = fnv1a64(to_hex(hash_file_or_die(ctx.cfg.manifest_path, "manifest")), h);
  h = fnv1a64(to_hex(hash_file_or_die(ctx.cfg.lexicon_path, "lexicon")), h);
  h = fnv1a64(to_hex(hash_file_or_die(ctx.cfg.phones_path, "phone table")), h);
  if (!ctx.cfg.lm_corpus_path.empty())
    h = fnv1a64(to_hex(hash_file_or_die(ctx.cfg.lm_corpus_path, "lm corpus")), h);

  ctx.manifest = load_manifest(ctx.cfg.manifest_path);
  for (const auto& w : validate_durations(ctx.manifest, 10.0, 35.0)) warn(w);
  std::vector<std::string> audio_paths;
  for (const auto& f : ctx.manifest.fragments) audio_paths.push_back(f.audio_path);
  std::sort(audio_paths.begin(), audio_paths.end());
  for (const auto& p : audio_paths) h = fnv1a64(to_hex(fnv1a64_file(p)), h);

  ctx.base_lexicon = load_lexicon(ctx.cfg.lexicon_path, ctx.cfg.phones_path);
  ctx.lexicon = ctx.base_lexicon;
  ctx.chain_hash = h;

  int num_decodes = 0;
  for (size_t i = 0; i < ctx.cfg.stages.size(); ++i) {
    const StageSpec& spec = ctx.cfg.stages[i];
    char prefix[16];
    std::snprintf(prefix, sizeof(prefix), "%02zu_", i + 1);
    StageIo io;
    io.dir = fs::path(ctx.cfg.outdir) / (prefix + spec.name);
    fs::create_directories(io.dir);

    ctx.chain_hash = fnv1a64(spec.raw, ctx.chain_hash);
    const std::string stamp = to_hex(ctx.chain_hash);
    const fs::path stamp_path = io.dir / ".stamp";

    bool skip = false;
    if (fs::exists(stamp_path)) {
      std::ifstream sf(stamp_path);
      std::string existing;
      sf >> existing;
      skip = existing == stamp;
    }
    if (spec.name == "decode" || spec.name == "score") ++num_decodes;
    const std::string default_label = "exp" + std::to_string((num_decodes + 1) / 2);

    try {
      if (skip) {
        if (spec.name == "augment") load_augment(&ctx, &io);
        else if (spec.name == "features" || spec.name == "deltas" || spec.name == "splice")
          load_features_stage(&ctx, &io);
        else if (spec.name == "train_mono" || spec.name == "train_tri" || spec.name == "mixup")
          load_model_stage(&ctx, &io, true);
        else if (spec.name == "realign")
          ctx.alignments = load_alignments(io.path("alignments.bin"));
        else if (spec.name == "fmllr") load_fmllr(&ctx, &io);
        else if (spec.name == "sat") load_sat(&ctx, &io);
        else if (spec.name == "train_lm") load_train_lm(&ctx, &io);
        else if (spec.name == "extend_lexicon") load_extend_lexicon(&ctx, &io);
        else if (spec.name == "scale_self_loops") load_model_stage(&ctx, &io, false);
        else if (spec.name == "decode") load_decode(&ctx, &io);
        else if (spec.name == "score") load_score(&ctx, &io);
      } else {
        if (spec.name == "augment") stage_augment(&ctx, spec, &io);
        else if (spec.name == "features") stage_features(&ctx, spec, &io);
        else if (spec.name == "deltas") stage_deltas(&ctx, spec, &io);
        else if (spec.name == "splice") stage_splice(&ctx, spec, &io);
        else if (spec.name == "train_mono") stage_train_mono(&ctx, spec, &io);
        else if (spec.name == "realign") stage_realign(&ctx, spec, &io);
        else if (spec.name == "train_tri") stage_train_tri(&ctx, spec, &io);
        else if (spec.name == "mixup") stage_mixup(&ctx, spec, &io);
        else if (spec.name == "fmllr") stage_fmllr(&ctx, spec, &io);
        else if (spec.name == "sat") stage_sat(&ctx, spec, &io);
        else if (spec.name == "train_lm") stage_train_lm(&ctx, spec, &io);
        else if (spec.name == "extend_lexicon") stage_extend_lexicon(&ctx, spec, &io);
        else if (spec.name == "scale_self_loops") stage_scale_self_loops(&ctx, spec, &io);
        else if (spec.name == "decode") stage_decode(&ctx, spec, &io);
        else if (spec.name == "score") stage_score(&ctx, spec, &io, default_label);

        // Provenance: artifact fingerprints, the producing stage and config.
        std::ofstream hashes(io.dir / "hashes.txt");
        hashes << "# stage " << spec.name << "\n# config " << stamp << "\n";
        for (const auto& [name, path] : io.artifacts)
          if (fs::exists(path)) hashes << name << '\t' << to_hex(fnv1a64_file(path)) << '\n';
        std::ofstream sf(stamp_path);
        sf << stamp << "\n";
      }
    } catch (const std::exception& e) {
      throw Error("stage " + std::to_string(i + 1) + " (" + spec.name + ") failed: " + e.what());
    }
  }

  std::ofstream results(fs::path(ctx.cfg.outdir) / "results.tsv");
  results << "experiment\tWER\tPER\n";
  for (const auto& row : ctx.result_rows)
    results << row[0] << '\t' << row[1] << '\t' << row[2] << '\n';
  return ctx.cfg.outdir;
}

}  // namespace singalign
