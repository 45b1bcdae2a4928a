#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "singalign/adapt.hpp"
#include "singalign/corpus.hpp"

namespace singalign {

struct StageSpec {
  std::string name;
  std::map<std::string, std::string> params;
  std::string raw;  // original config line, hashed for skip logic

  std::string get(const std::string& key, const std::string& fallback) const;
  double get_num(const std::string& key, double fallback) const;
  bool has(const std::string& key) const { return params.count(key) > 0; }
  double require_num(const std::string& key) const;
};

struct ExperimentConfig {
  uint64_t seed = 0;
  std::string manifest_path;
  std::string lexicon_path;
  std::string phones_path;
  std::string lm_corpus_path;  // optional unless a train_lm stage exists
  std::string outdir;
  int jobs = 1;
  std::vector<StageSpec> stages;
};

// Key-value config: global `key value` lines, then ordered
// `stage <name> [k=v ...]` lines. `#` comments ignored.
ExperimentConfig load_experiment_config(const std::string& path);

// Validates stage ordering/dependencies without executing anything.
void validate_pipeline(const ExperimentConfig& cfg);

// Executes stages in order into cfg.outdir; stages with unchanged inputs are
// skipped and their artifacts reloaded. Returns the output directory.
std::string run_pipeline(const std::string& config_path);

// Speed-perturbed training copies (fragment ids gain `#sp{alpha}`); the test
// split is never augmented. Perturbed audio lands in wav_dir.
CorpusManifest augment_corpus(const CorpusManifest& manifest,
                              const std::vector<double>& factors, const std::string& wav_dir);

// Index-parallel helper with deterministic per-slot writes.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

int default_jobs();  // SINGALIGN_JOBS, else 1

}  // namespace singalign
