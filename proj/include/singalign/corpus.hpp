#pragma once

#include <string>
#include <vector>

#include "singalign/common.hpp"

namespace singalign {

enum class Split { train, test };

std::string split_name(Split s);
Split parse_split(const std::string& s);

struct FragmentMeta {
  std::string fragment_id;
  std::string song_id;
  std::string singer_id;
  std::vector<std::string> genres;  // non-empty, order preserved
  Split split = Split::train;
  std::string audio_path;
  std::vector<std::string> transcript;
  double duration = 0.0;  // seconds, measured from the audio header
};

struct CorpusManifest {
  std::vector<FragmentMeta> fragments;
  int sample_rate = 0;  // uniform across the corpus

  std::vector<const FragmentMeta*> split_fragments(Split s) const;
  const FragmentMeta* find(const std::string& fragment_id) const;
};

// Parses the tab-separated manifest, opens every referenced audio header,
// and enforces uniqueness, genre presence, uniform sample rate and
// singer-disjoint train/test splits.
CorpusManifest load_manifest(const std::string& path);

void save_manifest(const CorpusManifest& manifest, const std::string& path);

// One warning string per fragment whose duration falls outside [min_s, max_s].
std::vector<std::string> validate_durations(const CorpusManifest& manifest, double min_s,
                                            double max_s);

// Validation shared with in-memory construction paths (augmentation, tests).
void check_manifest(const CorpusManifest& manifest);

}  // namespace singalign
