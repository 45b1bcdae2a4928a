#include "singalign/corpus.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "singalign/wav.hpp"

namespace singalign {

std::string split_name(Split s) { return s == Split::train ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw Error("unknown split label '" + s + "' (expected train or test)");
}

std::vector<const FragmentMeta*> CorpusManifest::split_fragments(Split s) const {
  std::vector<const FragmentMeta*> out;
  for (const auto& f : fragments)
    if (f.split == s) out.push_back(&f);
  return out;
}

const FragmentMeta* CorpusManifest::find(const std::string& fragment_id) const {
  for (const auto& f : fragments)
    if (f.fragment_id == fragment_id) return &f;
  return nullptr;
}

namespace {

std::vector<std::string> split_fields(const std::string& line, char sep, size_t max_fields) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (fields.size() + 1 < max_fields) {
    size_t pos = line.find(sep, start);
    if (pos == std::string::npos) break;
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  fields.push_back(line.substr(start));
  return fields;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

void check_manifest(const CorpusManifest& manifest) {
  std::set<std::string> ids;
  std::set<std::string> train_singers, test_singers;
  for (const auto& f : manifest.fragments) {
    if (!ids.insert(f.fragment_id).second)
      throw Error("duplicate fragment_id '" + f.fragment_id + "'");
    if (f.genres.empty()) throw Error("fragment '" + f.fragment_id + "' has no genre labels");
    if (f.duration <= 0.0)
      throw Error("fragment '" + f.fragment_id + "' has non-positive duration");
    (f.split == Split::train ? train_singers : test_singers).insert(f.singer_id);
  }
  for (const auto& s : train_singers)
    if (test_singers.count(s))
      throw Error("singer overlap between train and test splits: '" + s + "'");
}

CorpusManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest: " + path);

  CorpusManifest manifest;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_fields(line, '\t', 7);
    if (fields.size() != 7)
      throw Error("manifest parse error at " + path + ":" + std::to_string(lineno) +
                  " (expected 7 tab-separated fields, got " + std::to_string(fields.size()) + ")");

    FragmentMeta f;
    f.fragment_id = fields[0];
    f.song_id = fields[1];
    f.singer_id = fields[2];
    for (auto& g : split_fields(fields[3], ',', 64))
      if (!g.empty()) f.genres.push_back(g);
    f.split = parse_split(fields[4]);
    f.audio_path = fields[5];
    f.transcript = split_ws(fields[6]);
    if (f.fragment_id.empty())
      throw Error("empty fragment_id at " + path + ":" + std::to_string(lineno));
    if (f.genres.empty())
      throw Error("fragment '" + f.fragment_id + "' has no genre labels at " + path + ":" +
                  std::to_string(lineno));

    auto [num_samples, rate] = read_wav_info(f.audio_path);
    f.duration = static_cast<double>(num_samples) / rate;
    if (manifest.sample_rate == 0) {
      manifest.sample_rate = rate;
    } else if (manifest.sample_rate != rate) {
      throw Error("non-uniform sample rate: '" + f.audio_path + "' has " + std::to_string(rate) +
                  " Hz, corpus has " + std::to_string(manifest.sample_rate) + " Hz");
    }
    manifest.fragments.push_back(std::move(f));
  }
  check_manifest(manifest);
  return manifest;
}

void save_manifest(const CorpusManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest: " + path);
  for (const auto& f : manifest.fragments) {
    out << f.fragment_id << '\t' << f.song_id << '\t' << f.singer_id << '\t';
    for (size_t i = 0; i < f.genres.size(); ++i) out << (i ? "," : "") << f.genres[i];
    out << '\t' << split_name(f.split) << '\t' << f.audio_path << '\t';
    for (size_t i = 0; i < f.transcript.size(); ++i) out << (i ? " " : "") << f.transcript[i];
    out << '\n';
  }
  if (!out) throw Error("failed writing manifest: " + path);
}

std::vector<std::string> validate_durations(const CorpusManifest& manifest, double min_s,
                                            double max_s) {
  std::vector<std::string> warnings;
  for (const auto& f : manifest.fragments) {
    if (f.duration < min_s || f.duration > max_s) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "fragment '%s' duration %.2f s outside [%.2f, %.2f] s",
                    f.fragment_id.c_str(), f.duration, min_s, max_s);
      warnings.emplace_back(buf);
    }
  }
  return warnings;
}

}  // namespace singalign
