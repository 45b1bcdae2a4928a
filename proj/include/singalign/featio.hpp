#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "singalign/frontend.hpp"

namespace singalign {

// Binary archive keyed by fragment_id; each entry stores (T, d, frame_shift,
// stage, row-major f32 data). A plain-text index `<key> <offset>` sits next
// to the archive at <path>.idx.
class FeatureArchiveWriter {
 public:
  explicit FeatureArchiveWriter(const std::string& path);
  ~FeatureArchiveWriter();
  void write(const std::string& key, const FeatureMatrix& features);
  void close();

 private:
  std::string path_;
  std::ofstream data_;
  std::ofstream index_;
};

class FeatureArchiveReader {
 public:
  explicit FeatureArchiveReader(const std::string& path);
  bool has(const std::string& key) const { return offsets_.count(key) > 0; }
  FeatureMatrix read(const std::string& key) const;
  std::vector<std::string> keys() const;

 private:
  std::string path_;
  std::map<std::string, uint64_t> offsets_;
};

// Debug dump: `key [T x d] stage shift` header plus one row per frame.
void dump_archive_text(const std::string& path, std::ostream& out);

}  // namespace singalign
