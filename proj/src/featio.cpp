#include "singalign/featio.hpp"

#include <cstring>

namespace singalign {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'F', 'E', 'A', 'T', 'v', '1'};

FeatureStage stage_from_tag(uint8_t tag) {
  switch (tag) {
    case 0: return FeatureStage::I;
    case 1: return FeatureStage::II;
    case 2: return FeatureStage::III;
    default: return FeatureStage::IV;
  }
}

uint8_t stage_tag(FeatureStage s) {
  switch (s) {
    case FeatureStage::I: return 0;
    case FeatureStage::II: return 1;
    case FeatureStage::III: return 2;
    case FeatureStage::IV: return 3;
  }
  return 0;
}

}  // namespace

FeatureArchiveWriter::FeatureArchiveWriter(const std::string& path)
    : path_(path), data_(path, std::ios::binary), index_(path + ".idx") {
  if (!data_ || !index_) throw Error("cannot create feature archive: " + path);
  data_.write(kMagic, sizeof(kMagic));
}

FeatureArchiveWriter::~FeatureArchiveWriter() { close(); }

void FeatureArchiveWriter::close() {
  if (data_.is_open()) data_.close();
  if (index_.is_open()) index_.close();
}

void FeatureArchiveWriter::write(const std::string& key, const FeatureMatrix& features) {
  if (!data_.is_open()) throw Error("feature archive already closed: " + path_);
  index_ << key << '\t' << static_cast<uint64_t>(data_.tellp()) << '\n';

  const uint32_t key_len = static_cast<uint32_t>(key.size());
  const uint32_t rows = static_cast<uint32_t>(features.num_frames());
  const uint32_t cols = static_cast<uint32_t>(features.dim());
  const double shift = features.frame_shift;
  const uint8_t stage = stage_tag(features.stage);
  data_.write(reinterpret_cast<const char*>(&key_len), sizeof(key_len));
  data_.write(key.data(), key_len);
  data_.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  data_.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  data_.write(reinterpret_cast<const char*>(&shift), sizeof(shift));
  data_.write(reinterpret_cast<const char*>(&stage), sizeof(stage));
  for (uint32_t t = 0; t < rows; ++t) {
    const Vector row = features.frames.row(t).transpose();
    data_.write(reinterpret_cast<const char*>(row.data()), sizeof(float) * cols);
  }
  if (!data_) throw Error("failed writing feature archive: " + path_);
}

FeatureArchiveReader::FeatureArchiveReader(const std::string& path) : path_(path) {
  std::ifstream index(path + ".idx");
  if (!index) throw Error("cannot open feature archive index: " + path + ".idx");
  std::string key;
  uint64_t offset;
  while (index >> key >> offset) offsets_[key] = offset;
}

std::vector<std::string> FeatureArchiveReader::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, off] : offsets_) {
    (void)off;
    out.push_back(k);
  }
  return out;
}

FeatureMatrix FeatureArchiveReader::read(const std::string& key) const {
  auto it = offsets_.find(key);
  if (it == offsets_.end()) throw Error("feature archive has no entry '" + key + "'");
  std::ifstream data(path_, std::ios::binary);
  if (!data) throw Error("cannot open feature archive: " + path_);
  char magic[8];
  data.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw Error("not a feature archive: " + path_);
  data.seekg(static_cast<std::streamoff>(it->second));

  uint32_t key_len = 0, rows = 0, cols = 0;
  double shift = 0;
  uint8_t stage = 0;
  data.read(reinterpret_cast<char*>(&key_len), sizeof(key_len));
  std::string stored(key_len, '\0');
  data.read(stored.data(), key_len);
  if (stored != key) throw Error("feature archive index out of sync for '" + key + "'");
  data.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  data.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  data.read(reinterpret_cast<char*>(&shift), sizeof(shift));
  data.read(reinterpret_cast<char*>(&stage), sizeof(stage));

  FeatureMatrix f;
  f.frame_shift = shift;
  f.stage = stage_from_tag(stage);
  f.frames.resize(rows, cols);
  std::vector<float> row(cols);
  for (uint32_t t = 0; t < rows; ++t) {
    data.read(reinterpret_cast<char*>(row.data()), sizeof(float) * cols);
    for (uint32_t j = 0; j < cols; ++j) f.frames(t, j) = row[j];
  }
  if (!data) throw Error("feature archive truncated: " + path_);
  return f;
}

void dump_archive_text(const std::string& path, std::ostream& out) {
  FeatureArchiveReader reader(path);
  for (const auto& key : reader.keys()) {
    const FeatureMatrix f = reader.read(key);
    out << key << " [" << f.num_frames() << " x " << f.dim() << "] stage "
        << stage_name(f.stage) << " shift " << f.frame_shift << "\n";
    for (int t = 0; t < f.num_frames(); ++t) {
      for (int j = 0; j < f.dim(); ++j) out << (j ? " " : "  ") << f.frames(t, j);
      out << "\n";
    }
  }
}

}  // namespace singalign
