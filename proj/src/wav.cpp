#include "singalign/wav.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace singalign {

namespace {

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return b[0] | (b[1] << 8) | (b[2] << 16) | (uint32_t(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return b[0] | (b[1] << 8);
}

void write_u32(std::ostream& out, uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
  out.write(b, 2);
}

struct WavHeader {
  int sample_rate = 0;
  int64_t num_samples = 0;
  std::streamoff data_offset = 0;
};

WavHeader parse_header(std::istream& in, const std::string& path) {
  char tag[5] = {0};
  in.read(tag, 4);
  if (!in || std::strncmp(tag, "RIFF", 4) != 0) throw Error("not a RIFF file: " + path);
  read_u32(in);  // riff size
  in.read(tag, 4);
  if (!in || std::strncmp(tag, "WAVE", 4) != 0) throw Error("not a WAVE file: " + path);

  WavHeader hdr;
  uint16_t channels = 0, bits = 0, format = 0;
  bool have_fmt = false;
  while (in.read(tag, 4)) {
    uint32_t chunk_size = read_u32(in);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      format = read_u16(in);
      channels = read_u16(in);
      hdr.sample_rate = static_cast<int>(read_u32(in));
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw Error("data chunk before fmt chunk: " + path);
      if (format != 1 || bits != 16) throw Error("only 16-bit PCM supported: " + path);
      if (channels != 1) throw Error("only mono audio supported: " + path);
      hdr.num_samples = chunk_size / 2;
      hdr.data_offset = in.tellg();
      return hdr;
    } else {
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  throw Error("no data chunk found: " + path);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open audio file: " + path);
  WavHeader hdr = parse_header(in, path);

  std::vector<int16_t> raw(hdr.num_samples);
  in.read(reinterpret_cast<char*>(raw.data()), hdr.num_samples * 2);
  if (!in) throw Error("truncated audio data: " + path);

  Waveform w;
  w.sample_rate = hdr.sample_rate;
  w.samples.resize(hdr.num_samples);
  for (int64_t i = 0; i < hdr.num_samples; ++i) w.samples[i] = raw[i] / 32768.0f;
  return w;
}

void write_wav(const Waveform& w, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write audio file: " + path);
  const uint32_t data_bytes = static_cast<uint32_t>(w.samples.size()) * 2;
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<uint32_t>(w.sample_rate));
  write_u32(out, static_cast<uint32_t>(w.sample_rate) * 2);
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (Eigen::Index i = 0; i < w.samples.size(); ++i) {
    float v = std::max(-1.0f, std::min(1.0f, w.samples[i]));
    auto s = static_cast<int16_t>(std::lround(v * 32767.0f));
    write_u16(out, static_cast<uint16_t>(s));
  }
  if (!out) throw Error("failed writing audio file: " + path);
}

std::pair<int64_t, int> read_wav_info(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open audio file: " + path);
  WavHeader hdr = parse_header(in, path);
  return {hdr.num_samples, hdr.sample_rate};
}

}  // namespace singalign
