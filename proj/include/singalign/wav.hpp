#pragma once

#include <string>

#include "singalign/common.hpp"

namespace singalign {

struct Waveform {
  Vector samples;  // amplitudes in [-1, 1]
  int sample_rate = 0;

  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// Mono 16-bit PCM only. Unknown RIFF chunks are skipped.
Waveform read_wav(const std::string& path);
void write_wav(const Waveform& w, const std::string& path);

// Header-only probe used by manifest validation: (num_samples, sample_rate).
std::pair<int64_t, int> read_wav_info(const std::string& path);

}  // namespace singalign
