#pragma once

#include <vector>

#include "singalign/common.hpp"
#include "singalign/wav.hpp"

namespace singalign {

enum class FeatureStage { I, II, III, IV };

std::string stage_name(FeatureStage s);

struct FeatureMatrix {
  Matrix frames;             // T x d
  double frame_shift = 0.0;  // seconds
  FeatureStage stage = FeatureStage::I;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }
};

struct MfccConfig {
  double window_s = 0.025;
  double shift_s = 0.010;
  int num_mel = 23;
  int num_ceps = 13;
  bool use_energy = true;  // replace c0 with log frame energy
  double preemphasis = 0.97;
  double low_freq_hz = 20.0;
  double high_freq_hz = 0.0;  // 0 = Nyquist
  double cep_lifter = 22.0;
  double log_floor = 1e-10;
};

// T = floor((len - window) / shift) + 1 frames; deterministic.
FeatureMatrix compute_mfcc(const Waveform& w, const MfccConfig& cfg);

struct CmvnStats {
  VectorD sum;
  VectorD sum_sq;
  int64_t count = 0;

  void accumulate(const Matrix& frames);
  void merge(const CmvnStats& other);
  int dim() const { return static_cast<int>(sum.size()); }
  VectorD mean() const;
  VectorD variance() const;  // population variance
};

FeatureMatrix apply_cmvn(const FeatureMatrix& f, const CmvnStats& stats,
                         double variance_floor = 1e-8);

// Feature II: static + delta + delta-delta, regression window with clamped edges.
FeatureMatrix add_deltas(const FeatureMatrix& f, int window = 2);

// Feature IV: frame context splicing with edge duplication.
FeatureMatrix splice(const FeatureMatrix& f, int left, int right);

// Resampling-style perturbation: tempo and pitch both scale by alpha.
Waveform speed_perturb(const Waveform& w, double alpha);

struct PitchConfig {
  double fmin_hz = 60.0;
  double fmax_hz = 1200.0;
  double window_s = 0.040;
  double shift_s = 0.010;
  double voicing_threshold = 0.30;  // normalized autocorrelation peak
  double energy_floor = 1e-6;
};

struct PitchTrack {
  std::vector<float> f0_hz;     // per frame; 0 when unvoiced
  std::vector<bool> voiced;     // per frame
  int num_voiced() const;
};

// Autocorrelation detector with parabolic peak interpolation.
PitchTrack extract_pitch(const Waveform& w, const PitchConfig& cfg);

struct Histogram {
  double bin_width = 0.0;
  std::vector<int64_t> counts;  // bin i covers [lowest + i*w, lowest + (i+1)*w)
  double lowest = 0.0;
  int64_t total = 0;

  int64_t count_at(double value) const;
  std::string to_table() const;  // tab-separated: bin_low  bin_high  count
};

Histogram pitch_histogram(const std::vector<float>& f0_values, double bin_width);

}  // namespace singalign
