#include "singalign/frontend.hpp"

#include <algorithm>
#include <complex>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/FFT>

namespace singalign {

std::string stage_name(FeatureStage s) {
  switch (s) {
    case FeatureStage::I: return "I";
    case FeatureStage::II: return "II";
    case FeatureStage::III: return "III";
    case FeatureStage::IV: return "IV";
  }
  return "?";
}

namespace {

constexpr double kPi = std::numbers::pi;

double mel_scale(double hz) { return 1127.0 * std::log1p(hz / 700.0); }

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Triangular mel filterbank over power spectrum bins [0, nfft/2].
Eigen::MatrixXd mel_filterbank(int num_mel, int nfft, double sample_rate, double low_hz,
                               double high_hz) {
  if (high_hz <= 0.0) high_hz = sample_rate / 2.0;
  const double mel_low = mel_scale(low_hz), mel_high = mel_scale(high_hz);
  const int num_bins = nfft / 2 + 1;
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(num_mel, num_bins);
  const double mel_step = (mel_high - mel_low) / (num_mel + 1);
  for (int m = 0; m < num_mel; ++m) {
    const double left = mel_low + m * mel_step;
    const double center = left + mel_step;
    const double right = center + mel_step;
    for (int b = 0; b < num_bins; ++b) {
      const double mel = mel_scale(b * sample_rate / nfft);
      if (mel > left && mel < right) {
        fb(m, b) = mel < center ? (mel - left) / mel_step : (right - mel) / mel_step;
      }
    }
  }
  return fb;
}

Eigen::MatrixXd dct_matrix(int num_ceps, int num_mel) {
  Eigen::MatrixXd dct(num_ceps, num_mel);
  for (int k = 0; k < num_ceps; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / num_mel) : std::sqrt(2.0 / num_mel);
    for (int m = 0; m < num_mel; ++m)
      dct(k, m) = scale * std::cos(kPi * k * (m + 0.5) / num_mel);
  }
  return dct;
}

}  // namespace

FeatureMatrix compute_mfcc(const Waveform& w, const MfccConfig& cfg) {
  if (w.sample_rate <= 0) throw Error("compute_mfcc: invalid sample rate");
  if (!(cfg.window_s > cfg.shift_s && cfg.shift_s > 0))
    throw Error("compute_mfcc: require window_s > shift_s > 0");
  const int win = static_cast<int>(std::lround(cfg.window_s * w.sample_rate));
  const int shift = static_cast<int>(std::lround(cfg.shift_s * w.sample_rate));
  const auto len = static_cast<int>(w.samples.size());
  if (len < win) throw Error("compute_mfcc: audio shorter than one window");
  if (!w.samples.allFinite()) throw Error("compute_mfcc: non-finite sample values");

  const int num_frames = (len - win) / shift + 1;
  const int nfft = next_pow2(win);
  const Eigen::MatrixXd fbank = mel_filterbank(cfg.num_mel, nfft, w.sample_rate,
                                               cfg.low_freq_hz, cfg.high_freq_hz);
  const Eigen::MatrixXd dct = dct_matrix(cfg.num_ceps, cfg.num_mel);

  Eigen::VectorXd window_fn(win);
  for (int n = 0; n < win; ++n)
    window_fn[n] = 0.54 - 0.46 * std::cos(2.0 * kPi * n / (win - 1));

  Eigen::VectorXd lifter = Eigen::VectorXd::Ones(cfg.num_ceps);
  if (cfg.cep_lifter > 0)
    for (int k = 0; k < cfg.num_ceps; ++k)
      lifter[k] = 1.0 + 0.5 * cfg.cep_lifter * std::sin(kPi * k / cfg.cep_lifter);

  Eigen::FFT<double> fft;
  FeatureMatrix out;
  out.frames.resize(num_frames, cfg.num_ceps);
  out.frame_shift = static_cast<double>(shift) / w.sample_rate;
  out.stage = FeatureStage::I;

  std::vector<double> buf(nfft);
  std::vector<std::complex<double>> spec(nfft);
  for (int t = 0; t < num_frames; ++t) {
    Eigen::VectorXd frame = w.samples.segment(t * shift, win).cast<double>();
    const double energy = std::max(frame.squaredNorm(), cfg.log_floor);
    // Pre-emphasis within the frame keeps framing shift-covariant.
    for (int n = win - 1; n > 0; --n) frame[n] -= cfg.preemphasis * frame[n - 1];
    frame[0] -= cfg.preemphasis * frame[0];
    frame.array() *= window_fn.array();

    std::fill(buf.begin(), buf.end(), 0.0);
    for (int n = 0; n < win; ++n) buf[n] = frame[n];
    fft.fwd(spec, buf);

    Eigen::VectorXd power(nfft / 2 + 1);
    for (int b = 0; b <= nfft / 2; ++b) power[b] = std::norm(spec[b]);
    Eigen::VectorXd mel = (fbank * power).array().max(cfg.log_floor).log();
    Eigen::VectorXd ceps = (dct * mel).cwiseProduct(lifter);
    if (cfg.use_energy) ceps[0] = std::log(energy);
    out.frames.row(t) = ceps.cast<float>();
  }
  return out;
}

void CmvnStats::accumulate(const Matrix& frames) {
  if (count == 0) {
    sum = VectorD::Zero(frames.cols());
    sum_sq = VectorD::Zero(frames.cols());
  } else if (sum.size() != frames.cols()) {
    throw Error("CmvnStats: dimension mismatch");
  }
  const MatrixD x = frames.cast<double>();
  sum += x.colwise().sum().transpose();
  sum_sq += x.array().square().colwise().sum().transpose().matrix();
  count += frames.rows();
}

void CmvnStats::merge(const CmvnStats& other) {
  if (other.count == 0) return;
  if (count == 0) {
    *this = other;
    return;
  }
  if (sum.size() != other.sum.size()) throw Error("CmvnStats: dimension mismatch in merge");
  sum += other.sum;
  sum_sq += other.sum_sq;
  count += other.count;
}

VectorD CmvnStats::mean() const {
  if (count == 0) throw Error("CmvnStats: no frames accumulated");
  return sum / static_cast<double>(count);
}

VectorD CmvnStats::variance() const {
  VectorD m = mean();
  return (sum_sq / static_cast<double>(count) - m.cwiseProduct(m)).cwiseMax(0.0);
}

FeatureMatrix apply_cmvn(const FeatureMatrix& f, const CmvnStats& stats, double variance_floor) {
  if (stats.count < 2) throw Error("apply_cmvn: need stats from at least 2 frames");
  if (stats.dim() != f.dim()) throw Error("apply_cmvn: dimension mismatch");
  VectorD mean = stats.mean();
  VectorD var = stats.variance();
  for (int i = 0; i < var.size(); ++i) {
    if (var[i] < variance_floor) {
      warn("apply_cmvn: flooring zero-variance dimension " + std::to_string(i));
      var[i] = variance_floor;
    }
  }
  VectorD inv_std = var.cwiseSqrt().cwiseInverse();
  FeatureMatrix out = f;
  out.frames = ((f.frames.cast<double>().rowwise() - mean.transpose()).array().rowwise() *
                inv_std.transpose().array())
                   .cast<float>();
  return out;
}

FeatureMatrix add_deltas(const FeatureMatrix& f, int window) {
  if (window < 1) throw Error("add_deltas: window must be >= 1");
  const int T = f.num_frames(), d = f.dim();
  double denom = 0;
  for (int n = 1; n <= window; ++n) denom += 2.0 * n * n;

  auto regress = [&](const Matrix& src) {
    Matrix out(T, d);
    for (int t = 0; t < T; ++t) {
      Vector acc = Vector::Zero(d);
      for (int n = 1; n <= window; ++n) {
        int hi = std::min(t + n, T - 1), lo = std::max(t - n, 0);
        acc += static_cast<float>(n) * (src.row(hi) - src.row(lo)).transpose();
      }
      out.row(t) = acc.transpose() / static_cast<float>(denom);
    }
    return out;
  };

  Matrix delta = regress(f.frames);
  Matrix delta2 = regress(delta);
  FeatureMatrix out;
  out.frame_shift = f.frame_shift;
  out.stage = FeatureStage::II;
  out.frames.resize(T, 3 * d);
  out.frames << f.frames, delta, delta2;
  return out;
}

FeatureMatrix splice(const FeatureMatrix& f, int left, int right) {
  if (left < 0 || right < 0) throw Error("splice: context sizes must be >= 0");
  const int T = f.num_frames(), d = f.dim();
  FeatureMatrix out;
  out.frame_shift = f.frame_shift;
  out.stage = FeatureStage::IV;
  out.frames.resize(T, (left + right + 1) * d);
  for (int t = 0; t < T; ++t) {
    for (int c = -left; c <= right; ++c) {
      int src = std::clamp(t + c, 0, T - 1);
      out.frames.block(t, (c + left) * d, 1, d) = f.frames.row(src);
    }
  }
  return out;
}

Waveform speed_perturb(const Waveform& w, double alpha) {
  if (alpha <= 0) throw Error("speed_perturb: alpha must be positive");
  const auto n_in = static_cast<int64_t>(w.samples.size());
  const auto n_out = static_cast<int64_t>(std::llround(n_in / alpha));
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples = Vector::Zero(n_out);

  const double cutoff = std::min(1.0, 1.0 / alpha);  // relative to Nyquist
  const double half_width = 16.0 * std::max(1.0, alpha);
  for (int64_t i = 0; i < n_out; ++i) {
    const double s = i * alpha;
    const auto k0 = std::max<int64_t>(0, static_cast<int64_t>(std::ceil(s - half_width)));
    const auto k1 = std::min<int64_t>(n_in - 1, static_cast<int64_t>(std::floor(s + half_width)));
    double acc = 0;
    for (int64_t k = k0; k <= k1; ++k) {
      const double t = s - k;
      const double x = kPi * cutoff * t;
      const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(x) / x;
      const double hann = 0.5 * (1.0 + std::cos(kPi * t / half_width));
      acc += w.samples[k] * cutoff * sinc * hann;
    }
    out.samples[i] = static_cast<float>(acc);
  }
  return out;
}

int PitchTrack::num_voiced() const {
  return static_cast<int>(std::count(voiced.begin(), voiced.end(), true));
}

PitchTrack extract_pitch(const Waveform& w, const PitchConfig& cfg) {
  if (!(cfg.fmin_hz < cfg.fmax_hz)) throw Error("extract_pitch: require fmin < fmax");
  if (cfg.fmax_hz > w.sample_rate / 2.0)
    throw Error("extract_pitch: fmax above Nyquist");
  const int win = static_cast<int>(std::lround(cfg.window_s * w.sample_rate));
  const int shift = static_cast<int>(std::lround(cfg.shift_s * w.sample_rate));
  const auto len = static_cast<int>(w.samples.size());

  PitchTrack track;
  if (len < win) return track;
  const int num_frames = (len - win) / shift + 1;
  const int lag_min = std::max(2, static_cast<int>(std::floor(w.sample_rate / cfg.fmax_hz)));
  const int lag_max = std::min(win - 2, static_cast<int>(std::ceil(w.sample_rate / cfg.fmin_hz)));

  track.f0_hz.assign(num_frames, 0.0f);
  track.voiced.assign(num_frames, false);
  for (int t = 0; t < num_frames; ++t) {
    Eigen::VectorXd frame = w.samples.segment(t * shift, win).cast<double>();
    frame.array() -= frame.mean();
    const double r0 = frame.squaredNorm();
    if (r0 / win < cfg.energy_floor) continue;

    // Normalized autocorrelation over the lag range; the fundamental is the
    // FIRST strong local peak, not the global one (integer multiples of the
    // period peak just as high).
    Eigen::VectorXd rho = Eigen::VectorXd::Zero(lag_max + 2);
    for (int lag = lag_min - 1; lag <= lag_max + 1 && lag < win; ++lag) {
      const double r = frame.head(win - lag).dot(frame.tail(win - lag));
      rho[lag] = r / r0;
    }
    double peak = 0;
    for (int lag = lag_min; lag <= lag_max; ++lag) peak = std::max(peak, rho[lag]);
    if (peak <= cfg.voicing_threshold) continue;
    int best = -1;
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      if (rho[lag] >= 0.9 * peak && rho[lag] >= rho[lag - 1] && rho[lag] >= rho[lag + 1]) {
        best = lag;
        break;
      }
    }
    if (best < 0) continue;

    double refined = best;
    if (best > lag_min && best < lag_max) {
      const double a = rho[best - 1], b = rho[best], c = rho[best + 1];
      const double denom = a - 2 * b + c;
      if (std::abs(denom) > 1e-12) refined += 0.5 * (a - c) / denom;
    }
    const double f0 = w.sample_rate / refined;
    if (f0 >= cfg.fmin_hz && f0 <= cfg.fmax_hz) {
      track.f0_hz[t] = static_cast<float>(f0);
      track.voiced[t] = true;
    }
  }
  return track;
}

int64_t Histogram::count_at(double value) const {
  if (counts.empty() || bin_width <= 0) return 0;
  const auto idx = static_cast<int64_t>(std::floor(value / bin_width) - std::floor(lowest / bin_width));
  if (idx < 0 || idx >= static_cast<int64_t>(counts.size())) return 0;
  return counts[idx];
}

std::string Histogram::to_table() const {
  std::ostringstream out;
  for (size_t i = 0; i < counts.size(); ++i) {
    const double low = lowest + i * bin_width;
    out << low << '\t' << low + bin_width << '\t' << counts[i] << '\n';
  }
  return out.str();
}

Histogram pitch_histogram(const std::vector<float>& f0_values, double bin_width) {
  if (bin_width <= 0) throw Error("pitch_histogram: bin width must be positive");
  Histogram h;
  h.bin_width = bin_width;
  if (f0_values.empty()) return h;

  int64_t lo = std::numeric_limits<int64_t>::max(), hi = std::numeric_limits<int64_t>::min();
  for (float v : f0_values) {
    const auto b = static_cast<int64_t>(std::floor(v / bin_width));
    lo = std::min(lo, b);
    hi = std::max(hi, b);
  }
  h.lowest = lo * bin_width;
  h.counts.assign(hi - lo + 1, 0);
  for (float v : f0_values) {
    ++h.counts[static_cast<int64_t>(std::floor(v / bin_width)) - lo];
    ++h.total;
  }
  return h;
}

}  // namespace singalign
