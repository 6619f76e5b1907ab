// =============================================================
// signal.hpp -- waveform preprocessing and synthetic generators
// =============================================================
//
// Pipeline per modality:
//   ECG          raw -> bandpass(3-45 Hz) -> normalize -> detect_peaks
//                (Morlet CWT score) -> label_bradycardia
//   respiration  raw -> normalize -> detect_peaks (direct local maxima)
//                -> label_apnea
//
// The seeded generators synthesize class-conditional segments and
// guarantee the label round-trips through the real detection pipeline
// (retrying with derived sub-seeds when a draw lands on a class
// boundary).
//
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "io.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace protodiv {

// ---------- types ----------

struct Waveform {
  std::vector<double> samples;
  double fs = 0.0;  // Hz

  void validate(const char* what = "Waveform") const {
    if (!(fs > 0.0)) throw ValidationError(std::string(what) + ": fs must be positive");
    if (samples.size() < 2) throw ValidationError(std::string(what) + ": need >= 2 samples");
    for (double v : samples)
      if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite sample");
  }

  double duration() const { return static_cast<double>(samples.size()) / fs; }
};

enum class Severity : int { normal = 0, mild = 1, moderate_severe = 2 };

inline const char* severity_name(Severity s) {
  switch (s) {
    case Severity::normal: return "normal";
    case Severity::mild: return "mild";
    default: return "moderate_severe";
  }
}

inline std::optional<Severity> severity_from_name(const std::string& name) {
  if (name == "normal") return Severity::normal;
  if (name == "mild") return Severity::mild;
  if (name == "moderate_severe") return Severity::moderate_severe;
  return std::nullopt;
}

enum class Modality { ecg, respiration };

inline const char* modality_name(Modality m) {
  return m == Modality::ecg ? "ecg" : "respiration";
}

inline std::optional<Modality> modality_from_name(const std::string& name) {
  if (name == "ecg") return Modality::ecg;
  if (name == "respiration") return Modality::respiration;
  return std::nullopt;
}

struct LabeledSegment {
  Waveform waveform;                 // raw (pre-filter, pre-normalize)
  Severity label = Severity::normal;
  std::vector<double> event_times;   // detected peak times, seconds
  std::vector<double> truth_times;   // generator ground truth (empty for imports)
  bool synthetic = true;
  std::uint64_t seed = 0;            // generator seed (sub-seed after retries)
  bool flagged = false;              // detection found < 2 events
};

// ---------- normalize ----------

// Zero mean, unit (population) variance; constant input maps to zeros.
inline Waveform normalize(const Waveform& w) {
  w.validate("normalize");
  const std::size_t n = w.samples.size();
  double mean = 0.0;
  for (double v : w.samples) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : w.samples) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  Waveform out;
  out.fs = w.fs;
  out.samples.resize(n);
  if (var < 1e-12) return out;  // all zeros
  const double inv = 1.0 / std::sqrt(var);
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = (w.samples[i] - mean) * inv;
  return out;
}

// ---------- band-pass FIR ----------

// Linear-phase windowed-sinc band-pass, Hamming window, 501 taps at
// fs=250 (tap count scaled with fs, forced odd), applied with the group
// delay compensated so the output is zero-phase and input-length.
inline Waveform bandpass(const Waveform& w, double lo = 3.0, double hi = 45.0) {
  w.validate("bandpass");
  if (!(0.0 < lo && lo < hi && hi < w.fs / 2.0))
    throw ValidationError("bandpass: band [" + std::to_string(lo) + "," + std::to_string(hi) +
                          "] outside (0, fs/2) at fs=" + std::to_string(w.fs));
  std::size_t taps = static_cast<std::size_t>(std::lround(501.0 * w.fs / 250.0));
  if (taps % 2 == 0) ++taps;
  if (taps < 3) taps = 3;
  const std::size_t mid = taps / 2;

  // Ideal LP impulse responses at both cutoffs, Hamming-windowed, each
  // normalized to exactly unit DC gain; the band-pass is their
  // difference, so DC rejection is exact.
  std::vector<double> taps_hi(taps), taps_lo(taps);
  double sum_hi = 0.0, sum_lo = 0.0;
  for (std::size_t k = 0; k < taps; ++k) {
    const double t = (static_cast<double>(k) - static_cast<double>(mid)) / w.fs;
    double lp_hi, lp_lo;
    if (k == mid) {
      lp_hi = 2.0 * hi / w.fs;
      lp_lo = 2.0 * lo / w.fs;
    } else {
      lp_hi = std::sin(2.0 * M_PI * hi * t) / (M_PI * t * w.fs);
      lp_lo = std::sin(2.0 * M_PI * lo * t) / (M_PI * t * w.fs);
    }
    const double window =
        0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(k) /
                               static_cast<double>(taps - 1));
    taps_hi[k] = lp_hi * window;
    taps_lo[k] = lp_lo * window;
    sum_hi += taps_hi[k];
    sum_lo += taps_lo[k];
  }
  std::vector<double> h(taps);
  for (std::size_t k = 0; k < taps; ++k) h[k] = taps_hi[k] / sum_hi - taps_lo[k] / sum_lo;

  const std::size_t n = w.samples.size();
  Waveform out;
  out.fs = w.fs;
  out.samples.assign(n, 0.0);
  // y[i] = sum_k h[k] * x[i + mid - k], x zero-padded.
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const std::size_t k_lo = (i + mid >= n) ? i + mid - n + 1 : 0;
    const std::size_t k_hi = std::min(taps - 1, i + mid);
    for (std::size_t k = k_lo; k <= k_hi; ++k) acc += h[k] * w.samples[i + mid - k];
    out.samples[i] = acc;
  }
  return out;
}

// ---------- Morlet CWT ----------

// Magnitude rows of the complex Morlet transform,
// psi(t) = pi^(-1/4) exp(i w0 t) exp(-t^2/2), w0 = 6, scale
// s = w0 / (2 pi f); each scale's sampled kernel is normalized to unit
// energy (which absorbs the pi^(-1/4) and 1/sqrt(s) prefactors).
inline Tensor morlet_cwt(const Waveform& w, const std::vector<double>& freqs) {
  w.validate("morlet_cwt");
  if (freqs.empty()) throw ValidationError("morlet_cwt: no frequencies given");
  for (double f : freqs)
    if (!(0.0 < f && f < w.fs / 2.0))
      throw ValidationError("morlet_cwt: frequency " + std::to_string(f) +
                            " outside (0, fs/2)");
  const double w0 = 6.0;
  const std::size_t n = w.samples.size();
  Tensor out({freqs.size(), n});
  for (std::size_t r = 0; r < freqs.size(); ++r) {
    const double s = w0 / (2.0 * M_PI * freqs[r]);
    const long half = static_cast<long>(std::ceil(4.0 * s * w.fs));
    std::vector<double> re(2 * half + 1), im(2 * half + 1);
    double energy = 0.0;
    for (long j = -half; j <= half; ++j) {
      const double t = static_cast<double>(j) / w.fs / s;
      const double env = std::exp(-0.5 * t * t);
      re[static_cast<std::size_t>(j + half)] = env * std::cos(w0 * t);
      im[static_cast<std::size_t>(j + half)] = env * std::sin(w0 * t);
      energy += env * env;
    }
    const double inv_norm = 1.0 / std::sqrt(energy);
    for (std::size_t j = 0; j < re.size(); ++j) {
      re[j] *= inv_norm;
      im[j] *= inv_norm;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double acc_re = 0.0, acc_im = 0.0;
      const long j_lo = std::max(-half, -static_cast<long>(i));
      const long j_hi = std::min(half, static_cast<long>(n - 1 - i));
      for (long j = j_lo; j <= j_hi; ++j) {
        const double x = w.samples[i + static_cast<std::size_t>(j)];
        acc_re += x * re[static_cast<std::size_t>(j + half)];
        acc_im += x * im[static_cast<std::size_t>(j + half)];
      }
      out(r, i) = std::sqrt(acc_re * acc_re + acc_im * acc_im);
    }
  }
  return out;
}

// ---------- peak detection ----------

namespace detail {

inline double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Centered zero-padded moving average, O(n) via prefix sums.
inline std::vector<double> boxcar_smooth(const std::vector<double>& x, std::size_t half) {
  std::vector<double> prefix(x.size() + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(x.size());
  const double inv = 1.0 / static_cast<double>(2 * half + 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(x.size() - 1, i + half);
    out[i] = (prefix[hi + 1] - prefix[lo]) * inv;
  }
  return out;
}

// Local maxima of `score` above `threshold`, then a refractory merge
// that keeps the stronger of two peaks closer than `refractory` seconds.
inline std::vector<double> pick_peaks(const std::vector<double>& score, double fs,
                                      double threshold, double refractory) {
  std::vector<std::size_t> cand;
  for (std::size_t i = 1; i + 1 < score.size(); ++i)
    if (score[i] > threshold && score[i] > score[i - 1] && score[i] >= score[i + 1])
      cand.push_back(i);
  std::vector<std::size_t> kept;
  for (std::size_t i : cand) {
    if (!kept.empty() &&
        (static_cast<double>(i) - static_cast<double>(kept.back())) / fs < refractory) {
      if (score[i] > score[kept.back()]) kept.back() = i;
    } else {
      kept.push_back(i);
    }
  }
  std::vector<double> times;
  times.reserve(kept.size());
  for (std::size_t i : kept) times.push_back(static_cast<double>(i) / fs);
  return times;
}

}  // namespace detail

// The CWT rows summed into the ECG detection score (10-40 Hz, where QRS
// energy lives).
inline std::vector<double> ecg_cwt_rows() { return {10, 15, 20, 25, 30, 35, 40}; }

// ECG expects a band-passed (and typically normalized) waveform;
// respiration expects the raw normalized signal.  Returns peak times in
// seconds, sorted ascending; fewer than 2 peaks means the segment is
// flagged by the caller.
inline std::vector<double> detect_peaks(const Waveform& w, Modality modality) {
  w.validate("detect_peaks");
  if (modality == Modality::ecg) {
    Tensor cwt = morlet_cwt(w, ecg_cwt_rows());
    std::vector<double> score(w.samples.size(), 0.0);
    for (std::size_t r = 0; r < cwt.rows(); ++r)
      for (std::size_t i = 0; i < score.size(); ++i) score[i] += cwt(r, i);
    const double med = detail::median_of(score);
    std::vector<double> dev(score.size());
    for (std::size_t i = 0; i < score.size(); ++i) dev[i] = std::abs(score[i] - med);
    const double mad = detail::median_of(dev);
    return detail::pick_peaks(score, w.fs, med + 3.0 * mad, 0.2);
  }
  // A slow breath's crest is flat relative to per-sample noise, so the
  // respiration score is the signal under a centered triangular smooth
  // (two cascaded ~0.5 s boxcars); zero-phase, so crest times stay
  // unbiased.
  const std::size_t half = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                        std::lround(0.25 * w.fs)));
  std::vector<double> score =
      detail::boxcar_smooth(detail::boxcar_smooth(w.samples, half), half);
  double mean = 0.0;
  for (double v : score) mean += v;
  mean /= static_cast<double>(score.size());
  double var = 0.0;
  for (double v : score) var += (v - mean) * (v - mean);
  var /= static_cast<double>(score.size());
  return detail::pick_peaks(score, w.fs, mean + 0.5 * std::sqrt(var), 0.5);
}

// ---------- labelers ----------
//
// Pure threshold functions on the extreme interval of a segment.
// Boundary conventions (pinned by tests):
//   bradycardia: rate > 100 normal; 80 < rate <= 100 mild; rate <= 80
//                moderate_severe  (rate = min instantaneous bpm)
//   apnea:       IBI < 4 normal; 4 <= IBI <= 6 mild; IBI > 6
//                moderate_severe  (IBI = max inter-breath interval)

inline std::optional<Severity> label_bradycardia(const std::vector<double>& event_times) {
  if (event_times.size() < 2) return std::nullopt;  // flagged
  double min_bpm = 1e300;
  for (std::size_t i = 1; i < event_times.size(); ++i) {
    const double rr = event_times[i] - event_times[i - 1];
    if (!(rr > 0.0)) throw ValidationError("label_bradycardia: times not strictly increasing");
    min_bpm = std::min(min_bpm, 60.0 / rr);
  }
  if (min_bpm > 100.0) return Severity::normal;
  if (min_bpm > 80.0) return Severity::mild;
  return Severity::moderate_severe;
}

inline std::optional<Severity> label_apnea(const std::vector<double>& event_times) {
  if (event_times.size() < 2) return std::nullopt;  // flagged
  double max_ibi = 0.0;
  for (std::size_t i = 1; i < event_times.size(); ++i) {
    const double ibi = event_times[i] - event_times[i - 1];
    if (!(ibi > 0.0)) throw ValidationError("label_apnea: times not strictly increasing");
    max_ibi = std::max(max_ibi, ibi);
  }
  if (max_ibi < 4.0) return Severity::normal;
  if (max_ibi <= 6.0) return Severity::mild;
  return Severity::moderate_severe;
}

// ---------- rasterization ----------

// Render a normalized waveform as an H x W binary image: samples are
// binned into W columns, each column's mean amplitude is clipped to
// [-3, 3] and mapped to a row (row 0 = +3), and consecutive column
// means are joined with 1-pixel vertical strokes.
inline Tensor rasterize(const Waveform& w, std::size_t H = 32, std::size_t W = 64) {
  w.validate("rasterize");
  if (H < 2 || W < 1) throw ValidationError("rasterize: degenerate image size");
  const std::size_t n = w.samples.size();
  if (n < W)
    throw ValidationError("rasterize: fewer samples (" + std::to_string(n) +
                          ") than columns (" + std::to_string(W) + ")");
  std::vector<double> col_sum(W, 0.0);
  std::vector<std::size_t> col_count(W, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i * W / n;
    col_sum[c] += w.samples[i];
    ++col_count[c];
  }
  std::vector<std::size_t> row(W);
  for (std::size_t c = 0; c < W; ++c) {
    double v = col_sum[c] / static_cast<double>(col_count[c]);
    v = std::clamp(v, -3.0, 3.0);
    // row 0 = +3, bottom row = -3, round half up.
    const double a = (3.0 - v) / 6.0 * static_cast<double>(H - 1);
    row[c] = static_cast<std::size_t>(std::floor(a + 0.5));
  }
  Tensor img({H, W});
  img(row[0], 0) = 1.0;
  for (std::size_t c = 1; c < W; ++c) {
    const std::size_t lo = std::min(row[c - 1], row[c]);
    const std::size_t hi = std::max(row[c - 1], row[c]);
    for (std::size_t r = lo; r <= hi; ++r) img(r, c) = 1.0;
  }
  return img;
}

// Prepared (filter/normalize) view of a raw waveform, per modality.
inline Waveform prepare(const Waveform& raw, Modality modality) {
  return modality == Modality::ecg ? normalize(bandpass(raw)) : normalize(raw);
}

// Dataset image: the raw trace normalized and rastered, mimicking the
// monitor view; band-pass filtering stays internal to peak detection.
inline Tensor render_image(const Waveform& raw, std::size_t H = 32, std::size_t W = 64) {
  return rasterize(normalize(raw), H, W);
}

// Imported-data analogue of the generator's fixed template amplitude:
// rescale so the median detected peak height is 1.
inline Waveform scale_to_median_peak(const Waveform& w, const std::vector<double>& peak_times) {
  w.validate("scale_to_median_peak");
  if (peak_times.empty()) throw ValidationError("scale_to_median_peak: no peaks");
  std::vector<double> heights;
  for (double t : peak_times) {
    const std::size_t i = static_cast<std::size_t>(std::lround(t * w.fs));
    if (i >= w.samples.size())
      throw ValidationError("scale_to_median_peak: peak time outside waveform");
    heights.push_back(std::abs(w.samples[i]));
  }
  const double med = detail::median_of(heights);
  if (med < 1e-12) throw NumericError("scale_to_median_peak: zero median peak height");
  Waveform out = w;
  for (double& v : out.samples) v /= med;
  return out;
}

// ---------- synthetic generators ----------

namespace detail {

// Gaussian-derivative QRS template: zero-mean biphasic spike with peak
// magnitude 1 at t = -+ sigma.
inline double qrs_template(double t, double sigma) {
  return -(t / sigma) * std::exp(0.5 - t * t / (2.0 * sigma * sigma));
}

inline constexpr double kQrsSigma = 0.012;  // s; ~72 ms support, energy in 10-40 Hz
inline constexpr double kNoiseSigma = 0.05;
// T-wave lobe following each QRS.  Its energy sits below the 10-40 Hz
// detection band, but unlike the zero-integral QRS it survives the
// 64-column rasterization, so beat structure stays visible in images.
inline constexpr double kTwaveAmp = 0.35;
inline constexpr double kTwaveDelay = 0.20;   // s after the R spike
inline constexpr double kTwaveSigma = 0.055;  // s

struct EcgPlan {
  std::vector<double> beats;
};

// Beat schedule: baseline RR ~ U(0.45, 0.55); event classes center a
// deceleration (one slow beat for mild, two for moderate_severe, with
// geometric-mean ramp intervals) on the segment midpoint.
inline EcgPlan plan_ecg(Severity cls, Rng& rng, double duration) {
  const double t_start = 0.25 + rng.uniform(0.0, 0.05);
  const double t_end = duration - 0.25;
  auto base_rr = [&rng]() { return rng.uniform(0.45, 0.55); };

  std::vector<double> event_rrs;
  if (cls != Severity::normal) {
    const double min_bpm = cls == Severity::mild ? rng.uniform(80.0, 100.0)
                                                 : rng.uniform(40.0, 80.0);
    const double slow_rr = 60.0 / min_bpm;
    const double ramp = std::sqrt(0.5 * slow_rr);  // geometric mean with baseline
    event_rrs.push_back(ramp);
    for (int i = 0; i < 4; ++i) event_rrs.push_back(slow_rr);
    event_rrs.push_back(ramp);
  }
  double event_span = 0.0;
  for (double rr : event_rrs) event_span += rr;

  EcgPlan plan;
  double t = t_start;
  plan.beats.push_back(t);
  const double event_at = duration / 2.0 - event_span / 2.0;
  bool event_done = event_rrs.empty();
  while (true) {
    double rr;
    if (!event_done && t >= event_at) {
      // Emit the whole deceleration block.
      for (double err : event_rrs) {
        t += err;
        plan.beats.push_back(t);
      }
      event_done = true;
      continue;
    }
    rr = base_rr();
    if (t + rr > t_end) break;
    t += rr;
    plan.beats.push_back(t);
  }
  return plan;
}

inline Waveform synth_ecg(const EcgPlan& plan, Rng& rng, double fs, double duration) {
  Waveform w;
  w.fs = fs;
  w.samples.assign(static_cast<std::size_t>(std::lround(duration * fs)), 0.0);
  for (double beat : plan.beats) {
    const long center = std::lround(beat * fs);
    const long support = std::lround(4.0 * kQrsSigma * fs);
    for (long i = center - support; i <= center + support; ++i) {
      if (i < 0 || i >= static_cast<long>(w.samples.size())) continue;
      const double t = static_cast<double>(i) / fs - beat;
      w.samples[static_cast<std::size_t>(i)] += qrs_template(t, kQrsSigma);
    }
    const long t_center = std::lround((beat + kTwaveDelay) * fs);
    const long t_support = std::lround(4.0 * kTwaveSigma * fs);
    for (long i = t_center - t_support; i <= t_center + t_support; ++i) {
      if (i < 0 || i >= static_cast<long>(w.samples.size())) continue;
      const double t = static_cast<double>(i) / fs - beat - kTwaveDelay;
      w.samples[static_cast<std::size_t>(i)] +=
          kTwaveAmp * std::exp(-t * t / (2.0 * kTwaveSigma * kTwaveSigma));
    }
  }
  for (double& v : w.samples) v += rng.normal(0.0, kNoiseSigma);
  return w;
}

struct RespPlan {
  std::vector<double> peaks;
  std::vector<double> amps;  // per peak
  double period = 2.0;
};

// Breath schedule: peaks every P ~ U(1,3) s with 10% amplitude jitter;
// event classes replace the centered interval with a flat pause of
// U(4,6) s (mild) or U(6.5,12) s (moderate_severe).
inline RespPlan plan_resp(Severity cls, Rng& rng, double duration) {
  RespPlan plan;
  plan.period = rng.uniform(1.0, 3.0);
  const double pause = cls == Severity::normal ? 0.0
                       : cls == Severity::mild ? rng.uniform(4.0, 6.0)
                                               : rng.uniform(6.5, 12.0);
  const double t_end = duration - plan.period / 4.0;
  double t = plan.period;
  bool pause_done = pause == 0.0;
  while (t < t_end) {
    plan.peaks.push_back(t);
    plan.amps.push_back(1.0 + rng.uniform(-0.1, 0.1));
    if (!pause_done && t >= duration / 2.0 - pause / 2.0) {
      t += pause;
      pause_done = true;
    } else {
      t += plan.period;
    }
  }
  return plan;
}

inline Waveform synth_resp(const RespPlan& plan, Rng& rng, double fs, double duration) {
  Waveform w;
  w.fs = fs;
  const std::size_t n = static_cast<std::size_t>(std::lround(duration * fs));
  w.samples.assign(n, 0.0);
  const double P = plan.period;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    double v;
    if (plan.peaks.empty()) {
      v = 0.0;
    } else if (t <= plan.peaks.front()) {
      // Lead-in: hold the trough, then a half-cycle rise into the first
      // crest (no crest before the first planned peak).
      const double dt = plan.peaks.front() - t;
      v = dt >= P / 2.0 ? -plan.amps.front()
                        : plan.amps.front() * std::cos(2.0 * M_PI * dt / P);
    } else if (t >= plan.peaks.back()) {
      // Tail: descend for half a cycle, then hold the trough.
      const double dt = t - plan.peaks.back();
      v = dt >= P / 2.0 ? -plan.amps.back()
                        : plan.amps.back() * std::cos(2.0 * M_PI * dt / P);
    } else {
      std::size_t k = 0;
      while (k + 1 < plan.peaks.size() && plan.peaks[k + 1] <= t) ++k;
      const double t_prev = plan.peaks[k], a_prev = plan.amps[k];
      const double t_next = plan.peaks[k + 1], a_next = plan.amps[k + 1];
      const double gap = t_next - t_prev;
      if (gap <= 1.25 * P) {
        // Normal cycle: full cosine between the peaks (trough midway).
        v = 0.5 * (a_prev + a_next) * std::cos(2.0 * M_PI * (t - t_prev) / gap);
      } else {
        // Pause: half-cosine down to the trough, hold at end-expiratory
        // level, half-cosine back up into the next crest.
        if (t <= t_prev + P / 2.0) {
          v = a_prev * std::cos(2.0 * M_PI * (t - t_prev) / P);
        } else if (t >= t_next - P / 2.0) {
          v = a_next * std::cos(2.0 * M_PI * (t - t_next) / P);
        } else {
          const double frac = (t - t_prev - P / 2.0) / (gap - P);
          v = -a_prev * (1.0 - frac) - a_next * frac;
        }
      }
    }
    w.samples[i] = v;
  }
  for (double& v : w.samples) v += rng.normal(0.0, kNoiseSigma);
  return w;
}

}  // namespace detail

inline constexpr double kEcgDuration = 15.0;   // s
inline constexpr double kRespDuration = 60.0;  // s

// Class-conditional ECG segment.  The requested label must round-trip
// through bandpass+normalize+detect_peaks+label_bradycardia; boundary
// draws are retried with derived sub-seeds (at most 10 attempts).
inline LabeledSegment gen_ecg(Severity cls, std::uint64_t seed, double fs = 250.0) {
  for (std::uint64_t attempt = 0; attempt < 10; ++attempt) {
    const std::uint64_t sub_seed = attempt == 0 ? seed : mix_seed(seed, attempt);
    Rng rng(sub_seed);
    detail::EcgPlan plan = detail::plan_ecg(cls, rng, kEcgDuration);
    Waveform raw = detail::synth_ecg(plan, rng, fs, kEcgDuration);
    std::vector<double> times = detect_peaks(prepare(raw, Modality::ecg), Modality::ecg);
    std::optional<Severity> got = label_bradycardia(times);
    if (got && *got == cls) {
      LabeledSegment seg;
      seg.waveform = std::move(raw);
      seg.label = cls;
      seg.event_times = std::move(times);
      seg.truth_times = std::move(plan.beats);
      seg.synthetic = true;
      seg.seed = sub_seed;
      return seg;
    }
  }
  throw NumericError("gen_ecg: label failed to round-trip after 10 attempts (class " +
                     std::string(severity_name(cls)) + ", seed " + std::to_string(seed) + ")");
}

// Class-conditional respiration segment; same round-trip contract with
// normalize+detect_peaks+label_apnea.
inline LabeledSegment gen_resp(Severity cls, std::uint64_t seed, double fs = 50.0) {
  for (std::uint64_t attempt = 0; attempt < 10; ++attempt) {
    const std::uint64_t sub_seed = attempt == 0 ? seed : mix_seed(seed, attempt);
    Rng rng(sub_seed);
    detail::RespPlan plan = detail::plan_resp(cls, rng, kRespDuration);
    Waveform raw = detail::synth_resp(plan, rng, fs, kRespDuration);
    std::vector<double> times =
        detect_peaks(prepare(raw, Modality::respiration), Modality::respiration);
    std::optional<Severity> got = label_apnea(times);
    if (got && *got == cls) {
      LabeledSegment seg;
      seg.waveform = std::move(raw);
      seg.label = cls;
      seg.event_times = std::move(times);
      seg.truth_times = std::move(plan.peaks);
      seg.synthetic = true;
      seg.seed = sub_seed;
      return seg;
    }
  }
  throw NumericError("gen_resp: label failed to round-trip after 10 attempts (class " +
                     std::string(severity_name(cls)) + ", seed " + std::to_string(seed) + ")");
}

inline LabeledSegment generate(Modality modality, Severity cls, std::uint64_t seed) {
  return modality == Modality::ecg ? gen_ecg(cls, seed) : gen_resp(cls, seed);
}

// ---------- CSV import ----------

// Parse "time,value[,value...]" rows (optional header) into one
// Waveform per value column.  Time must be strictly increasing with a
// constant step to within 1% of the median.
inline std::vector<Waveform> import_csv_text(const std::string& text, const std::string& what) {
  std::vector<double> times;
  std::vector<std::vector<double>> columns;
  std::size_t line_no = 0;
  std::size_t start = 0;
  bool header_checked = false;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (start > text.size()) break;
      continue;
    }

    std::vector<std::string> fields;
    std::size_t fstart = 0;
    while (true) {
      std::size_t comma = line.find(',', fstart);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(fstart));
        break;
      }
      fields.push_back(line.substr(fstart, comma - fstart));
      fstart = comma + 1;
    }

    std::vector<double> values;
    bool numeric = true;
    for (const std::string& f : fields) {
      const char* c = f.c_str();
      char* endp = nullptr;
      const double v = std::strtod(c, &endp);
      while (endp && *endp == ' ') ++endp;
      if (endp == c || (endp && *endp != '\0') || !std::isfinite(v)) {
        numeric = false;
        break;
      }
      values.push_back(v);
    }

    if (!numeric) {
      if (!header_checked) {  // a single leading header row is tolerated
        header_checked = true;
        continue;
      }
      throw ParseError(what + ": non-numeric row at line " + std::to_string(line_no));
    }
    header_checked = true;
    if (values.size() < 2)
      throw ParseError(what + ": need time,value columns at line " + std::to_string(line_no));
    if (!columns.empty() && values.size() - 1 != columns.size())
      throw ParseError(what + ": inconsistent column count at line " + std::to_string(line_no));
    if (columns.empty()) columns.resize(values.size() - 1);
    if (!times.empty() && !(values[0] > times.back()))
      throw ParseError(what + ": non-monotone time at line " + std::to_string(line_no));
    times.push_back(values[0]);
    for (std::size_t c = 0; c < columns.size(); ++c) columns[c].push_back(values[c + 1]);
  }

  if (times.size() < 2) throw ParseError(what + ": need at least 2 samples");
  std::vector<double> deltas;
  for (std::size_t i = 1; i < times.size(); ++i) deltas.push_back(times[i] - times[i - 1]);
  const double med = detail::median_of(deltas);
  for (std::size_t i = 0; i < deltas.size(); ++i)
    if (std::abs(deltas[i] - med) > 0.01 * med)
      throw ParseError(what + ": irregular sampling interval at line " + std::to_string(i + 2));

  std::vector<Waveform> out;
  for (std::vector<double>& col : columns) {
    Waveform w;
    w.fs = 1.0 / med;
    w.samples = std::move(col);
    w.validate(what.c_str());
    out.push_back(std::move(w));
  }
  return out;
}

inline std::vector<Waveform> import_csv(const std::string& path) {
  return import_csv_text(read_file(path), path);
}

}  // namespace protodiv
