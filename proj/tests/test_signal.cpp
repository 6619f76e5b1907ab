// Signal toolkit: filter response, wavelet identities, peak detection,
// labeler boundaries, rasterization, generators, CSV import.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "protodiv/signal.hpp"

using namespace protodiv;

namespace {

Waveform sine(double freq, double fs, double duration, double amp = 1.0) {
  Waveform w;
  w.fs = fs;
  const std::size_t n = static_cast<std::size_t>(std::lround(duration * fs));
  for (std::size_t i = 0; i < n; ++i)
    w.samples.push_back(amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / fs));
  return w;
}

// Steady-state RMS gain in dB over the middle half of the signal.
double gain_db(const Waveform& in, const Waveform& out) {
  double pi = 0.0, po = 0.0;
  const std::size_t lo = in.samples.size() / 4, hi = 3 * in.samples.size() / 4;
  for (std::size_t i = lo; i < hi; ++i) {
    pi += in.samples[i] * in.samples[i];
    po += out.samples[i] * out.samples[i];
  }
  return 10.0 * std::log10(po / pi);
}

double match_fraction(const std::vector<double>& from, const std::vector<double>& to,
                      double tol) {
  if (from.empty()) return 1.0;
  std::size_t hit = 0;
  for (double t : from) {
    bool ok = false;
    for (double u : to)
      if (std::abs(t - u) <= tol) {
        ok = true;
        break;
      }
    hit += ok;
  }
  return static_cast<double>(hit) / static_cast<double>(from.size());
}

}  // namespace

TEST_CASE("bandpass frequency response") {
  const double fs = 250.0;
  SECTION("passband at 20 Hz within 3 dB") {
    Waveform w = sine(20.0, fs, 20.0);
    CHECK(std::abs(gain_db(w, bandpass(w))) < 3.0);
  }
  SECTION("stopband attenuation at 0.5 Hz and 100 Hz >= 20 dB") {
    Waveform lo = sine(0.5, fs, 20.0);
    CHECK(gain_db(lo, bandpass(lo)) <= -20.0);
    Waveform hi = sine(100.0, fs, 20.0);
    CHECK(gain_db(hi, bandpass(hi)) <= -20.0);
  }
  SECTION("DC rejection") {
    Waveform w;
    w.fs = fs;
    w.samples.assign(2000, 5.0);
    Waveform y = bandpass(w);
    // steady state (away from the zero-padded edge transients)
    double mean_abs = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 500; i < 1500; ++i, ++n) mean_abs += std::abs(y.samples[i]);
    mean_abs /= static_cast<double>(n);
    CHECK(mean_abs < 1e-3 * 5.0);
  }
  SECTION("output length equals input length") {
    Waveform w = sine(10.0, fs, 2.0);
    CHECK(bandpass(w).samples.size() == w.samples.size());
    CHECK(bandpass(w).fs == fs);
  }
  SECTION("zero-phase: 20 Hz crest does not shift") {
    Waveform w = sine(20.0, fs, 4.0);
    Waveform y = bandpass(w);
    // locate largest crest in the middle of both signals
    auto crest = [](const Waveform& v) {
      std::size_t best = v.samples.size() / 4;
      for (std::size_t i = v.samples.size() / 4; i < 3 * v.samples.size() / 4; ++i)
        if (v.samples[i] > v.samples[best]) best = i;
      return best;
    };
    const long shift = static_cast<long>(crest(y)) - static_cast<long>(crest(w));
    CHECK(std::abs(shift) <= 1);
  }
  SECTION("band validation") {
    Waveform w = sine(10.0, fs, 1.0);
    CHECK_THROWS_AS(bandpass(w, 0.0, 45.0), ValidationError);
    CHECK_THROWS_AS(bandpass(w, 3.0, 125.0), ValidationError);
    CHECK_THROWS_AS(bandpass(w, 45.0, 3.0), ValidationError);
  }
  SECTION("tap count scales with fs") {
    Waveform w = sine(5.0, 50.0, 10.0);
    Waveform y = bandpass(w, 1.0, 20.0);  // just must be well-formed
    CHECK(y.samples.size() == w.samples.size());
  }
}

TEST_CASE("morlet_cwt identities") {
  const double fs = 250.0;
  SECTION("pure sine concentrates in its own row") {
    Waveform w = sine(10.0, fs, 8.0);
    Tensor m = morlet_cwt(w, {5.0, 10.0, 20.0, 40.0});
    std::vector<double> row_energy(4, 0.0);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t i = m.cols() / 4; i < 3 * m.cols() / 4; ++i)
        row_energy[r] += m(r, i) * m(r, i);
    CHECK(row_energy[1] > 2.0 * row_energy[0]);
    CHECK(row_energy[1] > 2.0 * row_energy[2]);
    CHECK(row_energy[1] > 2.0 * row_energy[3]);
  }
  SECTION("zero signal maps to zero matrix") {
    Waveform w;
    w.fs = fs;
    w.samples.assign(500, 0.0);
    Tensor m = morlet_cwt(w, {10.0, 25.0});
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(m[i] == 0.0);
  }
  SECTION("impulse response equals the unit-energy envelope") {
    // Convolving with a unit impulse reproduces the kernel; the
    // complex modulus of the Morlet kernel is its Gaussian envelope.
    Waveform w;
    w.fs = fs;
    w.samples.assign(1201, 0.0);
    const std::size_t c = 600;
    w.samples[c] = 1.0;
    const double f = 12.5;
    Tensor m = morlet_cwt(w, {f});
    const double w0 = 6.0;
    const double s = w0 / (2.0 * M_PI * f);
    const long half = static_cast<long>(std::ceil(4.0 * s * fs));
    double energy = 0.0;
    for (long j = -half; j <= half; ++j) {
      const double t = static_cast<double>(j) / fs / s;
      energy += std::exp(-t * t);
    }
    const double inv_norm = 1.0 / std::sqrt(energy);
    for (long j : {0L, 3L, 10L, 25L, -7L}) {
      const double t = static_cast<double>(j) / fs / s;
      const double expect = std::exp(-0.5 * t * t) * inv_norm;
      CHECK(m(0, static_cast<std::size_t>(static_cast<long>(c) + j)) ==
            Catch::Approx(expect).margin(1e-12));
    }
  }
  SECTION("frequency validation") {
    Waveform w = sine(10.0, fs, 1.0);
    CHECK_THROWS_AS(morlet_cwt(w, {}), ValidationError);
    CHECK_THROWS_AS(morlet_cwt(w, {0.0}), ValidationError);
    CHECK_THROWS_AS(morlet_cwt(w, {130.0}), ValidationError);
  }
}

TEST_CASE("detect_peaks") {
  SECTION("ECG impulse train lands within 20 ms") {
    const double fs = 250.0;
    Waveform w;
    w.fs = fs;
    w.samples.assign(3750, 0.0);
    std::vector<double> truth;
    for (int k = 0; k < 30; ++k) {
      const long i = std::lround((0.25 + 0.5 * k) * fs);
      w.samples[static_cast<std::size_t>(i)] = 1.0;
      truth.push_back(static_cast<double>(i) / fs);
    }
    std::vector<double> times = detect_peaks(w, Modality::ecg);
    CHECK(times.size() >= 29);
    CHECK(times.size() <= 31);
    CHECK(match_fraction(truth, times, 0.02) == 1.0);
    CHECK(match_fraction(times, truth, 0.02) == 1.0);
  }
  SECTION("constant signal yields no peaks") {
    Waveform w;
    w.fs = 250.0;
    w.samples.assign(2500, 1.0);
    CHECK(detect_peaks(w, Modality::ecg).size() < 2);
    Waveform r;
    r.fs = 50.0;
    r.samples.assign(3000, 1.0);
    CHECK(detect_peaks(r, Modality::respiration).size() < 2);
  }
  SECTION("respiration sinusoid, period 2 s over 60 s") {
    Waveform w = sine(0.5, 50.0, 60.0);
    std::vector<double> times = detect_peaks(normalize(w), Modality::respiration);
    CHECK(times.size() >= 29);
    CHECK(times.size() <= 31);
    // crests of sin at 0.5 Hz sit at 0.5 + 2k seconds
    std::vector<double> truth;
    for (int k = 0; 0.5 + 2.0 * k < 60.0; ++k) truth.push_back(0.5 + 2.0 * k);
    CHECK(match_fraction(times, truth, 0.1) == 1.0);
  }
  SECTION("refractory keeps the stronger of close peaks") {
    const double fs = 250.0;
    Waveform w;
    w.fs = fs;
    w.samples.assign(2500, 0.0);
    // two impulses 100 ms apart, second one stronger, then a far one
    w.samples[500] = 0.8;
    w.samples[525] = 1.0;
    w.samples[1500] = 1.0;
    std::vector<double> times = detect_peaks(w, Modality::ecg);
    REQUIRE(times.size() == 2);
    CHECK(times[0] == Catch::Approx(525.0 / fs).margin(0.02));
    CHECK(times[1] == Catch::Approx(1500.0 / fs).margin(0.02));
  }
  SECTION("times are sorted ascending") {
    LabeledSegment s = gen_ecg(Severity::normal, 3);
    for (std::size_t i = 1; i < s.event_times.size(); ++i)
      CHECK(s.event_times[i] > s.event_times[i - 1]);
  }
}

TEST_CASE("labeler boundaries") {
  SECTION("bradycardia bands") {
    // uniform 120 bpm
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) t.push_back(0.5 * i);
    CHECK(label_bradycardia(t) == Severity::normal);
    // one 0.667 s gap amid 120 bpm -> 90 bpm -> mild
    std::vector<double> g = {0.0, 0.5, 1.0, 1.667, 2.167, 2.667};
    CHECK(label_bradycardia(g) == Severity::mild);
    // one 1.0 s gap -> 60 bpm -> moderate_severe
    std::vector<double> h = {0.0, 0.5, 1.5, 2.0};
    CHECK(label_bradycardia(h) == Severity::moderate_severe);
  }
  SECTION("bradycardia boundary exactness") {
    // rate exactly 100 -> mild (100 is inside (80, 100])
    CHECK(label_bradycardia({0.0, 0.6}) == Severity::mild);
    // rate exactly 80 -> moderate_severe (<= 80); 0.75 is exact in binary
    CHECK(label_bradycardia({0.0, 0.75}) == Severity::moderate_severe);
    // just above each edge
    CHECK(label_bradycardia({0.0, 0.55}) == Severity::normal);   // ~109 bpm
    CHECK(label_bradycardia({0.0, 0.74}) == Severity::mild);     // ~81.1 bpm
    CHECK(label_bradycardia({0.0, 0.76}) == Severity::moderate_severe);
  }
  SECTION("apnea bands") {
    std::vector<double> t;
    for (int i = 0; i < 8; ++i) t.push_back(2.0 * i);
    CHECK(label_apnea(t) == Severity::normal);
    CHECK(label_apnea({0.0, 2.0, 7.0, 9.0}) == Severity::mild);            // 5 s gap
    CHECK(label_apnea({0.0, 2.0, 10.0, 12.0}) == Severity::moderate_severe);  // 8 s
  }
  SECTION("apnea boundary exactness") {
    CHECK(label_apnea({0.0, 4.0}) == Severity::mild);             // 4 s inclusive
    CHECK(label_apnea({0.0, 6.0}) == Severity::mild);             // 6 s inclusive
    CHECK(label_apnea({0.0, 6.0 + 1e-9}) == Severity::moderate_severe);
    CHECK(label_apnea({0.0, 4.0 - 1e-9}) == Severity::normal);
  }
  SECTION("fewer than two events flags the segment") {
    CHECK_FALSE(label_bradycardia({}).has_value());
    CHECK_FALSE(label_bradycardia({1.0}).has_value());
    CHECK_FALSE(label_apnea({2.5}).has_value());
  }
  SECTION("non-increasing times are rejected") {
    CHECK_THROWS_AS(label_bradycardia({0.0, 0.5, 0.5}), ValidationError);
    CHECK_THROWS_AS(label_apnea({3.0, 1.0}), ValidationError);
  }
}

TEST_CASE("normalize") {
  SECTION("sine maps to zero mean, unit variance") {
    Waveform w = sine(2.0, 100.0, 5.0, 7.3);
    for (double& v : w.samples) v += 4.2;
    Waveform y = normalize(w);
    double mean = 0.0;
    for (double v : y.samples) mean += v;
    mean /= static_cast<double>(y.samples.size());
    double var = 0.0;
    for (double v : y.samples) var += (v - mean) * (v - mean);
    var /= static_cast<double>(y.samples.size());
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-9);
    CHECK(y.fs == w.fs);
  }
  SECTION("already normalized input is unchanged") {
    Waveform y = normalize(sine(2.0, 100.0, 5.0));
    Waveform z = normalize(y);
    for (std::size_t i = 0; i < y.samples.size(); ++i)
      CHECK(std::abs(z.samples[i] - y.samples[i]) < 1e-9);
  }
  SECTION("affine-transformed copy maps to the same output") {
    Waveform w = sine(1.5, 80.0, 4.0);
    Waveform a = w;
    for (double& v : a.samples) v = 3.7 * v - 11.0;
    Waveform yw = normalize(w), ya = normalize(a);
    for (std::size_t i = 0; i < yw.samples.size(); ++i)
      CHECK(std::abs(yw.samples[i] - ya.samples[i]) < 1e-9);
  }
  SECTION("constant input maps to zeros") {
    Waveform w;
    w.fs = 10.0;
    w.samples.assign(50, 123.456);
    Waveform y = normalize(w);
    for (double v : y.samples) CHECK(v == 0.0);
  }
}

TEST_CASE("rasterize") {
  SECTION("constant zero waveform lights the middle row") {
    Waveform w;
    w.fs = 10.0;
    w.samples.assign(128, 0.0);
    Tensor img = rasterize(w);
    for (std::size_t c = 0; c < 64; ++c)
      for (std::size_t r = 0; r < 32; ++r)
        CHECK(img(r, c) == (r == 16 ? 1.0 : 0.0));
  }
  SECTION("negation mirrors the image vertically") {
    Waveform w = sine(1.7, 30.0, 8.0, 2.4);
    Waveform neg = w;
    for (double& v : neg.samples) v = -v;
    Tensor a = rasterize(w), b = rasterize(neg);
    for (std::size_t r = 0; r < 32; ++r)
      for (std::size_t c = 0; c < 64; ++c) CHECK(a(r, c) == b(31 - r, c));
  }
  SECTION("full-scale waveform touches both extreme rows") {
    Waveform w;
    w.fs = 10.0;
    // alternate whole columns at +-4 so column means clip at +-3
    for (std::size_t c = 0; c < 64; ++c)
      for (int k = 0; k < 2; ++k) w.samples.push_back(c % 2 ? -4.0 : 4.0);
    Tensor img = rasterize(w);
    bool top = false, bottom = false;
    for (std::size_t c = 0; c < 64; ++c) {
      top = top || img(0, c) > 0.0;
      bottom = bottom || img(31, c) > 0.0;
    }
    CHECK(top);
    CHECK(bottom);
  }
  SECTION("strokes connect consecutive column means") {
    // one sample per column: columns are the samples themselves
    Waveform w;
    w.fs = 10.0;
    Rng rng(11);
    for (int i = 0; i < 64; ++i) w.samples.push_back(rng.uniform(-2.5, 2.5));
    Tensor img = rasterize(w);
    std::vector<std::size_t> row(64);
    for (std::size_t c = 0; c < 64; ++c) {
      const double v = std::clamp(w.samples[c], -3.0, 3.0);
      row[c] = static_cast<std::size_t>(std::floor((3.0 - v) / 6.0 * 31.0 + 0.5));
    }
    for (std::size_t c = 0; c < 64; ++c) {
      const std::size_t lo = c == 0 ? row[0] : std::min(row[c - 1], row[c]);
      const std::size_t hi = c == 0 ? row[0] : std::max(row[c - 1], row[c]);
      for (std::size_t r = 0; r < 32; ++r)
        CHECK(img(r, c) == ((r >= lo && r <= hi) ? 1.0 : 0.0));
    }
  }
  SECTION("every column is lit for generator traces") {
    Tensor img = render_image(gen_ecg(Severity::mild, 5).waveform);
    for (std::size_t c = 0; c < img.cols(); ++c) {
      double col = 0.0;
      for (std::size_t r = 0; r < img.rows(); ++r) col += img(r, c);
      CHECK(col >= 1.0);
    }
    for (std::size_t i = 0; i < img.size(); ++i) {
      CHECK(img[i] >= 0.0);
      CHECK(img[i] <= 1.0);
    }
  }
  SECTION("rasterize then normalize is affine invariant end to end") {
    LabeledSegment s = gen_resp(Severity::mild, 9);
    Waveform scaled = s.waveform;
    for (double& v : scaled.samples) v = 0.25 * v + 19.0;
    Tensor a = render_image(s.waveform);
    Tensor b = render_image(scaled);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
  SECTION("fewer samples than columns is rejected") {
    Waveform w;
    w.fs = 10.0;
    w.samples.assign(40, 0.0);
    CHECK_THROWS_AS(rasterize(w), ValidationError);
  }
}

TEST_CASE("synthetic generators") {
  SECTION("determinism and shape") {
    LabeledSegment a = gen_ecg(Severity::mild, 42);
    LabeledSegment b = gen_ecg(Severity::mild, 42);
    REQUIRE(a.waveform.samples.size() == b.waveform.samples.size());
    for (std::size_t i = 0; i < a.waveform.samples.size(); ++i)
      CHECK(a.waveform.samples[i] == b.waveform.samples[i]);
    CHECK(a.waveform.samples.size() == 3750);
    CHECK(a.waveform.fs == 250.0);
    LabeledSegment r = gen_resp(Severity::normal, 42);
    CHECK(r.waveform.samples.size() == 3000);
    CHECK(r.waveform.fs == 50.0);
    LabeledSegment c = gen_ecg(Severity::mild, 43);
    bool same = true;
    for (std::size_t i = 0; i < a.waveform.samples.size(); ++i)
      same = same && a.waveform.samples[i] == c.waveform.samples[i];
    CHECK_FALSE(same);
  }
  SECTION("round-trip labels for all classes and both modalities") {
    for (int cls = 0; cls < 3; ++cls)
      for (std::uint64_t seed = 0; seed < 25; ++seed) {
        LabeledSegment e = gen_ecg(static_cast<Severity>(cls), seed);
        CHECK(e.label == static_cast<Severity>(cls));
        CHECK(label_bradycardia(e.event_times) == e.label);
        LabeledSegment r = gen_resp(static_cast<Severity>(cls), seed);
        CHECK(r.label == static_cast<Severity>(cls));
        CHECK(label_apnea(r.event_times) == r.label);
      }
  }
  SECTION("stored event times come from the real detector") {
    LabeledSegment s = gen_ecg(Severity::moderate_severe, 17);
    std::vector<double> redo = detect_peaks(prepare(s.waveform, Modality::ecg), Modality::ecg);
    REQUIRE(redo.size() == s.event_times.size());
    for (std::size_t i = 0; i < redo.size(); ++i) CHECK(redo[i] == s.event_times[i]);
  }
  SECTION("mild apnea max IBI lies in [4, 6]") {
    for (std::uint64_t seed = 50; seed < 60; ++seed) {
      LabeledSegment s = gen_resp(Severity::mild, seed);
      double max_ibi = 0.0;
      for (std::size_t i = 1; i < s.event_times.size(); ++i)
        max_ibi = std::max(max_ibi, s.event_times[i] - s.event_times[i - 1]);
      CHECK(max_ibi >= 4.0);
      CHECK(max_ibi <= 6.0);
    }
  }
  SECTION("detection matches generator ground truth") {
    for (std::uint64_t seed = 0; seed < 10; ++seed)
      for (int cls = 0; cls < 3; ++cls) {
        LabeledSegment e = gen_ecg(static_cast<Severity>(cls), seed);
        CHECK(match_fraction(e.truth_times, e.event_times, 0.02) == 1.0);
        CHECK(match_fraction(e.event_times, e.truth_times, 0.02) == 1.0);
        LabeledSegment r = gen_resp(static_cast<Severity>(cls), seed);
        CHECK(match_fraction(r.truth_times, r.event_times, 0.1) == 1.0);
        CHECK(match_fraction(r.event_times, r.truth_times, 0.1) == 1.0);
      }
  }
}

TEST_CASE("scale_to_median_peak") {
  Waveform w;
  w.fs = 10.0;
  w.samples.assign(100, 0.0);
  w.samples[10] = 1.0;
  w.samples[50] = 2.0;
  w.samples[90] = -3.0;
  std::vector<double> peaks = {1.0, 5.0, 9.0};
  Waveform y = scale_to_median_peak(w, peaks);
  CHECK(y.samples[10] == Catch::Approx(0.5));
  CHECK(y.samples[50] == Catch::Approx(1.0));
  CHECK(y.samples[90] == Catch::Approx(-1.5));
  CHECK_THROWS_AS(scale_to_median_peak(w, {}), ValidationError);
  CHECK_THROWS_AS(scale_to_median_peak(w, {99.0}), ValidationError);
  Waveform z;
  z.fs = 10.0;
  z.samples.assign(100, 0.0);
  z.samples[1] = 1e-300;
  CHECK_THROWS_AS(scale_to_median_peak(z, {0.1}), NumericError);
}

TEST_CASE("CSV import") {
  SECTION("well-formed four-row file") {
    std::vector<Waveform> ws = import_csv_text("0,1.5\n0.01,2\n0.02,2.5\n0.03,-1\n", "test");
    REQUIRE(ws.size() == 1);
    REQUIRE(ws[0].samples.size() == 4);
    CHECK(ws[0].fs == Catch::Approx(100.0));
    CHECK(ws[0].samples[0] == 1.5);
    CHECK(ws[0].samples[3] == -1.0);
  }
  SECTION("header row is tolerated and skipped") {
    std::vector<Waveform> ws = import_csv_text("time,value\n0,1\n0.5,2\n1.0,3\n", "test");
    REQUIRE(ws.size() == 1);
    CHECK(ws[0].samples.size() == 3);
    CHECK(ws[0].fs == Catch::Approx(2.0));
  }
  SECTION("extra value columns become extra waveforms") {
    std::vector<Waveform> ws =
        import_csv_text("0,1,10\n0.1,2,20\n0.2,3,30\n", "test");
    REQUIRE(ws.size() == 2);
    CHECK(ws[0].samples[2] == 3.0);
    CHECK(ws[1].samples[2] == 30.0);
    CHECK(ws[1].fs == Catch::Approx(10.0));
  }
  SECTION("irregular sampling is rejected with a line number") {
    try {
      import_csv_text("0,1\n0.01,2\n0.02,3\n0.08,4\n0.09,5\n", "test");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
  }
  SECTION("non-monotone time is rejected") {
    CHECK_THROWS_AS(import_csv_text("0,1\n0.2,2\n0.1,3\n", "test"), ParseError);
  }
  SECTION("non-numeric body row is rejected") {
    CHECK_THROWS_AS(import_csv_text("0,1\n0.1,2\nbroken,row\n0.3,4\n", "test"), ParseError);
  }
  SECTION("inconsistent column count is rejected") {
    CHECK_THROWS_AS(import_csv_text("0,1\n0.1,2,3\n", "test"), ParseError);
  }
  SECTION("fewer than two samples is rejected") {
    CHECK_THROWS_AS(import_csv_text("0,1\n", "test"), ParseError);
  }
  SECTION("round-trip through a real file") {
    const std::string path = "/tmp/protodiv_csv_fixture.csv";
    write_file(path, "t,v\n0,0.5\n0.004,0.75\n0.008,1.0\n0.012,1.25\n");
    std::vector<Waveform> ws = import_csv(path);
    REQUIRE(ws.size() == 1);
    CHECK(ws[0].fs == Catch::Approx(250.0));
    CHECK(ws[0].samples.size() == 4);
    std::remove(path.c_str());
  }
}
