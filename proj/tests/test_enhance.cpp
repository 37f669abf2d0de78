#include <doctest.h>

#include <cmath>
#include <numbers>

#include "stressbench/binio.hpp"
#include "stressbench/degrade.hpp"
#include "stressbench/enhance.hpp"
#include "test_util.hpp"

using namespace stressbench;
using namespace stressbench::enhance;
using testutil::TempDir;

namespace {

audio::Waveform tone(double seconds, double hz = 1000.0, double amp = 0.2) {
  audio::Waveform w;
  w.samples.resize(static_cast<std::size_t>(seconds * kSampleRate));
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / kSampleRate);
  }
  return w;
}

// Profile taken from the true noise component over every frame.
NoiseProfile oracle_profile(const std::vector<double>& noise) {
  const auto s = audio::stft(audio::Waveform{noise, kSampleRate});
  NoiseProfile p;
  p.magnitude.assign(s.bins, 0.0);
  for (std::size_t f = 0; f < s.frames; ++f) {
    for (std::size_t k = 0; k < s.bins; ++k) p.magnitude[k] += std::abs(s.at(f, k));
  }
  for (auto& m : p.magnitude) m /= s.frames;
  p.frames_used = s.frames;
  return p;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace

TEST_CASE("noise profile of stationary white noise is flat") {
  audio::Waveform w;
  w.samples = degrade::gaussian_noise(kSampleRate, 9);
  for (auto& v : w.samples) v *= 0.05;
  const auto p = estimate_noise(w, 600.0);
  CHECK(p.frames_used >= 50);
  double mean = 0.0, sq = 0.0;
  for (double m : p.magnitude) {
    CHECK(m >= 0.0);
    mean += m;
  }
  mean /= p.magnitude.size();
  for (double m : p.magnitude) sq += (m - mean) * (m - mean);
  CHECK(std::sqrt(sq / p.magnitude.size()) / mean < 0.2);
}

TEST_CASE("noise profile edge cases") {
  audio::Waveform z;
  z.samples.assign(8000, 0.0);
  const auto p = estimate_noise(z);
  for (double m : p.magnitude) CHECK(m == 0.0);
  CHECK_THROWS_WITH_AS(estimate_noise(z, 1000.0), doctest::Contains("shorter"), Error);
  CHECK_THROWS_AS(estimate_noise(z, 40.0), Error);  // too few frames
}

TEST_CASE("zero profile leaves audio unchanged") {
  audio::Waveform x;
  x.samples = testutil::random_vector(8000, 3, 0.1);
  NoiseProfile zero{std::vector<double>(257, 0.0), 10};
  const auto ss = spectral_subtract(x, zero);
  const auto wf = wiener(x, zero);
  CHECK(ss.samples.size() == x.samples.size());
  CHECK(wf.samples.size() == x.samples.size());
  CHECK(max_abs_diff(ss.samples, x.samples) < 1e-9);
  CHECK(max_abs_diff(wf.samples, x.samples) < 1e-9);
}

TEST_CASE("spectral subtraction respects the floor before resynthesis") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    audio::Waveform x;
    x.samples = testutil::random_vector(5000, seed, 0.1);
    const auto s = audio::stft(x);
    NoiseProfile p{testutil::random_vector(s.bins, seed + 50, 3.0), 10};
    for (auto& m : p.magnitude) m = std::abs(m);
    const SpectralSubtractionParams params{2.0, 0.02};
    const auto out = spectral_subtraction_magnitudes(s, p, params);
    for (std::size_t f = 0; f < s.frames; ++f) {
      for (std::size_t k = 0; k < s.bins; ++k) {
        const double mag = std::abs(s.at(f, k));
        const double o = out[f * s.bins + k];
        CHECK(o >= params.beta * mag * (1.0 - 1e-12));
        CHECK(o == doctest::Approx(std::max(mag - 2.0 * p.magnitude[k], 0.02 * mag)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("wiener gains stay in [0, 1]") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    audio::Waveform x;
    x.samples = testutil::random_vector(4000, seed, 0.3);
    const auto s = audio::stft(x);
    NoiseProfile p{testutil::random_vector(s.bins, seed + 9, 5.0), 10};
    for (auto& m : p.magnitude) m = std::abs(m);
    for (double a : {0.0, 0.5, 0.98}) {
      const auto mask = wiener_mask(s, p, {a});
      for (double g : mask.gain) {
        CHECK(g >= 0.0);
        CHECK(g <= 1.0);
      }
    }
  }
}

TEST_CASE("wiener first frame follows the decision-directed rule at posterior SNR 1") {
  audio::Waveform x;
  x.samples = testutil::random_vector(2000, 4, 0.2);
  const auto s = audio::stft(x);
  NoiseProfile p;
  for (std::size_t k = 0; k < s.bins; ++k) p.magnitude.push_back(std::abs(s.at(0, k)));
  const double a = 0.98;
  const auto mask = wiener_mask(s, p, {a});
  // posterior 1 -> ML term 0; xi = a * 1; G = a / (1 + a).
  for (std::size_t k = 0; k < s.bins; ++k) {
    if (p.magnitude[k] > 1e-10) CHECK(mask.at(0, k) == doctest::Approx(a / (1.0 + a)).epsilon(1e-12));
  }
}

TEST_CASE("both baselines raise component SNR on tone plus noise") {
  const auto clean = tone(1.0);
  for (double snr : {0.0, 5.0, 10.0}) {
    for (std::uint64_t seed : {1, 2}) {
      const auto mix = degrade::add_noise(clean, {snr, seed});
      const auto profile = oracle_profile(mix.noise_component);
      const auto s = audio::stft(mix.mixture);
      const double ss = enhanced_component_snr_db(spectral_subtraction_mask(s, profile, {}),
                                                  mix.clean_component, mix.noise_component);
      const double wf = enhanced_component_snr_db(wiener_mask(s, profile, {}), mix.clean_component,
                                                  mix.noise_component);
      CHECK(ss > mix.measured_snr_db);
      CHECK(wf > mix.measured_snr_db);
      if (snr == 0.0) {
        CHECK(ss >= mix.measured_snr_db + 3.0);
        CHECK(wf >= mix.measured_snr_db + 3.0);
      }
    }
  }
}

TEST_CASE("enhancers preserve length and rate; masks add linearly") {
  const auto mix = degrade::add_noise(tone(0.7), {5.0, 3});
  for (const auto& e : {Enhancer{"ss", EnhancerKind::spectral_subtraction, SpectralSubtractionParams{}},
                        Enhancer{"wf", EnhancerKind::wiener, WienerParams{}}}) {
    const auto out = run(e, mix.mixture);
    CHECK(out.samples.size() == mix.mixture.samples.size());
    CHECK(out.sample_rate == kSampleRate);
    const auto mask = mask_for(e, mix.mixture);
    const auto c = apply_mask(audio::Waveform{mix.clean_component, kSampleRate}, mask);
    const auto n = apply_mask(audio::Waveform{mix.noise_component, kSampleRate}, mask);
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
      CHECK(std::abs(out.samples[i] - c.samples[i] - n.samples[i]) < 1e-12);
    }
  }
  Enhancer bad{"bad", EnhancerKind::wiener, WienerParams{1.0}};
  CHECK_THROWS_AS(bad.validate(), Error);
  Enhancer imp{"ext", EnhancerKind::external_import, ImportParams{"x"}};
  CHECK_THROWS_AS(run(imp, mix.mixture), Error);
  NoiseProfile wrong{std::vector<double>(10, 0.0), 10};
  CHECK_THROWS_WITH_AS(wiener(mix.mixture, wrong), doctest::Contains("bins"), Error);
}

TEST_CASE("import_enhanced: complete, missing and mismatched") {
  TempDir dir;
  std::vector<corpus::ManifestEntry> manifest;
  for (int i = 0; i < 4; ++i) {
    const std::string id = "u" + std::to_string(i);
    manifest.push_back({id, id + ".wav", 16000, 1.0});
    audio::Waveform w;
    w.samples.assign(16000 + 160 * i, 0.0);  // 0, 10, 20, 30 ms longer
    audio::write_wav(w, dir / ("ok/" + id + ".wav"));
  }
  auto h = import_enhanced(dir / "ok", manifest, "dtln");
  CHECK(h.missing.empty());
  REQUIRE(h.mismatched.size() == 1);
  CHECK(h.mismatched[0].utt_id == "u3");
  CHECK(h.files.size() == 3);

  manifest.pop_back();
  h = import_enhanced(dir / "ok", manifest, "dtln");
  CHECK(h.ok());

  std::filesystem::remove(dir / "ok/u1.wav");
  h = import_enhanced(dir / "ok", manifest, "dtln");
  REQUIRE(h.missing.size() == 1);
  CHECK(h.missing[0] == "u1");
  CHECK(h.summary().find("missing: u1") != std::string::npos);

  audio::Waveform longer;
  longer.samples.assign(16000 + 1600, 0.0);  // +100 ms
  audio::write_wav(longer, dir / "ok/u1.wav");
  h = import_enhanced(dir / "ok", manifest, "dtln");
  REQUIRE(h.mismatched.size() == 1);
  CHECK(h.mismatched[0].actual_s == doctest::Approx(1.1));
}

TEST_CASE("enhance_directory writes one file per input") {
  TempDir dir;
  for (int i = 0; i < 3; ++i) {
    const auto mix = degrade::add_noise(tone(0.6), {0.0, static_cast<std::uint64_t>(i)});
    audio::write_wav(mix.mixture, dir / ("in/u" + std::to_string(i) + ".wav"));
  }
  const Enhancer e{"wiener", EnhancerKind::wiener, WienerParams{}};
  const auto r = enhance_directory(e, dir / "in", dir / "out");
  CHECK(r.processed == 3);
  CHECK(r.failures.empty());
  enhance_directory(e, dir / "in", dir / "out2");
  CHECK(binio::read_file(dir / "out/u1.wav") == binio::read_file(dir / "out2/u1.wav"));
}
