#include <doctest.h>

#include <cmath>

#include "stressbench/binio.hpp"
#include "stressbench/degrade.hpp"
#include "test_util.hpp"

using namespace stressbench;
using namespace stressbench::degrade;
using testutil::TempDir;

namespace {

audio::Waveform random_clean(std::uint64_t seed, std::size_t n, double level) {
  audio::Waveform w;
  w.samples = testutil::random_vector(n, seed, level);
  return w;
}

double direct_rms(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / x.size());
}

}  // namespace

TEST_CASE("0 dB gives equal component RMS") {
  const auto clean = random_clean(1, 8000, 0.1);
  const auto mix = add_noise(clean, {0.0, 3});
  CHECK(mix.gain == 1.0);
  CHECK(direct_rms(mix.noise_component) == doctest::Approx(direct_rms(clean.samples)).epsilon(1e-12));
}

TEST_CASE("20 dB on RMS 0.1 gives noise RMS 0.01") {
  auto clean = random_clean(2, 16000, 1.0);
  const double r = direct_rms(clean.samples);
  for (auto& v : clean.samples) v *= 0.1 / r;
  const auto mix = add_noise(clean, {20.0, 4});
  CHECK(direct_rms(mix.noise_component) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("SNR exactness, additivity and determinism over random pairs") {
  Rng rng(77);
  for (int i = 0; i < 100; ++i) {
    const double target = rng.uniform(-5.0, 30.0);
    const double level = rng.uniform(0.01, 0.6);
    const auto clean = random_clean(1000 + i, 2000 + rng.below(6000), level);
    const auto mix = add_noise(clean, {target, static_cast<std::uint64_t>(i)});
    const double measured = 20.0 * std::log10(direct_rms(mix.clean_component) / direct_rms(mix.noise_component));
    CHECK(std::abs(measured - target) < 0.01);
    CHECK(std::abs(mix.measured_snr_db - target) < 0.01);
    double peak = 0.0;
    for (std::size_t k = 0; k < clean.samples.size(); ++k) {
      CHECK(std::abs(mix.mixture.samples[k] - mix.clean_component[k] - mix.noise_component[k]) < 1e-12);
      CHECK(mix.clean_component[k] == mix.gain * clean.samples[k]);
      peak = std::max(peak, std::abs(mix.mixture.samples[k]));
    }
    CHECK(peak <= 0.999 + 1e-12);
    if (i % 10 == 0) {
      const auto again = add_noise(clean, {target, static_cast<std::uint64_t>(i)});
      CHECK(audio::encode_wav(again.mixture) == audio::encode_wav(mix.mixture));
      CHECK(again.noise_component == mix.noise_component);
    }
  }
}

TEST_CASE("loud input is peak normalized with the gain recorded") {
  const auto clean = random_clean(5, 4000, 0.8);
  const auto mix = add_noise(clean, {0.0, 1});
  CHECK(mix.gain < 1.0);
  CHECK(std::abs(mix.measured_snr_db) < 0.01);
}

TEST_CASE("add_noise rejects silence and bad targets") {
  audio::Waveform z;
  z.samples.assign(100, 0.0);
  CHECK_THROWS_WITH_AS(add_noise(z, {0.0, 1}), doctest::Contains("silent"), Error);
  CHECK_THROWS_AS(add_noise(random_clean(1, 10, 0.1), {std::nan(""), 1}), Error);
  CHECK_THROWS_AS(add_noise(audio::Waveform{}, {0.0, 1}), Error);
}

TEST_CASE("batch_degrade: 3 utterances x 4 SNRs") {
  TempDir dir;
  std::vector<std::string> ids = {"a", "b", "c"};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    audio::write_wav(random_clean(i + 1, 3000 + 500 * i, 0.1), dir / ("in/" + ids[i] + ".wav"));
  }
  const auto res = batch_degrade(dir / "in", dir / "out", kDefaultSnrs, 42);
  CHECK(res.failures.empty());
  REQUIRE(res.rows.size() == 12);
  const auto manifest = parse_manifest(binio::read_text(dir / "out/manifest.tsv"), "manifest");
  REQUIRE(manifest.size() == 12);
  for (const auto& row : manifest) {
    CHECK(row.seed == derive_seed(42, row.utt_id));
    const auto clean = audio::read_wav(dir / ("in/" + row.utt_id + ".wav"));
    const auto noise = read_component(noise_component_path(dir / "out", row.snr_db, row.utt_id));
    REQUIRE(noise.size() == clean.samples.size());
    std::vector<double> scaled(clean.samples.size());
    for (std::size_t k = 0; k < scaled.size(); ++k) scaled[k] = row.gain * clean.samples[k];
    CHECK(std::abs(snr_db(scaled, noise) - row.snr_db) < 0.01);
    CHECK(std::abs(row.measured_snr_db - row.snr_db) < 0.01);
    CHECK(std::filesystem::exists(dir / "out" / snr_dir_name(row.snr_db) / (row.utt_id + ".wav")));
  }

  batch_degrade(dir / "in", dir / "out2", kDefaultSnrs, 42);
  CHECK(binio::read_text(dir / "out/manifest.tsv") == binio::read_text(dir / "out2/manifest.tsv"));
  for (double snr : kDefaultSnrs) {
    for (const auto& id : ids) {
      const auto rel = snr_dir_name(snr) + "/" + id + ".wav";
      CHECK(binio::read_file(dir / ("out/" + rel)) == binio::read_file(dir / ("out2/" + rel)));
    }
  }
}

TEST_CASE("batch_degrade continues past a bad file") {
  TempDir dir;
  audio::write_wav(random_clean(1, 3000, 0.1), dir / "in/good.wav");
  binio::write_text(dir / "in/bad.wav", "not audio");
  audio::Waveform silent;
  silent.samples.assign(1000, 0.0);
  audio::write_wav(silent, dir / "in/quiet.wav");
  const auto res = batch_degrade(dir / "in", dir / "out", {0.0, 10.0}, 1);
  CHECK(res.rows.size() == 2);
  CHECK(res.failures.size() == 2);
}

TEST_CASE("manifest round trip") {
  std::vector<ManifestRow> rows = {{"u1", 0.0, 123, 0.5, 0.001}, {"u2", 20.0, 9, 1.0, 19.999}};
  const auto back = parse_manifest(format_manifest(rows), "m");
  REQUIRE(back.size() == 2);
  CHECK(back[1].utt_id == "u2");
  CHECK(back[1].seed == 9);
  CHECK(back[0].gain == 0.5);
  CHECK(back[1].measured_snr_db == 19.999);
}
