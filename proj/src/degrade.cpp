#include "stressbench/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stressbench/binio.hpp"
#include "stressbench/parallel.hpp"
#include "stressbench/rng.hpp"

namespace stressbench::degrade {

std::vector<double> gaussian_noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.gaussian();
  return x;
}

double snr_db(std::span<const double> signal, std::span<const double> noise) {
  return 20.0 * std::log10(audio::rms(signal) / audio::rms(noise));
}

NoisyMix add_noise(const audio::Waveform& clean, const NoiseCondition& cond) {
  if (!std::isfinite(cond.snr_db)) throw Error("add_noise: SNR must be finite");
  if (clean.samples.empty()) throw Error("add_noise: empty input");
  const double clean_rms = audio::rms(std::span<const double>(clean.samples));
  if (!(clean_rms > 0.0)) throw Error("add_noise: silent input (zero RMS)");

  auto noise = gaussian_noise(clean.samples.size(), cond.seed);
  const double noise_rms = audio::rms(std::span<const double>(noise));
  const double scale = clean_rms / (noise_rms * std::pow(10.0, cond.snr_db / 20.0));

  NoisyMix mix;
  mix.mixture.sample_rate = clean.sample_rate;
  mix.mixture.samples.resize(clean.samples.size());
  double peak = 0.0;
  for (std::size_t i = 0; i < noise.size(); ++i) {
    noise[i] *= scale;
    mix.mixture.samples[i] = clean.samples[i] + noise[i];
    peak = std::max(peak, std::abs(mix.mixture.samples[i]));
  }
  mix.gain = peak > 0.999 ? 0.999 / peak : 1.0;
  mix.clean_component.resize(clean.samples.size());
  for (std::size_t i = 0; i < noise.size(); ++i) {
    mix.clean_component[i] = mix.gain * clean.samples[i];
    noise[i] *= mix.gain;
    mix.mixture.samples[i] = mix.clean_component[i] + noise[i];
  }
  mix.noise_component = std::move(noise);
  mix.measured_snr_db = snr_db(mix.clean_component, mix.noise_component);
  return mix;
}

std::string snr_dir_name(double snr) { return "snr_" + binio::format_double(snr); }

std::filesystem::path noise_component_path(const std::filesystem::path& out_dir, double snr,
                                           const std::string& utt_id) {
  return out_dir / snr_dir_name(snr) / "components" / (utt_id + ".noise.f64");
}

std::vector<double> read_component(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  if (bytes.size() % 8 != 0) throw Error(path.string() + ": size is not a multiple of 8");
  binio::Reader r(bytes.data(), bytes.size(), path.string());
  std::vector<double> x(bytes.size() / 8);
  for (auto& v : x) v = r.f64("sample");
  return x;
}

void write_component(const std::filesystem::path& path, std::span<const double> x) {
  binio::Writer w;
  for (double v : x) w.f64(v);
  binio::write_file(path, w.bytes());
}

BatchResult batch_degrade(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir,
                          const std::vector<double>& snrs, std::uint64_t master_seed) {
  if (!std::filesystem::is_directory(in_dir)) throw Error("not a directory: " + in_dir.string());
  std::vector<std::filesystem::path> inputs;
  for (const auto& entry : std::filesystem::directory_iterator(in_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") inputs.push_back(entry.path());
  }
  std::sort(inputs.begin(), inputs.end());

  struct Slot {
    std::vector<ManifestRow> rows;
    std::string failure;
  };
  std::vector<Slot> slots(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) {
    const std::string utt_id = inputs[i].stem().string();
    try {
      const auto clean = audio::read_wav(inputs[i]);
      const std::uint64_t seed = derive_seed(master_seed, utt_id);
      for (double snr : snrs) {
        const auto mix = add_noise(clean, {snr, seed});
        audio::write_wav(mix.mixture, out_dir / snr_dir_name(snr) / (utt_id + ".wav"));
        write_component(noise_component_path(out_dir, snr, utt_id), mix.noise_component);
        slots[i].rows.push_back({utt_id, snr, seed, mix.gain, mix.measured_snr_db});
      }
    } catch (const std::exception& e) {
      slots[i].failure = inputs[i].filename().string() + ": " + e.what();
    }
  });

  BatchResult result;
  for (auto& s : slots) {
    for (auto& r : s.rows) result.rows.push_back(std::move(r));
    if (!s.failure.empty()) result.failures.push_back(std::move(s.failure));
  }
  std::filesystem::create_directories(out_dir);
  binio::write_text(out_dir / "manifest.tsv", format_manifest(result.rows));
  return result;
}

std::string format_manifest(const std::vector<ManifestRow>& rows) {
  std::ostringstream out;
  out << "# snr_reference=full_utterance_rms noise=white_gaussian clipping=joint_peak_gain_0.999\n";
  out << "# utt_id\tsnr_db\tseed\tgain\tmeasured_snr_db\n";
  for (const auto& r : rows) {
    out << r.utt_id << '\t' << binio::format_double(r.snr_db) << '\t' << r.seed << '\t'
        << binio::format_double(r.gain) << '\t' << binio::format_double(r.measured_snr_db) << '\n';
  }
  return out.str();
}

std::vector<ManifestRow> parse_manifest(std::string_view text, const std::string& name) {
  std::vector<ManifestRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto cols = binio::split(line, '\t');
    if (cols.size() != 5) throw Error(name + ":" + std::to_string(line_no) + ": expected 5 columns");
    ManifestRow r;
    r.utt_id = cols[0];
    r.snr_db = binio::parse_double(cols[1], "snr_db");
    r.seed = std::stoull(cols[2]);
    r.gain = binio::parse_double(cols[3], "gain");
    r.measured_snr_db = binio::parse_double(cols[4], "measured_snr_db");
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace stressbench::degrade
