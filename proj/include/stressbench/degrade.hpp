#pragma once

// White Gaussian noise injection at exact, per-realization SNRs.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stressbench/audio.hpp"

namespace stressbench::degrade {

struct NoiseCondition {
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

inline const std::vector<double> kDefaultSnrs = {0.0, 5.0, 10.0, 20.0};

// The mixture plus the two components it was built from, all after the joint
// peak-normalization gain, so mixture == clean_component + noise_component.
struct NoisyMix {
  audio::Waveform mixture;
  std::vector<double> clean_component;
  std::vector<double> noise_component;
  double gain = 1.0;
  double measured_snr_db = 0.0;
};

// i.i.d. standard normal samples (Box-Muller over a counter-based uniform
// stream); identical for identical (n, seed).
std::vector<double> gaussian_noise(std::size_t n, std::uint64_t seed);

double snr_db(std::span<const double> signal, std::span<const double> noise);

// Noise is scaled by its measured RMS so that the component SNR equals the
// target for this realization. Throws on silent input or non-finite target.
NoisyMix add_noise(const audio::Waveform& clean, const NoiseCondition& cond);

struct ManifestRow {
  std::string utt_id;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  double gain = 1.0;
  double measured_snr_db = 0.0;
};

struct BatchResult {
  std::vector<ManifestRow> rows;
  std::vector<std::string> failures;  // "<file>: <reason>"
};

std::string snr_dir_name(double snr_db);
std::filesystem::path noise_component_path(const std::filesystem::path& out_dir, double snr_db,
                                           const std::string& utt_id);

// For every <utt>.wav under in_dir and every SNR writes
//   out_dir/snr_<X>/<utt>.wav                     (the mixture)
//   out_dir/snr_<X>/components/<utt>.noise.f64    (noise component, float64 LE)
// and out_dir/manifest.tsv. Per-utterance seed = derive_seed(master, utt_id).
// Per-file failures are collected; the batch continues.
BatchResult batch_degrade(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir,
                          const std::vector<double>& snrs, std::uint64_t master_seed);

std::string format_manifest(const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> parse_manifest(std::string_view text, const std::string& name);

std::vector<double> read_component(const std::filesystem::path& path);
void write_component(const std::filesystem::path& path, std::span<const double> x);

}  // namespace stressbench::degrade
