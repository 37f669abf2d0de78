#pragma once

// Speech-enhancement stage: classical STFT-mask enhancers that can run here,
// and validated import of audio enhanced by external systems.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stressbench/audio.hpp"
#include "stressbench/corpus.hpp"

namespace stressbench::enhance {

struct NoiseProfile {
  std::vector<double> magnitude;  // mean |X| per bin
  std::size_t frames_used = 0;
};

constexpr std::size_t kMinProfileFrames = 5;

// Mean STFT magnitude over frames lying entirely inside the leading head_ms.
NoiseProfile estimate_noise(const audio::Waveform& noisy, double head_ms = 200.0,
                            const audio::FrameSpec& spec = {});

struct SpectralSubtractionParams {
  double alpha = 2.0;  // over-subtraction
  double beta = 0.02;  // spectral floor
};

struct WienerParams {
  double smoothing = 0.98;  // decision-directed weight on the previous frame
};

struct ImportParams {
  std::filesystem::path dir;
};

enum class EnhancerKind { spectral_subtraction, wiener, external_import };

struct Enhancer {
  std::string name;
  EnhancerKind kind = EnhancerKind::wiener;
  std::variant<SpectralSubtractionParams, WienerParams, ImportParams> params;

  void validate() const;
};

// Real-valued per-(frame, bin) gain applied to the noisy STFT.
struct GainMask {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> gain;

  double at(std::size_t f, std::size_t k) const { return gain[f * bins + k]; }
};

// max(|X| - alpha N, beta |X|) for every frame and bin, before resynthesis.
std::vector<double> spectral_subtraction_magnitudes(const audio::Spectrogram& noisy,
                                                    const NoiseProfile& profile,
                                                    const SpectralSubtractionParams& p);
GainMask spectral_subtraction_mask(const audio::Spectrogram& noisy, const NoiseProfile& profile,
                                   const SpectralSubtractionParams& p);
// G = xi / (1 + xi) with the decision-directed a-priori SNR xi.
GainMask wiener_mask(const audio::Spectrogram& noisy, const NoiseProfile& profile,
                     const WienerParams& p);

// istft(mask * stft(x)); output length equals input length.
audio::Waveform apply_mask(const audio::Waveform& x, const GainMask& mask,
                           const audio::FrameSpec& spec = {});

audio::Waveform spectral_subtract(const audio::Waveform& noisy, const NoiseProfile& profile,
                                  const SpectralSubtractionParams& p = {});
audio::Waveform wiener(const audio::Waveform& noisy, const NoiseProfile& profile,
                       const WienerParams& p = {});

// Runs a runnable enhancer on one utterance, estimating the profile from the
// utterance head.
audio::Waveform run(const Enhancer& e, const audio::Waveform& noisy, double head_ms = 200.0);
GainMask mask_for(const Enhancer& e, const audio::Waveform& noisy, double head_ms = 200.0);

// Component SNR after enhancement: the noisy-derived mask is applied to the
// clean and noise components separately (the output is their sum).
double enhanced_component_snr_db(const GainMask& mask, std::span<const double> clean_component,
                                 std::span<const double> noise_component);

struct BatchResult {
  std::size_t processed = 0;
  std::vector<std::string> failures;
};

BatchResult enhance_directory(const Enhancer& e, const std::filesystem::path& in_dir,
                              const std::filesystem::path& out_dir, double head_ms = 200.0);

// ---- import of externally enhanced audio --------------------------------------

constexpr double kDurationTolerance = 0.025;

struct DurationMismatch {
  std::string utt_id;
  double expected_s = 0.0;
  double actual_s = 0.0;
};

struct ImportHandle {
  std::string label;
  std::map<std::string, std::filesystem::path> files;  // utt_id -> enhanced wav
  std::vector<std::string> missing;
  std::vector<DurationMismatch> mismatched;
  std::vector<std::string> unreadable;

  bool ok() const { return missing.empty() && mismatched.empty() && unreadable.empty(); }
  std::string summary() const;
};

ImportHandle import_enhanced(const std::filesystem::path& dir,
                             const std::vector<corpus::ManifestEntry>& manifest,
                             const std::string& label, double tolerance_s = kDurationTolerance);

}  // namespace stressbench::enhance
