#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "stressbench/common.hpp"

namespace stressbench::audio {

struct Waveform {
  std::vector<double> samples;  // nominally in [-1, 1]
  int sample_rate = kSampleRate;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct FrameSpec {
  double window_ms = 25.0;
  double hop_ms = 10.0;
  std::size_t fft_size = 512;

  std::size_t window_length(int sample_rate) const;
  std::size_t hop_length(int sample_rate) const;
  void validate(int sample_rate) const;
};

// Periodic Hann window.
std::vector<double> hann(std::size_t n);

// One-sided STFT of a zero-padded ("centered") signal: frame f is centered on
// original sample f * hop. Bins are fft_size / 2 + 1.
struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<double>> data;  // frames x bins, row-major
  FrameSpec spec;
  int sample_rate = kSampleRate;
  std::size_t signal_length = 0;

  std::complex<double>& at(std::size_t frame, std::size_t bin) { return data[frame * bins + bin]; }
  const std::complex<double>& at(std::size_t frame, std::size_t bin) const {
    return data[frame * bins + bin];
  }
  std::span<std::complex<double>> frame(std::size_t f) { return {data.data() + f * bins, bins}; }
  std::span<const std::complex<double>> frame(std::size_t f) const {
    return {data.data() + f * bins, bins};
  }
  // Original-signal sample index of frame f's window start (may be negative).
  long long frame_start(std::size_t f) const;
};

Spectrogram stft(const Waveform& w, const FrameSpec& spec = {});
// Weighted overlap-add inverse (sum of w^2 normalization), exact for any hop
// that leaves no sample uncovered.
Waveform istft(const Spectrogram& s);

// Per-sample sum over frames of the squared analysis window; the weighting that
// relates signal energy to STFT energy.
std::vector<double> window_power_profile(std::size_t signal_length, const FrameSpec& spec,
                                         int sample_rate);

struct SampleRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

double rms(std::span<const double> x);
double rms(const Waveform& w, std::optional<SampleRange> range = std::nullopt);

// PCM 16-bit mono 16 kHz only. Reading never resamples.
Waveform read_wav(const std::filesystem::path& path);
Waveform decode_wav(std::span<const std::uint8_t> bytes, const std::string& name = "wav");
void write_wav(const Waveform& w, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_wav(const Waveform& w);

}  // namespace stressbench::audio
