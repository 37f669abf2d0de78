#include "stressbench/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <numbers>

#include "stressbench/binio.hpp"
#include "stressbench/kernels.hpp"

namespace stressbench::audio {
namespace {

// FFTW planning is not thread-safe; execution with the new-array API is.
// FFTW_ESTIMATE keeps the chosen algorithm (and so the output bits) stable
// between runs.
struct FftPlans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

const FftPlans& plans_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, FftPlans> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> in(n);
  std::vector<std::complex<double>> out(n / 2 + 1);
  const int len = static_cast<int>(n);
  FftPlans p;
  p.forward = fftw_plan_dft_r2c_1d(len, in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
  p.inverse = fftw_plan_dft_c2r_1d(len, reinterpret_cast<fftw_complex*>(out.data()), in.data(),
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (p.forward == nullptr || p.inverse == nullptr) throw Error("FFTW planning failed");
  return cache.emplace(n, p).first->second;
}

std::size_t frame_count(std::size_t length, std::size_t hop) {
  // Frames are centered on 0, hop, 2*hop, ... until one covers the last sample.
  if (length == 0) return 0;
  return (length - 1) / hop + 1;
}

}  // namespace

std::size_t FrameSpec::window_length(int sample_rate) const {
  return static_cast<std::size_t>(std::lround(window_ms * sample_rate / 1000.0));
}

std::size_t FrameSpec::hop_length(int sample_rate) const {
  return static_cast<std::size_t>(std::lround(hop_ms * sample_rate / 1000.0));
}

void FrameSpec::validate(int sample_rate) const {
  const std::size_t win = window_length(sample_rate);
  const std::size_t hop = hop_length(sample_rate);
  if (win == 0 || hop == 0) throw Error("frame window and hop must be positive");
  if (hop > win) throw Error("frame hop must not exceed the window");
  if (win > fft_size) throw Error("frame window longer than the FFT size");
}

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n);
  }
  return w;
}

long long Spectrogram::frame_start(std::size_t f) const {
  const auto win = static_cast<long long>(spec.window_length(sample_rate));
  const auto hop = static_cast<long long>(spec.hop_length(sample_rate));
  return static_cast<long long>(f) * hop - win / 2;
}

Spectrogram stft(const Waveform& w, const FrameSpec& spec) {
  spec.validate(w.sample_rate);
  const std::size_t win = spec.window_length(w.sample_rate);
  const std::size_t hop = spec.hop_length(w.sample_rate);
  if (w.samples.empty()) throw Error("stft: empty input");
  if (w.samples.size() < win) throw Error("stft: input shorter than one window");

  Spectrogram s;
  s.spec = spec;
  s.sample_rate = w.sample_rate;
  s.signal_length = w.samples.size();
  s.frames = frame_count(w.samples.size(), hop);
  s.bins = spec.fft_size / 2 + 1;
  s.data.assign(s.frames * s.bins, {});

  const auto& plans = plans_for(spec.fft_size);
  const auto window = hann(win);
  const auto& k = kernels::active();
  std::vector<double> segment(win);
  std::vector<double> buf(spec.fft_size);
  const auto n = static_cast<long long>(w.samples.size());
  for (std::size_t f = 0; f < s.frames; ++f) {
    const long long start = s.frame_start(f);
    for (std::size_t i = 0; i < win; ++i) {
      const long long idx = start + static_cast<long long>(i);
      segment[i] = (idx >= 0 && idx < n) ? w.samples[static_cast<std::size_t>(idx)] : 0.0;
    }
    std::fill(buf.begin(), buf.end(), 0.0);
    k.multiply(segment.data(), window.data(), buf.data(), win);
    fftw_execute_dft_r2c(plans.forward, buf.data(),
                         reinterpret_cast<fftw_complex*>(s.data.data() + f * s.bins));
  }
  return s;
}

Waveform istft(const Spectrogram& s) {
  if (s.frames == 0) throw Error("istft: empty spectrogram");
  const std::size_t win = s.spec.window_length(s.sample_rate);
  const std::size_t n_fft = s.spec.fft_size;
  if (s.bins != n_fft / 2 + 1) throw Error("istft: bin count does not match FFT size");
  const auto& plans = plans_for(n_fft);
  const auto window = hann(win);

  std::vector<double> acc(s.signal_length, 0.0);
  std::vector<double> norm(s.signal_length, 0.0);
  std::vector<std::complex<double>> spectrum(s.bins);
  std::vector<double> frame(n_fft);
  const auto n = static_cast<long long>(s.signal_length);
  for (std::size_t f = 0; f < s.frames; ++f) {
    // c2r overwrites its input.
    std::copy(s.frame(f).begin(), s.frame(f).end(), spectrum.begin());
    fftw_execute_dft_c2r(plans.inverse, reinterpret_cast<fftw_complex*>(spectrum.data()),
                         frame.data());
    const long long start = s.frame_start(f);
    for (std::size_t i = 0; i < win; ++i) {
      const long long idx = start + static_cast<long long>(i);
      if (idx < 0 || idx >= n) continue;
      const auto u = static_cast<std::size_t>(idx);
      acc[u] += window[i] * frame[i] / static_cast<double>(n_fft);
      norm[u] += window[i] * window[i];
    }
  }
  Waveform out;
  out.sample_rate = s.sample_rate;
  out.samples.resize(s.signal_length);
  for (std::size_t i = 0; i < s.signal_length; ++i) {
    out.samples[i] = norm[i] > 1e-10 ? acc[i] / norm[i] : 0.0;
  }
  return out;
}

std::vector<double> window_power_profile(std::size_t signal_length, const FrameSpec& spec,
                                         int sample_rate) {
  const std::size_t win = spec.window_length(sample_rate);
  const std::size_t hop = spec.hop_length(sample_rate);
  const auto window = hann(win);
  std::vector<double> profile(signal_length, 0.0);
  const std::size_t frames = frame_count(signal_length, hop);
  const auto n = static_cast<long long>(signal_length);
  for (std::size_t f = 0; f < frames; ++f) {
    const long long start =
        static_cast<long long>(f * hop) - static_cast<long long>(win / 2);
    for (std::size_t i = 0; i < win; ++i) {
      const long long idx = start + static_cast<long long>(i);
      if (idx >= 0 && idx < n) profile[static_cast<std::size_t>(idx)] += window[i] * window[i];
    }
  }
  return profile;
}

double rms(std::span<const double> x) {
  if (x.empty()) throw Error("rms: empty range");
  return std::sqrt(kernels::sum_squares(x.data(), x.size()) / static_cast<double>(x.size()));
}

double rms(const Waveform& w, std::optional<SampleRange> range) {
  if (!range) return rms(std::span<const double>(w.samples));
  if (range->begin >= range->end || range->end > w.samples.size()) {
    throw Error("rms: empty or out-of-bounds range");
  }
  return rms(std::span<const double>(w.samples).subspan(range->begin, range->end - range->begin));
}

Waveform decode_wav(std::span<const std::uint8_t> bytes, const std::string& name) {
  binio::Reader r(bytes.data(), bytes.size(), name);
  if (r.raw(4, "RIFF tag") != "RIFF") throw Error(name + ": not a RIFF file");
  r.u32("RIFF size");
  if (r.raw(4, "WAVE tag") != "WAVE") throw Error(name + ": not a WAVE file");

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  while (r.remaining() >= 8) {
    const std::string id = r.raw(4, "chunk id");
    const std::uint32_t size = r.u32("chunk size");
    if (id == "fmt ") {
      if (size < 16) throw Error(name + ": fmt chunk too small");
      const std::uint16_t format = r.u16("audio format");
      channels = r.u16("channels");
      rate = r.u32("sample rate");
      r.u32("byte rate");
      r.u16("block align");
      bits = r.u16("bits per sample");
      r.raw(size - 16, "fmt extension");
      if (size % 2 == 1 && r.remaining() > 0) r.u8("pad");
      if (format != 1) throw Error(name + ": unsupported encoding (only PCM is accepted)");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(name + ": data chunk before fmt chunk");
      if (bits != 16) throw Error(name + ": unsupported encoding (" + std::to_string(bits) +
                                  "-bit, expected 16-bit)");
      if (channels != 1) throw Error(name + ": unsupported channel count " + std::to_string(channels));
      if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        throw Error(name + ": unsupported sample rate " + std::to_string(rate));
      }
      if (size % 2 != 0) throw Error(name + ": odd data chunk size");
      if (r.remaining() < size) throw Error(name + ": truncated data chunk");
      Waveform w;
      w.sample_rate = kSampleRate;
      w.samples.resize(size / 2);
      for (auto& s : w.samples) {
        s = static_cast<std::int16_t>(r.u16("sample")) / 32768.0;
      }
      return w;
    } else {
      if (r.remaining() < size) throw Error(name + ": truncated chunk '" + id + "'");
      r.raw(size + (size % 2 == 1 && r.remaining() > size ? 1 : 0), "chunk body");
    }
  }
  throw Error(name + ": no data chunk (truncated file?)");
}

Waveform read_wav(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  return decode_wav(bytes, path.string());
}

std::vector<std::uint8_t> encode_wav(const Waveform& w) {
  if (w.sample_rate != kSampleRate) throw Error("write_wav: unsupported sample rate");
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  binio::Writer out;
  out.raw("RIFF");
  out.u32(36 + data_bytes);
  out.raw("WAVE");
  out.raw("fmt ");
  out.u32(16);
  out.u16(1);
  out.u16(1);
  out.u32(kSampleRate);
  out.u32(kSampleRate * 2);
  out.u16(2);
  out.u16(16);
  out.raw("data");
  out.u32(data_bytes);
  for (double s : w.samples) {
    if (!std::isfinite(s)) throw Error("write_wav: non-finite sample");
    const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    out.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return out.bytes();
}

void write_wav(const Waveform& w, const std::filesystem::path& path) {
  binio::write_file(path, encode_wav(w));
}

}  // namespace stressbench::audio
