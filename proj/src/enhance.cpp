#include "stressbench/enhance.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stressbench/binio.hpp"
#include "stressbench/degrade.hpp"
#include "stressbench/kernels.hpp"
#include "stressbench/parallel.hpp"

namespace stressbench::enhance {
namespace {

void check_bins(const audio::Spectrogram& s, const NoiseProfile& profile) {
  if (profile.magnitude.size() != s.bins) {
    throw Error("noise profile has " + std::to_string(profile.magnitude.size()) +
                " bins, spectrogram has " + std::to_string(s.bins));
  }
}

std::vector<double> magnitudes(const audio::Spectrogram& s) {
  std::vector<double> mag(s.frames * s.bins);
  kernels::active().complex_magnitude(reinterpret_cast<const double*>(s.data.data()), mag.data(),
                                      mag.size());
  return mag;
}

}  // namespace

void Enhancer::validate() const {
  if (name.empty()) throw Error("enhancer needs a name");
  switch (kind) {
    case EnhancerKind::spectral_subtraction: {
      const auto* p = std::get_if<SpectralSubtractionParams>(&params);
      if (p == nullptr) throw Error("enhancer '" + name + "': expected spectral subtraction params");
      if (!(p->alpha >= 0.0) || !(p->beta >= 0.0 && p->beta <= 1.0)) {
        throw Error("enhancer '" + name + "': need alpha >= 0 and beta in [0, 1]");
      }
      break;
    }
    case EnhancerKind::wiener: {
      const auto* p = std::get_if<WienerParams>(&params);
      if (p == nullptr) throw Error("enhancer '" + name + "': expected Wiener params");
      if (!(p->smoothing >= 0.0 && p->smoothing < 1.0)) {
        throw Error("enhancer '" + name + "': smoothing must lie in [0, 1)");
      }
      break;
    }
    case EnhancerKind::external_import:
      if (!std::holds_alternative<ImportParams>(params)) {
        throw Error("enhancer '" + name + "': expected import params");
      }
      break;
  }
}

NoiseProfile estimate_noise(const audio::Waveform& noisy, double head_ms,
                            const audio::FrameSpec& spec) {
  if (!(head_ms > 0.0)) throw Error("estimate_noise: head_ms must be positive");
  const auto head = static_cast<long long>(std::llround(head_ms * noisy.sample_rate / 1000.0));
  if (static_cast<long long>(noisy.samples.size()) < head) {
    throw Error("estimate_noise: utterance shorter than the " + binio::format_double(head_ms) +
                " ms noise head");
  }
  const auto s = audio::stft(noisy, spec);
  const auto win = static_cast<long long>(spec.window_length(noisy.sample_rate));
  NoiseProfile p;
  p.magnitude.assign(s.bins, 0.0);
  std::vector<double> mag(s.bins);
  for (std::size_t f = 0; f < s.frames; ++f) {
    const long long start = s.frame_start(f);
    if (start < 0 || start + win > head) continue;
    kernels::active().complex_magnitude(reinterpret_cast<const double*>(s.frame(f).data()),
                                        mag.data(), s.bins);
    kernels::axpy(1.0, mag.data(), p.magnitude.data(), s.bins);
    ++p.frames_used;
  }
  if (p.frames_used < kMinProfileFrames) {
    throw Error("estimate_noise: only " + std::to_string(p.frames_used) +
                " frames fit in the noise head (need " + std::to_string(kMinProfileFrames) + ")");
  }
  for (auto& m : p.magnitude) m /= static_cast<double>(p.frames_used);
  return p;
}

std::vector<double> spectral_subtraction_magnitudes(const audio::Spectrogram& noisy,
                                                    const NoiseProfile& profile,
                                                    const SpectralSubtractionParams& p) {
  check_bins(noisy, profile);
  const auto mag = magnitudes(noisy);
  std::vector<double> out(mag.size());
  for (std::size_t f = 0; f < noisy.frames; ++f) {
    kernels::active().floor_subtract(mag.data() + f * noisy.bins, profile.magnitude.data(),
                                     p.alpha, p.beta, out.data() + f * noisy.bins, noisy.bins);
  }
  return out;
}

GainMask spectral_subtraction_mask(const audio::Spectrogram& noisy, const NoiseProfile& profile,
                                   const SpectralSubtractionParams& p) {
  const auto mag = magnitudes(noisy);
  const auto out = spectral_subtraction_magnitudes(noisy, profile, p);
  GainMask m{noisy.frames, noisy.bins, std::vector<double>(mag.size())};
  for (std::size_t i = 0; i < mag.size(); ++i) m.gain[i] = mag[i] > 0.0 ? out[i] / mag[i] : 1.0;
  return m;
}

GainMask wiener_mask(const audio::Spectrogram& noisy, const NoiseProfile& profile,
                     const WienerParams& p) {
  check_bins(noisy, profile);
  const double a = p.smoothing;
  GainMask m{noisy.frames, noisy.bins, std::vector<double>(noisy.frames * noisy.bins)};
  std::vector<double> prev_clean_power(noisy.bins, 0.0);
  for (std::size_t f = 0; f < noisy.frames; ++f) {
    for (std::size_t k = 0; k < noisy.bins; ++k) {
      const double x_power = std::norm(noisy.at(f, k));
      const double n_power = profile.magnitude[k] * profile.magnitude[k];
      double g = 1.0;
      if (n_power > 1e-20) {
        const double posterior = x_power / n_power;
        const double ml = std::max(posterior - 1.0, 0.0);
        // First frame: the previous clean estimate is taken to be at the noise
        // level (previous a-priori SNR of one).
        const double carried = f == 0 ? 1.0 : prev_clean_power[k] / n_power;
        const double xi = a * carried + (1.0 - a) * ml;
        g = xi / (1.0 + xi);
      }
      m.gain[f * noisy.bins + k] = g;
      prev_clean_power[k] = g * g * x_power;
    }
  }
  return m;
}

audio::Waveform apply_mask(const audio::Waveform& x, const GainMask& mask,
                           const audio::FrameSpec& spec) {
  auto s = audio::stft(x, spec);
  if (s.frames != mask.frames || s.bins != mask.bins) throw Error("apply_mask: shape mismatch");
  for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] *= mask.gain[i];
  return audio::istft(s);
}

audio::Waveform spectral_subtract(const audio::Waveform& noisy, const NoiseProfile& profile,
                                  const SpectralSubtractionParams& p) {
  const auto s = audio::stft(noisy);
  return apply_mask(noisy, spectral_subtraction_mask(s, profile, p));
}

audio::Waveform wiener(const audio::Waveform& noisy, const NoiseProfile& profile,
                       const WienerParams& p) {
  const auto s = audio::stft(noisy);
  return apply_mask(noisy, wiener_mask(s, profile, p));
}

GainMask mask_for(const Enhancer& e, const audio::Waveform& noisy, double head_ms) {
  e.validate();
  const auto profile = estimate_noise(noisy, head_ms);
  const auto s = audio::stft(noisy);
  switch (e.kind) {
    case EnhancerKind::spectral_subtraction:
      return spectral_subtraction_mask(s, profile, std::get<SpectralSubtractionParams>(e.params));
    case EnhancerKind::wiener:
      return wiener_mask(s, profile, std::get<WienerParams>(e.params));
    case EnhancerKind::external_import:
      break;
  }
  throw Error("enhancer '" + e.name + "' is an import and cannot be run");
}

audio::Waveform run(const Enhancer& e, const audio::Waveform& noisy, double head_ms) {
  return apply_mask(noisy, mask_for(e, noisy, head_ms));
}

double enhanced_component_snr_db(const GainMask& mask, std::span<const double> clean_component,
                                 std::span<const double> noise_component) {
  const audio::Waveform clean{{clean_component.begin(), clean_component.end()}, kSampleRate};
  const audio::Waveform noise{{noise_component.begin(), noise_component.end()}, kSampleRate};
  const auto c = apply_mask(clean, mask);
  const auto n = apply_mask(noise, mask);
  return degrade::snr_db(c.samples, n.samples);
}

BatchResult enhance_directory(const Enhancer& e, const std::filesystem::path& in_dir,
                              const std::filesystem::path& out_dir, double head_ms) {
  e.validate();
  if (!std::filesystem::is_directory(in_dir)) throw Error("not a directory: " + in_dir.string());
  std::vector<std::filesystem::path> inputs;
  for (const auto& entry : std::filesystem::directory_iterator(in_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") inputs.push_back(entry.path());
  }
  std::sort(inputs.begin(), inputs.end());
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> errors(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) {
    try {
      const auto noisy = audio::read_wav(inputs[i]);
      audio::write_wav(run(e, noisy, head_ms), out_dir / inputs[i].filename());
    } catch (const std::exception& ex) {
      errors[i] = inputs[i].filename().string() + ": " + ex.what();
    }
  });
  BatchResult r;
  for (auto& err : errors) {
    if (err.empty()) {
      ++r.processed;
    } else {
      r.failures.push_back(std::move(err));
    }
  }
  return r;
}

std::string ImportHandle::summary() const {
  std::ostringstream out;
  out << "import '" << label << "': " << files.size() << " files, " << missing.size()
      << " missing, " << mismatched.size() << " duration mismatches, " << unreadable.size()
      << " unreadable\n";
  for (const auto& m : missing) out << "  missing: " << m << '\n';
  for (const auto& m : mismatched) {
    out << "  duration mismatch: " << m.utt_id << " expected " << m.expected_s << " s, got "
        << m.actual_s << " s\n";
  }
  for (const auto& u : unreadable) out << "  unreadable: " << u << '\n';
  return out.str();
}

ImportHandle import_enhanced(const std::filesystem::path& dir,
                             const std::vector<corpus::ManifestEntry>& manifest,
                             const std::string& label, double tolerance_s) {
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
  ImportHandle h;
  h.label = label;
  for (const auto& entry : manifest) {
    const auto path = dir / (entry.utt_id + ".wav");
    if (!std::filesystem::exists(path)) {
      h.missing.push_back(entry.utt_id);
      continue;
    }
    try {
      const auto w = audio::read_wav(path);
      if (std::abs(w.duration() - entry.duration_s) > tolerance_s + 1e-9) {
        h.mismatched.push_back({entry.utt_id, entry.duration_s, w.duration()});
        continue;
      }
    } catch (const Error& e) {
      h.unreadable.push_back(entry.utt_id + " (" + e.what() + ")");
      continue;
    }
    h.files[entry.utt_id] = path;
  }
  return h;
}

}  // namespace stressbench::enhance
