#include "stressbench/prosody.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "stressbench/kernels.hpp"
#include "stressbench/parallel.hpp"

namespace stressbench::prosody {

using corpus::PhonemeCategory;

double SonorityWeights::of(PhonemeCategory c) const {
  switch (c) {
    case PhonemeCategory::vowel: return vowel;
    case PhonemeCategory::approximant: return approximant;
    case PhonemeCategory::nasal: return nasal;
    case PhonemeCategory::fricative: return fricative;
    case PhonemeCategory::affricate: return affricate;
    case PhonemeCategory::plosive: return plosive;
    case PhonemeCategory::silence: return silence;
  }
  return 0.0;
}

std::vector<PhonemeSpan> phoneme_timeline(const corpus::Utterance& u) {
  std::vector<PhonemeSpan> spans;
  for (const auto& w : u.words) {
    for (const auto& s : w.syllables) {
      for (const auto& p : s.phonemes) spans.push_back({p.start, p.end, p.category});
    }
  }
  std::sort(spans.begin(), spans.end(),
            [](const PhonemeSpan& a, const PhonemeSpan& b) { return a.start < b.start; });
  return spans;
}

PitchEstimate estimate_pitch(std::span<const double> x, int sample_rate, const PitchConfig& cfg) {
  const auto n = x.size();
  const auto min_lag = static_cast<std::size_t>(std::ceil(sample_rate / cfg.max_hz));
  const auto max_lag =
      std::min(static_cast<std::size_t>(std::floor(sample_rate / cfg.min_hz)), n > 2 ? n - 2 : 0);
  if (max_lag < min_lag + 2) return {};

  // energy of x[0 .. n-lag) and x[lag .. n)
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];

  const auto& k = kernels::active();
  std::vector<double> r(max_lag + 2, 0.0);
  for (std::size_t lag = min_lag - 1; lag <= max_lag + 1 && lag < n; ++lag) {
    const double head = prefix[n - lag];
    const double tail = prefix[n] - prefix[lag];
    const double denom = std::sqrt(head * tail);
    r[lag] = denom > 0.0 ? k.dot(x.data(), x.data() + lag, n - lag) / denom : 0.0;
  }

  double best = 0.0;
  for (std::size_t lag = min_lag; lag <= max_lag; ++lag) best = std::max(best, r[lag]);
  if (!(best > 0.0)) return {};

  // First interior local maximum reaching 90% of the global best: avoids
  // picking a multiple of the period.
  for (std::size_t lag = min_lag; lag <= max_lag; ++lag) {
    if (r[lag] < 0.9 * best) continue;
    if (r[lag] < r[lag - 1] || r[lag] < r[lag + 1]) continue;
    const double a = r[lag - 1], b = r[lag], c = r[lag + 1];
    const double curvature = a - 2.0 * b + c;
    const double shift = curvature < 0.0 ? 0.5 * (a - c) / curvature : 0.0;
    const double period = static_cast<double>(lag) + shift;
    const double f0 = sample_rate / period;
    const double peak = b - 0.25 * (a - c) * shift;
    if (f0 < cfg.min_hz || f0 > cfg.max_hz) return {0.0, peak};
    return {f0, peak};
  }
  return {0.0, best};
}

Contours compute_contours(const audio::Waveform& w, const std::vector<PhonemeSpan>& phonemes,
                          const audio::FrameSpec& spec, const SonorityWeights& weights,
                          const PitchConfig& pitch) {
  spec.validate(w.sample_rate);
  const std::size_t win = spec.window_length(w.sample_rate);
  const std::size_t hop = spec.hop_length(w.sample_rate);
  if (w.samples.size() < win) throw Error("compute_contours: input shorter than one window");
  const std::size_t frames = 1 + (w.samples.size() - win) / hop;
  const double sr = w.sample_rate;

  Contours c;
  c.hop_s = static_cast<double>(hop) / sr;
  c.energy.resize(frames);
  c.sonority.resize(frames);
  c.f0.assign(frames, 0.0);
  c.voiced.assign(frames, 0);
  c.times.resize(frames);

  const auto window = audio::hann(win);
  const auto& k = kernels::active();
  std::vector<double> buf(win);
  std::size_t ph = 0;
  for (std::size_t i = 0; i < frames; ++i) {
    k.multiply(w.samples.data() + i * hop, window.data(), buf.data(), win);
    c.energy[i] = k.sum_squares(buf.data(), win);
    c.times[i] = (static_cast<double>(i * hop) + 0.5 * static_cast<double>(win)) / sr;
    while (ph < phonemes.size() && phonemes[ph].end <= c.times[i]) ++ph;
    PhonemeCategory cat = PhonemeCategory::silence;
    if (ph < phonemes.size() && phonemes[ph].start <= c.times[i]) cat = phonemes[ph].category;
    c.sonority[i] = c.energy[i] * weights.of(cat);
  }

  const double max_energy = *std::max_element(c.energy.begin(), c.energy.end());
  const auto half = static_cast<long long>(std::lround(pitch.analysis_ms * sr / 2000.0));
  const auto total = static_cast<long long>(w.samples.size());
  for (std::size_t i = 0; i < frames; ++i) {
    if (!(c.energy[i] > pitch.energy_floor_fraction * max_energy)) continue;
    const long long center = static_cast<long long>(i * hop + win / 2);
    const long long lo = std::max(0LL, center - half);
    const long long hi = std::min(total, center + half);
    const auto est = estimate_pitch(
        std::span<const double>(w.samples).subspan(static_cast<std::size_t>(lo),
                                                   static_cast<std::size_t>(hi - lo)),
        w.sample_rate, pitch);
    if (est.f0_hz > 0.0 && est.peak > pitch.voicing_threshold) {
      c.f0[i] = est.f0_hz;
      c.voiced[i] = 1;
    }
  }
  return c;
}

std::vector<std::size_t> frames_in(const Contours& c, double start, double end) {
  std::vector<std::size_t> idx;
  const auto first = std::lower_bound(c.times.begin(), c.times.end(), start);
  for (auto it = first; it != c.times.end() && *it < end; ++it) {
    idx.push_back(static_cast<std::size_t>(it - c.times.begin()));
  }
  return idx;
}

namespace {

struct Summary {
  double max = 0.0, min = 0.0, mean = 0.0, std = 0.0;
  std::size_t argmax = 0;  // position within the selection
};

Summary summarize(const std::vector<double>& v) {
  Summary s;
  s.max = v.front();
  s.min = v.front();
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] > s.max) {
      s.max = v[i];
      s.argmax = i;
    }
    s.min = std::min(s.min, v[i]);
    sum += v[i];
  }
  s.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(v.size()));
  return s;
}

double normalized_position(std::size_t pos, std::size_t count) {
  return count > 1 ? static_cast<double>(pos) / static_cast<double>(count - 1) : 0.0;
}

}  // namespace

AcousticFeatures acoustic_features(const Contours& c, const corpus::Syllable& syllable,
                                   const corpus::Word& word) {
  const auto idx = frames_in(c, syllable.start, syllable.end);
  if (idx.empty()) {
    throw Error("syllable [" + std::to_string(syllable.start) + ", " +
                std::to_string(syllable.end) + ") overlaps no analysis frame");
  }
  AcousticFeatures f{};

  std::vector<double> son, energy;
  for (auto i : idx) {
    son.push_back(c.sonority[i]);
    energy.push_back(c.energy[i]);
  }
  const auto s = summarize(son);
  f[kSMax] = s.max;
  f[kSMean] = s.mean;
  f[kSStd] = s.std;
  f[kSRange] = s.max - s.min;
  f[kSMaxPos] = normalized_position(s.argmax, idx.size());
  double rise = 0.0, fall = 0.0;
  for (std::size_t i = 1; i < son.size(); ++i) {
    const double d = son[i] - son[i - 1];
    rise = std::max(rise, d);
    fall = std::max(fall, -d);
  }
  f[kSMaxRise] = rise / c.hop_s;
  f[kSMaxFall] = fall / c.hop_s;

  std::vector<double> f0, f0_t;
  std::size_t f0_argmax = 0;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (!c.voiced[idx[j]]) continue;
    if (f0.empty() || c.f0[idx[j]] > *std::max_element(f0.begin(), f0.end())) f0_argmax = j;
    f0.push_back(c.f0[idx[j]]);
    f0_t.push_back(c.times[idx[j]]);
  }
  if (!f0.empty()) {
    const auto p = summarize(f0);
    f[kF0Max] = p.max;
    f[kF0Mean] = p.mean;
    f[kF0Range] = p.max - p.min;
    f[kF0MaxPos] = normalized_position(f0_argmax, idx.size());
    if (f0.size() >= 2) {
      const double tm = std::accumulate(f0_t.begin(), f0_t.end(), 0.0) / f0_t.size();
      double sxy = 0.0, sxx = 0.0;
      for (std::size_t j = 0; j < f0.size(); ++j) {
        sxy += (f0_t[j] - tm) * (f0[j] - p.mean);
        sxx += (f0_t[j] - tm) * (f0_t[j] - tm);
      }
      f[kF0Slope] = sxx > 0.0 ? sxy / sxx : 0.0;
    }
  }

  const auto e = summarize(energy);
  f[kEMax] = e.max;
  f[kEMean] = e.mean;
  f[kERange] = e.max - e.min;

  const auto& nuc = syllable.nucleus();
  f[kSyllableDur] = syllable.end - syllable.start;
  f[kNucleusDur] = nuc.end - nuc.start;
  const double word_dur = word.end() - word.start();
  f[kSyllableWordRatio] = word_dur > 0.0 ? f[kSyllableDur] / word_dur : 0.0;
  f[kVoicedFraction] = static_cast<double>(f0.size()) / static_cast<double>(idx.size());
  return f;
}

NucleusClass nucleus_class(const corpus::Syllable& s) {
  if (s.degenerate()) return NucleusClass::syllabic_consonant;
  static const std::unordered_set<std::string> kShort = {"ih", "ah", "eh", "uh", "ae", "ax", "ix"};
  static const std::unordered_set<std::string> kDiphthong = {"ay", "ey", "ow", "aw", "oy"};
  std::string sym;
  for (char ch : s.nucleus().symbol) {
    if (!std::isdigit(static_cast<unsigned char>(ch))) {
      sym.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (kShort.contains(sym)) return NucleusClass::short_monophthong;
  if (kDiphthong.contains(sym)) return NucleusClass::diphthong;
  return NucleusClass::long_monophthong;
}

std::size_t neighbor_class(const corpus::Phoneme* p) {
  if (p == nullptr) return 5;
  switch (p->category) {
    case PhonemeCategory::plosive: return 0;
    case PhonemeCategory::fricative:
    case PhonemeCategory::affricate: return 1;
    case PhonemeCategory::nasal: return 2;
    case PhonemeCategory::approximant: return 3;
    case PhonemeCategory::vowel: return 4;
    case PhonemeCategory::silence: return 5;
  }
  return 5;
}

ContextFeatures context_features(const corpus::Word& word, std::size_t position) {
  const auto& syl = word.syllables.at(position);
  for (const auto& p : syl.phonemes) {
    // Re-resolve so hand-built syllables with unknown symbols are rejected.
    if (corpus::category_of(p.symbol) != p.category) {
      throw Error("phoneme '" + p.symbol + "' has an inconsistent category");
    }
  }
  ContextFeatures f{};
  f[static_cast<std::size_t>(nucleus_class(syl))] = 1;

  const corpus::Phoneme* prev = nullptr;
  if (position > 0) prev = &word.syllables[position - 1].phonemes.back();
  const corpus::Phoneme* next = nullptr;
  if (position + 1 < word.syllables.size()) next = &word.syllables[position + 1].phonemes.front();
  f[4 + neighbor_class(prev)] = 1;
  f[10 + neighbor_class(next)] = 1;

  f[16] = word.follows_pause ? 1 : 0;
  f[17] = word.precedes_pause ? 1 : 0;
  f[18] = position + 1 == word.syllables.size() ? 1 : 0;
  return f;
}

const std::vector<std::string>& heuristic_columns() {
  static const std::vector<std::string> cols = {
      "s_max", "s_mean", "s_std", "s_range", "s_max_pos", "s_max_rise", "s_max_fall",
      "f0_max", "f0_mean", "f0_range", "f0_max_pos", "f0_slope",
      "e_max", "e_mean", "e_range",
      "syllable_dur", "nucleus_dur", "syllable_word_ratio",
      "voiced_fraction",
      "nuc_short", "nuc_long", "nuc_diphthong", "nuc_syllabic_consonant",
      "prev_plosive", "prev_fricative_affricate", "prev_nasal", "prev_approximant", "prev_vowel",
      "prev_none",
      "next_plosive", "next_fricative_affricate", "next_nasal", "next_approximant", "next_vowel",
      "next_none",
      "word_follows_pause", "word_precedes_pause", "syllable_word_final"};
  return cols;
}

Extraction feature_table(const std::vector<corpus::Utterance>& utterances,
                         const AudioLoader& load) {
  struct Slot {
    std::vector<features::FeatureRow> rows;
    std::vector<std::string> failures;
    std::size_t skipped = 0;
  };
  std::vector<Slot> slots(utterances.size());
  parallel_for(utterances.size(), [&](std::size_t ui) {
    const auto& u = utterances[ui];
    auto& slot = slots[ui];
    std::size_t n_syll = 0;
    for (const auto& w : u.words) n_syll += w.syllables.size();
    Contours contours;
    double duration = 0.0;
    try {
      const auto audio = load(u);
      duration = audio.duration();
      contours = compute_contours(audio, phoneme_timeline(u));
    } catch (const std::exception& e) {
      slot.failures.push_back(u.id + ": " + e.what());
      slot.skipped += n_syll;
      return;
    }
    for (const auto& w : u.words) {
      for (std::size_t si = 0; si < w.syllables.size(); ++si) {
        const auto& s = w.syllables[si];
        const corpus::SyllableKey key{u.id, w.id, s.index};
        try {
          if (s.end > duration + 1e-9) throw Error("syllable ends after the audio");
          const auto a = acoustic_features(contours, s, w);
          const auto c = context_features(w, si);
          features::FeatureRow row;
          row.key = key;
          row.label = s.stress == corpus::Stress::stressed ? 1 : 0;
          row.values.reserve(kHeuristicDim);
          for (double v : a) row.values.push_back(features::round_to_float(v));
          for (auto b : c) row.values.push_back(b);
          slot.rows.push_back(std::move(row));
        } catch (const std::exception& e) {
          slot.failures.push_back(corpus::to_string(key) + ": " + e.what());
          ++slot.skipped;
        }
      }
    }
  });
  Extraction out;
  out.table.dim = kHeuristicDim;
  out.table.layout_hash = features::layout_hash(heuristic_columns());
  for (auto& s : slots) {
    for (auto& r : s.rows) out.table.rows.push_back(std::move(r));
    for (auto& f : s.failures) out.failures.push_back(std::move(f));
    out.skipped += s.skipped;
  }
  return out;
}

AudioLoader directory_loader(const std::filesystem::path& audio_dir) {
  return [audio_dir](const corpus::Utterance& u) { return audio::read_wav(audio_dir / u.audio_path); };
}

}  // namespace stressbench::prosody
