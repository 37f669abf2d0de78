#pragma once

// Heuristic syllable features: energy / sonority-weighted energy / F0
// contours, and the 19-dim acoustic and 19-dim binary context vectors.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "stressbench/audio.hpp"
#include "stressbench/corpus.hpp"
#include "stressbench/featfile.hpp"

namespace stressbench::prosody {

struct SonorityWeights {
  double vowel = 1.0;
  double approximant = 0.8;
  double nasal = 0.6;
  double fricative = 0.4;
  double affricate = 0.35;
  double plosive = 0.2;
  double silence = 0.0;

  double of(corpus::PhonemeCategory c) const;
};

struct PitchConfig {
  double min_hz = 50.0;
  double max_hz = 500.0;
  double voicing_threshold = 0.3;       // normalized autocorrelation peak
  double energy_floor_fraction = 0.01;  // of the utterance's max frame energy
  double analysis_ms = 40.0;            // centered on each frame midpoint
};

struct PhonemeSpan {
  double start = 0.0;
  double end = 0.0;
  corpus::PhonemeCategory category = corpus::PhonemeCategory::silence;
};

std::vector<PhonemeSpan> phoneme_timeline(const corpus::Utterance& u);

// Frame i spans samples [i*hop, i*hop + window); its time is the midpoint.
struct Contours {
  std::vector<double> energy;
  std::vector<double> sonority;
  std::vector<double> f0;  // Hz, 0 where unvoiced
  std::vector<std::uint8_t> voiced;
  std::vector<double> times;
  double hop_s = 0.0;

  std::size_t size() const { return energy.size(); }
};

// Pitch of one analysis segment: normalized autocorrelation over lags in the
// configured band, first strong local peak, parabolic refinement. Returns
// {f0_hz, peak}; f0 is 0 when no admissible peak exists.
struct PitchEstimate {
  double f0_hz = 0.0;
  double peak = 0.0;
};
PitchEstimate estimate_pitch(std::span<const double> segment, int sample_rate,
                             const PitchConfig& cfg = {});

Contours compute_contours(const audio::Waveform& w, const std::vector<PhonemeSpan>& phonemes,
                          const audio::FrameSpec& spec = {}, const SonorityWeights& weights = {},
                          const PitchConfig& pitch = {});

constexpr std::size_t kAcousticDim = 19;
constexpr std::size_t kContextDim = 19;
constexpr std::size_t kHeuristicDim = kAcousticDim + kContextDim;

enum AcousticIndex : std::size_t {
  kSMax, kSMean, kSStd, kSRange, kSMaxPos, kSMaxRise, kSMaxFall,
  kF0Max, kF0Mean, kF0Range, kF0MaxPos, kF0Slope,
  kEMax, kEMean, kERange,
  kSyllableDur, kNucleusDur, kSyllableWordRatio,
  kVoicedFraction,
};

using AcousticFeatures = std::array<double, kAcousticDim>;
using ContextFeatures = std::array<std::uint8_t, kContextDim>;

// Frames whose midpoint lies in [syllable.start, syllable.end).
std::vector<std::size_t> frames_in(const Contours& c, double start, double end);

AcousticFeatures acoustic_features(const Contours& c, const corpus::Syllable& syllable,
                                   const corpus::Word& word);

enum class NucleusClass { short_monophthong, long_monophthong, diphthong, syllabic_consonant };
NucleusClass nucleus_class(const corpus::Syllable& s);

// Index of the neighbor-phoneme one-hot group: plosive, fricative/affricate,
// nasal, approximant, vowel, none/silence.
std::size_t neighbor_class(const corpus::Phoneme* p);

// Context bits for word.syllables[position].
ContextFeatures context_features(const corpus::Word& word, std::size_t position);

const std::vector<std::string>& heuristic_columns();

using AudioLoader = std::function<audio::Waveform(const corpus::Utterance&)>;

struct Extraction {
  features::FeatureTable table;
  std::vector<std::string> failures;
  std::size_t skipped = 0;
};

// One 38-dim row (acoustic || context) per syllable, ordered by (utterance,
// word, syllable). Values are rounded to float32 so the in-memory table equals
// the encoded file. Failing syllables are skipped and reported.
Extraction feature_table(const std::vector<corpus::Utterance>& utterances, const AudioLoader& load);

AudioLoader directory_loader(const std::filesystem::path& audio_dir);

}  // namespace stressbench::prosody
