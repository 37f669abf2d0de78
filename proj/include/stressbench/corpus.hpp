#pragma once

// Stress-annotated, time-aligned speech corpus: phoneme -> syllable -> word ->
// utterance, plus fold construction and a synthetic corpus generator.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "stressbench/audio.hpp"

namespace stressbench::corpus {

enum class PhonemeCategory { vowel, plosive, fricative, affricate, nasal, approximant, silence };

// ARPAbet lookup (case-insensitive, stress digits ignored). Throws on unknown
// symbols.
PhonemeCategory category_of(std::string_view symbol);
bool is_known_phoneme(std::string_view symbol);
std::string_view to_string(PhonemeCategory c);

struct Phoneme {
  std::string symbol;
  PhonemeCategory category = PhonemeCategory::silence;
  double start = 0.0;
  double end = 0.0;
};

enum class Stress { unstressed = 0, stressed = 1 };

struct Syllable {
  int index = 0;
  double start = 0.0;
  double end = 0.0;
  std::vector<Phoneme> phonemes;
  int nucleus_index = 0;
  Stress stress = Stress::unstressed;

  const Phoneme& nucleus() const { return phonemes.at(static_cast<std::size_t>(nucleus_index)); }
  // No vowel nucleus (syllabic consonant).
  bool degenerate() const { return nucleus().category != PhonemeCategory::vowel; }
};

struct Word {
  std::string id;
  std::string text;
  std::vector<Syllable> syllables;
  bool follows_pause = false;
  bool precedes_pause = false;

  double start() const { return syllables.front().start; }
  double end() const { return syllables.back().end; }
};

enum class Dataset { GER, ITA, SYNTH };
std::string_view to_string(Dataset d);
Dataset parse_dataset(std::string_view s);

struct Utterance {
  std::string id;
  Dataset dataset = Dataset::SYNTH;
  std::string speaker;
  std::string audio_path;  // relative to the audio directory
  int sample_rate = kSampleRate;
  std::vector<Word> words;
};

struct WordKey {
  std::string utt_id;
  std::string word_id;
  auto operator<=>(const WordKey&) const = default;
};

struct SyllableKey {
  std::string utt_id;
  std::string word_id;
  int syll_idx = 0;
  auto operator<=>(const SyllableKey&) const = default;
  WordKey word() const { return {utt_id, word_id}; }
};

std::string to_string(const SyllableKey& k);

// ---- alignment TSV ---------------------------------------------------------

struct RecordError {
  std::size_t line = 0;  // first line of the offending word
  WordKey word;
  std::string message;
};

struct ParseResult {
  std::vector<Utterance> utterances;
  std::vector<RecordError> rejected;
};

// Malformed rows throw Error naming the line. Words that violate the
// one-stress rule, overlap, or misplace phonemes are rejected and reported.
ParseResult parse_alignments(const std::filesystem::path& path);
ParseResult parse_alignments_text(std::string_view text, const std::string& name = "alignments");

std::string format_alignments(const std::vector<Utterance>& utterances);
void write_alignments(const std::vector<Utterance>& utterances, const std::filesystem::path& path);

// Keeps words with two or more syllables; drops utterances left empty.
std::vector<Utterance> filter_polysyllabic(std::vector<Utterance> utterances);

// ---- folds -----------------------------------------------------------------

struct LabeledSyllable {
  SyllableKey key;
  int label = 0;  // 1 = stressed
};

std::vector<LabeledSyllable> syllable_table(const std::vector<Utterance>& utterances);

struct FoldAssignment {
  int k = 5;
  std::map<SyllableKey, int> fold_of_syllable;

  int fold_of(const SyllableKey& key) const;
};

struct FoldStats {
  std::size_t words = 0;
  std::size_t syllables = 0;
  std::size_t stressed = 0;
  double stressed_fraction() const {
    return syllables == 0 ? 0.0 : static_cast<double>(stressed) / static_cast<double>(syllables);
  }
};

// Word-grouped, stratified by syllable count, then refined by swaps so each
// fold's stressed fraction tracks the global one. Throws if fewer than k words.
FoldAssignment make_folds(const std::vector<LabeledSyllable>& rows, int k, std::uint64_t seed);

std::vector<FoldStats> fold_stats(const FoldAssignment& folds,
                                  const std::vector<LabeledSyllable>& rows);

// TSV: utt_id, word_id, syll_idx, fold.
std::string format_folds(const FoldAssignment& folds);
FoldAssignment parse_folds(std::string_view text, const std::string& name = "folds");

// ---- splits ----------------------------------------------------------------

// TSV: utt_id, train|test.
std::map<std::string, std::string> parse_split(std::string_view text, const std::string& name);

// ---- synthetic corpus ------------------------------------------------------

struct SynthSpec {
  int words = 200;
  int min_syllables = 2;
  int max_syllables = 2;
  // Prominence separation: stressed syllables get energy x(1+2d),
  // duration x(1+d), F0 x(1+d/2).
  double delta = 1.0;
  // Scales the random per-syllable spread of level/duration/F0; 0 gives
  // perfectly regular syllables.
  double variability = 1.0;
  int test_words = 0;

  void validate() const;
};

struct SynthCorpus {
  std::vector<Utterance> utterances;
  std::vector<audio::Waveform> audio;  // parallel to utterances
  std::vector<std::string> split;      // "train" / "test", parallel to utterances
};

SynthCorpus synth_corpus(const SynthSpec& spec, std::uint64_t seed);

// Writes wav/<utt>.wav, alignments.tsv, manifest.tsv and split.tsv.
void write_synth_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

// manifest.tsv: utt_id, audio_path, num_samples, duration_s.
struct ManifestEntry {
  std::string utt_id;
  std::string audio_path;
  std::size_t num_samples = 0;
  double duration_s = 0.0;
};
std::vector<ManifestEntry> parse_manifest(std::string_view text, const std::string& name);
std::string format_manifest(const std::vector<ManifestEntry>& entries);

}  // namespace stressbench::corpus
