#include "stressbench/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "stressbench/binio.hpp"
#include "stressbench/rng.hpp"

namespace stressbench::corpus {
namespace {

using binio::format_double;
using binio::parse_double;
using binio::parse_int;

std::string normalize_symbol(std::string_view symbol) {
  std::string s;
  for (char c : symbol) {
    if (std::isdigit(static_cast<unsigned char>(c))) continue;
    s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return s;
}

const std::unordered_map<std::string, PhonemeCategory>& phoneme_table() {
  using C = PhonemeCategory;
  static const std::unordered_map<std::string, PhonemeCategory> table = [] {
    std::unordered_map<std::string, PhonemeCategory> t;
    for (const char* s : {"aa", "ae", "ah", "ao", "aw", "ax", "axr", "ay", "eh", "er", "ey", "ih",
                          "ix", "iy", "ow", "oy", "uh", "uw", "ux"}) {
      t[s] = C::vowel;
    }
    for (const char* s : {"b", "d", "g", "k", "p", "t", "dx", "q"}) t[s] = C::plosive;
    for (const char* s : {"dh", "f", "hh", "s", "sh", "th", "v", "z", "zh"}) t[s] = C::fricative;
    for (const char* s : {"ch", "jh"}) t[s] = C::affricate;
    for (const char* s : {"m", "n", "ng", "em", "en", "eng", "nx"}) t[s] = C::nasal;
    for (const char* s : {"l", "r", "w", "y", "el"}) t[s] = C::approximant;
    for (const char* s : {"sil", "sp", "spn", "pau", "h#"}) t[s] = C::silence;
    return t;
  }();
  return table;
}

constexpr std::size_t kAlignmentColumns = 13;

struct RawRow {
  std::size_t line;
  std::string utt_id;
  Dataset dataset;
  std::string speaker;
  std::string word_id;
  std::string word_text;
  Syllable syllable;
  bool follows_pause;
  bool precedes_pause;
};

bool parse_flag(std::string_view s, std::string_view what) {
  if (s == "0") return false;
  if (s == "1") return true;
  throw Error("invalid " + std::string(what) + " flag '" + std::string(s) + "' (expected 0|1)");
}

RawRow parse_row(const std::string& line_text, std::size_t line) {
  const auto cols = binio::split(line_text, '\t');
  if (cols.size() != kAlignmentColumns) {
    throw Error("expected " + std::to_string(kAlignmentColumns) + " columns, found " +
                std::to_string(cols.size()));
  }
  RawRow r{line,
           cols[0],
           parse_dataset(cols[1]),
           cols[2],
           cols[3],
           cols[4],
           Syllable{},
           parse_flag(cols[11], "follows_pause"),
           parse_flag(cols[12], "precedes_pause")};
  if (r.utt_id.empty() || r.word_id.empty()) throw Error("empty utt_id or word_id");
  auto& s = r.syllable;
  const long long idx = parse_int(cols[5], "syll_idx");
  if (idx < 0 || idx > 0xFFFF) throw Error("syll_idx out of range");
  s.index = static_cast<int>(idx);
  s.start = parse_double(cols[6], "start_s");
  s.end = parse_double(cols[7], "end_s");
  if (!(s.start >= 0.0) || !(s.end > s.start)) throw Error("syllable needs 0 <= start < end");
  const long long stress = parse_int(cols[8], "stress");
  if (stress != 0 && stress != 1) throw Error("stress must be 0 or 1");
  s.stress = stress == 1 ? Stress::stressed : Stress::unstressed;
  for (const auto& tok : binio::split(cols[9], ' ')) {
    if (tok.empty()) continue;
    const auto parts = binio::split(tok, ':');
    if (parts.size() != 3) throw Error("phoneme token '" + tok + "' is not sym:start:end");
    Phoneme p;
    p.symbol = parts[0];
    p.category = category_of(parts[0]);
    p.start = parse_double(parts[1], "phoneme start");
    p.end = parse_double(parts[2], "phoneme end");
    if (!(p.start >= 0.0) || !(p.end > p.start)) {
      throw Error("phoneme '" + p.symbol + "' needs 0 <= start < end");
    }
    s.phonemes.push_back(std::move(p));
  }
  if (s.phonemes.empty()) throw Error("syllable has no phonemes");
  const long long nuc = parse_int(cols[10], "nucleus_idx");
  if (nuc < 0 || nuc >= static_cast<long long>(s.phonemes.size())) {
    throw Error("nucleus_idx out of range");
  }
  s.nucleus_index = static_cast<int>(nuc);
  return r;
}

// Returns an empty string when the word is valid.
std::string validate_word(Word& w) {
  std::sort(w.syllables.begin(), w.syllables.end(),
            [](const Syllable& a, const Syllable& b) { return a.index < b.index; });
  int stressed = 0;
  for (std::size_t i = 0; i < w.syllables.size(); ++i) {
    const auto& s = w.syllables[i];
    if (i > 0 && w.syllables[i - 1].index == s.index) {
      return "duplicate syllable index " + std::to_string(s.index);
    }
    if (i > 0 && w.syllables[i - 1].end > s.start + 1e-9) {
      return "overlapping syllables " + std::to_string(w.syllables[i - 1].index) + " and " +
             std::to_string(s.index);
    }
    for (const auto& p : s.phonemes) {
      if (p.start < s.start - 1e-9 || p.end > s.end + 1e-9) {
        return "phoneme '" + p.symbol + "' lies outside syllable " + std::to_string(s.index);
      }
    }
    if (s.stress == Stress::stressed) ++stressed;
  }
  if (stressed != 1) {
    return "expected exactly one stressed syllable, found " + std::to_string(stressed);
  }
  return {};
}

}  // namespace

PhonemeCategory category_of(std::string_view symbol) {
  const auto& table = phoneme_table();
  const auto it = table.find(normalize_symbol(symbol));
  if (it == table.end()) throw Error("unknown phoneme symbol '" + std::string(symbol) + "'");
  return it->second;
}

bool is_known_phoneme(std::string_view symbol) {
  return phoneme_table().contains(normalize_symbol(symbol));
}

std::string_view to_string(PhonemeCategory c) {
  switch (c) {
    case PhonemeCategory::vowel: return "vowel";
    case PhonemeCategory::plosive: return "plosive";
    case PhonemeCategory::fricative: return "fricative";
    case PhonemeCategory::affricate: return "affricate";
    case PhonemeCategory::nasal: return "nasal";
    case PhonemeCategory::approximant: return "approximant";
    case PhonemeCategory::silence: return "silence";
  }
  return "?";
}

std::string_view to_string(Dataset d) {
  switch (d) {
    case Dataset::GER: return "GER";
    case Dataset::ITA: return "ITA";
    case Dataset::SYNTH: return "SYNTH";
  }
  return "?";
}

Dataset parse_dataset(std::string_view s) {
  if (s == "GER") return Dataset::GER;
  if (s == "ITA") return Dataset::ITA;
  if (s == "SYNTH") return Dataset::SYNTH;
  throw Error("unknown dataset '" + std::string(s) + "'");
}

std::string to_string(const SyllableKey& k) {
  return k.utt_id + "/" + k.word_id + "/" + std::to_string(k.syll_idx);
}

ParseResult parse_alignments_text(std::string_view text, const std::string& name) {
  struct WordAcc {
    Word word;
    std::size_t first_line;
  };
  struct UttAcc {
    Utterance utt;
    std::vector<std::string> word_order;
    std::map<std::string, WordAcc> words;
  };
  std::vector<std::string> utt_order;
  std::map<std::string, UttAcc> utts;

  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    RawRow row;
    try {
      row = parse_row(line, line_no);
    } catch (const Error& e) {
      throw Error(name + ":" + std::to_string(line_no) + ": malformed row: " + e.what());
    }
    auto [uit, new_utt] = utts.try_emplace(row.utt_id);
    if (new_utt) {
      utt_order.push_back(row.utt_id);
      uit->second.utt.id = row.utt_id;
      uit->second.utt.dataset = row.dataset;
      uit->second.utt.speaker = row.speaker;
      uit->second.utt.audio_path = row.utt_id + ".wav";
    }
    auto& ua = uit->second;
    auto [wit, new_word] = ua.words.try_emplace(row.word_id);
    if (new_word) {
      ua.word_order.push_back(row.word_id);
      wit->second.first_line = row.line;
      wit->second.word.id = row.word_id;
      wit->second.word.text = row.word_text;
      wit->second.word.follows_pause = row.follows_pause;
      wit->second.word.precedes_pause = row.precedes_pause;
    }
    wit->second.word.syllables.push_back(std::move(row.syllable));
  }

  ParseResult result;
  for (const auto& uid : utt_order) {
    auto& ua = utts.at(uid);
    for (const auto& wid : ua.word_order) {
      auto& wa = ua.words.at(wid);
      const std::string problem = validate_word(wa.word);
      if (!problem.empty()) {
        result.rejected.push_back({wa.first_line, {uid, wid}, problem});
        continue;
      }
      ua.utt.words.push_back(std::move(wa.word));
    }
    std::sort(ua.utt.words.begin(), ua.utt.words.end(),
              [](const Word& a, const Word& b) { return a.start() < b.start(); });
    for (std::size_t i = 1; i < ua.utt.words.size(); ++i) {
      if (ua.utt.words[i - 1].end() > ua.utt.words[i].start() + 1e-9) {
        throw Error(name + ": overlapping words '" + ua.utt.words[i - 1].id + "' and '" +
                    ua.utt.words[i].id + "' in utterance " + uid);
      }
    }
    if (!ua.utt.words.empty()) result.utterances.push_back(std::move(ua.utt));
  }
  return result;
}

ParseResult parse_alignments(const std::filesystem::path& path) {
  return parse_alignments_text(binio::read_text(path), path.string());
}

std::string format_alignments(const std::vector<Utterance>& utterances) {
  std::ostringstream out;
  out << "# utt_id\tdataset\tspeaker\tword_id\tword_text\tsyll_idx\tstart_s\tend_s\tstress"
         "\tphonemes\tnucleus_idx\tfollows_pause\tprecedes_pause\n";
  for (const auto& u : utterances) {
    for (const auto& w : u.words) {
      for (const auto& s : w.syllables) {
        out << u.id << '\t' << to_string(u.dataset) << '\t' << u.speaker << '\t' << w.id << '\t'
            << w.text << '\t' << s.index << '\t' << format_double(s.start) << '\t'
            << format_double(s.end) << '\t' << (s.stress == Stress::stressed ? 1 : 0) << '\t';
        for (std::size_t i = 0; i < s.phonemes.size(); ++i) {
          const auto& p = s.phonemes[i];
          if (i > 0) out << ' ';
          out << p.symbol << ':' << format_double(p.start) << ':' << format_double(p.end);
        }
        out << '\t' << s.nucleus_index << '\t' << (w.follows_pause ? 1 : 0) << '\t'
            << (w.precedes_pause ? 1 : 0) << '\n';
      }
    }
  }
  return out.str();
}

void write_alignments(const std::vector<Utterance>& utterances, const std::filesystem::path& path) {
  binio::write_text(path, format_alignments(utterances));
}

std::vector<Utterance> filter_polysyllabic(std::vector<Utterance> utterances) {
  std::vector<Utterance> out;
  for (auto& u : utterances) {
    std::erase_if(u.words, [](const Word& w) { return w.syllables.size() < 2; });
    if (!u.words.empty()) out.push_back(std::move(u));
  }
  return out;
}

std::vector<LabeledSyllable> syllable_table(const std::vector<Utterance>& utterances) {
  std::vector<LabeledSyllable> rows;
  for (const auto& u : utterances) {
    for (const auto& w : u.words) {
      for (const auto& s : w.syllables) {
        rows.push_back({{u.id, w.id, s.index}, s.stress == Stress::stressed ? 1 : 0});
      }
    }
  }
  return rows;
}

int FoldAssignment::fold_of(const SyllableKey& key) const {
  const auto it = fold_of_syllable.find(key);
  if (it == fold_of_syllable.end()) throw Error("no fold for syllable " + to_string(key));
  return it->second;
}

FoldAssignment make_folds(const std::vector<LabeledSyllable>& rows, int k, std::uint64_t seed) {
  if (k < 2) throw Error("make_folds: k must be at least 2");
  struct Group {
    WordKey key;
    std::size_t syllables = 0;
    std::size_t stressed = 0;
  };
  std::map<WordKey, std::size_t> index;
  std::vector<Group> groups;
  for (const auto& r : rows) {
    auto [it, fresh] = index.try_emplace(r.key.word(), groups.size());
    if (fresh) groups.push_back({r.key.word()});
    auto& g = groups[it->second];
    ++g.syllables;
    g.stressed += static_cast<std::size_t>(r.label);
  }
  if (groups.size() < static_cast<std::size_t>(k)) {
    throw Error("make_folds: " + std::to_string(groups.size()) + " words is fewer than k = " +
                std::to_string(k));
  }

  // Stratify by word length (which fixes the word's stressed fraction), shuffle
  // within each stratum, then deal round-robin so fold sizes differ by <= 1.
  std::map<std::size_t, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < groups.size(); ++i) strata[groups[i].syllables].push_back(i);
  Rng rng(seed);
  std::vector<int> fold_of_group(groups.size(), 0);
  std::size_t dealt = 0;
  for (auto& [len, members] : strata) {
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t g : members) fold_of_group[g] = static_cast<int>(dealt++ % k);
  }

  // Swap words of different lengths between folds while that lowers the
  // squared deviation of fold stressed fractions from the global fraction.
  std::size_t total_syll = 0, total_stressed = 0;
  for (const auto& g : groups) {
    total_syll += g.syllables;
    total_stressed += g.stressed;
  }
  const double global = static_cast<double>(total_stressed) / static_cast<double>(total_syll);
  std::vector<double> fsyll(k, 0.0), fstress(k, 0.0);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    fsyll[fold_of_group[i]] += static_cast<double>(groups[i].syllables);
    fstress[fold_of_group[i]] += static_cast<double>(groups[i].stressed);
  }
  auto deviation = [&](double syll, double stressed) {
    const double d = (syll > 0 ? stressed / syll : 0.0) - global;
    return d * d;
  };
  for (int iter = 0; iter < 10000; ++iter) {
    double best_gain = 1e-15;
    std::size_t best_a = 0, best_b = 0;
    // Representative word per (fold, length): equal-length words in one fold
    // are interchangeable for the statistics.
    std::map<std::pair<int, std::size_t>, std::size_t> reps;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      reps.try_emplace({fold_of_group[i], groups[i].syllables}, i);
    }
    for (const auto& [ka, a] : reps) {
      for (const auto& [kb, b] : reps) {
        if (ka.first >= kb.first || ka.second == kb.second) continue;
        const int fa = ka.first, fb = kb.first;
        const double ds = static_cast<double>(groups[b].syllables) - groups[a].syllables;
        const double dt = static_cast<double>(groups[b].stressed) - groups[a].stressed;
        const double before = deviation(fsyll[fa], fstress[fa]) + deviation(fsyll[fb], fstress[fb]);
        const double after = deviation(fsyll[fa] + ds, fstress[fa] + dt) +
                             deviation(fsyll[fb] - ds, fstress[fb] - dt);
        if (before - after > best_gain) {
          best_gain = before - after;
          best_a = a;
          best_b = b;
        }
      }
    }
    if (best_gain <= 1e-15) break;
    const int fa = fold_of_group[best_a], fb = fold_of_group[best_b];
    const double ds = static_cast<double>(groups[best_b].syllables) - groups[best_a].syllables;
    const double dt = static_cast<double>(groups[best_b].stressed) - groups[best_a].stressed;
    fsyll[fa] += ds;
    fstress[fa] += dt;
    fsyll[fb] -= ds;
    fstress[fb] -= dt;
    std::swap(fold_of_group[best_a], fold_of_group[best_b]);
  }

  FoldAssignment out;
  out.k = k;
  for (const auto& r : rows) out.fold_of_syllable[r.key] = fold_of_group[index.at(r.key.word())];
  return out;
}

std::vector<FoldStats> fold_stats(const FoldAssignment& folds,
                                  const std::vector<LabeledSyllable>& rows) {
  std::vector<FoldStats> stats(static_cast<std::size_t>(folds.k));
  std::set<WordKey> seen;
  for (const auto& r : rows) {
    auto& s = stats.at(static_cast<std::size_t>(folds.fold_of(r.key)));
    ++s.syllables;
    s.stressed += static_cast<std::size_t>(r.label);
    if (seen.insert(r.key.word()).second) ++s.words;
  }
  return stats;
}

std::string format_folds(const FoldAssignment& folds) {
  std::ostringstream out;
  out << "# k=" << folds.k << "\n# utt_id\tword_id\tsyll_idx\tfold\n";
  for (const auto& [key, fold] : folds.fold_of_syllable) {
    out << key.utt_id << '\t' << key.word_id << '\t' << key.syll_idx << '\t' << fold << '\n';
  }
  return out.str();
}

FoldAssignment parse_folds(std::string_view text, const std::string& name) {
  FoldAssignment folds;
  folds.k = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("# k=", 0) == 0) {
      folds.k = static_cast<int>(parse_int(line.substr(4), "k"));
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    const auto cols = binio::split(line, '\t');
    const std::string where = name + ":" + std::to_string(line_no);
    if (cols.size() != 4) throw Error(where + ": expected 4 columns");
    SyllableKey key{cols[0], cols[1], static_cast<int>(parse_int(cols[2], "syll_idx"))};
    const int fold = static_cast<int>(parse_int(cols[3], "fold"));
    if (fold < 0) throw Error(where + ": negative fold");
    folds.fold_of_syllable[key] = fold;
    folds.k = std::max(folds.k, fold + 1);
  }
  // Word-mates must share a fold.
  std::map<WordKey, int> word_fold;
  for (const auto& [key, fold] : folds.fold_of_syllable) {
    auto [it, fresh] = word_fold.try_emplace(key.word(), fold);
    if (!fresh && it->second != fold) {
      throw Error(name + ": word " + key.utt_id + "/" + key.word_id + " split across folds");
    }
  }
  return folds;
}

std::map<std::string, std::string> parse_split(std::string_view text, const std::string& name) {
  std::map<std::string, std::string> split;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto cols = binio::split(line, '\t');
    if (cols.size() != 2 || (cols[1] != "train" && cols[1] != "test")) {
      throw Error(name + ":" + std::to_string(line_no) + ": expected 'utt_id<TAB>train|test'");
    }
    split[cols[0]] = cols[1];
  }
  return split;
}

// ---- synthesis ---------------------------------------------------------------

void SynthSpec::validate() const {
  if (words <= 0) throw Error("synth spec: word count must be positive");
  if (!(delta >= 0.0 && delta <= 1.0)) throw Error("synth spec: delta must lie in [0, 1]");
  if (min_syllables < 1 || max_syllables < min_syllables) {
    throw Error("synth spec: need 1 <= min_syllables <= max_syllables");
  }
  if (!(variability >= 0.0)) throw Error("synth spec: variability must be non-negative");
  if (test_words < 0 || test_words > words) throw Error("synth spec: invalid test word count");
}

namespace {

constexpr double kLeadingSilence = 0.30;
constexpr double kTrailingSilence = 0.20;
constexpr double kConsonantLevel = 0.3;  // consonant RMS relative to its vowel
constexpr double kSyllableSeconds = 0.2;

const std::array<const char*, 12> kVowels = {"ih", "ah", "eh", "uh", "ae", "iy",
                                             "aa", "uw", "ao", "ay", "ey", "ow"};
const std::array<const char*, 10> kConsonants = {"p", "t", "k", "s", "f", "sh", "m", "n", "l", "r"};

// Segment shaped on normalized time so that RMS depends only on the target
// level, not on the segment length.
std::vector<double> make_segment(PhonemeCategory cat, std::size_t n, double f0, double target_rms,
                                 Rng& rng) {
  std::vector<double> x(n, 0.0);
  const double sr = kSampleRate;
  switch (cat) {
    case PhonemeCategory::vowel:
    case PhonemeCategory::approximant: {
      const int harmonics = cat == PhonemeCategory::vowel ? 8 : 4;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        double v = 0.0;
        for (int h = 1; h <= harmonics; ++h) {
          v += std::sin(2.0 * std::numbers::pi * f0 * h * t) / h;
        }
        x[i] = v;
      }
      break;
    }
    case PhonemeCategory::nasal:
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        x[i] = std::sin(2.0 * std::numbers::pi * f0 * t) +
               0.3 * std::sin(4.0 * std::numbers::pi * f0 * t);
      }
      break;
    case PhonemeCategory::fricative:
    case PhonemeCategory::affricate: {
      double prev = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        x[i] = g - prev;  // first difference tilts the noise upward in frequency
        prev = g;
      }
      break;
    }
    case PhonemeCategory::plosive:
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = rng.gaussian() * std::exp(-4.0 * static_cast<double>(i) / static_cast<double>(n));
      }
      break;
    case PhonemeCategory::silence:
      return x;
  }
  // 10% raised-cosine ramps at both edges.
  const std::size_t ramp = std::max<std::size_t>(1, n / 10);
  for (std::size_t i = 0; i < ramp && i < n; ++i) {
    const double g = 0.5 - 0.5 * std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) / ramp);
    x[i] *= g;
    x[n - 1 - i] *= g;
  }
  const double r = audio::rms(std::span<const double>(x));
  if (r > 0.0) {
    for (auto& v : x) v *= target_rms / r;
  }
  return x;
}

std::string pad_number(int v, int width) {
  std::string s = std::to_string(v);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

}  // namespace

SynthCorpus synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  SynthCorpus out;
  Rng rng(seed);
  const double sr = kSampleRate;
  const double var = spec.variability;
  const double d = spec.delta;
  for (int wi = 0; wi < spec.words; ++wi) {
    const int n_syll = spec.min_syllables +
                       static_cast<int>(rng.below(static_cast<std::uint64_t>(
                           spec.max_syllables - spec.min_syllables + 1)));
    const int stressed = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_syll)));
    const double word_f0 = rng.uniform(100.0, 200.0);
    const double word_level = 0.06 * std::exp(0.2 * var * rng.gaussian());

    Utterance u;
    u.id = "synth_" + pad_number(wi, 5);
    u.dataset = Dataset::SYNTH;
    u.speaker = "spk" + pad_number(static_cast<int>(rng.below(10)), 2);
    u.audio_path = u.id + ".wav";
    Word w;
    w.id = "w0";
    w.text = "synth" + pad_number(wi, 5);
    w.follows_pause = true;
    w.precedes_pause = true;

    std::vector<double> samples(static_cast<std::size_t>(kLeadingSilence * sr), 0.0);
    for (int si = 0; si < n_syll; ++si) {
      const bool is_stressed = si == stressed;
      // Draw every random quantity regardless of stress so that delta only
      // rescales a fixed realization.
      const double level_jitter = std::exp(0.2 * var * rng.gaussian());
      const double dur_jitter = std::exp(0.12 * var * rng.gaussian());
      const double f0_jitter = std::exp(0.1 * var * rng.gaussian());
      const bool has_onset = rng.uniform() < 0.75;
      const bool has_coda = rng.uniform() < 0.3;
      const char* onset = kConsonants[rng.below(kConsonants.size())];
      const char* vowel = kVowels[rng.below(kVowels.size())];
      const char* coda = kConsonants[rng.below(kConsonants.size())];
      const std::uint64_t noise_seed = rng.next_u64();

      const double level = word_level * level_jitter * (is_stressed ? 1.0 + 2.0 * d : 1.0);
      const double dur = dur_jitter * (is_stressed ? 1.0 + d : 1.0);
      const double f0 = word_f0 * f0_jitter * (is_stressed ? 1.0 + 0.5 * d : 1.0);

      Syllable s;
      s.index = si;
      s.stress = is_stressed ? Stress::stressed : Stress::unstressed;
      struct Part {
        const char* symbol;
        double seconds;
      };
      // Relative part lengths; the syllable as a whole lasts kSyllableSeconds * dur.
      std::vector<Part> parts;
      if (has_onset) parts.push_back({onset, 0.06});
      s.nucleus_index = static_cast<int>(parts.size());
      parts.push_back({vowel, 0.12});
      if (has_coda) parts.push_back({coda, 0.05});
      double weight = 0.0;
      for (const auto& part : parts) weight += part.seconds;
      for (auto& part : parts) part.seconds *= kSyllableSeconds * dur / weight;

      Rng seg_rng(noise_seed);
      const std::size_t syll_start = samples.size();
      for (const auto& part : parts) {
        const PhonemeCategory cat = category_of(part.symbol);
        const auto n = static_cast<std::size_t>(std::lround(part.seconds * sr));
        const double target = cat == PhonemeCategory::vowel ? level : kConsonantLevel * level;
        const auto seg = make_segment(cat, n, f0, target, seg_rng);
        Phoneme p;
        p.symbol = part.symbol;
        p.category = cat;
        p.start = static_cast<double>(samples.size()) / sr;
        samples.insert(samples.end(), seg.begin(), seg.end());
        p.end = static_cast<double>(samples.size()) / sr;
        s.phonemes.push_back(std::move(p));
      }
      s.start = static_cast<double>(syll_start) / sr;
      s.end = static_cast<double>(samples.size()) / sr;
      w.syllables.push_back(std::move(s));
    }
    samples.resize(samples.size() + static_cast<std::size_t>(kTrailingSilence * sr), 0.0);

    double peak = 0.0;
    for (double v : samples) peak = std::max(peak, std::abs(v));
    if (peak > 0.99) {
      for (auto& v : samples) v *= 0.99 / peak;
    }
    u.words.push_back(std::move(w));
    out.utterances.push_back(std::move(u));
    out.audio.push_back(audio::Waveform{std::move(samples), kSampleRate});
    out.split.push_back(wi >= spec.words - spec.test_words ? "test" : "train");
  }
  return out;
}

std::vector<ManifestEntry> parse_manifest(std::string_view text, const std::string& name) {
  std::vector<ManifestEntry> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto cols = binio::split(line, '\t');
    if (cols.size() != 4) {
      throw Error(name + ":" + std::to_string(line_no) + ": expected 4 manifest columns");
    }
    entries.push_back({cols[0], cols[1],
                       static_cast<std::size_t>(parse_int(cols[2], "num_samples")),
                       parse_double(cols[3], "duration_s")});
  }
  return entries;
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::ostringstream out;
  out << "# utt_id\taudio_path\tnum_samples\tduration_s\n";
  for (const auto& e : entries) {
    out << e.utt_id << '\t' << e.audio_path << '\t' << e.num_samples << '\t'
        << format_double(e.duration_s) << '\n';
  }
  return out.str();
}

void write_synth_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "wav");
  std::vector<ManifestEntry> manifest;
  std::ostringstream split;
  split << "# utt_id\tsplit\n";
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    const auto& u = corpus.utterances[i];
    const auto& w = corpus.audio[i];
    audio::write_wav(w, dir / "wav" / u.audio_path);
    manifest.push_back({u.id, "wav/" + u.audio_path, w.samples.size(), w.duration()});
    split << u.id << '\t' << corpus.split[i] << '\n';
  }
  write_alignments(corpus.utterances, dir / "alignments.tsv");
  binio::write_text(dir / "manifest.tsv", format_manifest(manifest));
  binio::write_text(dir / "split.tsv", split.str());
}

}  // namespace stressbench::corpus
