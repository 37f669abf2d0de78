#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "stressbench/binio.hpp"
#include "stressbench/corpus.hpp"
#include "test_util.hpp"

using namespace stressbench;
using namespace stressbench::corpus;
using testutil::TempDir;

namespace {

const char* kHeader =
    "# utt_id\tdataset\tspeaker\tword_id\tword_text\tsyll_idx\tstart_s\tend_s\tstress\tphonemes\tnucleus_idx\t"
    "follows_pause\tprecedes_pause\n";

std::string permit_rows(const std::string& utt, int s0, int s1) {
  std::ostringstream o;
  o << utt << "\tGER\tspk1\tw1\tpermit\t0\t0.1\t0.25\t" << s0 << "\tp:0.1:0.15 ah:0.15:0.25\t1\t1\t0\n";
  o << utt << "\tGER\tspk1\tw1\tpermit\t1\t0.25\t0.45\t" << s1 << "\tm:0.25:0.3 ih:0.3:0.4 t:0.4:0.45\t1\t1\t0\n";
  return o.str();
}

// Word of n syllables, 0.1 s each, starting at t0; stress on `stressed`.
Word make_word(const std::string& id, int n, int stressed, double t0) {
  Word w;
  w.id = id;
  w.text = id;
  for (int i = 0; i < n; ++i) {
    Syllable s;
    s.index = i;
    s.start = t0 + 0.1 * i;
    s.end = s.start + 0.1;
    s.phonemes.push_back({"ah", PhonemeCategory::vowel, s.start, s.end});
    s.stress = i == stressed ? Stress::stressed : Stress::unstressed;
    w.syllables.push_back(s);
  }
  return w;
}

std::vector<LabeledSyllable> skewed_rows(std::uint64_t seed, int words) {
  Rng rng(seed);
  std::vector<LabeledSyllable> rows;
  for (int i = 0; i < words; ++i) {
    const int n = 2 + static_cast<int>(rng.below(4));
    const int st = static_cast<int>(rng.below(n));
    for (int s = 0; s < n; ++s) rows.push_back({{"u" + std::to_string(i / 3), "w" + std::to_string(i), s}, s == st});
  }
  return rows;
}

}  // namespace

TEST_CASE("phoneme categories") {
  CHECK(category_of("AH") == PhonemeCategory::vowel);
  CHECK(category_of("ih1") == PhonemeCategory::vowel);
  CHECK(category_of("p") == PhonemeCategory::plosive);
  CHECK(category_of("sh") == PhonemeCategory::fricative);
  CHECK(category_of("ch") == PhonemeCategory::affricate);
  CHECK(category_of("m") == PhonemeCategory::nasal);
  CHECK(category_of("r") == PhonemeCategory::approximant);
  CHECK(category_of("sil") == PhonemeCategory::silence);
  CHECK(category_of("sp") == PhonemeCategory::silence);
  CHECK_THROWS_AS(category_of("xyz"), Error);
}

TEST_CASE("permit parses with first-syllable stress") {
  const auto r = parse_alignments_text(std::string(kHeader) + permit_rows("u1", 1, 0));
  REQUIRE(r.rejected.empty());
  REQUIRE(r.utterances.size() == 1);
  const auto& w = r.utterances[0].words.at(0);
  CHECK(w.text == "permit");
  REQUIRE(w.syllables.size() == 2);
  CHECK(w.syllables[0].stress == Stress::stressed);
  CHECK(w.syllables[1].stress == Stress::unstressed);
  CHECK(w.syllables[1].nucleus().symbol == "ih");
  CHECK(w.follows_pause);
  CHECK_FALSE(w.precedes_pause);
  CHECK(r.utterances[0].dataset == Dataset::GER);
}

TEST_CASE("empty input parses to nothing") {
  const auto r = parse_alignments_text("");
  CHECK(r.utterances.empty());
  CHECK(r.rejected.empty());
}

TEST_CASE("double stress rejects only that word") {
  const auto text = std::string(kHeader) + permit_rows("u1", 1, 1) + permit_rows("u2", 0, 1);
  const auto r = parse_alignments_text(text);
  REQUIRE(r.rejected.size() == 1);
  CHECK(r.rejected[0].word.utt_id == "u1");
  CHECK(r.rejected[0].line == 2);
  CHECK(r.rejected[0].message.find("exactly one stressed") != std::string::npos);
  REQUIRE(r.utterances.size() == 1);
  CHECK(r.utterances[0].id == "u2");
}

TEST_CASE("malformed rows name the line") {
  const auto text = std::string(kHeader) + permit_rows("u1", 1, 0) + "u3\tGER\tspk\tw\tx\t0\t0.1\n";
  CHECK_THROWS_WITH_AS(parse_alignments_text(text, "a.tsv"), doctest::Contains("a.tsv:4"), Error);
  const auto bad_phone = std::string(kHeader) +
                         "u1\tGER\ts\tw1\tx\t0\t0.1\t0.2\t1\tqq:0.1:0.2\t0\t0\t0\n";
  CHECK_THROWS_WITH_AS(parse_alignments_text(bad_phone), doctest::Contains("qq"), Error);
}

TEST_CASE("overlapping syllables are rejected") {
  std::string t = kHeader;
  t += "u1\tITA\ts\tw1\tx\t0\t0.1\t0.3\t1\tah:0.1:0.3\t0\t0\t0\n";
  t += "u1\tITA\ts\tw1\tx\t1\t0.25\t0.4\t0\tah:0.25:0.4\t0\t0\t0\n";
  const auto r = parse_alignments_text(t);
  REQUIRE(r.rejected.size() == 1);
  CHECK(r.rejected[0].message.find("overlapping") != std::string::npos);
}

TEST_CASE("format and parse round-trip on random valid corpora, one stress per word") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    std::vector<Utterance> utts;
    for (int u = 0; u < 3; ++u) {
      Utterance utt;
      utt.id = "utt" + std::to_string(u);
      utt.dataset = rng.below(2) ? Dataset::ITA : Dataset::GER;
      utt.speaker = "s";
      utt.audio_path = utt.id + ".wav";
      double t = 0.0;
      for (int w = 0; w < 1 + static_cast<int>(rng.below(4)); ++w) {
        const int n = 1 + static_cast<int>(rng.below(4));
        utt.words.push_back(make_word("w" + std::to_string(w), n, static_cast<int>(rng.below(n)), t));
        t += 0.1 * n + 0.05;
      }
      utts.push_back(utt);
    }
    const auto text = format_alignments(utts);
    const auto r = parse_alignments_text(text);
    CHECK(r.rejected.empty());
    REQUIRE(r.utterances.size() == utts.size());
    CHECK(format_alignments(r.utterances) == text);
    for (const auto& u : r.utterances) {
      for (const auto& w : u.words) {
        CHECK(std::count_if(w.syllables.begin(), w.syllables.end(),
                            [](const Syllable& s) { return s.stress == Stress::stressed; }) == 1);
      }
    }
  }
}

TEST_CASE("filter_polysyllabic counts and idempotence") {
  Utterance u;
  u.id = "u";
  const int sizes[] = {1, 2, 1, 3, 2, 1, 4, 1, 2, 2};
  double t = 0;
  int expected = 0;
  for (int i = 0; i < 10; ++i) {
    u.words.push_back(make_word("w" + std::to_string(i), sizes[i], 0, t));
    t += 0.1 * sizes[i];
    expected += sizes[i] >= 2;
  }
  Utterance mono;
  mono.id = "m";
  mono.words.push_back(make_word("w", 1, 0, 0.0));
  const auto once = filter_polysyllabic({u, mono});
  REQUIRE(once.size() == 1);
  CHECK(static_cast<int>(once[0].words.size()) == expected);
  CHECK(expected == 6);
  const auto twice = filter_polysyllabic(once);
  CHECK(format_alignments(twice) == format_alignments(once));
}

TEST_CASE("make_folds on 50 two-syllable words is perfectly balanced") {
  std::vector<LabeledSyllable> rows;
  for (int i = 0; i < 50; ++i) {
    rows.push_back({{"u", "w" + std::to_string(i), 0}, i % 2});
    rows.push_back({{"u", "w" + std::to_string(i), 1}, 1 - i % 2});
  }
  for (std::uint64_t seed : {1, 2}) {
    const auto folds = make_folds(rows, 5, seed);
    for (const auto& s : fold_stats(folds, rows)) {
      CHECK(s.words == 10);
      CHECK(s.syllables == 20);
      CHECK(s.stressed == 10);
    }
  }
  CHECK_THROWS_AS(make_folds({rows.begin(), rows.begin() + 8}, 5, 1), Error);
}

TEST_CASE("make_folds on skewed corpora: partition, grouping, size and balance") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto rows = skewed_rows(seed, 150 + 7 * static_cast<int>(seed));
    const auto folds = make_folds(rows, 5, seed);
    CHECK(folds.fold_of_syllable.size() == rows.size());

    // Counting oracle computed here, independently of fold_stats.
    std::map<WordKey, std::set<int>> folds_of_word;
    std::vector<double> syll(5, 0), stressed(5, 0);
    std::vector<std::set<WordKey>> words(5);
    double total = 0, total_st = 0;
    for (const auto& r : rows) {
      const int f = folds.fold_of_syllable.at(r.key);
      REQUIRE(f >= 0);
      REQUIRE(f < 5);
      folds_of_word[r.key.word()].insert(f);
      syll[f] += 1;
      stressed[f] += r.label;
      words[f].insert(r.key.word());
      total += 1;
      total_st += r.label;
    }
    for (const auto& [w, fs] : folds_of_word) CHECK(fs.size() == 1);
    std::size_t lo = SIZE_MAX, hi = 0;
    for (int f = 0; f < 5; ++f) {
      lo = std::min(lo, words[f].size());
      hi = std::max(hi, words[f].size());
      CHECK(std::abs(stressed[f] / syll[f] - total_st / total) <= 0.02);
    }
    CHECK(hi - lo <= 1);
    CHECK(format_folds(make_folds(rows, 5, seed)) == format_folds(folds));
  }
}

TEST_CASE("folds file round-trip and split-word rejection") {
  const auto rows = skewed_rows(3, 40);
  const auto folds = make_folds(rows, 5, 9);
  const auto back = parse_folds(format_folds(folds));
  CHECK(back.k == 5);
  CHECK(back.fold_of_syllable == folds.fold_of_syllable);
  const std::string split = "# k=2\nu\tw\t0\t0\nu\tw\t1\t1\n";
  CHECK_THROWS_WITH_AS(parse_folds(split), doctest::Contains("split across folds"), Error);
}

TEST_CASE("synth corpus counts, determinism and split") {
  SynthSpec spec;
  spec.words = 200;
  spec.test_words = 20;
  const auto a = synth_corpus(spec, 7);
  const auto text = format_alignments(a.utterances);
  int rows = 0;
  for (char c : text) rows += c == '\n';
  CHECK(rows - 1 == 400);
  CHECK(std::count(a.split.begin(), a.split.end(), "test") == 20);
  CHECK(a.split.back() == "test");
  const auto b = synth_corpus(spec, 7);
  CHECK(format_alignments(b.utterances) == text);
  for (std::size_t i = 0; i < a.audio.size(); ++i) CHECK(a.audio[i].samples == b.audio[i].samples);
  CHECK(format_alignments(synth_corpus(spec, 8).utterances) != text);

  SynthSpec bad;
  bad.words = 0;
  CHECK_THROWS_AS(synth_corpus(bad, 1), Error);
  bad.words = 5;
  bad.delta = 1.5;
  CHECK_THROWS_AS(synth_corpus(bad, 1), Error);
}

TEST_CASE("written synth corpus: stressed vowel RMS is 3x unstressed at delta 1") {
  TempDir dir;
  SynthSpec spec;
  spec.words = 12;
  spec.delta = 1.0;
  spec.variability = 0.0;
  write_synth_corpus(synth_corpus(spec, 5), dir.path());
  const auto parsed = parse_alignments(dir / "alignments.tsv");
  CHECK(parsed.rejected.empty());
  REQUIRE(parsed.utterances.size() == 12);
  const auto manifest = parse_manifest(binio::read_text(dir / "manifest.tsv"), "manifest");
  CHECK(manifest.size() == 12);
  for (const auto& u : parsed.utterances) {
    const auto w = audio::read_wav(dir.path() / "wav" / u.audio_path);
    double stressed = 0.0, unstressed = 0.0;
    for (const auto& s : u.words[0].syllables) {
      const auto& v = s.nucleus();
      const audio::SampleRange r{static_cast<std::size_t>(std::lround(v.start * kSampleRate)),
                                 static_cast<std::size_t>(std::lround(v.end * kSampleRate))};
      (s.stress == Stress::stressed ? stressed : unstressed) = audio::rms(w, r);
      CHECK(v.end <= w.duration() + 1e-9);
    }
    CHECK(stressed / unstressed == doctest::Approx(3.0).epsilon(0.01));
  }
}
