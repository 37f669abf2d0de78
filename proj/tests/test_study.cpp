#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "stressbench/binio.hpp"
#include "stressbench/study.hpp"
#include "test_util.hpp"

using namespace stressbench;
using namespace stressbench::study;
using testutil::TempDir;

namespace {

const std::vector<std::string> kSystems = {"dtln", "spectral", "wiener"};

std::vector<StudyWord> words(std::size_t n, corpus::Dataset ds = corpus::Dataset::ITA) {
  std::vector<StudyWord> out;
  char id[16];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(id, sizeof id, "u%04zu", i);
    out.push_back({ds, id, "w0"});
  }
  return out;
}

void touch_audio(const TempDir& dir, const std::vector<StudyWord>& ws) {
  for (const auto& w : ws) {
    for (const std::string sys : {"clean", "dtln", "spectral", "wiener"}) {
      binio::write_text(dir / (sys + "/" + w.utt_id + ".wav"), "RIFF");
    }
  }
}

std::vector<Response> responses(corpus::Dataset ds, const std::vector<std::pair<std::string, int>>& counts) {
  std::vector<Response> out;
  int i = 0;
  for (const auto& [sys, n] : counts) {
    for (int k = 0; k < n; ++k) out.push_back({"s" + std::to_string(i++), "t", ds, sys, 100, 0});
  }
  return out;
}

struct FakeClock {
  std::int64_t now = 1'700'000'000'000;
  Clock fn() {
    return [this] { return now; };
  }
};

}  // namespace

TEST_CASE("one trial per word with three blinded candidates") {
  TempDir dir;
  const auto ws = words(50);
  touch_audio(dir, ws);
  const auto trials = build_study(ws, kSystems, dir.path(), 7);
  REQUIRE(trials.size() == 50);
  std::set<std::string> refs;
  for (const auto& t : trials) {
    std::set<std::string> systems;
    for (const auto& c : t.candidates) {
      systems.insert(c.system);
      refs.insert(c.audio_ref);
      CHECK(c.audio_ref == c.system + "/" + t.utt_id + ".wav");
    }
    CHECK(systems == std::set<std::string>(kSystems.begin(), kSystems.end()));
    CHECK(t.clean_ref == "clean/" + t.utt_id + ".wav");
  }
  CHECK(refs.size() == 150);

  const auto again = build_study(ws, kSystems, dir.path(), 7);
  CHECK(format_trials(again) == format_trials(trials));
  const auto other = build_study(ws, kSystems, dir.path(), 8);
  CHECK(format_trials(other) != format_trials(trials));
  const auto parsed = parse_trials(format_trials(trials));
  CHECK(format_trials(parsed) == format_trials(trials));

  std::filesystem::remove(dir / ("wiener/" + ws[3].utt_id + ".wav"));
  CHECK_THROWS_WITH_AS(build_study(ws, kSystems, dir.path(), 7), doctest::Contains("wiener/u0003.wav"), Error);
  CHECK_THROWS_AS(build_study(ws, {"a", "b"}, dir.path(), 7), Error);
  CHECK_THROWS_AS(build_study(ws, {"a", "a", "b"}, dir.path(), 7), Error);
}

TEST_CASE("presentation order is close to uniform over permutations") {
  TempDir dir;
  const auto ws = words(900);
  touch_audio(dir, ws);
  const auto trials = build_study(ws, kSystems, dir.path(), 11);
  std::map<std::string, int> counts;
  for (const auto& t : trials) {
    counts[t.candidates[0].system + t.candidates[1].system + t.candidates[2].system]++;
  }
  REQUIRE(counts.size() == 6);
  const double expected = trials.size() / 6.0;
  double chi2 = 0.0;
  for (const auto& [perm, n] : counts) chi2 += (n - expected) * (n - expected) / expected;
  // 5 degrees of freedom, p = 0.001
  CHECK(chi2 < 20.52);
}

TEST_CASE("select_words keeps polysyllabic words per dataset") {
  std::vector<corpus::Utterance> us;
  for (int i = 0; i < 30; ++i) {
    corpus::Utterance u;
    u.id = "u" + std::to_string(i);
    u.dataset = i % 2 ? corpus::Dataset::GER : corpus::Dataset::ITA;
    corpus::Word w;
    w.id = "w0";
    w.syllables.resize(i % 3 == 0 ? 1 : 2);
    u.words.push_back(w);
    us.push_back(u);
  }
  const auto sel = select_words(us, 4, 1);
  CHECK(sel.size() == 8);
  for (const auto& s : sel) CHECK(std::stoi(s.utt_id.substr(1)) % 3 != 0);
  CHECK(sel.front().dataset == corpus::Dataset::GER);
  CHECK(sel.back().dataset == corpus::Dataset::ITA);
  CHECK(select_words(us, 100, 1).size() == 20);
}

TEST_CASE("choice percentages") {
  const auto s = compute_stats(responses(corpus::Dataset::ITA, {{"a", 10}, {"b", 6}, {"c", 4}}));
  const auto* d = s.find(corpus::Dataset::ITA);
  REQUIRE(d);
  CHECK(d->responses == 20);
  CHECK(d->systems[0].percent == 50.0);
  CHECK(d->systems[1].percent == 30.0);
  CHECK(d->systems[2].percent == 20.0);

  const auto one = compute_stats(responses(corpus::Dataset::GER, {{"b", 7}}), {"a", "b", "c"});
  REQUIRE(one.find(corpus::Dataset::GER));
  CHECK(one.find(corpus::Dataset::GER)->systems.size() == 3);
  CHECK(one.find(corpus::Dataset::GER)->systems[1].percent == 100.0);
  CHECK(one.find(corpus::Dataset::GER)->systems[0].percent == 0.0);
  CHECK(compute_stats({}).datasets.empty());
}

TEST_CASE("two-decimal choice shares are reachable from whole counts") {
  // Smallest response total whose counts print exactly as these shares, then
  // compute_stats must reproduce them.
  struct Target {
    corpus::Dataset ds;
    std::array<const char*, 3> percent;
  };
  for (const auto& tgt : {Target{corpus::Dataset::ITA, {"45.91", "30.34", "23.75"}},
                          Target{corpus::Dataset::GER, {"37.60", "34.88", "27.52"}}}) {
    auto fmt = [](std::size_t k, std::size_t n) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", 100.0 * static_cast<double>(k) / static_cast<double>(n));
      return std::string(buf);
    };
    std::array<std::size_t, 3> found{};
    std::size_t total = 0;
    for (std::size_t n = 1; n < 2000 && total == 0; ++n) {
      std::array<std::size_t, 3> c{};
      bool ok = true;
      for (int i = 0; i < 2 && ok; ++i) {
        ok = false;
        const double p = std::stod(tgt.percent[i]);
        const auto guess = static_cast<std::size_t>(p * n / 100.0);
        for (std::size_t k = guess > 0 ? guess - 1 : 0; k <= guess + 1 && k <= n; ++k) {
          if (fmt(k, n) == tgt.percent[i]) {
            c[i] = k;
            ok = true;
            break;
          }
        }
      }
      if (!ok || c[0] + c[1] > n) continue;
      c[2] = n - c[0] - c[1];
      if (fmt(c[2], n) != tgt.percent[2]) continue;
      found = c;
      total = n;
    }
    REQUIRE(total > 0);
    const auto s = compute_stats(responses(tgt.ds, {{"dtln", static_cast<int>(found[0])},
                                                     {"spectral", static_cast<int>(found[1])},
                                                     {"wiener", static_cast<int>(found[2])}}));
    const auto tsv = export_stats_tsv(s);
    for (const char* p : tgt.percent) CHECK(tsv.find(std::string("\t") + p + "\t") != std::string::npos);
    double sum = 0.0;
    for (const auto& sys : s.find(tgt.ds)->systems) sum += sys.percent;
    CHECK(std::abs(sum - 100.0) < 0.01);
  }
}

TEST_CASE("random responses: percentages sum to 100 per dataset") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Response> rs;
    const auto n = 1 + rng.below(200);
    for (std::size_t i = 0; i < n; ++i) {
      rs.push_back({"s", "t" + std::to_string(i), static_cast<corpus::Dataset>(rng.below(3)), kSystems[rng.below(3)], 1, 0});
    }
    std::size_t total = 0;
    for (const auto& d : compute_stats(rs).datasets) {
      double sum = 0.0;
      for (const auto& s : d.systems) sum += s.percent;
      CHECK(std::abs(sum - 100.0) < 0.01);
      total += d.responses;
    }
    CHECK(total == n);
  }
}

TEST_CASE("stats TSV round trip and validation") {
  auto rs = responses(corpus::Dataset::ITA, {{"dtln", 174}, {"spectral", 115}, {"wiener", 90}});
  const auto ger = responses(corpus::Dataset::GER, {{"dtln", 97}, {"spectral", 90}, {"wiener", 71}});
  rs.insert(rs.end(), ger.begin(), ger.end());
  auto s = compute_stats(rs);
  s.find(corpus::Dataset::ITA)->systems[0].accuracy = 91.25;
  const auto tsv = export_stats_tsv(s);
  const auto back = import_stats_tsv(tsv);
  CHECK(export_stats_tsv(back) == tsv);
  CHECK(back.datasets.size() == 2);
  CHECK(back.find(corpus::Dataset::ITA)->systems[0].accuracy == 91.25);
  std::string bad = tsv;
  bad.replace(bad.find("45.91"), 5, "45.90");
  CHECK_THROWS_WITH_AS(import_stats_tsv(bad), doctest::Contains("does not match"), Error);
  CHECK(stats_json(s).find("\"datasets\"") != std::string::npos);
}

TEST_CASE("paired accuracy on a word subset") {
  std::vector<corpus::SyllableKey> all;
  std::map<std::string, SyllablePredictions> by_system;
  for (int i = 0; i < 50; ++i) {
    const corpus::SyllableKey k{"u" + std::to_string(i), "w0", 0};
    all.push_back(k);
    by_system["dtln"][k] = {i < 40 ? 1 : 0, 1};
    by_system["wiener"][k] = {i % 2, 1};
  }
  const auto acc = paired_accuracy(all, by_system);
  CHECK(acc.at("dtln") == 80.0);
  CHECK(acc.at("wiener") == 50.0);
  // Restriction oracle: count directly over a subset.
  const std::vector<corpus::SyllableKey> sub(all.begin() + 30, all.begin() + 50);
  const auto acc_sub = paired_accuracy(sub, by_system);
  CHECK(acc_sub.at("dtln") == 50.0);
  by_system["wiener"].erase(all[35]);
  CHECK_THROWS_WITH_AS(paired_accuracy(sub, by_system), doctest::Contains("u35"), Error);
  CHECK_THROWS_AS(paired_accuracy({}, by_system), Error);
}

TEST_CASE("response log lines round trip") {
  const Response r{"subj 1", "t001", corpus::Dataset::GER, "wiener", 2345, 1700000000123};
  const auto line = format_response(r);
  CHECK(line.find('\n') == std::string::npos);
  CHECK(parse_response(line) == r);
  CHECK(parse_log(line + "\n" + line + "\n").size() == 2);
  CHECK_THROWS_AS(parse_response("{\"subject_id\": 1}"), Error);
}

TEST_CASE("study service sessions, submissions and replay") {
  TempDir dir;
  const auto ws = words(4);
  touch_audio(dir, ws);
  const auto trials = build_study(ws, kSystems, dir.path(), 3);
  const auto log = dir / "log/responses.jsonl";
  FakeClock clock;

  std::string first_stats;
  {
    StudyService svc(trials, log, dir.path(), clock.fn(), std::chrono::minutes(10));
    CHECK(svc.systems() == kSystems);
    const auto s = svc.create_session("alice");
    CHECK(svc.subject_of(s) == "alice");
    CHECK(svc.next_trial("nope").status == Status::unknown_session);

    auto next = svc.next_trial(s);
    REQUIRE(next.status == Status::ok);
    REQUIRE(next.trial);
    CHECK(next.trial->trial_id == "t001");
    CHECK(next.trial->reference == "t001-ref");
    CHECK(next.progress.total == 4);

    CHECK(svc.submit(s, "t001", "D", 10).status == Status::invalid_choice);
    CHECK(svc.submit(s, "t001", "wiener", 10).status == Status::invalid_choice);
    CHECK(svc.submit(s, "t999", "A", 10).status == Status::unknown_trial);
    CHECK(svc.snapshot()->empty());

    auto ok = svc.submit(s, "t001", "B", 1200);
    CHECK(ok.status == Status::ok);
    CHECK(ok.progress.answered == 1);
    CHECK(svc.snapshot()->front().choice == trials[0].candidates[1].system);
    const auto size_before = std::filesystem::file_size(log);
    const auto dup = svc.submit(s, "t001", "A", 5);
    CHECK(dup.status == Status::duplicate);
    CHECK(svc.snapshot()->size() == 1);
    CHECK(std::filesystem::file_size(log) == size_before);

    // A new session supersedes the old one.
    const auto s2 = svc.create_session("alice");
    CHECK(svc.submit(s, "t002", "A", 5).status == Status::stale_session);
    CHECK(svc.next_trial(s).status == Status::stale_session);
    CHECK(svc.next_trial(s2).trial->trial_id == "t002");

    // Inactivity past the TTL also makes a session stale.
    const auto bob = svc.create_session("bob");
    clock.now += 11 * 60 * 1000;
    CHECK(svc.next_trial(bob).status == Status::stale_session);

    const auto s3 = svc.create_session("alice");
    for (const char* t : {"t002", "t003", "t004"}) CHECK(svc.submit(s3, t, "C", 900).status == Status::ok);
    next = svc.next_trial(s3);
    CHECK(next.status == Status::ok);
    CHECK(!next.trial);
    CHECK(next.progress.answered == 4);
    CHECK(svc.progress_of("alice").answered == 4);

    CHECK(svc.audio_file("t002-ref") == dir.path() / trials[1].clean_ref);
    CHECK(svc.audio_file("t002-C") == dir.path() / trials[1].candidates[2].audio_ref);
    CHECK(!svc.audio_file("t002-D"));
    CHECK(!svc.audio_file("t777-A"));
    first_stats = export_stats_tsv(svc.stats());
  }

  // Replay reproduces the statistics; answered trials stay answered.
  {
    StudyService svc(trials, log, dir.path(), clock.fn());
    CHECK(export_stats_tsv(svc.stats()) == first_stats);
    CHECK(svc.progress_of("alice").answered == 4);
    const auto s = svc.create_session("alice");
    CHECK(svc.submit(s, "t003", "A", 1).status == Status::duplicate);
  }
  CHECK(export_stats_tsv(compute_stats(read_log(log), kSystems)) == first_stats);

  // A torn final line is cut on replay.
  {
    std::ofstream(log, std::ios::app) << "{\"subject_id\": \"carol\", \"tri";
    StudyService svc(trials, log, dir.path(), clock.fn());
    CHECK(svc.snapshot()->size() == 4);
    CHECK(export_stats_tsv(svc.stats()) == first_stats);
    const auto s = svc.create_session("carol");
    CHECK(svc.submit(s, "t001", "A", 1).status == Status::ok);
  }
  CHECK(read_log(log).size() == 5);
}
