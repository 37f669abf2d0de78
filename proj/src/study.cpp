#include "stressbench/study.hpp"

#include <json.hpp>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>

#include "stressbench/binio.hpp"
#include "stressbench/rng.hpp"

namespace stressbench::study {

using nlohmann::json;
using nlohmann::ordered_json;

std::string slot_name(std::size_t i) {
  if (i >= kCandidates) throw Error("study: slot index out of range");
  return std::string(1, static_cast<char>('A' + i));
}

std::optional<std::size_t> slot_index(std::string_view name) {
  if (name.size() != 1) return std::nullopt;
  const char c = name[0];
  if (c < 'A' || c >= static_cast<char>('A' + kCandidates)) return std::nullopt;
  return static_cast<std::size_t>(c - 'A');
}

// ---- trials -----------------------------------------------------------------

std::vector<StudyWord> select_words(const std::vector<corpus::Utterance>& utterances,
                                    std::size_t per_dataset, std::uint64_t seed) {
  std::map<corpus::Dataset, std::vector<StudyWord>> pool;
  for (const auto& u : utterances) {
    for (const auto& w : u.words) {
      if (w.syllables.size() >= 2) pool[u.dataset].push_back({u.dataset, u.id, w.id});
    }
  }
  std::vector<StudyWord> out;
  for (auto& [ds, words] : pool) {
    Rng rng(derive_seed(seed, "study/" + std::string(corpus::to_string(ds))));
    rng.shuffle(std::span<StudyWord>(words));
    words.resize(std::min(per_dataset, words.size()));
    std::sort(words.begin(), words.end(), [](const StudyWord& a, const StudyWord& b) {
      return std::tie(a.utt_id, a.word_id) < std::tie(b.utt_id, b.word_id);
    });
    out.insert(out.end(), words.begin(), words.end());
  }
  return out;
}

std::vector<Trial> build_study(const std::vector<StudyWord>& words, const std::vector<std::string>& systems,
                               const std::filesystem::path& audio_root, std::uint64_t seed) {
  if (systems.size() != kCandidates) throw Error("study: exactly three systems are required");
  if (std::set<std::string>(systems.begin(), systems.end()).size() != kCandidates) {
    throw Error("study: system labels must be distinct");
  }
  for (const auto& s : systems) {
    if (s.empty() || s == "clean" || s.find('/') != std::string::npos) throw Error("study: invalid system label '" + s + "'");
  }
  std::vector<Trial> trials;
  char id[32];
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    Trial t;
    std::snprintf(id, sizeof id, "t%03zu", i + 1);
    t.trial_id = id;
    t.dataset = w.dataset;
    t.utt_id = w.utt_id;
    t.word_id = w.word_id;
    t.clean_ref = "clean/" + w.utt_id + ".wav";
    if (!std::filesystem::exists(audio_root / t.clean_ref)) {
      throw Error("study: missing clean audio " + (audio_root / t.clean_ref).string());
    }
    t.shuffle_seed = derive_seed(seed, t.trial_id);
    std::array<std::size_t, kCandidates> order{0, 1, 2};
    Rng(t.shuffle_seed).shuffle(std::span<std::size_t>(order));
    for (std::size_t k = 0; k < kCandidates; ++k) {
      const auto& sys = systems[order[k]];
      t.candidates[k] = {sys, sys + "/" + w.utt_id + ".wav"};
      if (!std::filesystem::exists(audio_root / t.candidates[k].audio_ref)) {
        throw Error("study: missing candidate audio " + (audio_root / t.candidates[k].audio_ref).string());
      }
    }
    trials.push_back(std::move(t));
  }
  return trials;
}

std::string format_trials(const std::vector<Trial>& trials) {
  ordered_json arr = ordered_json::array();
  for (const auto& t : trials) {
    ordered_json o;
    o["trial_id"] = t.trial_id;
    o["dataset"] = std::string(corpus::to_string(t.dataset));
    o["utt_id"] = t.utt_id;
    o["word_id"] = t.word_id;
    o["clean_ref"] = t.clean_ref;
    o["shuffle_seed"] = t.shuffle_seed;
    ordered_json cands = ordered_json::array();
    for (std::size_t k = 0; k < kCandidates; ++k) {
      cands.push_back({{"slot", slot_name(k)}, {"system", t.candidates[k].system}, {"audio_ref", t.candidates[k].audio_ref}});
    }
    o["candidates"] = cands;
    arr.push_back(o);
  }
  return arr.dump(2) + "\n";
}

std::vector<Trial> parse_trials(const std::string& json_text, const std::string& name) {
  std::vector<Trial> out;
  std::set<std::string> ids;
  try {
    const auto arr = json::parse(json_text);
    if (!arr.is_array()) throw Error(name + ": expected a JSON array of trials");
    for (const auto& o : arr) {
      Trial t;
      t.trial_id = o.at("trial_id").get<std::string>();
      t.dataset = corpus::parse_dataset(o.at("dataset").get<std::string>());
      t.utt_id = o.at("utt_id").get<std::string>();
      t.word_id = o.at("word_id").get<std::string>();
      t.clean_ref = o.at("clean_ref").get<std::string>();
      t.shuffle_seed = o.at("shuffle_seed").get<std::uint64_t>();
      const auto& c = o.at("candidates");
      if (!c.is_array() || c.size() != kCandidates) throw Error(name + ": trial " + t.trial_id + " must have 3 candidates");
      std::set<std::string> systems;
      for (std::size_t k = 0; k < kCandidates; ++k) {
        t.candidates[k].system = c[k].at("system").get<std::string>();
        t.candidates[k].audio_ref = c[k].at("audio_ref").get<std::string>();
        systems.insert(t.candidates[k].system);
      }
      if (systems.size() != kCandidates) throw Error(name + ": trial " + t.trial_id + " repeats a system label");
      if (!ids.insert(t.trial_id).second) throw Error(name + ": duplicate trial id " + t.trial_id);
      out.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw Error(name + ": " + e.what());
  }
  return out;
}

std::vector<Trial> load_trials(const std::filesystem::path& path) {
  return parse_trials(binio::read_text(path), path.string());
}

// ---- responses --------------------------------------------------------------

std::string format_response(const Response& r) {
  ordered_json o;
  o["subject_id"] = r.subject_id;
  o["trial_id"] = r.trial_id;
  o["dataset"] = std::string(corpus::to_string(r.dataset));
  o["choice"] = r.choice;
  o["response_ms"] = r.response_ms;
  o["timestamp_ms"] = r.timestamp_ms;
  return o.dump();
}

Response parse_response(std::string_view line, const std::string& where) {
  try {
    const auto o = json::parse(line);
    Response r;
    r.subject_id = o.at("subject_id").get<std::string>();
    r.trial_id = o.at("trial_id").get<std::string>();
    r.dataset = corpus::parse_dataset(o.at("dataset").get<std::string>());
    r.choice = o.at("choice").get<std::string>();
    r.response_ms = o.at("response_ms").get<std::int64_t>();
    r.timestamp_ms = o.at("timestamp_ms").get<std::int64_t>();
    return r;
  } catch (const json::exception& e) {
    throw Error(where + ": " + e.what());
  }
}

std::vector<Response> parse_log(std::string_view text, const std::string& name) {
  std::vector<Response> out;
  std::size_t lineno = 0;
  for (const auto& line : binio::split(text, '\n')) {
    ++lineno;
    if (line.empty()) continue;
    out.push_back(parse_response(line, name + ":" + std::to_string(lineno)));
  }
  return out;
}

std::vector<Response> read_log(const std::filesystem::path& path) {
  return parse_log(binio::read_text(path), path.string());
}

// ---- statistics -------------------------------------------------------------

const DatasetStats* StudyStats::find(corpus::Dataset d) const {
  for (const auto& s : datasets) {
    if (s.dataset == d) return &s;
  }
  return nullptr;
}

DatasetStats* StudyStats::find(corpus::Dataset d) {
  for (auto& s : datasets) {
    if (s.dataset == d) return &s;
  }
  return nullptr;
}

StudyStats compute_stats(const std::vector<Response>& responses, const std::vector<std::string>& systems) {
  std::map<corpus::Dataset, std::map<std::string, std::size_t>> counts;
  std::map<corpus::Dataset, std::size_t> totals;
  for (const auto& r : responses) {
    ++counts[r.dataset][r.choice];
    ++totals[r.dataset];
  }
  StudyStats out;
  for (const auto& [ds, by_system] : counts) {
    DatasetStats d;
    d.dataset = ds;
    d.responses = totals[ds];
    std::set<std::string> labels(systems.begin(), systems.end());
    for (const auto& [sys, n] : by_system) labels.insert(sys);
    for (const auto& sys : labels) {
      const auto it = by_system.find(sys);
      SystemStats s;
      s.system = sys;
      s.choices = it == by_system.end() ? 0 : it->second;
      s.percent = 100.0 * static_cast<double>(s.choices) / static_cast<double>(d.responses);
      d.systems.push_back(std::move(s));
    }
    out.datasets.push_back(std::move(d));
  }
  return out;
}

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string export_stats_tsv(const StudyStats& s) {
  std::string out = "dataset\tsystem\tchoices\tresponses\tpercent\taccuracy\n";
  for (const auto& d : s.datasets) {
    for (const auto& sys : d.systems) {
      out += std::string(corpus::to_string(d.dataset)) + '\t' + sys.system + '\t' + std::to_string(sys.choices) + '\t' +
             std::to_string(d.responses) + '\t' + fixed2(sys.percent) + '\t' +
             (sys.accuracy ? fixed2(*sys.accuracy) : std::string("-")) + '\n';
    }
  }
  return out;
}

StudyStats import_stats_tsv(std::string_view text, const std::string& name) {
  StudyStats out;
  std::size_t lineno = 0;
  for (const auto& line : binio::split(text, '\n')) {
    ++lineno;
    if (line.empty() || line.starts_with("dataset\t")) continue;
    const auto f = binio::split(line, '\t');
    const std::string where = name + ":" + std::to_string(lineno);
    if (f.size() != 6) throw Error(where + ": expected 6 columns");
    const auto ds = corpus::parse_dataset(f[0]);
    DatasetStats* d = out.find(ds);
    const auto total = static_cast<std::size_t>(binio::parse_int(f[3], where + " responses"));
    if (!d) {
      out.datasets.push_back({ds, total, {}});
      d = &out.datasets.back();
    } else if (d->responses != total) {
      throw Error(where + ": inconsistent response total for " + f[0]);
    }
    SystemStats s;
    s.system = f[1];
    s.choices = static_cast<std::size_t>(binio::parse_int(f[2], where + " choices"));
    if (total == 0 || s.choices > total) throw Error(where + ": choices exceed responses");
    s.percent = 100.0 * static_cast<double>(s.choices) / static_cast<double>(total);
    if (fixed2(s.percent) != f[4]) throw Error(where + ": percent " + f[4] + " does not match counts");
    if (f[5] != "-") s.accuracy = binio::parse_double(f[5], where + " accuracy");
    d->systems.push_back(std::move(s));
  }
  std::sort(out.datasets.begin(), out.datasets.end(),
            [](const DatasetStats& a, const DatasetStats& b) { return a.dataset < b.dataset; });
  return out;
}

std::string stats_json(const StudyStats& s) {
  ordered_json arr = ordered_json::array();
  for (const auto& d : s.datasets) {
    ordered_json o;
    o["dataset"] = std::string(corpus::to_string(d.dataset));
    o["responses"] = d.responses;
    ordered_json systems = ordered_json::array();
    for (const auto& sys : d.systems) {
      ordered_json so;
      so["system"] = sys.system;
      so["choices"] = sys.choices;
      so["percent"] = sys.percent;
      if (sys.accuracy) so["accuracy"] = *sys.accuracy;
      systems.push_back(so);
    }
    o["systems"] = systems;
    arr.push_back(o);
  }
  ordered_json root;
  root["datasets"] = arr;
  return root.dump();
}

std::map<std::string, double> paired_accuracy(const std::vector<corpus::SyllableKey>& subset,
                                              const std::map<std::string, SyllablePredictions>& by_system) {
  if (subset.empty()) throw Error("paired accuracy: empty subset");
  std::map<std::string, double> out;
  for (const auto& [system, preds] : by_system) {
    std::size_t correct = 0;
    for (const auto& key : subset) {
      const auto it = preds.find(key);
      if (it == preds.end()) throw Error("paired accuracy: no " + system + " prediction for " + corpus::to_string(key));
      if (it->second.first == it->second.second) ++correct;
    }
    out[system] = 100.0 * static_cast<double>(correct) / static_cast<double>(subset.size());
  }
  return out;
}

// ---- service ----------------------------------------------------------------

std::string_view to_string(Status s) {
  switch (s) {
    case Status::ok: return "ok";
    case Status::unknown_session: return "unknown_session";
    case Status::stale_session: return "stale_session";
    case Status::unknown_trial: return "unknown_trial";
    case Status::invalid_choice: return "invalid_choice";
    case Status::duplicate: return "duplicate";
  }
  return "?";
}

std::int64_t system_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

StudyService::StudyService(std::vector<Trial> trials, std::filesystem::path log_path,
                           std::filesystem::path audio_root, Clock clock, std::chrono::milliseconds session_ttl)
    : trials_(std::move(trials)),
      log_path_(std::move(log_path)),
      audio_root_(std::move(audio_root)),
      clock_(std::move(clock)),
      ttl_(session_ttl) {
  if (trials_.empty()) throw Error("study: no trials");
  for (std::size_t i = 0; i < trials_.size(); ++i) {
    if (!trial_index_.emplace(trials_[i].trial_id, i).second) throw Error("study: duplicate trial id " + trials_[i].trial_id);
  }
  token_key_ = (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();

  auto replayed = std::make_shared<std::vector<Response>>();
  if (std::filesystem::exists(log_path_)) {
    std::string text = binio::read_text(log_path_);
    const auto last_nl = text.rfind('\n');
    const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
    if (keep != text.size()) {
      std::filesystem::resize_file(log_path_, keep);
      text.resize(keep);
    }
    std::set<std::pair<std::string, std::string>> seen;
    for (auto& r : parse_log(text, log_path_.string())) {
      if (!trial_index_.count(r.trial_id)) throw Error("study log: response for unknown trial " + r.trial_id);
      if (!seen.insert({r.subject_id, r.trial_id}).second) {
        throw Error("study log: duplicate response " + r.subject_id + "/" + r.trial_id);
      }
      replayed->push_back(std::move(r));
    }
  } else if (log_path_.has_parent_path()) {
    std::filesystem::create_directories(log_path_.parent_path());
  }
  responses_ = std::move(replayed);
  log_ = std::fopen(log_path_.c_str(), "ab");
  if (!log_) throw Error("study: cannot open response log " + log_path_.string());
}

StudyService::~StudyService() {
  if (log_) std::fclose(log_);
}

std::string StudyService::create_session(const std::string& subject_id) {
  if (subject_id.empty()) throw Error("study: empty subject id");
  std::lock_guard lock(sessions_mutex_);
  const auto counter = ++session_counter_;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%016llx%04llx",
                static_cast<unsigned long long>(derive_seed(token_key_, subject_id + "#" + std::to_string(counter))),
                static_cast<unsigned long long>(counter & 0xFFFF));
  const std::string token = buf;
  const auto prev = current_session_.find(subject_id);
  if (prev != current_session_.end()) sessions_[prev->second].superseded = true;
  current_session_[subject_id] = token;
  sessions_[token] = Session{subject_id, clock_(), false};
  return token;
}

std::optional<std::string> StudyService::subject_of(const std::string& session) const {
  std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(session);
  if (it == sessions_.end()) return std::nullopt;
  return it->second.subject;
}

Status StudyService::check_session(const std::string& session, std::string& subject) {
  std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(session);
  if (it == sessions_.end()) return Status::unknown_session;
  const auto now = clock_();
  if (it->second.superseded || now - it->second.last_seen > ttl_.count()) return Status::stale_session;
  it->second.last_seen = now;
  subject = it->second.subject;
  return Status::ok;
}

std::shared_ptr<const std::vector<Response>> StudyService::snapshot() const { return std::atomic_load(&responses_); }

Progress StudyService::progress_of(const std::string& subject_id) const {
  const auto snap = snapshot();
  Progress p;
  p.total = trials_.size();
  for (const auto& r : *snap) {
    if (r.subject_id == subject_id) ++p.answered;
  }
  return p;
}

NextResult StudyService::next_trial(const std::string& session) {
  NextResult out;
  std::string subject;
  out.status = check_session(session, subject);
  if (out.status != Status::ok) return out;
  const auto snap = snapshot();
  std::set<std::string> answered;
  for (const auto& r : *snap) {
    if (r.subject_id == subject) answered.insert(r.trial_id);
  }
  out.progress = {answered.size(), trials_.size()};
  for (const auto& t : trials_) {
    if (answered.count(t.trial_id)) continue;
    TrialView v;
    v.trial_id = t.trial_id;
    v.reference = t.trial_id + "-ref";
    for (std::size_t k = 0; k < kCandidates; ++k) v.candidates[k] = t.trial_id + "-" + slot_name(k);
    out.trial = std::move(v);
    break;
  }
  return out;
}

SubmitResult StudyService::submit(const std::string& session, const std::string& trial_id, const std::string& choice,
                                  std::int64_t response_ms) {
  SubmitResult out;
  std::string subject;
  out.status = check_session(session, subject);
  if (out.status != Status::ok) {
    out.message = out.status == Status::stale_session ? "session is stale" : "unknown session";
    return out;
  }
  const auto ti = trial_index_.find(trial_id);
  if (ti == trial_index_.end()) {
    out.status = Status::unknown_trial;
    out.message = "unknown trial " + trial_id;
    return out;
  }
  const Trial& trial = trials_[ti->second];
  const auto slot = slot_index(choice);
  if (!slot) {
    out.status = Status::invalid_choice;
    out.message = "choice must be one of A, B, C";
    return out;
  }
  if (response_ms < 0) {
    out.status = Status::invalid_choice;
    out.message = "response_ms must be non-negative";
    return out;
  }

  std::lock_guard lock(append_mutex_);
  const auto current = snapshot();
  std::size_t answered = 0;
  for (const auto& r : *current) {
    if (r.subject_id != subject) continue;
    ++answered;
    if (r.trial_id == trial_id) {
      out.status = Status::duplicate;
      out.message = "trial " + trial_id + " already answered";
    }
  }
  if (out.status == Status::duplicate) {
    out.progress = {answered, trials_.size()};
    return out;
  }
  Response r;
  r.subject_id = subject;
  r.trial_id = trial_id;
  r.dataset = trial.dataset;
  r.choice = trial.candidates[*slot].system;
  r.response_ms = response_ms;
  r.timestamp_ms = clock_();
  const std::string line = format_response(r) + "\n";
  if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() || std::fflush(log_) != 0 ||
      ::fsync(fileno(log_)) != 0) {
    throw Error("study: failed to append to " + log_path_.string());
  }
  auto next = std::make_shared<std::vector<Response>>(*current);
  next->push_back(std::move(r));
  std::atomic_store(&responses_, std::shared_ptr<const std::vector<Response>>(std::move(next)));
  out.progress = {answered + 1, trials_.size()};
  return out;
}

StudyStats StudyService::stats() const { return compute_stats(*snapshot(), systems()); }

std::vector<std::string> StudyService::systems() const {
  std::set<std::string> s;
  for (const auto& t : trials_) {
    for (const auto& c : t.candidates) s.insert(c.system);
  }
  return {s.begin(), s.end()};
}

std::optional<std::filesystem::path> StudyService::audio_file(const std::string& ref) const {
  const auto dash = ref.rfind('-');
  if (dash == std::string::npos) return std::nullopt;
  const auto ti = trial_index_.find(ref.substr(0, dash));
  if (ti == trial_index_.end()) return std::nullopt;
  const Trial& t = trials_[ti->second];
  const std::string tail = ref.substr(dash + 1);
  std::string rel;
  if (tail == "ref") {
    rel = t.clean_ref;
  } else if (const auto slot = slot_index(tail)) {
    rel = t.candidates[*slot].audio_ref;
  } else {
    return std::nullopt;
  }
  return audio_root_ / rel;
}

}  // namespace stressbench::study
