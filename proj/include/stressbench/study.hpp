#pragma once

// Perceptual study: blinded forced-choice trials (clean reference plus three
// enhanced candidates), an append-only response log, and choice statistics.

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "stressbench/corpus.hpp"

namespace stressbench::study {

constexpr std::size_t kCandidates = 3;

// "A", "B", "C"
std::string slot_name(std::size_t i);
std::optional<std::size_t> slot_index(std::string_view name);

struct Candidate {
  std::string system;
  std::string audio_ref;  // relative to the audio root
};

struct Trial {
  std::string trial_id;
  corpus::Dataset dataset = corpus::Dataset::SYNTH;
  std::string utt_id;
  std::string word_id;
  std::string clean_ref;
  std::array<Candidate, kCandidates> candidates;  // presentation order A, B, C
  std::uint64_t shuffle_seed = 0;
};

struct StudyWord {
  corpus::Dataset dataset = corpus::Dataset::SYNTH;
  std::string utt_id;
  std::string word_id;
};

// Up to per_dataset polysyllabic words from each dataset, seeded choice,
// returned in (dataset, utt_id, word_id) order.
std::vector<StudyWord> select_words(const std::vector<corpus::Utterance>& utterances,
                                    std::size_t per_dataset, std::uint64_t seed);

// Audio layout under audio_root: clean/<utt>.wav and <system>/<utt>.wav.
// Throws naming the first missing file.
std::vector<Trial> build_study(const std::vector<StudyWord>& words, const std::vector<std::string>& systems,
                               const std::filesystem::path& audio_root, std::uint64_t seed);

std::string format_trials(const std::vector<Trial>& trials);
std::vector<Trial> parse_trials(const std::string& json_text, const std::string& name = "trials");
std::vector<Trial> load_trials(const std::filesystem::path& path);

// ---- responses --------------------------------------------------------------

struct Response {
  std::string subject_id;
  std::string trial_id;
  corpus::Dataset dataset = corpus::Dataset::SYNTH;
  std::string choice;  // system label
  std::int64_t response_ms = 0;
  std::int64_t timestamp_ms = 0;  // Unix epoch
  bool operator==(const Response&) const = default;
};

// One JSON object, no trailing newline.
std::string format_response(const Response& r);
Response parse_response(std::string_view line, const std::string& where = "response");
std::vector<Response> parse_log(std::string_view text, const std::string& name = "log");
std::vector<Response> read_log(const std::filesystem::path& path);

// ---- statistics -------------------------------------------------------------

struct SystemStats {
  std::string system;
  std::size_t choices = 0;
  double percent = 0.0;
  std::optional<double> accuracy;  // paired classifier accuracy, percent
};

struct DatasetStats {
  corpus::Dataset dataset = corpus::Dataset::SYNTH;
  std::size_t responses = 0;
  std::vector<SystemStats> systems;  // sorted by label
};

struct StudyStats {
  std::vector<DatasetStats> datasets;  // GER, ITA, SYNTH order
  const DatasetStats* find(corpus::Dataset d) const;
  DatasetStats* find(corpus::Dataset d);
};

// percent = 100 * choices(system, dataset) / responses(dataset). Systems
// named in `systems` appear even with zero choices.
StudyStats compute_stats(const std::vector<Response>& responses, const std::vector<std::string>& systems = {});

// TSV: dataset, system, choices, responses, percent (%.2f), accuracy (%.2f or -).
std::string export_stats_tsv(const StudyStats& s);
StudyStats import_stats_tsv(std::string_view text, const std::string& name = "stats");
std::string stats_json(const StudyStats& s);

// pred/gold per syllable for one system.
using SyllablePredictions = std::map<corpus::SyllableKey, std::pair<int, int>>;

// Syllable accuracy of each system restricted to `subset`. Throws if a
// system lacks a prediction for any subset key.
std::map<std::string, double> paired_accuracy(const std::vector<corpus::SyllableKey>& subset,
                                              const std::map<std::string, SyllablePredictions>& by_system);

// ---- session service --------------------------------------------------------

struct TrialView {
  std::string trial_id;
  std::string reference;                           // audio ref token
  std::array<std::string, kCandidates> candidates;  // audio ref tokens for A, B, C
};

struct Progress {
  std::size_t answered = 0;
  std::size_t total = 0;
};

enum class Status { ok, unknown_session, stale_session, unknown_trial, invalid_choice, duplicate };
std::string_view to_string(Status s);

struct NextResult {
  Status status = Status::ok;
  std::optional<TrialView> trial;  // empty when complete
  Progress progress;
};

struct SubmitResult {
  Status status = Status::ok;
  std::string message;
  Progress progress;
};

using Clock = std::function<std::int64_t()>;  // milliseconds since epoch
std::int64_t system_clock_ms();

class StudyService {
 public:
  // Replays an existing log. A torn final line (no newline) is cut off.
  StudyService(std::vector<Trial> trials, std::filesystem::path log_path, std::filesystem::path audio_root,
               Clock clock = system_clock_ms, std::chrono::milliseconds session_ttl = std::chrono::hours(2));
  ~StudyService();
  StudyService(const StudyService&) = delete;
  StudyService& operator=(const StudyService&) = delete;

  // Any earlier session of the same subject becomes stale.
  std::string create_session(const std::string& subject_id);
  std::optional<std::string> subject_of(const std::string& session) const;
  NextResult next_trial(const std::string& session);
  // choice is the blinded slot letter (A/B/C).
  SubmitResult submit(const std::string& session, const std::string& trial_id, const std::string& choice,
                      std::int64_t response_ms);

  std::shared_ptr<const std::vector<Response>> snapshot() const;
  StudyStats stats() const;
  Progress progress_of(const std::string& subject_id) const;

  // Maps "<trial_id>-ref" / "<trial_id>-A" to a file below the audio root.
  std::optional<std::filesystem::path> audio_file(const std::string& ref) const;
  const std::vector<Trial>& trials() const { return trials_; }
  std::vector<std::string> systems() const;

 private:
  struct Session {
    std::string subject;
    std::int64_t last_seen = 0;
    bool superseded = false;
  };
  Status check_session(const std::string& session, std::string& subject);

  std::vector<Trial> trials_;
  std::map<std::string, std::size_t> trial_index_;
  std::filesystem::path log_path_;
  std::filesystem::path audio_root_;
  Clock clock_;
  std::chrono::milliseconds ttl_;
  std::uint64_t token_key_;

  mutable std::mutex sessions_mutex_;
  std::map<std::string, Session> sessions_;
  std::map<std::string, std::string> current_session_;  // subject -> token
  std::uint64_t session_counter_ = 0;

  std::mutex append_mutex_;  // single appender
  std::FILE* log_ = nullptr;
  std::shared_ptr<const std::vector<Response>> responses_;
};

}  // namespace stressbench::study
