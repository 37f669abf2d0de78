#pragma once

// Cross-validation driver, one-stress-per-word post-processing, accuracy and
// tabular reporting.
//
// Rows of the feature table that appear in the folds file form the
// cross-validation set; rows absent from it form the held-out test set. Each
// fold's best-validation model scores the test set and the fold means are
// reported. Without test rows the cross-validation accuracy is reported.

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stressbench/corpus.hpp"
#include "stressbench/featfile.hpp"
#include "stressbench/model.hpp"

namespace stressbench::eval {

// Argmax is stressed, everything else unstressed; ties go to the earliest.
std::vector<int> postprocess(std::span<const double> probs);

// Percent of equal entries.
double accuracy(std::span<const int> predicted, std::span<const int> gold);

double mean(std::span<const double> values);

inline int threshold(double p) { return p >= 0.5 ? 1 : 0; }

struct Prediction {
  corpus::SyllableKey key;
  int fold = 0;
  bool test = false;  // held-out row scored by this fold's model
  int gold = 0;
  double prob = 0.0;
  int raw = 0;   // threshold 0.5
  int post = 0;  // after post-processing
};

// Fills raw and post. Words are grouped by (fold, test, word key); syllables
// are ordered by index inside each word.
void label_predictions(std::vector<Prediction>& preds);

struct FoldResult {
  int fold = 0;
  std::size_t train_rows = 0;
  std::size_t val_rows = 0;
  std::size_t test_rows = 0;
  int best_epoch = 0;
  double cv_post = 0.0;
  double cv_raw = 0.0;
  double test_post = 0.0;
  double test_raw = 0.0;
};

struct EvalRun {
  std::string condition = "clean";   // clean | noisy@<snr> | <enhancer>@<snr>
  std::string feature_type;          // heuristic | ssl | custom
  std::vector<FoldResult> folds;
  double cv_post = 0.0;
  double cv_raw = 0.0;
  double test_post = 0.0;
  double test_raw = 0.0;
  bool has_test = false;
  std::vector<Prediction> predictions;

  std::string reported_set() const { return has_test ? "test" : "cv"; }
  double reported_post() const { return has_test ? test_post : cv_post; }
  double reported_raw() const { return has_test ? test_raw : cv_raw; }
};

struct RunOptions {
  std::string condition = "clean";
  std::string feature_type;  // empty: inferred from the table's layout hash
  model::TrainConfig config;
  // Called with each fold's training keys before training (leakage audits).
  std::function<void(int fold, const std::vector<corpus::SyllableKey>& training)> on_training_keys;
};

std::string infer_feature_type(const features::FeatureTable& table);

EvalRun run_cv(const features::FeatureTable& table, const corpus::FoldAssignment& folds,
               const RunOptions& options);

// run.json + predictions.tsv
std::string format_run_json(const EvalRun& run);
EvalRun parse_run_json(const std::string& text, const std::string& name = "run.json");
std::string format_predictions(const std::vector<Prediction>& preds);
std::vector<Prediction> parse_predictions(std::string_view text, const std::string& name = "predictions");
void save_run(const EvalRun& run, const std::filesystem::path& dir);
EvalRun load_run(const std::filesystem::path& dir);
// Every directory below root holding a run.json, sorted by path.
std::vector<EvalRun> load_runs(const std::filesystem::path& root);

// ---- report -----------------------------------------------------------------

struct Cell {
  double post = 0.0;
  double raw = 0.0;
  bool operator==(const Cell&) const = default;
};

// "92.65 (89.3)": values rounded to two decimals, shortest form.
std::string format_cell(const Cell& c);
Cell parse_cell(std::string_view s);

struct ReportRow {
  std::string condition;  // clean, noisy, or the enhancer name
  std::string feature_type;
  std::string set;  // test | cv
  std::map<std::string, Cell> cells;  // column -> cell
  bool operator==(const ReportRow&) const = default;
};

struct Report {
  std::vector<std::string> columns;  // "clean" then SNRs ascending
  std::vector<ReportRow> rows;
  bool operator==(const Report&) const = default;
};

Report make_report(const std::vector<EvalRun>& runs);
std::string format_report_tsv(const Report& r);
Report parse_report_tsv(std::string_view text, const std::string& name = "report");
std::string format_report_text(const Report& r);

}  // namespace stressbench::eval
