#include "stressbench/evalharness.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "stressbench/binio.hpp"
#include "stressbench/parallel.hpp"
#include "stressbench/prosody.hpp"
#include "stressbench/rng.hpp"
#include "stressbench/sslfeat.hpp"

namespace stressbench::eval {

std::vector<int> postprocess(std::span<const double> probs) {
  if (probs.empty()) throw Error("postprocess: empty word");
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  std::vector<int> out(probs.size(), 0);
  out[best] = 1;
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> gold) {
  if (predicted.size() != gold.size()) {
    throw Error("accuracy: length mismatch (" + std::to_string(predicted.size()) + " vs " +
                std::to_string(gold.size()) + ")");
  }
  if (predicted.empty()) throw Error("accuracy: no predictions");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i] == gold[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(gold.size());
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

void label_predictions(std::vector<Prediction>& preds) {
  using Group = std::tuple<int, bool, corpus::WordKey>;
  std::map<Group, std::vector<std::size_t>> words;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    preds[i].raw = threshold(preds[i].prob);
    words[{preds[i].fold, preds[i].test, preds[i].key.word()}].push_back(i);
  }
  std::vector<double> probs;
  for (auto& [g, idx] : words) {
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return preds[a].key.syll_idx < preds[b].key.syll_idx; });
    probs.clear();
    for (auto i : idx) probs.push_back(preds[i].prob);
    const auto labels = postprocess(probs);
    for (std::size_t j = 0; j < idx.size(); ++j) preds[idx[j]].post = labels[j];
  }
}

std::string infer_feature_type(const features::FeatureTable& table) {
  if (table.dim == prosody::kHeuristicDim &&
      table.layout_hash == features::layout_hash(prosody::heuristic_columns())) {
    return "heuristic";
  }
  if (table.layout_hash == features::layout_hash(ssl::ssl_columns(table.dim))) return "ssl";
  return "custom";
}

namespace {

struct Accs {
  double post = 0.0;
  double raw = 0.0;
};

Accs accuracies(const std::vector<Prediction>& preds, int fold, bool test) {
  std::vector<int> post, raw, gold;
  for (const auto& p : preds) {
    if (p.fold != fold || p.test != test) continue;
    post.push_back(p.post);
    raw.push_back(p.raw);
    gold.push_back(p.gold);
  }
  if (gold.empty()) return {};
  return {accuracy(post, gold), accuracy(raw, gold)};
}

}  // namespace

EvalRun run_cv(const features::FeatureTable& table, const corpus::FoldAssignment& folds,
               const RunOptions& options) {
  options.config.validate();
  const int k = folds.k;
  if (k < 2) throw Error("evaluate: need at least two folds");

  std::map<corpus::SyllableKey, std::size_t> row_of;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    if (!row_of.emplace(table.rows[i].key, i).second) {
      throw Error("evaluate: duplicate feature row " + corpus::to_string(table.rows[i].key));
    }
  }
  std::vector<int> fold_of_row(table.rows.size(), -1);
  for (const auto& [key, fold] : folds.fold_of_syllable) {
    const auto it = row_of.find(key);
    if (it == row_of.end()) throw Error("evaluate: key mismatch, fold entry " + corpus::to_string(key) + " has no feature row");
    if (fold < 0 || fold >= k) throw Error("evaluate: fold index out of range for " + corpus::to_string(key));
    fold_of_row[it->second] = fold;
  }

  std::vector<std::size_t> test_rows;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    if (fold_of_row[i] < 0) test_rows.push_back(i);
  }

  struct Slot {
    FoldResult result;
    std::vector<Prediction> preds;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(k));
  parallel_for(slots.size(), [&](std::size_t fi) {
    const int fold = static_cast<int>(fi);
    model::Dataset train, val;
    std::vector<corpus::SyllableKey> train_keys;
    std::vector<std::size_t> val_rows;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      if (fold_of_row[i] < 0) continue;
      const auto& r = table.rows[i];
      if (fold_of_row[i] == fold) {
        val.x.push_back(r.values);
        val.y.push_back(r.label);
        val_rows.push_back(i);
      } else {
        train.x.push_back(r.values);
        train.y.push_back(r.label);
        train_keys.push_back(r.key);
      }
    }
    if (train.size() == 0 || val.size() == 0) throw Error("evaluate: fold " + std::to_string(fold) + " is empty");
    if (options.on_training_keys) options.on_training_keys(fold, train_keys);

    model::TrainConfig cfg = options.config;
    cfg.seed = derive_seed(options.config.seed, "fold" + std::to_string(fold));
    const auto fitted = model::fit(train, val, cfg);

    auto& slot = slots[fi];
    slot.result.fold = fold;
    slot.result.train_rows = train.size();
    slot.result.val_rows = val.size();
    slot.result.test_rows = test_rows.size();
    slot.result.best_epoch = fitted.best_epoch;
    auto score = [&](std::size_t i, bool test) {
      Prediction p;
      p.key = table.rows[i].key;
      p.fold = fold;
      p.test = test;
      p.gold = table.rows[i].label;
      p.prob = model::predict_one(fitted.model, table.rows[i].values);
      slot.preds.push_back(std::move(p));
    };
    for (auto i : val_rows) score(i, false);
    for (auto i : test_rows) score(i, true);
  });

  EvalRun run;
  run.condition = options.condition;
  run.feature_type = options.feature_type.empty() ? infer_feature_type(table) : options.feature_type;
  run.has_test = !test_rows.empty();
  for (auto& s : slots) {
    for (auto& p : s.preds) run.predictions.push_back(std::move(p));
  }
  label_predictions(run.predictions);
  std::vector<double> cvp, cvr, tp, tr;
  for (auto& s : slots) {
    const Accs cv = accuracies(run.predictions, s.result.fold, false);
    s.result.cv_post = cv.post;
    s.result.cv_raw = cv.raw;
    if (run.has_test) {
      const Accs t = accuracies(run.predictions, s.result.fold, true);
      s.result.test_post = t.post;
      s.result.test_raw = t.raw;
    }
    cvp.push_back(s.result.cv_post);
    cvr.push_back(s.result.cv_raw);
    tp.push_back(s.result.test_post);
    tr.push_back(s.result.test_raw);
    run.folds.push_back(s.result);
  }
  run.cv_post = mean(cvp);
  run.cv_raw = mean(cvr);
  if (run.has_test) {
    run.test_post = mean(tp);
    run.test_raw = mean(tr);
  }
  return run;
}

// ---- persistence ------------------------------------------------------------

std::string format_run_json(const EvalRun& run) {
  nlohmann::ordered_json j;
  j["condition"] = run.condition;
  j["feature_type"] = run.feature_type;
  j["reported_set"] = run.reported_set();
  j["accuracy"] = {{"post", run.reported_post()}, {"raw", run.reported_raw()}};
  j["cv"] = {{"post", run.cv_post}, {"raw", run.cv_raw}};
  if (run.has_test) {
    j["test"] = {{"post", run.test_post}, {"raw", run.test_raw}};
  } else {
    j["test"] = nullptr;
  }
  auto& fj = j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : run.folds) {
    nlohmann::ordered_json o;
    o["fold"] = f.fold;
    o["train_rows"] = f.train_rows;
    o["val_rows"] = f.val_rows;
    o["test_rows"] = f.test_rows;
    o["best_epoch"] = f.best_epoch;
    o["cv_post"] = f.cv_post;
    o["cv_raw"] = f.cv_raw;
    o["test_post"] = f.test_post;
    o["test_raw"] = f.test_raw;
    fj.push_back(o);
  }
  return j.dump(2) + "\n";
}

EvalRun parse_run_json(const std::string& text, const std::string& name) {
  EvalRun run;
  try {
    const auto j = nlohmann::json::parse(text);
    run.condition = j.at("condition").get<std::string>();
    run.feature_type = j.at("feature_type").get<std::string>();
    run.cv_post = j.at("cv").at("post").get<double>();
    run.cv_raw = j.at("cv").at("raw").get<double>();
    run.has_test = !j.at("test").is_null();
    if (run.has_test) {
      run.test_post = j.at("test").at("post").get<double>();
      run.test_raw = j.at("test").at("raw").get<double>();
    }
    for (const auto& o : j.at("folds")) {
      FoldResult f;
      f.fold = o.at("fold").get<int>();
      f.train_rows = o.at("train_rows").get<std::size_t>();
      f.val_rows = o.at("val_rows").get<std::size_t>();
      f.test_rows = o.at("test_rows").get<std::size_t>();
      f.best_epoch = o.at("best_epoch").get<int>();
      f.cv_post = o.at("cv_post").get<double>();
      f.cv_raw = o.at("cv_raw").get<double>();
      f.test_post = o.at("test_post").get<double>();
      f.test_raw = o.at("test_raw").get<double>();
      run.folds.push_back(f);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(name + ": " + e.what());
  }
  return run;
}

std::string format_predictions(const std::vector<Prediction>& preds) {
  std::string out = "utt_id\tword_id\tsyll_idx\tfold\tset\tgold\tprob\traw\tpost\n";
  for (const auto& p : preds) {
    out += p.key.utt_id + '\t' + p.key.word_id + '\t' + std::to_string(p.key.syll_idx) + '\t' +
           std::to_string(p.fold) + '\t' + (p.test ? "test" : "cv") + '\t' + std::to_string(p.gold) + '\t' +
           binio::format_double(p.prob) + '\t' + std::to_string(p.raw) + '\t' + std::to_string(p.post) + '\n';
  }
  return out;
}

std::vector<Prediction> parse_predictions(std::string_view text, const std::string& name) {
  std::vector<Prediction> out;
  std::size_t lineno = 0;
  for (const auto& line : binio::split(text, '\n')) {
    ++lineno;
    if (line.empty() || line.starts_with("utt_id\t") || line[0] == '#') continue;
    const auto f = binio::split(line, '\t');
    const std::string where = name + ":" + std::to_string(lineno);
    if (f.size() != 9) throw Error(where + ": expected 9 columns");
    Prediction p;
    p.key = {f[0], f[1], static_cast<int>(binio::parse_int(f[2], where + " syll_idx"))};
    p.fold = static_cast<int>(binio::parse_int(f[3], where + " fold"));
    if (f[4] != "test" && f[4] != "cv") throw Error(where + ": set must be test or cv");
    p.test = f[4] == "test";
    p.gold = static_cast<int>(binio::parse_int(f[5], where + " gold"));
    p.prob = binio::parse_double(f[6], where + " prob");
    p.raw = static_cast<int>(binio::parse_int(f[7], where + " raw"));
    p.post = static_cast<int>(binio::parse_int(f[8], where + " post"));
    out.push_back(std::move(p));
  }
  return out;
}

void save_run(const EvalRun& run, const std::filesystem::path& dir) {
  binio::write_text(dir / "run.json", format_run_json(run));
  binio::write_text(dir / "predictions.tsv", format_predictions(run.predictions));
}

EvalRun load_run(const std::filesystem::path& dir) {
  const auto json_path = dir / "run.json";
  EvalRun run = parse_run_json(binio::read_text(json_path), json_path.string());
  const auto pred_path = dir / "predictions.tsv";
  if (std::filesystem::exists(pred_path)) {
    run.predictions = parse_predictions(binio::read_text(pred_path), pred_path.string());
  }
  return run;
}

std::vector<EvalRun> load_runs(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw Error("runs directory not found: " + root.string());
  std::vector<std::filesystem::path> dirs;
  if (std::filesystem::exists(root / "run.json")) dirs.push_back(root);
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_directory() && std::filesystem::exists(e.path() / "run.json")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<EvalRun> runs;
  for (const auto& d : dirs) runs.push_back(load_run(d));
  return runs;
}

// ---- report -----------------------------------------------------------------

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

// "noisy@5" -> {"noisy", "5"}; "clean" -> {"clean", "clean"}.
std::pair<std::string, std::string> split_condition(const std::string& c) {
  const auto at = c.find('@');
  if (at == std::string::npos) return {c, "clean"};
  return {c.substr(0, at), c.substr(at + 1)};
}

bool column_less(const std::string& a, const std::string& b) {
  if (a == b) return false;
  if (a == "clean") return true;
  if (b == "clean") return false;
  try {
    const double x = binio::parse_double(a, "snr"), y = binio::parse_double(b, "snr");
    if (x != y) return x < y;
  } catch (const Error&) {
  }
  return a < b;
}

int row_rank(const std::string& condition) {
  if (condition == "clean") return 0;
  if (condition == "noisy") return 1;
  return 2;
}

}  // namespace

std::string format_cell(const Cell& c) {
  return binio::format_double(round2(c.post)) + " (" + binio::format_double(round2(c.raw)) + ")";
}

Cell parse_cell(std::string_view s) {
  const auto open = s.find(" (");
  if (open == std::string_view::npos || s.empty() || s.back() != ')') {
    throw Error("report: malformed cell '" + std::string(s) + "'");
  }
  Cell c;
  c.post = binio::parse_double(s.substr(0, open), "cell");
  c.raw = binio::parse_double(s.substr(open + 2, s.size() - open - 3), "cell");
  return c;
}

Report make_report(const std::vector<EvalRun>& runs) {
  Report rep;
  std::set<std::string> columns;
  for (const auto& run : runs) {
    const auto [cond, col] = split_condition(run.condition);
    columns.insert(col);
    auto it = std::find_if(rep.rows.begin(), rep.rows.end(), [&](const ReportRow& r) {
      return r.condition == cond && r.feature_type == run.feature_type && r.set == run.reported_set();
    });
    if (it == rep.rows.end()) {
      rep.rows.push_back({cond, run.feature_type, run.reported_set(), {}});
      it = rep.rows.end() - 1;
    }
    it->cells[col] = Cell{round2(run.reported_post()), round2(run.reported_raw())};
  }
  rep.columns.assign(columns.begin(), columns.end());
  std::sort(rep.columns.begin(), rep.columns.end(), column_less);
  std::stable_sort(rep.rows.begin(), rep.rows.end(), [](const ReportRow& a, const ReportRow& b) {
    if (a.feature_type != b.feature_type) return a.feature_type < b.feature_type;
    if (row_rank(a.condition) != row_rank(b.condition)) return row_rank(a.condition) < row_rank(b.condition);
    if (a.condition != b.condition) return a.condition < b.condition;
    return a.set < b.set;
  });
  return rep;
}

std::string format_report_tsv(const Report& r) {
  std::string out = "condition\tfeatures\tset";
  for (const auto& c : r.columns) out += '\t' + c;
  out += '\n';
  for (const auto& row : r.rows) {
    out += row.condition + '\t' + row.feature_type + '\t' + row.set;
    for (const auto& c : r.columns) {
      const auto it = row.cells.find(c);
      out += '\t';
      out += it == row.cells.end() ? std::string("-") : format_cell(it->second);
    }
    out += '\n';
  }
  return out;
}

Report parse_report_tsv(std::string_view text, const std::string& name) {
  Report rep;
  const auto lines = binio::split(text, '\n');
  bool header = false;
  std::size_t lineno = 0;
  for (const auto& line : lines) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = binio::split(line, '\t');
    if (!header) {
      if (f.size() < 3 || f[0] != "condition" || f[1] != "features" || f[2] != "set") {
        throw Error(name + ": missing report header");
      }
      rep.columns.assign(f.begin() + 3, f.end());
      header = true;
      continue;
    }
    if (f.size() != rep.columns.size() + 3) throw Error(name + ":" + std::to_string(lineno) + ": column count");
    ReportRow row{f[0], f[1], f[2], {}};
    for (std::size_t i = 0; i < rep.columns.size(); ++i) {
      if (f[i + 3] != "-") row.cells[rep.columns[i]] = parse_cell(f[i + 3]);
    }
    rep.rows.push_back(std::move(row));
  }
  if (!header) throw Error(name + ": missing report header");
  return rep;
}

std::string format_report_text(const Report& r) {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> head{"condition", "features", "set"};
  for (const auto& c : r.columns) head.push_back(c == "clean" ? c : c + " dB");
  grid.push_back(head);
  for (const auto& row : r.rows) {
    std::vector<std::string> line{row.condition, row.feature_type, row.set};
    for (const auto& c : r.columns) {
      const auto it = row.cells.find(c);
      line.push_back(it == row.cells.end() ? "-" : format_cell(it->second));
    }
    grid.push_back(std::move(line));
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& line : grid) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::ostringstream os;
  for (const auto& line : grid) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i) os << "  ";
      os << std::left << std::setw(static_cast<int>(width[i])) << line[i];
    }
    os << '\n';
  }
  // Trailing spaces from the last column are noise.
  std::string out;
  for (const auto& l : binio::split(os.str(), '\n')) {
    if (l.empty()) continue;
    out += l.substr(0, l.find_last_not_of(' ') + 1) + '\n';
  }
  return out;
}

}  // namespace stressbench::eval
