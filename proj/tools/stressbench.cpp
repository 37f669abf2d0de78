// stressbench command line: corpus synthesis, noise mixing, enhancement,
// feature extraction, cross-validated training/evaluation, reporting and the
// perceptual-study service.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>

#include "stressbench/binio.hpp"
#include "stressbench/corpus.hpp"
#include "stressbench/degrade.hpp"
#include "stressbench/enhance.hpp"
#include "stressbench/evalharness.hpp"
#include "stressbench/featfile.hpp"
#include "stressbench/kernels.hpp"
#include "stressbench/model.hpp"
#include "stressbench/prosody.hpp"
#include "stressbench/rng.hpp"
#include "stressbench/sslfeat.hpp"
#include "stressbench/study.hpp"
#include "stressbench/study_server.hpp"

namespace fs = std::filesystem;
using namespace stressbench;

namespace {

void report_failures(const std::vector<std::string>& failures) {
  for (const auto& f : failures) std::cerr << "warning: " << f << '\n';
}

std::vector<corpus::Utterance> load_corpus(const fs::path& path) {
  auto parsed = corpus::parse_alignments(path);
  for (const auto& r : parsed.rejected) {
    std::cerr << "warning: " << path.string() << ":" << r.line << ": rejected " << r.word.utt_id << "/"
              << r.word.word_id << ": " << r.message << '\n';
  }
  return corpus::filter_polysyllabic(std::move(parsed.utterances));
}

model::TrainConfig config_or_default(const std::string& path) {
  return path.empty() ? model::TrainConfig{} : model::load_config(path);
}

// ---- subcommands ------------------------------------------------------------

struct SynthArgs {
  corpus::SynthSpec spec;
  std::uint64_t seed = 1;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  const auto c = corpus::synth_corpus(a.spec, a.seed);
  corpus::write_synth_corpus(c, a.out);
  std::cout << "wrote " << c.utterances.size() << " utterances to " << a.out << '\n';
  return 0;
}

struct MixArgs {
  std::string in, out;
  std::vector<double> snrs = degrade::kDefaultSnrs;
  std::uint64_t seed = 1;
};

int run_mix(const MixArgs& a) {
  const auto r = degrade::batch_degrade(a.in, a.out, a.snrs, a.seed);
  report_failures(r.failures);
  std::cout << "mixed " << r.rows.size() << " files (" << r.failures.size() << " failures)\n";
  return r.failures.empty() ? 0 : 2;
}

struct EnhanceArgs {
  std::string in, out, method = "wiener", name;
  double alpha = 2.0, beta = 0.02, smoothing = 0.98, head_ms = 200.0;
};

int run_enhance(const EnhanceArgs& a) {
  enhance::Enhancer e;
  if (a.method == "spectral_sub") {
    e.kind = enhance::EnhancerKind::spectral_subtraction;
    e.params = enhance::SpectralSubtractionParams{a.alpha, a.beta};
  } else if (a.method == "wiener") {
    e.kind = enhance::EnhancerKind::wiener;
    e.params = enhance::WienerParams{a.smoothing};
  } else {
    throw Error("unknown method '" + a.method + "' (spectral_sub|wiener)");
  }
  e.name = a.name.empty() ? a.method : a.name;
  const auto r = enhance::enhance_directory(e, a.in, a.out, a.head_ms);
  report_failures(r.failures);
  std::cout << "enhanced " << r.processed << " files (" << r.failures.size() << " failures)\n";
  return r.failures.empty() ? 0 : 2;
}

struct ImportArgs {
  std::string dir, manifest, label;
  double tolerance = enhance::kDurationTolerance;
};

int run_import(const ImportArgs& a) {
  const auto manifest = corpus::parse_manifest(binio::read_text(a.manifest), a.manifest);
  const auto h = enhance::import_enhanced(a.dir, manifest, a.label, a.tolerance);
  std::cout << h.summary() << '\n';
  return h.ok() ? 0 : 2;
}

struct ExtractArgs {
  std::string corpus, audio, type = "heuristic", frames_dir, out;
};

int run_extract(const ExtractArgs& a) {
  const auto utts = load_corpus(a.corpus);
  features::FeatureTable table;
  std::vector<std::string> failures;
  if (a.type == "heuristic") {
    if (a.audio.empty()) throw Error("--audio is required for heuristic features");
    auto r = prosody::feature_table(utts, prosody::directory_loader(a.audio));
    table = std::move(r.table);
    failures = std::move(r.failures);
  } else if (a.type == "ssl") {
    if (a.frames_dir.empty()) throw Error("--frames-dir is required for ssl features");
    auto r = ssl::feature_table(utts, a.frames_dir);
    table = std::move(r.table);
    failures = std::move(r.failures);
  } else {
    throw Error("unknown feature type '" + a.type + "' (heuristic|ssl)");
  }
  report_failures(failures);
  features::write_table(table, a.out);
  std::cout << "wrote " << table.rows.size() << " rows x " << table.dim << " to " << a.out << '\n';
  return 0;
}

struct FoldArgs {
  std::string corpus, features, split, out;
  int k = 5;
  std::uint64_t seed = 1;
};

int run_folds(const FoldArgs& a) {
  std::vector<corpus::LabeledSyllable> rows;
  if (!a.features.empty()) {
    for (const auto& r : features::read_table(a.features).rows) rows.push_back({r.key, r.label});
  } else {
    rows = corpus::syllable_table(load_corpus(a.corpus));
  }
  if (!a.split.empty()) {
    const auto split = corpus::parse_split(binio::read_text(a.split), a.split);
    std::erase_if(rows, [&](const corpus::LabeledSyllable& s) {
      const auto it = split.find(s.key.utt_id);
      return it != split.end() && it->second == "test";
    });
  }
  const auto folds = corpus::make_folds(rows, a.k, a.seed);
  binio::write_text(a.out, corpus::format_folds(folds));
  const auto stats = corpus::fold_stats(folds, rows);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    std::printf("fold %zu: %zu words, %zu syllables, stressed %.4f\n", i, stats[i].words, stats[i].syllables,
                stats[i].stressed_fraction());
  }
  return 0;
}

struct TrainArgs {
  std::string features, folds, config, out;
  int fold = -1;
};

int run_train(const TrainArgs& a) {
  const auto table = features::read_table(a.features);
  const auto folds = corpus::parse_folds(binio::read_text(a.folds), a.folds);
  const auto config = config_or_default(a.config);
  std::map<corpus::SyllableKey, const features::FeatureRow*> by_key;
  for (const auto& r : table.rows) by_key[r.key] = &r;
  for (const auto& [key, f] : folds.fold_of_syllable) {
    if (!by_key.count(key)) throw Error("key mismatch: fold entry " + corpus::to_string(key) + " has no feature row");
  }
  fs::create_directories(a.out);
  binio::write_text(fs::path(a.out) / "config.json", model::format_config(config));
  std::string history = "fold\tepoch\tloss\tbce\tmse\tkl\tval_accuracy\tval_bce\n";
  for (int fold = 0; fold < folds.k; ++fold) {
    if (a.fold >= 0 && fold != a.fold) continue;
    model::Dataset train, val;
    for (const auto& [key, f] : folds.fold_of_syllable) {
      const auto* r = by_key[key];
      auto& d = f == fold ? val : train;
      d.x.push_back(r->values);
      d.y.push_back(r->label);
    }
    model::TrainConfig cfg = config;
    cfg.seed = derive_seed(config.seed, "fold" + std::to_string(fold));
    const auto fitted = model::fit(train, val, cfg);
    model::save(fitted.model, fs::path(a.out) / ("fold" + std::to_string(fold) + ".sbck"));
    for (const auto& h : fitted.history) {
      history += std::to_string(fold) + '\t' + std::to_string(h.epoch) + '\t' + binio::format_double(h.train.total) +
                 '\t' + binio::format_double(h.train.bce) + '\t' + binio::format_double(h.train.mse) + '\t' +
                 binio::format_double(h.train.kl) + '\t' + binio::format_double(h.val_accuracy) + '\t' +
                 binio::format_double(h.val_bce) + '\n';
    }
    std::printf("fold %d: best epoch %d, validation accuracy %.2f\n", fold, fitted.best_epoch, fitted.best_val_accuracy);
  }
  binio::write_text(fs::path(a.out) / "history.tsv", history);
  return 0;
}

struct EvalArgs {
  std::string features, folds, config, out, condition = "clean", feature_type;
};

int run_evaluate(const EvalArgs& a) {
  const auto table = features::read_table(a.features);
  const auto folds = corpus::parse_folds(binio::read_text(a.folds), a.folds);
  eval::RunOptions opt;
  opt.condition = a.condition;
  opt.feature_type = a.feature_type;
  opt.config = config_or_default(a.config);
  const auto run = eval::run_cv(table, folds, opt);
  eval::save_run(run, a.out);
  std::printf("%s %s: cv %.2f (%.2f)", run.condition.c_str(), run.feature_type.c_str(), run.cv_post, run.cv_raw);
  if (run.has_test) std::printf(", test %.2f (%.2f)", run.test_post, run.test_raw);
  std::printf("\n");
  return 0;
}

struct ReportArgs {
  std::string runs, out;
};

int run_report(const ReportArgs& a) {
  const auto rep = eval::make_report(eval::load_runs(a.runs));
  const fs::path out(a.out);
  binio::write_text(out, eval::format_report_tsv(rep));
  auto txt = out;
  txt.replace_extension(".txt");
  const auto text = eval::format_report_text(rep);
  binio::write_text(txt, text);
  std::cout << text;
  return 0;
}

struct StudyBuildArgs {
  std::string corpus, audio_root, out;
  std::vector<std::string> systems;
  std::size_t per_dataset = 25;
  std::uint64_t seed = 1;
};

int run_study_build(const StudyBuildArgs& a) {
  const auto words = study::select_words(load_corpus(a.corpus), a.per_dataset, a.seed);
  const auto trials = study::build_study(words, a.systems, a.audio_root, a.seed);
  binio::write_text(a.out, study::format_trials(trials));
  std::cout << "wrote " << trials.size() << " trials to " << a.out << '\n';
  return 0;
}

struct ServeArgs {
  std::string trials, audio, log = "responses.jsonl", host = "127.0.0.1", static_dir;
  int port = 8080;
};

study::HttpServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

int run_serve(const ServeArgs& a) {
  study::StudyService service(study::load_trials(a.trials), a.log, a.audio);
  std::optional<fs::path> static_dir;
  if (!a.static_dir.empty()) static_dir = a.static_dir;
  study::HttpServer server(service, static_dir);
  const int port = server.bind(a.host, a.port);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "listening on http://" << a.host << ":" << port << std::endl;
  server.serve();
  g_server = nullptr;
  return 0;
}

struct StatsArgs {
  std::string log, trials, out;
  std::vector<std::string> predictions;  // system=path/to/predictions.tsv
};

// One post-processed label per syllable: cross-validation rows when present,
// otherwise the fold-0 test prediction.
study::SyllablePredictions load_predictions(const fs::path& path) {
  study::SyllablePredictions cv, test;
  for (const auto& p : eval::parse_predictions(binio::read_text(path), path.string())) {
    if (!p.test) cv[p.key] = {p.post, p.gold};
    else if (p.fold == 0) test[p.key] = {p.post, p.gold};
  }
  for (auto& [k, v] : test) cv.emplace(k, v);
  return cv;
}

int run_study_stats(const StatsArgs& a) {
  const auto responses = study::read_log(a.log);
  std::vector<study::Trial> trials;
  std::vector<std::string> systems;
  if (!a.trials.empty()) {
    trials = study::load_trials(a.trials);
    std::set<std::string> s;
    for (const auto& t : trials) {
      for (const auto& c : t.candidates) s.insert(c.system);
    }
    systems.assign(s.begin(), s.end());
  }
  auto stats = study::compute_stats(responses, systems);
  if (!a.predictions.empty()) {
    if (trials.empty()) throw Error("--predictions needs --trials to know the study words");
    std::map<std::string, study::SyllablePredictions> by_system;
    for (const auto& spec : a.predictions) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) throw Error("--predictions expects SYSTEM=FILE, got '" + spec + "'");
      by_system[spec.substr(0, eq)] = load_predictions(spec.substr(eq + 1));
    }
    for (auto& d : stats.datasets) {
      std::set<corpus::WordKey> words;
      for (const auto& t : trials) {
        if (t.dataset == d.dataset) words.insert({t.utt_id, t.word_id});
      }
      std::set<corpus::SyllableKey> subset;
      for (const auto& [sys, preds] : by_system) {
        for (const auto& [key, pg] : preds) {
          if (words.count(key.word())) subset.insert(key);
        }
      }
      if (subset.empty()) continue;
      const auto acc = study::paired_accuracy({subset.begin(), subset.end()}, by_system);
      for (auto& s : d.systems) {
        const auto it = acc.find(s.system);
        if (it != acc.end()) s.accuracy = it->second;
      }
    }
  }
  const auto tsv = study::export_stats_tsv(stats);
  if (!a.out.empty()) binio::write_text(a.out, tsv);
  std::cout << tsv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Syllable-stress benchmark under noise and speech enhancement"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "stressbench 0.1.0");
  bool show_kernels = false;
  app.add_flag("--kernels", show_kernels, "Print the selected SIMD kernel table to stderr");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth-corpus", "Generate a synthetic stress-annotated corpus");
  c_synth->add_option("--words", synth.spec.words, "Number of words")->check(CLI::PositiveNumber);
  c_synth->add_option("--delta", synth.spec.delta, "Stressed-syllable prominence")->check(CLI::NonNegativeNumber);
  c_synth->add_option("--variability", synth.spec.variability, "Per-syllable random spread")->check(CLI::NonNegativeNumber);
  c_synth->add_option("--min-syllables", synth.spec.min_syllables, "Fewest syllables per word");
  c_synth->add_option("--max-syllables", synth.spec.max_syllables, "Most syllables per word");
  c_synth->add_option("--test-words", synth.spec.test_words, "Words marked as held-out test");
  c_synth->add_option("--seed", synth.seed, "Random seed");
  c_synth->add_option("--out", synth.out, "Output directory")->required();

  MixArgs mix;
  auto* c_mix = app.add_subcommand("mix-noise", "Add white Gaussian noise at target SNRs");
  c_mix->add_option("--in", mix.in, "Directory of clean WAVs")->required();
  c_mix->add_option("--out", mix.out, "Output directory")->required();
  c_mix->add_option("--snr", mix.snrs, "Target SNRs in dB")->delimiter(',');
  c_mix->add_option("--seed", mix.seed, "Master seed");

  EnhanceArgs enh;
  auto* c_enh = app.add_subcommand("enhance", "Run a classical enhancer over a directory");
  c_enh->add_option("--in", enh.in, "Directory of noisy WAVs")->required();
  c_enh->add_option("--out", enh.out, "Output directory")->required();
  c_enh->add_option("--method", enh.method, "spectral_sub or wiener")->check(CLI::IsMember({"spectral_sub", "wiener"}));
  c_enh->add_option("--alpha", enh.alpha, "Over-subtraction factor");
  c_enh->add_option("--beta", enh.beta, "Spectral floor");
  c_enh->add_option("--smoothing", enh.smoothing, "Decision-directed smoothing");
  c_enh->add_option("--head-ms", enh.head_ms, "Leading noise-only span used for the noise estimate");
  c_enh->add_option("--name", enh.name, "Label for the enhancer");

  ImportArgs imp;
  auto* c_imp = app.add_subcommand("import-enhanced", "Validate externally enhanced audio against a manifest");
  c_imp->add_option("--dir", imp.dir, "Directory of enhanced WAVs")->required();
  c_imp->add_option("--manifest", imp.manifest, "Corpus manifest.tsv")->required();
  c_imp->add_option("--label", imp.label, "System label")->required();
  c_imp->add_option("--tolerance", imp.tolerance, "Allowed duration difference in seconds");

  ExtractArgs ext;
  auto* c_ext = app.add_subcommand("extract-features", "Compute per-syllable feature tables");
  c_ext->add_option("--corpus", ext.corpus, "Alignment TSV")->required();
  c_ext->add_option("--audio", ext.audio, "Audio directory (heuristic)");
  c_ext->add_option("--type", ext.type, "heuristic or ssl")->check(CLI::IsMember({"heuristic", "ssl"}));
  c_ext->add_option("--frames-dir", ext.frames_dir, "Directory of <utt>.sbfr frame features (ssl)");
  c_ext->add_option("--out", ext.out, "Output SBFT file")->required();

  FoldArgs fold;
  auto* c_fold = app.add_subcommand("make-folds", "Word-grouped stratified fold assignment");
  auto* o_corpus = c_fold->add_option("--corpus", fold.corpus, "Alignment TSV");
  auto* o_feat = c_fold->add_option("--features", fold.features, "SBFT feature table");
  o_corpus->excludes(o_feat);
  c_fold->add_option("--split", fold.split, "split.tsv; test utterances are left out");
  c_fold->add_option("--k", fold.k, "Number of folds")->check(CLI::Range(2, 100));
  c_fold->add_option("--seed", fold.seed, "Random seed");
  c_fold->add_option("--out", fold.out, "Output folds TSV")->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train one model per fold and save checkpoints");
  c_train->add_option("--features", tr.features, "SBFT feature table")->required();
  c_train->add_option("--folds", tr.folds, "Folds TSV")->required();
  c_train->add_option("--config", tr.config, "Training config JSON");
  c_train->add_option("--fold", tr.fold, "Train only this fold");
  c_train->add_option("--out", tr.out, "Output directory")->required();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Cross-validate and write run.json + predictions.tsv");
  c_eval->add_option("--features", ev.features, "SBFT feature table")->required();
  c_eval->add_option("--folds", ev.folds, "Folds TSV")->required();
  c_eval->add_option("--config", ev.config, "Training config JSON");
  c_eval->add_option("--condition", ev.condition, "clean, noisy@<snr> or <enhancer>@<snr>");
  c_eval->add_option("--feature-type", ev.feature_type, "Override the detected feature type");
  c_eval->add_option("--out", ev.out, "Output directory")->required();

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "Tabulate evaluation runs");
  c_rep->add_option("--runs", rep.runs, "Directory searched for run.json files")->required();
  c_rep->add_option("--out", rep.out, "Output TSV (a .txt rendering is written beside it)")->required();

  StudyBuildArgs sb;
  auto* c_sb = app.add_subcommand("study-build", "Assemble blinded perceptual-study trials");
  c_sb->add_option("--corpus", sb.corpus, "Alignment TSV")->required();
  c_sb->add_option("--audio-root", sb.audio_root, "Root with clean/ and one directory per system")->required();
  c_sb->add_option("--systems", sb.systems, "Exactly three system labels")->delimiter(',')->required();
  c_sb->add_option("--per-dataset", sb.per_dataset, "Words per dataset");
  c_sb->add_option("--seed", sb.seed, "Random seed");
  c_sb->add_option("--out", sb.out, "Output trials JSON")->required();

  ServeArgs sv;
  auto* c_sv = app.add_subcommand("study-serve", "Serve the study over HTTP");
  c_sv->add_option("--trials", sv.trials, "Trials JSON")->required();
  c_sv->add_option("--audio", sv.audio, "Audio root")->required();
  c_sv->add_option("--port", sv.port, "TCP port (0 picks one)");
  c_sv->add_option("--host", sv.host, "Bind address");
  c_sv->add_option("--log", sv.log, "Append-only response log");
  c_sv->add_option("--static", sv.static_dir, "Directory of UI assets served at /");

  StatsArgs st;
  auto* c_st = app.add_subcommand("study-stats", "Choice statistics from a response log");
  c_st->add_option("--log", st.log, "Response log (JSON lines)")->required();
  c_st->add_option("--trials", st.trials, "Trials JSON");
  c_st->add_option("--predictions", st.predictions, "SYSTEM=predictions.tsv for paired accuracy");
  c_st->add_option("--out", st.out, "Output TSV");

  CLI11_PARSE(app, argc, argv);
  if (show_kernels) std::cerr << "kernels: " << kernels::active().name << '\n';

  try {
    if (*c_synth) return run_synth(synth);
    if (*c_mix) return run_mix(mix);
    if (*c_enh) return run_enhance(enh);
    if (*c_imp) return run_import(imp);
    if (*c_ext) return run_extract(ext);
    if (*c_fold) {
      if (fold.corpus.empty() && fold.features.empty()) throw Error("make-folds needs --corpus or --features");
      return run_folds(fold);
    }
    if (*c_train) return run_train(tr);
    if (*c_eval) return run_evaluate(ev);
    if (*c_rep) return run_report(rep);
    if (*c_sb) return run_study_build(sb);
    if (*c_sv) return run_serve(sv);
    if (*c_st) return run_study_stats(st);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
