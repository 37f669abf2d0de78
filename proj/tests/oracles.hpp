#pragma once

// Brute-force recomputations shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "stressbench/corpus.hpp"
#include "stressbench/model.hpp"
#include "stressbench/prosody.hpp"
#include "stressbench/sslfeat.hpp"

namespace oracles {

using namespace stressbench;

// Statistics recomputed straight from the contour arrays.
inline prosody::AcousticFeatures acoustic(const prosody::Contours& c, const corpus::Syllable& s,
                                          const corpus::Word& w) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.times[i] >= s.start && c.times[i] < s.end) idx.push_back(i);
  }
  prosody::AcousticFeatures f{};
  const double n = static_cast<double>(idx.size());
  auto pos = [&](std::size_t j) { return idx.size() > 1 ? j / (n - 1.0) : 0.0; };

  double smax = -1e300, smin = 1e300, ssum = 0.0, emax = -1e300, emin = 1e300, esum = 0.0;
  std::size_t sarg = 0;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const double v = c.sonority[idx[j]];
    if (v > smax) {
      smax = v;
      sarg = j;
    }
    smin = std::min(smin, v);
    ssum += v;
    emax = std::max(emax, c.energy[idx[j]]);
    emin = std::min(emin, c.energy[idx[j]]);
    esum += c.energy[idx[j]];
  }
  const double smean = ssum / n;
  double svar = 0.0;
  for (auto i : idx) svar += (c.sonority[i] - smean) * (c.sonority[i] - smean);
  double rise = 0.0, fall = 0.0;
  for (std::size_t j = 1; j < idx.size(); ++j) {
    const double d = (c.sonority[idx[j]] - c.sonority[idx[j - 1]]) / c.hop_s;
    rise = std::max(rise, d);
    fall = std::max(fall, -d);
  }
  f[prosody::kSMax] = smax;
  f[prosody::kSMean] = smean;
  f[prosody::kSStd] = std::sqrt(svar / n);
  f[prosody::kSRange] = smax - smin;
  f[prosody::kSMaxPos] = pos(sarg);
  f[prosody::kSMaxRise] = rise;
  f[prosody::kSMaxFall] = fall;

  double fmax = 0.0, fmin = 1e300, fsum = 0.0, voiced = 0.0;
  std::size_t farg = 0;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (!c.voiced[idx[j]]) continue;
    const double v = c.f0[idx[j]];
    if (voiced == 0.0 || v > fmax) {
      fmax = v;
      farg = j;
    }
    fmin = std::min(fmin, v);
    fsum += v;
    voiced += 1.0;
  }
  if (voiced > 0.0) {
    f[prosody::kF0Max] = fmax;
    f[prosody::kF0Mean] = fsum / voiced;
    f[prosody::kF0Range] = fmax - fmin;
    f[prosody::kF0MaxPos] = pos(farg);
    // Least-squares slope through (t, f0) via the normal equations.
    double st = 0, sf = 0, stt = 0, stf = 0;
    for (auto i : idx) {
      if (!c.voiced[i]) continue;
      st += c.times[i];
      sf += c.f0[i];
      stt += c.times[i] * c.times[i];
      stf += c.times[i] * c.f0[i];
    }
    const double den = voiced * stt - st * st;
    f[prosody::kF0Slope] = voiced >= 2 && den > 0 ? (voiced * stf - st * sf) / den : 0.0;
  }
  f[prosody::kEMax] = emax;
  f[prosody::kEMean] = esum / n;
  f[prosody::kERange] = emax - emin;
  f[prosody::kSyllableDur] = s.end - s.start;
  f[prosody::kNucleusDur] = s.nucleus().end - s.nucleus().start;
  f[prosody::kSyllableWordRatio] = (s.end - s.start) / (w.syllables.back().end - w.syllables.front().start);
  f[prosody::kVoicedFraction] = voiced / n;
  return f;
}

// Loss recomputed term by term from the forward intermediates.
inline model::LossTerms loss(const std::vector<model::Forward>& out, const std::vector<std::vector<double>>& rows,
                             const std::vector<int>& y, double lambda, double beta) {
  model::LossTerms t;
  const double n = static_cast<double>(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double p = std::min(std::max(out[i].p, 1e-7), 1.0 - 1e-7);
    t.bce += -(y[i] * std::log(p) + (1 - y[i]) * std::log(1.0 - p)) / n;
    double se = 0.0;
    for (std::size_t k = 0; k < rows[i].size(); ++k) se += std::pow(out[i].xhat[k] - rows[i][k], 2);
    t.mse += se / rows[i].size() / n;
    double kl = 0.0;
    for (std::size_t j = 0; j < out[i].mu.size(); ++j) {
      kl += 1.0 + out[i].logvar[j] - out[i].mu[j] * out[i].mu[j] - std::exp(out[i].logvar[j]);
    }
    t.kl += -0.5 * kl / n;
  }
  t.total = t.bce + lambda * (t.mse + beta * t.kl);
  return t;
}

// Mean of the frames whose centers fall in [a, b), by a direct scan.
inline std::vector<double> ssl_mean(const ssl::FrameFeatureFile& f, double a, double b) {
  std::vector<double> sum(f.dim, 0.0);
  int n = 0;
  const double hop = f.hop_ms / 1000.0;
  for (std::size_t i = 0; i < f.frames; ++i) {
    const double c = (i + 0.5) * hop;
    if (c >= a && c < b) {
      for (std::size_t d = 0; d < f.dim; ++d) sum[d] += f.data[i * f.dim + d];
      ++n;
    }
  }
  if (n > 0) {
    for (auto& v : sum) v /= n;
  }
  return n > 0 ? sum : std::vector<double>{};
}

struct FoldCounts {
  std::vector<double> syllables, stressed;
  std::vector<std::size_t> words;
  bool grouped = true;  // every word inside one fold
};

inline FoldCounts fold_counts(const corpus::FoldAssignment& folds, const std::vector<corpus::LabeledSyllable>& rows) {
  FoldCounts c;
  c.syllables.assign(folds.k, 0.0);
  c.stressed.assign(folds.k, 0.0);
  std::map<corpus::WordKey, std::set<int>> of_word;
  std::vector<std::set<corpus::WordKey>> words(folds.k);
  for (const auto& r : rows) {
    const int f = folds.fold_of_syllable.at(r.key);
    of_word[r.key.word()].insert(f);
    c.syllables[f] += 1;
    c.stressed[f] += r.label;
    words[f].insert(r.key.word());
  }
  for (const auto& [w, fs] : of_word) c.grouped &= fs.size() == 1;
  for (const auto& s : words) c.words.push_back(s.size());
  return c;
}

}  // namespace oracles
