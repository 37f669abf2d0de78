#include "stressbench/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "stressbench/binio.hpp"
#include "stressbench/kernels.hpp"
#include "stressbench/rng.hpp"

namespace stressbench::model {

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;

double relu(double v) { return v > 0.0 ? v : 0.0; }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void affine(const std::vector<double>& P, const Layer& L, const double* x, double* y) {
  const double* W = P.data() + L.weight;
  const double* b = P.data() + L.bias;
  for (std::size_t o = 0; o < L.out; ++o) y[o] = kernels::dot(W + o * L.in, x, L.in) + b[o];
}

// Accumulates dW += dy x^T, db += dy; writes dx = W^T dy when dx is non-null.
void affine_backward(const std::vector<double>& P, const Layer& L, const double* x, const double* dy,
                     std::vector<double>& G, double* dx) {
  const double* W = P.data() + L.weight;
  double* dW = G.data() + L.weight;
  double* db = G.data() + L.bias;
  if (dx) std::fill(dx, dx + L.in, 0.0);
  for (std::size_t o = 0; o < L.out; ++o) {
    if (dy[o] == 0.0) continue;
    kernels::axpy(dy[o], x, dW + o * L.in, L.in);
    db[o] += dy[o];
    if (dx) kernels::axpy(dy[o], W + o * L.in, dx, L.in);
  }
}

Layer make_layer(std::size_t in, std::size_t out, std::size_t& offset) {
  Layer L{in, out, offset, offset + in * out};
  offset += in * out + out;
  return L;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); });
}

}  // namespace

// ---- config -----------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw Error("config: learning_rate must be positive");
  if (epochs <= 0) throw Error("config: epochs must be positive");
  if (batch_size <= 0) throw Error("config: batch_size must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error("config: lambda must be non-negative");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw Error("config: beta must be non-negative");
  if (latent_dim < 0 || hidden_dim < 0) throw Error("config: latent_dim/hidden_dim must be positive or 0 (auto)");
  if (patience <= 0) throw Error("config: patience must be positive");
}

TrainConfig parse_config(const std::string& json_text, const std::string& name) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(name + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) throw Error(name + ": expected a JSON object");
  TrainConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "learning_rate") c.learning_rate = v.get<double>();
      else if (k == "epochs") c.epochs = v.get<int>();
      else if (k == "batch_size") c.batch_size = v.get<int>();
      else if (k == "lambda") c.lambda = v.get<double>();
      else if (k == "beta") c.beta = v.get<double>();
      else if (k == "latent_dim") c.latent_dim = v.get<int>();
      else if (k == "hidden_dim") c.hidden_dim = v.get<int>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "patience") c.patience = v.get<int>();
      else throw Error(name + ": unknown key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(name + ": bad value: " + e.what());
  }
  c.validate();
  return c;
}

std::string format_config(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lambda"] = c.lambda;
  j["beta"] = c.beta;
  j["latent_dim"] = c.latent_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["seed"] = c.seed;
  j["patience"] = c.patience;
  return j.dump(2) + "\n";
}

TrainConfig load_config(const std::filesystem::path& path) {
  return parse_config(binio::read_text(path), path.string());
}

// ---- shapes -----------------------------------------------------------------

Shape Shape::for_input(std::size_t input_dim, const TrainConfig& c) {
  Shape s;
  s.input = input_dim;
  const bool wide = input_dim >= 256;
  s.latent = c.latent_dim > 0 ? static_cast<std::size_t>(c.latent_dim) : (wide ? 64 : 16);
  s.hidden = c.hidden_dim > 0 ? static_cast<std::size_t>(c.hidden_dim) : (wide ? 256 : 32);
  return s;
}

void Shape::validate() const {
  if (input == 0 || hidden == 0 || latent == 0) throw Error("model shape: zero dimension");
  if (dnn_widths.empty() || dnn_widths.back() != 1) throw Error("model shape: classifier must end in one unit");
  for (auto w : dnn_widths) {
    if (w == 0) throw Error("model shape: zero classifier width");
  }
}

Layout::Layout(const Shape& s) {
  std::size_t off = 0;
  enc = make_layer(s.input, s.hidden, off);
  mu = make_layer(s.hidden, s.latent, off);
  logvar = make_layer(s.hidden, s.latent, off);
  dec1 = make_layer(s.latent, s.hidden, off);
  dec2 = make_layer(s.hidden, s.input, off);
  std::size_t in = s.latent;
  for (auto w : s.dnn_widths) {
    dnn.push_back(make_layer(in, w, off));
    in = w;
  }
  total = off;
}

std::vector<const Layer*> Layout::layers() const {
  std::vector<const Layer*> out{&enc, &mu, &logvar, &dec1, &dec2};
  for (const auto& l : dnn) out.push_back(&l);
  return out;
}

std::vector<std::string> Layout::names() const {
  std::vector<std::string> out{"enc", "mu", "logvar", "dec1", "dec2"};
  for (std::size_t i = 0; i < dnn.size(); ++i) out.push_back("dnn" + std::to_string(i + 1));
  return out;
}

Params init(const Shape& shape, std::uint64_t seed) {
  shape.validate();
  const Layout lay(shape);
  Params p;
  p.shape = shape;
  p.values.assign(lay.total, 0.0);
  Rng rng(seed);
  for (const Layer* L : lay.layers()) {
    const double limit = std::sqrt(6.0 / static_cast<double>(L->in));
    for (std::size_t i = 0; i < L->in * L->out; ++i) p.values[L->weight + i] = rng.uniform(-limit, limit);
  }
  return p;
}

// ---- forward / loss / backward ----------------------------------------------

Forward forward(const Params& params, std::span<const double> x, std::span<const double> eps) {
  const Shape& s = params.shape;
  if (x.size() != s.input) throw Error("forward: input width " + std::to_string(x.size()) + ", model expects " + std::to_string(s.input));
  if (!all_finite(x)) throw Error("forward: non-finite input");
  if (!eps.empty() && eps.size() != s.latent) throw Error("forward: eps width mismatch");
  const Layout lay(s);
  const auto& P = params.values;
  Forward f;
  f.h.resize(s.hidden);
  affine(P, lay.enc, x.data(), f.h.data());
  for (auto& v : f.h) v = relu(v);
  f.mu.resize(s.latent);
  f.logvar.resize(s.latent);
  affine(P, lay.mu, f.h.data(), f.mu.data());
  affine(P, lay.logvar, f.h.data(), f.logvar.data());
  f.z = f.mu;
  if (!eps.empty()) {
    f.eps.assign(eps.begin(), eps.end());
    for (std::size_t j = 0; j < s.latent; ++j) f.z[j] += std::exp(0.5 * f.logvar[j]) * eps[j];
  }
  f.d.resize(s.hidden);
  affine(P, lay.dec1, f.z.data(), f.d.data());
  for (auto& v : f.d) v = relu(v);
  f.xhat.resize(s.input);
  affine(P, lay.dec2, f.d.data(), f.xhat.data());
  const double* in = f.z.data();
  f.a.resize(lay.dnn.size());
  for (std::size_t k = 0; k < lay.dnn.size(); ++k) {
    f.a[k].resize(lay.dnn[k].out);
    affine(P, lay.dnn[k], in, f.a[k].data());
    if (k + 1 < lay.dnn.size()) {
      for (auto& v : f.a[k]) v = relu(v);
    }
    in = f.a[k].data();
  }
  f.logit = f.a.back()[0];
  f.p = sigmoid(f.logit);
  return f;
}

LossTerms loss(const std::vector<Forward>& outputs, const std::vector<std::span<const double>>& x,
               std::span<const int> y, double lambda, double beta) {
  if (outputs.empty()) throw Error("loss: empty batch");
  if (outputs.size() != x.size() || outputs.size() != y.size()) throw Error("loss: batch size mismatch");
  const double B = static_cast<double>(outputs.size());
  LossTerms t;
  for (std::size_t b = 0; b < outputs.size(); ++b) {
    const auto& f = outputs[b];
    const double p = std::clamp(f.p, kProbClamp, 1.0 - kProbClamp);
    t.bce -= y[b] == 1 ? std::log(p) : std::log(1.0 - p);
    double se = 0.0;
    for (std::size_t i = 0; i < f.xhat.size(); ++i) {
      const double d = f.xhat[i] - x[b][i];
      se += d * d;
    }
    t.mse += se / static_cast<double>(f.xhat.size());
    double kl = 0.0;
    for (std::size_t j = 0; j < f.mu.size(); ++j) {
      kl += 1.0 + f.logvar[j] - f.mu[j] * f.mu[j] - std::exp(f.logvar[j]);
    }
    t.kl += -0.5 * kl;
  }
  t.bce /= B;
  t.mse /= B;
  t.kl /= B;
  t.total = t.bce + lambda * (t.mse + beta * t.kl);
  return t;
}

LossTerms loss_and_gradient(const Params& params, const std::vector<std::span<const double>>& x,
                            std::span<const int> y, std::span<const double> eps, double lambda,
                            double beta, std::vector<double>& grad) {
  const Shape& s = params.shape;
  const std::size_t B = x.size();
  if (B == 0) throw Error("loss: empty batch");
  if (y.size() != B) throw Error("loss: label count mismatch");
  const bool training = !eps.empty();
  if (training && eps.size() != B * s.latent) throw Error("loss: eps size mismatch");
  const Layout lay(s);
  const auto& P = params.values;
  grad.assign(P.size(), 0.0);

  std::vector<Forward> outs;
  outs.reserve(B);
  for (std::size_t b = 0; b < B; ++b) {
    outs.push_back(forward(params, x[b], training ? eps.subspan(b * s.latent, s.latent) : std::span<const double>{}));
  }
  const LossTerms terms = loss(outs, x, y, lambda, beta);

  const double scale = 1.0 / static_cast<double>(B);
  const double n = static_cast<double>(s.input);
  std::vector<double> dz(s.latent), dz_dec(s.latent), dd(s.hidden), dxhat(s.input);
  std::vector<double> dmu(s.latent), dlv(s.latent), dh(s.hidden), dh_lv(s.hidden);
  std::vector<double> delta, dprev;

  for (std::size_t b = 0; b < B; ++b) {
    const Forward& f = outs[b];

    // Classifier path.
    const bool inside = f.p >= kProbClamp && f.p <= 1.0 - kProbClamp;
    delta.assign(1, inside ? (f.p - static_cast<double>(y[b])) * scale : 0.0);
    for (std::size_t k = lay.dnn.size(); k-- > 0;) {
      const double* in = k == 0 ? f.z.data() : f.a[k - 1].data();
      dprev.resize(lay.dnn[k].in);
      affine_backward(P, lay.dnn[k], in, delta.data(), grad, dprev.data());
      if (k > 0) {
        for (std::size_t i = 0; i < dprev.size(); ++i) {
          if (f.a[k - 1][i] <= 0.0) dprev[i] = 0.0;
        }
      }
      delta.swap(dprev);
    }
    dz.assign(delta.begin(), delta.end());

    // Decoder path.
    for (std::size_t i = 0; i < s.input; ++i) dxhat[i] = lambda * 2.0 * (f.xhat[i] - x[b][i]) * scale / n;
    affine_backward(P, lay.dec2, f.d.data(), dxhat.data(), grad, dd.data());
    for (std::size_t i = 0; i < s.hidden; ++i) {
      if (f.d[i] <= 0.0) dd[i] = 0.0;
    }
    affine_backward(P, lay.dec1, f.z.data(), dd.data(), grad, dz_dec.data());
    for (std::size_t j = 0; j < s.latent; ++j) dz[j] += dz_dec[j];

    // Reparameterization and KL.
    const double kl_w = lambda * beta * scale;
    for (std::size_t j = 0; j < s.latent; ++j) {
      dmu[j] = dz[j] + kl_w * f.mu[j];
      dlv[j] = kl_w * 0.5 * (std::exp(f.logvar[j]) - 1.0);
      if (training) dlv[j] += dz[j] * f.eps[j] * 0.5 * std::exp(0.5 * f.logvar[j]);
    }
    affine_backward(P, lay.mu, f.h.data(), dmu.data(), grad, dh.data());
    affine_backward(P, lay.logvar, f.h.data(), dlv.data(), grad, dh_lv.data());
    for (std::size_t i = 0; i < s.hidden; ++i) {
      dh[i] += dh_lv[i];
      if (f.h[i] <= 0.0) dh[i] = 0.0;
    }
    affine_backward(P, lay.enc, x[b].data(), dh.data(), grad, nullptr);
  }
  return terms;
}

// ---- normalization ----------------------------------------------------------

NormStats NormStats::fit(const std::vector<std::span<const double>>& rows) {
  if (rows.empty()) throw Error("normalization: no training rows");
  const std::size_t dim = rows.front().size();
  NormStats s;
  s.mean.assign(dim, 0.0);
  s.std.assign(dim, 0.0);
  for (const auto& r : rows) {
    if (r.size() != dim) throw Error("normalization: ragged rows");
    for (std::size_t i = 0; i < dim; ++i) s.mean[i] += r[i];
  }
  const double n = static_cast<double>(rows.size());
  for (auto& m : s.mean) m /= n;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = r[i] - s.mean[i];
      s.std[i] += d * d;
    }
  }
  for (auto& v : s.std) v = std::max(std::sqrt(v / n), kMinStd);
  return s;
}

std::vector<double> NormStats::apply(std::span<const double> row) const {
  if (row.size() != mean.size()) {
    throw Error("normalization: row width " + std::to_string(row.size()) + ", expected " + std::to_string(mean.size()));
  }
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = (row[i] - mean[i]) / std[i];
  return out;
}

// ---- training ---------------------------------------------------------------

namespace {

std::vector<std::span<const double>> spans_of(const std::vector<std::vector<double>>& rows) {
  std::vector<std::span<const double>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.emplace_back(r);
  return out;
}

struct Evaluation {
  double accuracy = 0.0;
  double bce = 0.0;
};

Evaluation evaluate(const Params& params, const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
  Evaluation e;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = forward(params, x[i]).p;
    const int pred = p >= 0.5 ? 1 : 0;
    if (pred == y[i]) ++correct;
    const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    e.bce -= y[i] == 1 ? std::log(pc) : std::log(1.0 - pc);
  }
  e.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(x.size());
  e.bce /= static_cast<double>(x.size());
  return e;
}

void check_dataset(const Dataset& d, const char* what) {
  if (d.size() == 0) throw Error(std::string("fit: empty ") + what + " split");
  if (d.y.size() != d.x.size()) throw Error(std::string("fit: label count mismatch in ") + what + " split");
  for (int v : d.y) {
    if (v != 0 && v != 1) throw Error(std::string("fit: labels must be 0/1 in ") + what + " split");
  }
}

}  // namespace

FitResult fit(const Dataset& train, const Dataset& val, const TrainConfig& config) {
  config.validate();
  check_dataset(train, "training");
  check_dataset(val, "validation");
  const std::size_t dim = train.x.front().size();
  for (const auto& r : train.x) {
    if (r.size() != dim) throw Error("fit: ragged training rows");
  }
  for (const auto& r : val.x) {
    if (r.size() != dim) throw Error("fit: validation width differs from training");
  }

  FitResult result;
  Model& best = result.model;
  best.config = config;
  best.norm = NormStats::fit(spans_of(train.x));

  std::vector<std::vector<double>> xt, xv;
  xt.reserve(train.size());
  xv.reserve(val.size());
  for (const auto& r : train.x) xt.push_back(best.norm.apply(r));
  for (const auto& r : val.x) xv.push_back(best.norm.apply(r));

  Params params = init(Shape::for_input(dim, config), derive_seed(config.seed, "init"));
  const std::size_t latent = params.shape.latent;
  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0), grad;
  Rng rng(derive_seed(config.seed, "train"));

  std::vector<std::size_t> order(xt.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  const double b1 = 0.9, b2 = 0.999;
  double b1t = 1.0, b2t = 1.0;

  best.params = params;
  result.best_val_accuracy = -1.0;
  double best_bce = 0.0;
  int since_best = 0;

  std::vector<std::span<const double>> bx;
  std::vector<int> by;
  std::vector<double> eps;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      bx.clear();
      by.clear();
      for (std::size_t i = start; i < end; ++i) {
        bx.emplace_back(xt[order[i]]);
        by.push_back(train.y[order[i]]);
      }
      eps.resize(bx.size() * latent);
      for (auto& e : eps) e = rng.gaussian();
      const LossTerms t = loss_and_gradient(params, bx, by, eps, config.lambda, config.beta, grad);
      if (!std::isfinite(t.total) || !all_finite(grad)) {
        std::ostringstream msg;
        msg << "fit: non-finite loss at epoch " << epoch << ", batch " << start / bs << " (bce=" << t.bce
            << ", mse=" << t.mse << ", kl=" << t.kl << ")";
        throw Error(msg.str());
      }
      const double w = static_cast<double>(bx.size()) / static_cast<double>(order.size());
      rec.train.total += w * t.total;
      rec.train.bce += w * t.bce;
      rec.train.mse += w * t.mse;
      rec.train.kl += w * t.kl;
      b1t *= b1;
      b2t *= b2;
      const kernels::AdamStep step{config.learning_rate, b1, b2, 1e-8, 1.0 - b1t, 1.0 - b2t};
      kernels::active().adam_update(params.values.data(), grad.data(), m.data(), v.data(), params.size(), step);
    }
    const Evaluation ev = evaluate(params, xv, val.y);
    rec.val_accuracy = ev.accuracy;
    rec.val_bce = ev.bce;
    result.history.push_back(rec);
    const bool better = ev.accuracy > result.best_val_accuracy ||
                        (ev.accuracy == result.best_val_accuracy && ev.bce < best_bce);
    if (better) {
      result.best_val_accuracy = ev.accuracy;
      best_bce = ev.bce;
      result.best_epoch = epoch;
      best.params = params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

double predict_one(const Model& m, std::span<const double> row) {
  const auto x = m.norm.apply(row);
  return forward(m.params, x).p;
}

std::vector<double> predict_proba(const Model& m, const std::vector<std::vector<double>>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.size() != m.params.shape.input) {
      throw Error("predict: row width " + std::to_string(r.size()) + ", model expects " +
                  std::to_string(m.params.shape.input));
    }
    out.push_back(predict_one(m, r));
  }
  return out;
}

// ---- checkpoint -------------------------------------------------------------

std::vector<std::uint8_t> encode(const Model& m) {
  const Shape& s = m.params.shape;
  binio::Writer w;
  w.raw("SBCK");
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(s.input));
  w.u32(static_cast<std::uint32_t>(s.hidden));
  w.u32(static_cast<std::uint32_t>(s.latent));
  w.u32(static_cast<std::uint32_t>(s.dnn_widths.size()));
  for (auto x : s.dnn_widths) w.u32(static_cast<std::uint32_t>(x));
  const TrainConfig& c = m.config;
  w.f64(c.learning_rate);
  w.u32(static_cast<std::uint32_t>(c.epochs));
  w.u32(static_cast<std::uint32_t>(c.batch_size));
  w.f64(c.lambda);
  w.f64(c.beta);
  w.u32(static_cast<std::uint32_t>(c.latent_dim));
  w.u32(static_cast<std::uint32_t>(c.hidden_dim));
  w.u64(c.seed);
  w.u32(static_cast<std::uint32_t>(c.patience));
  if (m.norm.mean.size() != s.input || m.norm.std.size() != s.input) throw Error("checkpoint: normalization width mismatch");
  for (double v : m.norm.mean) w.f64(v);
  for (double v : m.norm.std) w.f64(v);
  w.u64(m.params.values.size());
  for (double v : m.params.values) w.f64(v);
  return w.bytes();
}

Model decode(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  binio::Reader r(bytes.data(), bytes.size(), name);
  if (r.raw(4, "magic") != "SBCK") throw Error(name + ": bad magic (expected SBCK)");
  const auto version = r.u16("version");
  if (version != kCheckpointVersion) throw Error(name + ": unsupported version " + std::to_string(version));
  Model m;
  Shape& s = m.params.shape;
  s.input = r.u32("input_dim");
  s.hidden = r.u32("hidden_dim");
  s.latent = r.u32("latent_dim");
  const std::uint32_t layers = r.u32("classifier depth");
  if (layers == 0 || layers > 64) throw Error(name + ": implausible classifier depth");
  s.dnn_widths.clear();
  for (std::uint32_t i = 0; i < layers; ++i) s.dnn_widths.push_back(r.u32("classifier width"));
  s.validate();
  TrainConfig& c = m.config;
  c.learning_rate = r.f64("learning_rate");
  c.epochs = static_cast<int>(r.u32("epochs"));
  c.batch_size = static_cast<int>(r.u32("batch_size"));
  c.lambda = r.f64("lambda");
  c.beta = r.f64("beta");
  c.latent_dim = static_cast<int>(r.u32("config latent_dim"));
  c.hidden_dim = static_cast<int>(r.u32("config hidden_dim"));
  c.seed = r.u64("seed");
  c.patience = static_cast<int>(r.u32("patience"));
  m.norm.mean.resize(s.input);
  m.norm.std.resize(s.input);
  for (auto& v : m.norm.mean) v = r.f64("norm mean");
  for (auto& v : m.norm.std) v = r.f64("norm std");
  const std::uint64_t count = r.u64("parameter count");
  const Layout lay(s);
  if (count != lay.total) throw Error(name + ": parameter count " + std::to_string(count) + " does not match shape (" + std::to_string(lay.total) + ")");
  m.params.values.resize(count);
  for (auto& v : m.params.values) v = r.f64("parameter");
  if (r.remaining() != 0) throw Error(name + ": trailing bytes");
  if (!all_finite(m.params.values)) throw Error(name + ": non-finite parameter");
  return m;
}

void save(const Model& m, const std::filesystem::path& path) { binio::write_file(path, encode(m)); }

Model load(const std::filesystem::path& path) { return decode(binio::read_file(path), path.string()); }

}  // namespace stressbench::model
