#pragma once

// Jointly trained VAE + DNN syllable-stress classifier.
//
// Encoder:  x -> relu(W1 x + b1) = h -> (mu, logvar)
// Decoder:  z -> relu(W4 z + b4) -> W5 . + b5 = xhat   (linear output)
// Classifier on z: affine layers of widths dnn_widths, relu between, sigmoid
// on the last scalar.
//
// Training samples z = mu + exp(logvar / 2) * eps; inference uses z = mu.
//
// Loss over a batch of B rows with input width n:
//   BCE = mean_b -[y log p + (1 - y) log(1 - p)],  p clamped to [1e-7, 1 - 1e-7]
//   MSE = mean_b (1/n) sum_i (xhat_i - x_i)^2
//   KL  = -1/2 mean_b sum_j (1 + logvar_j - mu_j^2 - exp(logvar_j))
//   L   = BCE + lambda * (MSE + beta * KL)
//
// Adam, per parameter, step t:
//   m = b1 m + (1 - b1) g
//   v = b2 v + (1 - b2) g^2
//   theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
// with b1 = 0.9, b2 = 0.999, eps = 1e-8.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stressbench/common.hpp"

namespace stressbench::model {

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 200;
  int batch_size = 32;
  double lambda = 1.0;
  double beta = 0.1;
  int latent_dim = 0;  // 0: pick from the input width
  int hidden_dim = 0;  // 0: pick from the input width
  std::uint64_t seed = 1;
  int patience = 30;

  void validate() const;
};

// JSON object with any subset of the TrainConfig fields; unknown keys throw.
TrainConfig parse_config(const std::string& json_text, const std::string& name = "config");
std::string format_config(const TrainConfig& c);
TrainConfig load_config(const std::filesystem::path& path);

struct Shape {
  std::size_t input = 0;
  std::size_t hidden = 0;
  std::size_t latent = 0;
  std::vector<std::size_t> dnn_widths{64, 32, 16, 4, 1};

  // 16/32 for narrow inputs, 64/256 for wide ones, unless the config overrides.
  static Shape for_input(std::size_t input_dim, const TrainConfig& c);
  void validate() const;
};

// y = W x + b with W stored row-major (out x in) inside the flat vector.
struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight = 0;  // offset of W
  std::size_t bias = 0;    // offset of b
};

struct Layout {
  Layer enc;
  Layer mu;
  Layer logvar;
  Layer dec1;
  Layer dec2;
  std::vector<Layer> dnn;
  std::size_t total = 0;

  explicit Layout(const Shape& s);
  std::vector<const Layer*> layers() const;
  std::vector<std::string> names() const;
};

struct Params {
  Shape shape;
  std::vector<double> values;

  Layout layout() const { return Layout(shape); }
  std::size_t size() const { return values.size(); }
};

// He-style uniform(-sqrt(6/fan_in), sqrt(6/fan_in)) weights, zero biases.
Params init(const Shape& shape, std::uint64_t seed);

struct Forward {
  std::vector<double> h;       // encoder hidden (post-relu)
  std::vector<double> mu;
  std::vector<double> logvar;
  std::vector<double> eps;     // empty in inference mode
  std::vector<double> z;
  std::vector<double> d;       // decoder hidden (post-relu)
  std::vector<double> xhat;
  std::vector<std::vector<double>> a;  // classifier activations, a[k] = output of layer k
  double logit = 0.0;
  double p = 0.5;
};

// eps: latent-width noise for training mode, or empty for inference.
Forward forward(const Params& params, std::span<const double> x, std::span<const double> eps = {});

struct LossTerms {
  double total = 0.0;
  double bce = 0.0;
  double mse = 0.0;
  double kl = 0.0;
};

constexpr double kProbClamp = 1e-7;

LossTerms loss(const std::vector<Forward>& outputs, const std::vector<std::span<const double>>& x,
               std::span<const int> y, double lambda, double beta);

// Forward + backward over a batch. eps holds batch x latent values (training
// mode) or is empty (inference mode). grad is resized and overwritten.
LossTerms loss_and_gradient(const Params& params, const std::vector<std::span<const double>>& x,
                            std::span<const int> y, std::span<const double> eps, double lambda,
                            double beta, std::vector<double>& grad);

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;

  static constexpr double kMinStd = 1e-8;
  // Population statistics; std floored at kMinStd.
  static NormStats fit(const std::vector<std::span<const double>>& rows);
  std::vector<double> apply(std::span<const double> row) const;
};

struct EpochRecord {
  int epoch = 0;
  LossTerms train;
  double val_accuracy = 0.0;  // threshold-0.5 syllable accuracy, percent
  double val_bce = 0.0;
};

struct Model {
  Params params;
  NormStats norm;
  TrainConfig config;
};

struct FitResult {
  Model model;  // best-validation snapshot
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
};

struct Dataset {
  std::vector<std::vector<double>> x;
  std::vector<int> y;

  std::size_t size() const { return x.size(); }
};

FitResult fit(const Dataset& train, const Dataset& val, const TrainConfig& config);

std::vector<double> predict_proba(const Model& m, const std::vector<std::vector<double>>& rows);
double predict_one(const Model& m, std::span<const double> row);

// SBCK checkpoint: "SBCK" | version u16 | shape | config | NormStats |
// parameter count u64 | parameters f64.
std::vector<std::uint8_t> encode(const Model& m);
Model decode(const std::vector<std::uint8_t>& bytes, const std::string& name = "checkpoint");
void save(const Model& m, const std::filesystem::path& path);
Model load(const std::filesystem::path& path);

}  // namespace stressbench::model
