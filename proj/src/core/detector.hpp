#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "core/features.hpp"
#include "core/rng.hpp"

namespace probescreen::det {

struct Calibration {
  double a = 1.0;
  double b = 0.0;
};

// Feed-forward binary classifier, default 7-16-12-1 with ReLU hidden layers.
// weights[l] is row-major (fan_out x fan_in); biases[l] has fan_out entries.
struct DetectorModel {
  std::vector<int> layer_dims{7, 16, 12, 1};
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  double dropout_p = 0.5;  // applied to hidden activations during training only
  std::optional<Calibration> calibration;
  std::string feature_order_version = feat::kFeatureOrderVersion;
  uint64_t rng_seed = 0;
  nlohmann::json train_config_echo = nlohmann::json::object();
};

struct TrainConfig {
  double gamma = 4.0;  // focal exponent
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  int max_epochs = 500;
  int patience = 25;
  int batch_size = 16;
  uint64_t split_seed = 0;
  std::string early_stop_metric = "F1";
  double threshold = 0.5;
};

using Sample = std::pair<feat::FeatureVector, int>;

// Weights ~ N(0, 2/fan_in) (seeded), biases zero.
DetectorModel init_model(uint64_t seed, std::vector<int> layer_dims = {7, 16, 12, 1});

double sigmoid(double x);

struct ForwardTrace {
  std::vector<double> h1;  // post-ReLU (and post-dropout when training)
  std::vector<double> h2;
  double logit = 0.0;
};

// Inference is deterministic; training mode applies inverted dropout to the
// hidden activations (surviving units scaled by 1/(1-p)) and requires rng.
double forward(const DetectorModel& model, std::span<const double> input,
               bool training = false, Rng* rng = nullptr);
ForwardTrace forward_trace(const DetectorModel& model, std::span<const double> input,
                           bool training = false, Rng* rng = nullptr);

// -(1-p_t)^gamma * log(p_t) with p_t clamped to [1e-7, 1-1e-7].
double focal_loss(double logit, int label, double gamma);
// d(focal_loss)/d(logit); zero in the clamped (flat) region.
double focal_loss_dlogit(double logit, int label, double gamma);

// Flat parameter layout: W1, b1, W2, b2, ... (weights row-major).
std::vector<double> flatten_params(const DetectorModel& model);
void unflatten_params(DetectorModel& model, std::span<const double> params);

// Mean focal loss over samples, inference path (no dropout), and its
// analytic gradient in the flat layout.
double mean_focal_loss(const DetectorModel& model, const std::vector<Sample>& samples,
                       double gamma);
std::vector<double> mean_focal_loss_grad(const DetectorModel& model,
                                         const std::vector<Sample>& samples, double gamma);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_f1 = 0.0;
};

struct TrainResult {
  DetectorModel model;  // best-F1 snapshot
  std::vector<EpochStats> history;
  std::vector<size_t> val_indices;  // early-stopping fold, reused for calibration
  int best_epoch = 0;
  double best_val_f1 = 0.0;
};

// Minimizes mean focal loss with AdamW (b1=0.9, b2=0.999, eps=1e-8,
// decoupled weight decay). A stratified 20% validation fold (seeded by
// cfg.split_seed) drives early stopping on F1 at threshold 0.5; returns the
// best-F1 snapshot. Deterministic given cfg.split_seed and model.rng_seed.
TrainResult train(const DetectorModel& init, const std::vector<Sample>& dataset,
                  const TrainConfig& cfg);

struct CalibrationFitInfo {
  bool skipped = false;  // single-class calibration set
};

// Platt scaling: fits (a,b) maximizing the Bernoulli log-likelihood of
// sigmoid(a*logit+b) by deterministic gradient ascent; a is kept positive.
DetectorModel calibrate(const DetectorModel& model, const std::vector<Sample>& calibration_set,
                        CalibrationFitInfo* info = nullptr);

struct Prediction {
  double probability = 0.0;
  bool flag = false;  // probability strictly above 0.5
};

Prediction predict(const DetectorModel& model, const feat::FeatureVector& features);

struct EvalReport {
  long tn = 0, fn = 0, fp = 0, tp = 0;
  double tnr = 0, precision = 0, recall = 0, accuracy = 0, f1 = 0;
  bool had_zero_division = false;

  static EvalReport from_counts(long tn, long fn, long fp, long tp);
};

EvalReport evaluate(const DetectorModel& model, const std::vector<Sample>& labeled_sets);

nlohmann::json model_to_json(const DetectorModel& model);
DetectorModel model_from_json(const nlohmann::json& j);
void save_model(const DetectorModel& model, const std::string& path);
DetectorModel load_model(const std::string& path);

nlohmann::json report_to_json(const EvalReport& report);

}  // namespace probescreen::det
