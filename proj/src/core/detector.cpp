#include "core/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "core/errors.hpp"

namespace probescreen::det {

using nlohmann::json;

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr double kProbClamp = 1e-7;

size_t affine_layers(const DetectorModel& m) { return m.layer_dims.size() - 1; }

void check_shapes(const DetectorModel& m) {
  if (m.layer_dims.size() < 2 || m.layer_dims.back() != 1) {
    fail(ErrorKind::validation, "model: layer_dims must end in 1 output");
  }
  if (m.weights.size() != affine_layers(m) || m.biases.size() != affine_layers(m)) {
    fail(ErrorKind::validation, "model: weight/bias layer count mismatch");
  }
  for (size_t l = 0; l < affine_layers(m); ++l) {
    size_t in = static_cast<size_t>(m.layer_dims[l]);
    size_t out = static_cast<size_t>(m.layer_dims[l + 1]);
    if (m.weights[l].size() != in * out || m.biases[l].size() != out) {
      fail(ErrorKind::validation, "model: bad shape at layer " + std::to_string(l));
    }
  }
}

struct ForwardCache {
  std::vector<std::vector<double>> inputs;  // input to each affine layer
  std::vector<std::vector<double>> pre;     // pre-activation per affine layer
  std::vector<std::vector<uint8_t>> keep;   // dropout keep mask per hidden layer
};

double forward_cached(const DetectorModel& m, std::span<const double> input,
                      bool training, Rng* rng, ForwardCache* cache) {
  if (static_cast<int>(input.size()) != m.layer_dims[0]) {
    fail(ErrorKind::validation, "forward: input size " + std::to_string(input.size()) +
                                    " != " + std::to_string(m.layer_dims[0]));
  }
  if (training && rng == nullptr) {
    fail(ErrorKind::validation, "forward: training mode requires rng");
  }
  const size_t layers = affine_layers(m);
  std::vector<double> act(input.begin(), input.end());
  if (cache) {
    cache->inputs.assign(layers, {});
    cache->pre.assign(layers, {});
    cache->keep.assign(layers, {});
  }
  for (size_t l = 0; l < layers; ++l) {
    const size_t in = static_cast<size_t>(m.layer_dims[l]);
    const size_t out = static_cast<size_t>(m.layer_dims[l + 1]);
    if (cache) cache->inputs[l] = act;
    std::vector<double> z(out);
    for (size_t o = 0; o < out; ++o) {
      double s = m.biases[l][o];
      const double* row = m.weights[l].data() + o * in;
      for (size_t i = 0; i < in; ++i) s += row[i] * act[i];
      z[o] = s;
    }
    if (cache) cache->pre[l] = z;
    if (l + 1 == layers) {
      act = std::move(z);  // linear output head
      break;
    }
    for (double& x : z) x = std::max(0.0, x);
    if (training && m.dropout_p > 0.0) {
      const double scale = 1.0 / (1.0 - m.dropout_p);
      std::vector<uint8_t> keep(out, 1);
      for (size_t o = 0; o < out; ++o) {
        if (rng->uniform() < m.dropout_p) {
          keep[o] = 0;
          z[o] = 0.0;
        } else {
          z[o] *= scale;
        }
      }
      if (cache) cache->keep[l] = std::move(keep);
    }
    act = std::move(z);
  }
  return act[0];
}

struct ParamLayout {
  std::vector<size_t> w_off, b_off;
  size_t total = 0;
};

ParamLayout layout_of(const DetectorModel& m) {
  ParamLayout lay;
  size_t off = 0;
  for (size_t l = 0; l < affine_layers(m); ++l) {
    lay.w_off.push_back(off);
    off += m.weights[l].size();
    lay.b_off.push_back(off);
    off += m.biases[l].size();
  }
  lay.total = off;
  return lay;
}

// Accumulates d(loss)/d(params) into grad (flat layout) given d(loss)/d(logit).
void backprop(const DetectorModel& m, const ForwardCache& cache, double dlogit,
              bool training, std::vector<double>& grad) {
  const ParamLayout lay = layout_of(m);
  if (grad.size() != lay.total) grad.resize(lay.total, 0.0);
  const size_t layers = affine_layers(m);
  std::vector<double> delta{dlogit};
  for (size_t l = layers; l-- > 0;) {
    const size_t in = static_cast<size_t>(m.layer_dims[l]);
    const size_t out = static_cast<size_t>(m.layer_dims[l + 1]);
    const auto& x = cache.inputs[l];
    for (size_t o = 0; o < out; ++o) {
      double d = delta[o];
      grad[lay.b_off[l] + o] += d;
      double* gw = grad.data() + lay.w_off[l] + o * in;
      for (size_t i = 0; i < in; ++i) gw[i] += d * x[i];
    }
    if (l == 0) break;
    std::vector<double> dprev(in, 0.0);
    for (size_t o = 0; o < out; ++o) {
      const double* row = m.weights[l].data() + o * in;
      for (size_t i = 0; i < in; ++i) dprev[i] += delta[o] * row[i];
    }
    // Back through the hidden activation that produced inputs[l]:
    // dropout (training) then ReLU on pre[l-1].
    if (training && m.dropout_p > 0.0 && !cache.keep[l - 1].empty()) {
      const double scale = 1.0 / (1.0 - m.dropout_p);
      for (size_t i = 0; i < in; ++i) {
        dprev[i] = cache.keep[l - 1][i] ? dprev[i] * scale : 0.0;
      }
    }
    for (size_t i = 0; i < in; ++i) {
      if (cache.pre[l - 1][i] <= 0.0) dprev[i] = 0.0;
    }
    delta = std::move(dprev);
  }
}

std::array<long, 4> confusion(const std::vector<int>& labels,
                              const std::vector<bool>& flags) {
  long tn = 0, fn = 0, fp = 0, tp = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      flags[i] ? ++tp : ++fn;
    } else {
      flags[i] ? ++fp : ++tn;
    }
  }
  return {tn, fn, fp, tp};
}

double f1_from_confusion(const std::array<long, 4>& c) {
  long denom = 2 * c[3] + c[2] + c[1];
  return denom > 0 ? 2.0 * static_cast<double>(c[3]) / static_cast<double>(denom) : 0.0;
}

}  // namespace

DetectorModel init_model(uint64_t seed, std::vector<int> layer_dims) {
  DetectorModel m;
  m.layer_dims = std::move(layer_dims);
  if (m.layer_dims.size() < 2 || m.layer_dims.back() != 1) {
    fail(ErrorKind::validation, "init_model: layer_dims must end in 1 output");
  }
  m.rng_seed = seed;
  Rng rng(seed);
  for (size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
    size_t in = static_cast<size_t>(m.layer_dims[l]);
    size_t out = static_cast<size_t>(m.layer_dims[l + 1]);
    double std = std::sqrt(2.0 / static_cast<double>(in));
    std::vector<double> w(in * out);
    for (double& x : w) x = rng.normal() * std;
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(out, 0.0);
  }
  return m;
}

double sigmoid(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double forward(const DetectorModel& model, std::span<const double> input, bool training,
               Rng* rng) {
  check_shapes(model);
  return forward_cached(model, input, training, rng, nullptr);
}

ForwardTrace forward_trace(const DetectorModel& model, std::span<const double> input,
                           bool training, Rng* rng) {
  check_shapes(model);
  ForwardCache cache;
  double logit = forward_cached(model, input, training, rng, &cache);
  ForwardTrace t;
  // inputs[l] is the post-activation fed into affine layer l.
  if (cache.inputs.size() > 1) t.h1 = cache.inputs[1];
  if (cache.inputs.size() > 2) t.h2 = cache.inputs[2];
  t.logit = logit;
  return t;
}

double focal_loss(double logit, int label, double gamma) {
  if (gamma < 0.0) fail(ErrorKind::validation, "focal_loss: gamma must be >= 0");
  double p = sigmoid(logit);
  double pt = label ? p : 1.0 - p;
  pt = std::min(1.0 - kProbClamp, std::max(kProbClamp, pt));
  return -std::pow(1.0 - pt, gamma) * std::log(pt);
}

double focal_loss_dlogit(double logit, int label, double gamma) {
  if (gamma < 0.0) fail(ErrorKind::validation, "focal_loss: gamma must be >= 0");
  double p = sigmoid(logit);
  double pt = label ? p : 1.0 - p;
  if (pt <= kProbClamp || pt >= 1.0 - kProbClamp) return 0.0;  // clamp region is flat
  double one_minus = 1.0 - pt;
  double dldt = -std::pow(one_minus, gamma) / pt;
  if (gamma > 0.0) dldt += gamma * std::pow(one_minus, gamma - 1.0) * std::log(pt);
  double ds = p * (1.0 - p);
  return label ? dldt * ds : -dldt * ds;
}

std::vector<double> flatten_params(const DetectorModel& model) {
  check_shapes(model);
  std::vector<double> out;
  for (size_t l = 0; l < affine_layers(model); ++l) {
    out.insert(out.end(), model.weights[l].begin(), model.weights[l].end());
    out.insert(out.end(), model.biases[l].begin(), model.biases[l].end());
  }
  return out;
}

void unflatten_params(DetectorModel& model, std::span<const double> params) {
  check_shapes(model);
  size_t off = 0;
  for (size_t l = 0; l < affine_layers(model); ++l) {
    std::copy(params.begin() + off, params.begin() + off + model.weights[l].size(),
              model.weights[l].begin());
    off += model.weights[l].size();
    std::copy(params.begin() + off, params.begin() + off + model.biases[l].size(),
              model.biases[l].begin());
    off += model.biases[l].size();
  }
  if (off != params.size()) {
    fail(ErrorKind::validation, "unflatten_params: size mismatch");
  }
}

namespace {

void check_feature_contract(const DetectorModel& model, const std::vector<Sample>& samples) {
  for (const auto& [f, label] : samples) {
    if (f.order_version != model.feature_order_version) {
      fail(ErrorKind::contract, "feature order '" + f.order_version +
                                    "' does not match model '" +
                                    model.feature_order_version + "'");
    }
    (void)label;
  }
}

}  // namespace

double mean_focal_loss(const DetectorModel& model, const std::vector<Sample>& samples,
                       double gamma) {
  check_shapes(model);
  if (samples.empty()) fail(ErrorKind::validation, "mean_focal_loss: empty sample set");
  double sum = 0.0;
  for (const auto& [f, label] : samples) {
    auto a = f.to_array();
    sum += focal_loss(forward_cached(model, a, false, nullptr, nullptr), label, gamma);
  }
  return sum / static_cast<double>(samples.size());
}

std::vector<double> mean_focal_loss_grad(const DetectorModel& model,
                                         const std::vector<Sample>& samples, double gamma) {
  check_shapes(model);
  if (samples.empty()) fail(ErrorKind::validation, "mean_focal_loss_grad: empty sample set");
  std::vector<double> grad(layout_of(model).total, 0.0);
  for (const auto& [f, label] : samples) {
    auto a = f.to_array();
    ForwardCache cache;
    double logit = forward_cached(model, a, false, nullptr, &cache);
    backprop(model, cache, focal_loss_dlogit(logit, label, gamma), false, grad);
  }
  for (double& g : grad) g /= static_cast<double>(samples.size());
  return grad;
}

TrainResult train(const DetectorModel& init, const std::vector<Sample>& dataset,
                  const TrainConfig& cfg) {
  check_shapes(init);
  check_feature_contract(init, dataset);
  if (cfg.gamma < 0.0) fail(ErrorKind::validation, "train: gamma must be >= 0");
  if (cfg.threshold <= 0.0 || cfg.threshold >= 1.0) {
    fail(ErrorKind::validation, "train: threshold must be in (0,1)");
  }
  if (cfg.batch_size < 1) fail(ErrorKind::validation, "train: batch_size must be >= 1");
  if (cfg.patience < 1) fail(ErrorKind::validation, "train: patience must be >= 1");
  if (cfg.early_stop_metric != "F1") {
    fail(ErrorKind::validation, "train: unsupported early_stop_metric '" +
                                    cfg.early_stop_metric + "'");
  }
  std::vector<size_t> by_class[2];
  for (size_t i = 0; i < dataset.size(); ++i) {
    int label = dataset[i].second;
    if (label != 0 && label != 1) fail(ErrorKind::validation, "train: labels must be 0/1");
    by_class[label].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) {
    fail(ErrorKind::validation, "train: dataset must contain both classes");
  }

  // Stratified 20% validation fold for early stopping.
  std::vector<size_t> fit_idx, val_idx;
  for (int c = 0; c < 2; ++c) {
    Rng rng(mix_seed(cfg.split_seed, 0x5f01d5ULL, static_cast<uint64_t>(c)));
    auto idx = by_class[c];
    rng.shuffle(idx);
    size_t n = idx.size();
    size_t n_val = n >= 2 ? std::max<size_t>(1, static_cast<size_t>(0.2 * static_cast<double>(n)))
                          : 0;
    for (size_t i = 0; i < idx.size(); ++i) {
      (i < n_val ? val_idx : fit_idx).push_back(idx[i]);
    }
  }
  std::sort(val_idx.begin(), val_idx.end());

  const ParamLayout lay = layout_of(init);
  DetectorModel model = init;
  std::vector<double> params = flatten_params(model);
  std::vector<double> m1(lay.total, 0.0), m2(lay.total, 0.0);
  long step = 0;

  auto eval_f1 = [&](const std::vector<size_t>& indices) {
    std::vector<int> labels;
    std::vector<bool> flags;
    for (size_t i : indices) {
      auto a = dataset[i].first.to_array();
      double logit = forward_cached(model, a, false, nullptr, nullptr);
      labels.push_back(dataset[i].second);
      flags.push_back(sigmoid(logit) > cfg.threshold);
    }
    return f1_from_confusion(confusion(labels, flags));
  };

  TrainResult result;
  result.val_indices = val_idx;
  std::vector<double> best_params = params;
  double best_f1 = -1.0;
  int best_epoch = 0;
  int epochs_since_improvement = 0;

  const auto& monitor_idx = val_idx.empty() ? fit_idx : val_idx;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.split_seed, 0xe70c4ULL, static_cast<uint64_t>(epoch)));
    Rng dropout_rng(mix_seed(model.rng_seed, 0xd40bULL, static_cast<uint64_t>(epoch)));
    auto order = fit_idx;
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::vector<double> grad(lay.total);
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0);
      for (size_t k = start; k < end; ++k) {
        const auto& [f, label] = dataset[order[k]];
        auto a = f.to_array();
        ForwardCache cache;
        double logit = forward_cached(model, a, true, &dropout_rng, &cache);
        loss_sum += focal_loss(logit, label, cfg.gamma);
        backprop(model, cache, focal_loss_dlogit(logit, label, cfg.gamma), true, grad);
      }
      double inv_n = 1.0 / static_cast<double>(end - start);
      ++step;
      double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
      double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
      for (size_t i = 0; i < lay.total; ++i) {
        double g = grad[i] * inv_n;
        m1[i] = kAdamBeta1 * m1[i] + (1.0 - kAdamBeta1) * g;
        m2[i] = kAdamBeta2 * m2[i] + (1.0 - kAdamBeta2) * g * g;
        double update = (m1[i] / bc1) / (std::sqrt(m2[i] / bc2) + kAdamEps);
        params[i] -= cfg.learning_rate * (update + cfg.weight_decay * params[i]);
      }
      unflatten_params(model, params);
    }

    double val_f1 = eval_f1(monitor_idx);
    result.history.push_back(
        {epoch, loss_sum / static_cast<double>(std::max<size_t>(1, order.size())), val_f1});

    if (val_f1 > best_f1) {
      best_f1 = val_f1;
      best_params = params;
      best_epoch = epoch;
      epochs_since_improvement = 0;
    } else {
      ++epochs_since_improvement;
      if (epochs_since_improvement >= cfg.patience) break;
    }
  }

  unflatten_params(model, best_params);
  model.train_config_echo = {
      {"gamma", cfg.gamma},
      {"learning_rate", cfg.learning_rate},
      {"weight_decay", cfg.weight_decay},
      {"max_epochs", cfg.max_epochs},
      {"patience", cfg.patience},
      {"batch_size", cfg.batch_size},
      {"split_seed", cfg.split_seed},
      {"early_stop_metric", cfg.early_stop_metric},
      {"threshold", cfg.threshold},
  };
  result.model = std::move(model);
  result.best_epoch = best_epoch;
  result.best_val_f1 = std::max(0.0, best_f1);
  return result;
}

DetectorModel calibrate(const DetectorModel& model, const std::vector<Sample>& calibration_set,
                        CalibrationFitInfo* info) {
  check_shapes(model);
  check_feature_contract(model, calibration_set);
  if (calibration_set.empty()) {
    fail(ErrorKind::validation, "calibrate: empty calibration set");
  }
  if (info) info->skipped = false;

  std::vector<double> logits;
  std::vector<int> labels;
  bool has[2] = {false, false};
  for (const auto& [f, label] : calibration_set) {
    auto a = f.to_array();
    logits.push_back(forward_cached(model, a, false, nullptr, nullptr));
    labels.push_back(label);
    has[label] = true;
  }

  DetectorModel out = model;
  if (!has[0] || !has[1]) {
    if (info) info->skipped = true;
    out.calibration = Calibration{1.0, 0.0};
    return out;
  }

  const double n = static_cast<double>(logits.size());
  double zscale = 0.0;
  for (double z : logits) zscale += z * z;
  zscale = std::max(1.0, zscale / n);

  double a = 1.0, b = 0.0;
  const double lr_a = 0.5 / zscale, lr_b = 0.5;
  for (int iter = 0; iter < 20000; ++iter) {
    double ga = 0.0, gb = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
      double r = static_cast<double>(labels[i]) - sigmoid(a * logits[i] + b);
      ga += r * logits[i];
      gb += r;
    }
    ga /= n;
    gb /= n;
    a += lr_a * ga;
    b += lr_b * gb;
    if (a < 1e-6) a = 1e-6;  // keep the calibrated map monotone
    if (std::abs(ga) * lr_a + std::abs(gb) * lr_b < 1e-13) break;
  }
  out.calibration = Calibration{a, b};
  return out;
}

Prediction predict(const DetectorModel& model, const feat::FeatureVector& features) {
  check_shapes(model);
  if (features.order_version != model.feature_order_version) {
    fail(ErrorKind::contract, "predict: feature order '" + features.order_version +
                                  "' does not match model '" +
                                  model.feature_order_version + "'");
  }
  auto a = features.to_array();
  double logit = forward_cached(model, a, false, nullptr, nullptr);
  double prob = model.calibration
                    ? sigmoid(model.calibration->a * logit + model.calibration->b)
                    : sigmoid(logit);
  return Prediction{prob, prob > 0.5};
}

EvalReport EvalReport::from_counts(long tn, long fn, long fp, long tp) {
  EvalReport r;
  r.tn = tn;
  r.fn = fn;
  r.fp = fp;
  r.tp = tp;
  auto ratio = [&r](long num, long den) {
    if (den <= 0) {
      r.had_zero_division = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.tnr = ratio(tn, tn + fp);
  r.precision = ratio(tp, tp + fp);
  r.recall = ratio(tp, tp + fn);
  r.accuracy = ratio(tp + tn, tn + fn + fp + tp);
  r.f1 = ratio(2 * tp, 2 * tp + fp + fn);
  return r;
}

EvalReport evaluate(const DetectorModel& model, const std::vector<Sample>& labeled_sets) {
  if (labeled_sets.empty()) fail(ErrorKind::validation, "evaluate: empty input");
  std::vector<int> labels;
  std::vector<bool> flags;
  for (const auto& [f, label] : labeled_sets) {
    labels.push_back(label);
    flags.push_back(predict(model, f).flag);
  }
  auto c = confusion(labels, flags);
  return EvalReport::from_counts(c[0], c[1], c[2], c[3]);
}

json model_to_json(const DetectorModel& model) {
  check_shapes(model);
  json j;
  j["version"] = "1";
  j["feature_order_version"] = model.feature_order_version;
  j["layer_dims"] = model.layer_dims;
  j["weights"] = model.weights;
  j["biases"] = model.biases;
  j["dropout_p"] = model.dropout_p;
  j["calibration"] =
      model.calibration
          ? json{{"a", model.calibration->a}, {"b", model.calibration->b}}
          : json(nullptr);
  j["train_config_echo"] = model.train_config_echo;
  j["seed"] = model.rng_seed;
  return j;
}

DetectorModel model_from_json(const json& j) {
  DetectorModel m;
  try {
    m.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    m.biases = j.at("biases").get<std::vector<std::vector<double>>>();
    m.dropout_p = j.at("dropout_p").get<double>();
    m.feature_order_version = j.at("feature_order_version").get<std::string>();
    m.rng_seed = j.at("seed").get<uint64_t>();
    if (j.contains("train_config_echo")) m.train_config_echo = j.at("train_config_echo");
    if (j.contains("calibration") && !j.at("calibration").is_null()) {
      m.calibration = Calibration{j.at("calibration").at("a").get<double>(),
                                  j.at("calibration").at("b").get<double>()};
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::io, std::string("model json: ") + e.what());
  }
  check_shapes(m);
  for (const auto& w : m.weights) {
    for (double x : w) {
      if (!std::isfinite(x)) fail(ErrorKind::validation, "model json: non-finite weight");
    }
  }
  for (const auto& b : m.biases) {
    for (double x : b) {
      if (!std::isfinite(x)) fail(ErrorKind::validation, "model json: non-finite bias");
    }
  }
  return m;
}

void save_model(const DetectorModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write model file " + path);
  out << model_to_json(model).dump(2) << "\n";
}

DetectorModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open model file " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::io, "model file is not valid JSON: " + path);
  return model_from_json(j);
}

json report_to_json(const EvalReport& r) {
  return json{{"tn", r.tn},
              {"fn", r.fn},
              {"fp", r.fp},
              {"tp", r.tp},
              {"tnr", r.tnr},
              {"precision", r.precision},
              {"recall", r.recall},
              {"accuracy", r.accuracy},
              {"f1", r.f1},
              {"had_zero_division", r.had_zero_division}};
}

}  // namespace probescreen::det
