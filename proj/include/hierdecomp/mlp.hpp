/*
 * Copyright 2026 The hierdecomp Authors
 * SPDX-License-Identifier: Apache-2.0
 */

/// @file mlp.hpp
/// @brief Small multilayer perceptron: ReLU hidden layers, softmax/cross-entropy or
/// linear/squared-error output, mini-batch SGD with classical momentum.
///
/// Inputs are standardized with per-feature statistics captured at training time and
/// stored in the model. All randomness (initialization, shuffling, dropout masks) is drawn
/// from one Rng seeded by TrainSpec::seed, so a (data, config, spec) triple trains to the
/// same bits every time.
#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"

namespace hierdecomp {

using Matrix = Eigen::MatrixXd;

enum class OutputKind {
  kSoftmax,  // classification, cross-entropy loss
  kLinear,   // regression, 0.5 * squared error
};

struct MLPConfig {
  int input_dim = 1;
  std::vector<int> hidden_layers;
  int output_dim = 1;
  double dropout_rate = 0.0;
  OutputKind output = OutputKind::kSoftmax;

  void validate() const {
    require(input_dim >= 1 && output_dim >= 1, "layer dimensions must be >= 1");
    for (int w : hidden_layers) require(w >= 1, "hidden layer widths must be >= 1");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout rate must be in [0, 1)");
  }

  /// e.g. "25x10"; "linear" when there are no hidden layers.
  std::string signature() const {
    if (hidden_layers.empty()) return "linear";
    std::string s;
    for (std::size_t i = 0; i < hidden_layers.size(); ++i) s += (i ? "x" : "") + std::to_string(hidden_layers[i]);
    return s;
  }

  int total_hidden_units() const {
    int n = 0;
    for (int w : hidden_layers) n += w;
    return n;
  }
};

struct TrainSpec {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int epochs = 40;
  int batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const {
    require(learning_rate > 0.0, "learning rate must be > 0");
    require(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0, 1)");
    require(epochs >= 1, "epochs must be >= 1");
    require(batch_size >= 1, "batch size must be >= 1");
  }
};

struct MLPModel {
  MLPConfig config;
  TrainSpec spec;
  std::vector<Matrix> weights;  // layer l: out x in
  std::vector<Eigen::VectorXd> biases;
  Eigen::RowVectorXd input_mean;
  Eigen::RowVectorXd input_scale;
  Eigen::RowVectorXd target_mean;   // kLinear only
  Eigen::RowVectorXd target_scale;  // kLinear only
  std::vector<double> train_loss_history;  // mean loss per epoch
  double first_batch_loss = 0.0;          // before any update

  std::size_t num_layers() const { return weights.size(); }
};

/// Glorot-uniform weights, zero biases, identity standardization.
inline MLPModel initialize_mlp(const MLPConfig& config, Rng& rng) {
  config.validate();
  MLPModel m;
  m.config = config;
  std::vector<int> dims{config.input_dim};
  dims.insert(dims.end(), config.hidden_layers.begin(), config.hidden_layers.end());
  dims.push_back(config.output_dim);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double r = std::sqrt(6.0 / (dims[l] + dims[l + 1]));
    Matrix w(dims[l + 1], dims[l]);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-r, r);
    m.weights.push_back(std::move(w));
    m.biases.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
  }
  m.input_mean = Eigen::RowVectorXd::Zero(config.input_dim);
  m.input_scale = Eigen::RowVectorXd::Ones(config.input_dim);
  if (config.output == OutputKind::kLinear) {
    m.target_mean = Eigen::RowVectorXd::Zero(config.output_dim);
    m.target_scale = Eigen::RowVectorXd::Ones(config.output_dim);
  }
  return m;
}

namespace detail {

inline void softmax_rows(Matrix& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double mx = z.row(r).maxCoeff();
    z.row(r) = (z.row(r).array() - mx).exp();
    z.row(r) /= z.row(r).sum();
  }
}

inline Matrix standardize(const MLPModel& m, const Matrix& x) {
  return ((x.rowwise() - m.input_mean).array().rowwise() / m.input_scale.array()).matrix();
}

/// Activations per layer: acts[0] = input, acts[l+1] = output of layer l (post-ReLU for
/// hidden layers, raw logits for the last). Dropout masks already applied when given.
struct ForwardPass {
  std::vector<Matrix> acts;
  std::vector<Matrix> masks;
};

inline ForwardPass forward(const MLPModel& m, const Matrix& x_std, Rng* dropout_rng) {
  ForwardPass fp;
  fp.acts.push_back(x_std);
  const std::size_t layers = m.num_layers();
  const double keep = 1.0 - m.config.dropout_rate;
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix z = fp.acts.back() * m.weights[l].transpose();
    z.rowwise() += m.biases[l].transpose();
    if (l + 1 < layers) {
      z = z.cwiseMax(0.0);
      if (dropout_rng && m.config.dropout_rate > 0.0) {
        Matrix mask(z.rows(), z.cols());
        for (Eigen::Index i = 0; i < mask.rows(); ++i)
          for (Eigen::Index j = 0; j < mask.cols(); ++j) mask(i, j) = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
        z = z.cwiseProduct(mask);
        fp.masks.push_back(std::move(mask));
      }
    }
    fp.acts.push_back(std::move(z));
  }
  return fp;
}

/// Mean loss over the batch; on return `out` holds dLoss/dlogits.
inline double loss_and_output_grad(OutputKind kind, const Matrix& logits, const Matrix& targets, Matrix& out) {
  const double n = static_cast<double>(logits.rows());
  if (kind == OutputKind::kSoftmax) {
    out = logits;
    softmax_rows(out);
    double loss = 0.0;
    for (Eigen::Index r = 0; r < out.rows(); ++r)
      for (Eigen::Index c = 0; c < out.cols(); ++c)
        if (targets(r, c) > 0.0) loss -= targets(r, c) * std::log(std::max(out(r, c), 1e-300));
    out = (out - targets) / n;
    return loss / n;
  }
  out = logits - targets;
  const double loss = 0.5 * out.squaredNorm() / n;
  out /= n;
  return loss;
}

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Eigen::VectorXd> biases;
};

inline double backprop(const MLPModel& m, const Matrix& x_std, const Matrix& targets, Rng* dropout_rng,
                       Gradients& g) {
  const ForwardPass fp = forward(m, x_std, dropout_rng);
  Matrix delta;
  const double loss = loss_and_output_grad(m.config.output, fp.acts.back(), targets, delta);
  const std::size_t layers = m.num_layers();
  g.weights.resize(layers);
  g.biases.resize(layers);
  for (std::size_t l = layers; l-- > 0;) {
    g.weights[l] = delta.transpose() * fp.acts[l];
    g.biases[l] = delta.colwise().sum().transpose();
    if (l == 0) break;
    Matrix upstream = delta * m.weights[l];
    // fp.acts[l] is relu(z) (times mask), positive exactly where the unit passed gradient
    for (Eigen::Index i = 0; i < upstream.rows(); ++i)
      for (Eigen::Index j = 0; j < upstream.cols(); ++j)
        if (fp.acts[l](i, j) <= 0.0) upstream(i, j) = 0.0;
    if (!fp.masks.empty()) upstream = upstream.cwiseProduct(fp.masks[l - 1]);
    delta = std::move(upstream);
  }
  return loss;
}

inline Matrix one_hot(std::span<const int> labels, int classes) {
  Matrix t = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) t(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return t;
}

inline Matrix gather_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

inline MLPModel fit(const Matrix& features, const Matrix& targets, const MLPConfig& config, const TrainSpec& spec) {
  config.validate();
  spec.validate();
  require(features.rows() >= 1, "training set is empty");
  require(features.cols() == config.input_dim, "feature dimension does not match config");
  require(features.allFinite(), "features must be finite");
  require(targets.rows() == features.rows() && targets.cols() == config.output_dim, "target shape mismatch");

  Rng rng(spec.seed);
  MLPModel m = initialize_mlp(config, rng);
  m.spec = spec;
  m.input_mean = features.colwise().mean();
  Eigen::RowVectorXd var = (features.rowwise() - m.input_mean).array().square().colwise().mean();
  m.input_scale = var.array().sqrt().unaryExpr([](double s) { return s > 1e-12 ? s : 1.0; });
  Matrix t = targets;
  if (config.output == OutputKind::kLinear) {
    m.target_mean = targets.colwise().mean();
    Eigen::RowVectorXd tv = (targets.rowwise() - m.target_mean).array().square().colwise().mean();
    m.target_scale = tv.array().sqrt().unaryExpr([](double s) { return s > 1e-12 ? s : 1.0; });
    t = ((targets.rowwise() - m.target_mean).array().rowwise() / m.target_scale.array()).matrix();
  }
  const Matrix x = standardize(m, features);

  std::vector<Matrix> vel_w;
  std::vector<Eigen::VectorXd> vel_b;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    vel_w.push_back(Matrix::Zero(m.weights[l].rows(), m.weights[l].cols()));
    vel_b.push_back(Eigen::VectorXd::Zero(m.biases[l].size()));
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  Gradients g;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(spec.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(spec.batch_size));
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const Matrix xb = gather_rows(x, batch);
      const Matrix tb = gather_rows(t, batch);
      const double loss = backprop(m, xb, tb, &rng, g);
      if (epoch == 0 && start == 0) m.first_batch_loss = loss;
      epoch_loss += loss * static_cast<double>(batch.size());
      for (std::size_t l = 0; l < m.num_layers(); ++l) {
        vel_w[l] = spec.momentum * vel_w[l] - spec.learning_rate * g.weights[l];
        vel_b[l] = spec.momentum * vel_b[l] - spec.learning_rate * g.biases[l];
        m.weights[l] += vel_w[l];
        m.biases[l] += vel_b[l];
      }
    }
    m.train_loss_history.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  for (std::size_t l = 0; l < m.num_layers(); ++l)
    require(m.weights[l].allFinite() && m.biases[l].allFinite(), "training diverged to non-finite parameters");
  return m;
}

inline void check_input(const MLPModel& m, const Matrix& features) {
  require(features.cols() == m.config.input_dim, "feature dimension " + std::to_string(features.cols()) +
                                                      " does not match model input " +
                                                      std::to_string(m.config.input_dim));
  require(features.allFinite(), "features must be finite");
}

}  // namespace detail

/// Classifier training on integer labels in [0, output_dim).
inline MLPModel train(const Matrix& features, std::span<const int> labels, const MLPConfig& config,
                      const TrainSpec& spec) {
  require(config.output == OutputKind::kSoftmax, "train() needs a softmax config");
  require(static_cast<Eigen::Index>(labels.size()) == features.rows(), "label count does not match features");
  for (std::size_t i = 0; i < labels.size(); ++i)
    require(labels[i] >= 0 && labels[i] < config.output_dim, "label out of range at row " + std::to_string(i));
  return detail::fit(features, detail::one_hot(labels, config.output_dim), config, spec);
}

/// Regressor training on real-valued targets (N x output_dim); targets are standardized internally.
inline MLPModel train_regressor(const Matrix& features, const Matrix& targets, const MLPConfig& config,
                                const TrainSpec& spec) {
  require(config.output == OutputKind::kLinear, "train_regressor() needs a linear-output config");
  require(targets.allFinite(), "regression targets must be finite");
  return detail::fit(features, targets, config, spec);
}

inline Matrix predict_proba(const MLPModel& m, const Matrix& features) {
  require(m.config.output == OutputKind::kSoftmax, "predict_proba() needs a softmax model");
  detail::check_input(m, features);
  auto fp = detail::forward(m, detail::standardize(m, features), nullptr);
  Matrix p = std::move(fp.acts.back());
  detail::softmax_rows(p);
  return p;
}

/// Regression output in target units.
inline Matrix predict_values(const MLPModel& m, const Matrix& features) {
  require(m.config.output == OutputKind::kLinear, "predict_values() needs a linear-output model");
  detail::check_input(m, features);
  auto fp = detail::forward(m, detail::standardize(m, features), nullptr);
  Matrix y = std::move(fp.acts.back());
  y = (y.array().rowwise() * m.target_scale.array()).matrix();
  y.rowwise() += m.target_mean;
  return y;
}

/// Index of the row maximum, lowest index on ties.
inline int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (Eigen::Index j = 1; j < row.size(); ++j)
    if (row(j) > row(best)) best = static_cast<int>(j);
  return best;
}

inline std::vector<int> predict_labels(const MLPModel& m, const Matrix& features) {
  const Matrix p = predict_proba(m, features);
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index r = 0; r < p.rows(); ++r) out[static_cast<std::size_t>(r)] = argmax(p.row(r));
  return out;
}

inline double evaluate(const MLPModel& m, const Matrix& features, std::span<const int> labels) {
  require(features.rows() >= 1, "evaluation set is empty");
  require(static_cast<Eigen::Index>(labels.size()) == features.rows(), "label count does not match features");
  const auto pred = predict_labels(m, features);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < m.config.output_dim, "label out of range at row " + std::to_string(i));
    hits += pred[i] == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

/// Mean training loss of `m` on a batch, no dropout, without updating anything.
inline double batch_loss(const MLPModel& m, const Matrix& features, const Matrix& targets) {
  detail::check_input(m, features);
  auto fp = detail::forward(m, detail::standardize(m, features), nullptr);
  Matrix unused;
  return detail::loss_and_output_grad(m.config.output, fp.acts.back(), targets, unused);
}

/// Max relative error between backprop gradients and central differences (h = 1e-5) over
/// every weight and bias of a randomly initialized network. Relative error is
/// |a - n| / max(|a| + |n|, 1e-6) so exactly-zero gradients do not divide by zero.
inline double gradient_check(const MLPConfig& config, const Matrix& probe, const Matrix& targets,
                             std::uint64_t seed = 1) {
  MLPConfig cfg = config;
  cfg.dropout_rate = 0.0;
  Rng rng(seed);
  MLPModel m = initialize_mlp(cfg, rng);
  for (auto& b : m.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.uniform(-0.1, 0.1);
  require(probe.cols() == cfg.input_dim && targets.cols() == cfg.output_dim && targets.rows() == probe.rows(),
          "probe batch shape mismatch");

  detail::Gradients g;
  detail::backprop(m, probe, targets, nullptr, g);
  constexpr double h = 1e-5;
  double worst = 0.0;
  auto probe_loss = [&] { return batch_loss(m, probe, targets); };
  auto compare = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = probe_loss();
    param = saved - h;
    const double down = probe_loss();
    param = saved;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-6));
  };
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < m.weights[l].rows(); ++i)
      for (Eigen::Index j = 0; j < m.weights[l].cols(); ++j) compare(m.weights[l](i, j), g.weights[l](i, j));
    for (Eigen::Index i = 0; i < m.biases[l].size(); ++i) compare(m.biases[l](i), g.biases[l](i));
  }
  return worst;
}

// JSON

inline nlohmann::json mlp_config_to_json(const MLPConfig& c) {
  return {{"input_dim", c.input_dim},
          {"hidden_layers", c.hidden_layers},
          {"output_dim", c.output_dim},
          {"dropout_rate", c.dropout_rate},
          {"output", c.output == OutputKind::kSoftmax ? "softmax" : "linear"}};
}

inline MLPConfig mlp_config_from_json(const nlohmann::json& j) {
  MLPConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.hidden_layers = j.at("hidden_layers").get<std::vector<int>>();
  c.output_dim = j.at("output_dim").get<int>();
  c.dropout_rate = j.value("dropout_rate", 0.0);
  c.output = j.value("output", std::string("softmax")) == "linear" ? OutputKind::kLinear : OutputKind::kSoftmax;
  c.validate();
  return c;
}

inline nlohmann::json train_spec_to_json(const TrainSpec& s) {
  return {{"learning_rate", s.learning_rate},
          {"momentum", s.momentum},
          {"epochs", s.epochs},
          {"batch_size", s.batch_size},
          {"seed", s.seed}};
}

inline TrainSpec train_spec_from_json(const nlohmann::json& j) {
  TrainSpec s;
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  s.momentum = j.value("momentum", s.momentum);
  s.epochs = j.value("epochs", s.epochs);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

namespace detail {

inline nlohmann::json row_major(const Matrix& m) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v.push_back(m(i, j));
  return v;
}

inline Matrix from_row_major(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
  const auto v = j.get<std::vector<double>>();
  require(static_cast<Eigen::Index>(v.size()) == rows * cols, "weight array has wrong length");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = v[static_cast<std::size_t>(i * cols + k)];
  return m;
}

inline std::vector<double> to_vec(const Eigen::RowVectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline Eigen::RowVectorXd from_vec(const nlohmann::json& j, Eigen::Index n) {
  const auto v = j.get<std::vector<double>>();
  require(static_cast<Eigen::Index>(v.size()) == n, "vector has wrong length");
  return Eigen::Map<const Eigen::RowVectorXd>(v.data(), n);
}

}  // namespace detail

inline nlohmann::json mlp_to_json(const MLPModel& m) {
  nlohmann::json j;
  j["config"] = mlp_config_to_json(m.config);
  j["spec"] = train_spec_to_json(m.spec);
  j["seed"] = m.spec.seed;
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    layers.push_back({{"rows", m.weights[l].rows()},
                      {"cols", m.weights[l].cols()},
                      {"weights", detail::row_major(m.weights[l])},
                      {"biases", std::vector<double>(m.biases[l].data(), m.biases[l].data() + m.biases[l].size())}});
  }
  j["layers"] = std::move(layers);
  j["input_mean"] = detail::to_vec(m.input_mean);
  j["input_scale"] = detail::to_vec(m.input_scale);
  if (m.config.output == OutputKind::kLinear) {
    j["target_mean"] = detail::to_vec(m.target_mean);
    j["target_scale"] = detail::to_vec(m.target_scale);
  }
  j["train_loss_history"] = m.train_loss_history;
  return j;
}

inline MLPModel mlp_from_json(const nlohmann::json& j) {
  try {
    MLPModel m;
    m.config = mlp_config_from_json(j.at("config"));
    m.spec = train_spec_from_json(j.at("spec"));
    std::vector<int> dims{m.config.input_dim};
    dims.insert(dims.end(), m.config.hidden_layers.begin(), m.config.hidden_layers.end());
    dims.push_back(m.config.output_dim);
    const auto& layers = j.at("layers");
    require(layers.size() + 1 == dims.size(), "layer count does not match config");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      m.weights.push_back(detail::from_row_major(layers[l].at("weights"), dims[l + 1], dims[l]));
      const auto b = layers[l].at("biases").get<std::vector<double>>();
      require(static_cast<int>(b.size()) == dims[l + 1], "bias array has wrong length");
      m.biases.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), dims[l + 1]));
    }
    m.input_mean = detail::from_vec(j.at("input_mean"), m.config.input_dim);
    m.input_scale = detail::from_vec(j.at("input_scale"), m.config.input_dim);
    if (m.config.output == OutputKind::kLinear) {
      m.target_mean = detail::from_vec(j.at("target_mean"), m.config.output_dim);
      m.target_scale = detail::from_vec(j.at("target_scale"), m.config.output_dim);
    }
    m.train_loss_history = j.value("train_loss_history", std::vector<double>{});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace hierdecomp
