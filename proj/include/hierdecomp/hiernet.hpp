/*
 * Copyright 2026 The hierdecomp Authors
 * SPDX-License-Identifier: Apache-2.0
 */

/// @file hiernet.hpp
/// @brief Two-stage hierarchical classifier: a hierarchy classifier over clusters routes
/// each sample to the class-assignment classifiers of its top-k clusters, and a class is
/// scored as p(cluster) * q(class | cluster).
#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "datagen.hpp"
#include "linkage.hpp"
#include "mlp.hpp"

namespace hierdecomp {

/// A trained MLP, or a constant classifier when there is a single output.
struct StageClassifier {
  std::optional<MLPModel> net;
  int outputs = 1;

  Matrix proba(const Matrix& x) const {
    if (!net) return Matrix::Ones(x.rows(), 1);
    return predict_proba(*net, x);
  }
};

struct HierarchicalModel {
  Clustering clustering;
  StageClassifier hierarchy;
  std::vector<StageClassifier> assign;
  std::vector<std::vector<ClassId>> local_to_global;
  int top_k = 1;
  std::vector<std::string> selected_ids;  // per-cluster candidate ids when built adaptively

  std::size_t num_clusters() const { return clustering.size(); }

  void validate() const {
    clustering.validate();
    require(hierarchy.outputs == static_cast<int>(num_clusters()), "hierarchy classifier width != cluster count");
    require(assign.size() == num_clusters() && local_to_global.size() == num_clusters(),
            "one class-assignment classifier per cluster is required");
    for (std::size_t i = 0; i < num_clusters(); ++i) {
      require(assign[i].outputs == static_cast<int>(clustering.clusters[i].size()),
              "class-assignment classifier width != cluster size");
      require(local_to_global[i] == clustering.clusters[i], "local-to-global map must enumerate the cluster");
    }
    require(top_k >= 1, "top_k must be >= 1");
  }
};

struct Prediction {
  ClassId class_id = -1;
  double confidence = 0.0;
  int cluster = -1;
  int local_index = -1;
  std::vector<std::pair<ClassId, double>> alternatives;  // descending confidence
};

/// Coarse target per sample: the cluster whose core holds its class.
inline std::vector<int> coarse_labels(const Clustering& clustering, std::span<const ClassId> fine_labels) {
  std::map<ClassId, int> lookup;
  for (std::size_t i = 0; i < clustering.cores.size(); ++i)
    for (ClassId id : clustering.cores[i]) lookup[id] = static_cast<int>(i);
  std::vector<int> out;
  out.reserve(fine_labels.size());
  for (ClassId y : fine_labels) {
    const auto it = lookup.find(y);
    require(it != lookup.end(), "class " + std::to_string(y) + " is in no cluster core");
    out.push_back(it->second);
  }
  return out;
}

/// Softmax configs for the hierarchy classifier and every class-assignment classifier,
/// sharing one hidden-layer layout per stage.
inline MLPConfig stage_config(int input_dim, std::vector<int> hidden, int outputs, double dropout = 0.0) {
  MLPConfig c;
  c.input_dim = input_dim;
  c.hidden_layers = std::move(hidden);
  c.output_dim = outputs;
  c.dropout_rate = dropout;
  return c;
}

inline std::vector<MLPConfig> assign_configs_for(const Clustering& clustering, int input_dim,
                                                 const std::vector<int>& hidden, double dropout = 0.0) {
  std::vector<MLPConfig> out;
  for (const auto& q : clustering.clusters)
    out.push_back(stage_config(input_dim, hidden, static_cast<int>(q.size()), dropout));
  return out;
}

/// Rows whose label is in `classes`, with labels re-indexed to positions in `classes`.
inline std::pair<std::vector<std::size_t>, std::vector<int>> cluster_rows(std::span<const ClassId> fine_labels,
                                                                          const std::vector<ClassId>& classes) {
  std::map<ClassId, int> local;
  for (std::size_t i = 0; i < classes.size(); ++i) local[classes[i]] = static_cast<int>(i);
  std::vector<std::size_t> rows;
  std::vector<int> labels;
  for (std::size_t r = 0; r < fine_labels.size(); ++r) {
    const auto it = local.find(fine_labels[r]);
    if (it == local.end()) continue;
    rows.push_back(r);
    labels.push_back(it->second);
  }
  return {rows, labels};
}

/// Seed of class-assignment classifier i: the run seed plus i.
inline TrainSpec assign_spec(const TrainSpec& spec, std::size_t cluster) {
  TrainSpec s = spec;
  s.seed = spec.seed + cluster;
  return s;
}

inline TrainSpec hierarchy_spec(const TrainSpec& spec) {
  TrainSpec s = spec;
  s.seed = derive_seed(spec.seed, "hierarchy");
  return s;
}

inline int default_top_k(const Clustering& c) { return c.overlapping ? std::min<int>(2, static_cast<int>(c.size())) : 1; }

inline StageClassifier train_stage(const Matrix& x, std::span<const int> labels, const MLPConfig& config,
                                   const TrainSpec& spec) {
  StageClassifier s;
  s.outputs = config.output_dim;
  if (config.output_dim >= 2) s.net = train(x, labels, config, spec);
  return s;
}

inline HierarchicalModel train_hierarchical(const Matrix& features, std::span<const ClassId> fine_labels,
                                            const Clustering& clustering, const MLPConfig& hier_config,
                                            const std::vector<MLPConfig>& assign_configs, const TrainSpec& spec,
                                            std::optional<int> top_k = std::nullopt) {
  clustering.validate();
  const std::size_t c = clustering.size();
  require(assign_configs.size() == c, "need one class-assignment config per cluster");
  require(hier_config.output_dim == static_cast<int>(c), "hierarchy config output must equal cluster count");
  for (std::size_t i = 0; i < c; ++i)
    require(assign_configs[i].output_dim == static_cast<int>(clustering.clusters[i].size()),
            "class-assignment config " + std::to_string(i) + " output does not match cluster size");
  require(static_cast<Eigen::Index>(fine_labels.size()) == features.rows(), "label count does not match features");

  HierarchicalModel model;
  model.clustering = clustering;
  model.local_to_global = clustering.clusters;
  model.top_k = top_k.value_or(default_top_k(clustering));
  model.assign.resize(c);

  const std::vector<int> coarse = coarse_labels(clustering, fine_labels);
  std::vector<std::pair<std::vector<std::size_t>, std::vector<int>>> subsets(c);
  for (std::size_t i = 0; i < c; ++i) {
    subsets[i] = cluster_rows(fine_labels, clustering.clusters[i]);
    require(!subsets[i].first.empty(), "cluster " + std::to_string(i) + " has no training samples");
  }

  parallel_for(c + 1, [&](std::size_t task) {
    if (task == c) {
      model.hierarchy = train_stage(features, coarse, hier_config, hierarchy_spec(spec));
      return;
    }
    const Matrix xs = detail::gather_rows(features, subsets[task].first);
    model.assign[task] = train_stage(xs, subsets[task].second, assign_configs[task], assign_spec(spec, task));
  });
  model.validate();
  return model;
}

/// Routes every row through the top-k clusters. A class reached through several clusters
/// keeps its highest score.
inline std::vector<Prediction> infer_batch(const HierarchicalModel& model, const Matrix& features,
                                           std::optional<int> top_k = std::nullopt) {
  const int c = static_cast<int>(model.num_clusters());
  const int k = std::clamp(top_k.value_or(model.top_k), 1, c);
  require(k >= 1, "top_k must be >= 1");
  if (model.hierarchy.net) detail::check_input(*model.hierarchy.net, features);
  const Matrix p = model.hierarchy.proba(features);
  std::vector<Matrix> q(static_cast<std::size_t>(c));
  for (int j = 0; j < c; ++j) q[j] = model.assign[j].proba(features);

  std::vector<Prediction> out(static_cast<std::size_t>(features.rows()));
  std::vector<int> order(static_cast<std::size_t>(c));
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p(r, a) > p(r, b); });
    std::map<ClassId, std::tuple<double, int, int>> best;  // class -> (score, cluster, local)
    for (int t = 0; t < k; ++t) {
      const int j = order[t];
      for (int local = 0; local < q[j].cols(); ++local) {
        const double score = p(r, j) * q[j](r, local);
        const ClassId cls = model.local_to_global[j][local];
        auto it = best.find(cls);
        if (it == best.end() || score > std::get<0>(it->second)) best[cls] = {score, j, local};
      }
    }
    Prediction& pred = out[static_cast<std::size_t>(r)];
    for (const auto& [cls, v] : best) pred.alternatives.emplace_back(cls, std::get<0>(v));
    std::stable_sort(pred.alternatives.begin(), pred.alternatives.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    pred.class_id = pred.alternatives.front().first;
    const auto& [score, j, local] = best.at(pred.class_id);
    pred.confidence = score;
    pred.cluster = j;
    pred.local_index = local;
  }
  return out;
}

inline Prediction infer(const HierarchicalModel& model, const Eigen::RowVectorXd& sample,
                        std::optional<int> top_k = std::nullopt) {
  return infer_batch(model, Matrix(sample), top_k).front();
}

struct HierarchicalScore {
  double hc = 0.0;  // hierarchy classifier vs coarse labels
  double fc = 0.0;  // final classification vs fine labels
};

inline HierarchicalScore evaluate_hierarchical(const HierarchicalModel& model, const Matrix& features,
                                               std::span<const ClassId> fine_labels,
                                               std::optional<int> top_k = std::nullopt) {
  require(features.rows() >= 1, "evaluation set is empty");
  require(static_cast<Eigen::Index>(fine_labels.size()) == features.rows(), "label count does not match features");
  const auto coarse = coarse_labels(model.clustering, fine_labels);
  const Matrix p = model.hierarchy.proba(features);
  const auto preds = infer_batch(model, features, top_k);
  std::size_t hc = 0, fc = 0;
  for (std::size_t i = 0; i < fine_labels.size(); ++i) {
    hc += argmax(p.row(static_cast<Eigen::Index>(i))) == coarse[i];
    fc += preds[i].class_id == fine_labels[i];
  }
  const double n = static_cast<double>(fine_labels.size());
  return {static_cast<double>(hc) / n, static_cast<double>(fc) / n};
}

// Bundle JSON

inline nlohmann::json stage_to_json(const StageClassifier& s) {
  return {{"outputs", s.outputs}, {"model", s.net ? mlp_to_json(*s.net) : nlohmann::json(nullptr)}};
}

inline StageClassifier stage_from_json(const nlohmann::json& j) {
  StageClassifier s;
  s.outputs = j.at("outputs").get<int>();
  if (!j.at("model").is_null()) {
    s.net = mlp_from_json(j["model"]);
    require(s.net->config.output_dim == s.outputs, "stage model width mismatch");
  } else {
    require(s.outputs == 1, "constant stage classifier must have one output");
  }
  return s;
}

inline nlohmann::json bundle_to_json(const HierarchicalModel& m) {
  nlohmann::json j;
  j["format"] = "hierdecomp-bundle";
  j["version"] = 1;
  j["top_k"] = m.top_k;
  j["clustering"] = clustering_to_json(m.clustering);
  j["hierarchy"] = stage_to_json(m.hierarchy);
  nlohmann::json assign = nlohmann::json::array();
  for (std::size_t i = 0; i < m.assign.size(); ++i) {
    nlohmann::json a = stage_to_json(m.assign[i]);
    a["classes"] = m.local_to_global[i];
    if (i < m.selected_ids.size()) a["selected"] = m.selected_ids[i];
    assign.push_back(std::move(a));
  }
  j["assign"] = std::move(assign);
  return j;
}

inline HierarchicalModel bundle_from_json(const nlohmann::json& j) {
  try {
    require(j.value("format", std::string()) == "hierdecomp-bundle", "not a hierdecomp model bundle");
    HierarchicalModel m;
    m.top_k = j.at("top_k").get<int>();
    m.clustering = clustering_from_json(j.at("clustering"));
    m.hierarchy = stage_from_json(j.at("hierarchy"));
    for (const auto& a : j.at("assign")) {
      m.assign.push_back(stage_from_json(a));
      m.local_to_global.push_back(a.at("classes").get<std::vector<ClassId>>());
      if (a.contains("selected")) m.selected_ids.push_back(a["selected"].get<std::string>());
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model bundle: ") + e.what());
  }
}

}  // namespace hierdecomp
