/*
 * Copyright 2026 The hierdecomp Authors
 * SPDX-License-Identifier: Apache-2.0
 */

/// @file netselect.hpp
/// @brief Per-cluster network selection: score every candidate network on a cluster's
/// holdout, keep the winner, accumulate (cluster statistics -> winner) rows, and fit a
/// regressor that proposes a network for unseen clusters.
#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "confmat.hpp"
#include "datagen.hpp"
#include "hiernet.hpp"
#include "mlp.hpp"

namespace hierdecomp {

struct ClusterFeatures {
  static constexpr int kSize = 5;

  double n_classes = 0;
  double mean_offdiag_confusion = 0;
  double max_offdiag_confusion = 0;
  double confusion_entropy = 0;  // mean row entropy, nats
  double sample_count = 0;

  std::array<double, kSize> values() const {
    return {n_classes, mean_offdiag_confusion, max_offdiag_confusion, confusion_entropy, sample_count};
  }
};

struct Candidate {
  std::string id;
  std::vector<int> hidden_layers;
  double dropout_rate = 0.0;

  int layers() const { return static_cast<int>(hidden_layers.size()); }
  int units() const {
    int n = 0;
    for (int w : hidden_layers) n += w;
    return n;
  }
  MLPConfig config(int input_dim, int outputs) const { return stage_config(input_dim, hidden_layers, outputs, dropout_rate); }
};

struct CandidateSet {
  std::vector<Candidate> candidates;

  std::size_t size() const { return candidates.size(); }
  const Candidate& operator[](std::size_t i) const { return candidates[i]; }

  int index_of(const std::string& id) const {
    for (std::size_t i = 0; i < candidates.size(); ++i)
      if (candidates[i].id == id) return static_cast<int>(i);
    return -1;
  }

  void validate() const {
    require(!candidates.empty(), "candidate set is empty");
    std::set<std::string> ids;
    for (const auto& c : candidates) {
      require(!c.id.empty(), "candidate id is empty");
      require(ids.insert(c.id).second, "duplicate candidate id " + c.id);
      for (int w : c.hidden_layers) require(w >= 1, "candidate " + c.id + " has a zero-width layer");
    }
  }
};

struct MetaRow {
  ClusterFeatures features;
  std::string best_id;
  int best_layers = 0;
  int best_units = 0;
};

struct MetaDataset {
  std::vector<MetaRow> rows;
};

/// Statistics of the row-normalized confusion restricted to `cluster`.
inline ClusterFeatures cluster_features(const ConfusionMatrix& cm, std::span<const ClassId> cluster,
                                        std::size_t sample_count) {
  require(!cluster.empty(), "cluster is empty");
  const ConfusionMatrix sub = sub_confusion(cm, cluster);
  const Eigen::Index n = sub.counts.rows();
  Matrix r = sub.counts;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = r.row(i).sum();
    if (s > 0.0) r.row(i) /= s;
  }
  ClusterFeatures f;
  f.n_classes = static_cast<double>(n);
  f.sample_count = static_cast<double>(sample_count);
  double off_sum = 0.0, off_max = 0.0, entropy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double h = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = r(i, j);
      if (v > 0.0) h -= v * std::log(v);
      if (i != j) {
        off_sum += v;
        off_max = std::max(off_max, v);
      }
    }
    entropy += h;
  }
  if (n > 1) f.mean_offdiag_confusion = off_sum / static_cast<double>(n * (n - 1));
  f.max_offdiag_confusion = off_max;
  f.confusion_entropy = std::max(0.0, entropy / static_cast<double>(n));
  return f;
}

struct Selection {
  int best_index = 0;
  std::string best_id;
  std::vector<double> accuracies;  // per candidate, holdout
  ConfusionMatrix probe_confusion;  // first candidate on the holdout, local class ids
  std::size_t sample_count = 0;
};

namespace detail {

inline std::string cluster_key(std::span<const ClassId> cluster) {
  std::string s;
  for (std::size_t i = 0; i < cluster.size(); ++i) s += (i ? "-" : "") + std::to_string(cluster[i]);
  return s;
}

inline std::string candidate_key(const Candidate& c) {
  return MLPConfig{1, c.hidden_layers, 1, c.dropout_rate}.signature() + "/d" + format_double(c.dropout_rate);
}

}  // namespace detail

/// Trains every candidate (output resized to the cluster) on a stratified split of the
/// cluster's samples and scores it on the holdout. The first strictly better accuracy
/// wins, so ties go to the earlier candidate. A candidate's seed depends on its layer
/// layout and the cluster, not on its id or position.
inline Selection select_best(const Matrix& features, std::span<const ClassId> labels,
                             std::span<const ClassId> cluster, const CandidateSet& candidates, const TrainSpec& spec,
                             double holdout = 0.2) {
  candidates.validate();
  require(cluster.size() >= 2, "selection needs a cluster with at least two classes");
  require(holdout > 0.0 && holdout < 1.0, "holdout fraction must be in (0, 1)");
  std::vector<ClassId> classes(cluster.begin(), cluster.end());
  std::sort(classes.begin(), classes.end());
  const auto [rows, local] = cluster_rows(labels, classes);
  require(rows.size() >= 10, "selection needs at least 10 samples in the cluster");

  Dataset ds;
  ds.features = detail::gather_rows(features, rows);
  ds.labels = local;
  ds.num_classes = static_cast<int>(classes.size());
  const std::string key = detail::cluster_key(classes);
  const auto [train_set, test_set] = split(ds, 1.0 - holdout, derive_seed(spec.seed, "holdout/" + key));

  Selection sel;
  sel.sample_count = rows.size();
  sel.accuracies.assign(candidates.size(), 0.0);
  std::vector<std::vector<int>> predictions(candidates.size());
  parallel_for(candidates.size(), [&](std::size_t i) {
    TrainSpec s = spec;
    s.seed = derive_seed(spec.seed, "select/" + key + "/" + detail::candidate_key(candidates[i]));
    const MLPModel m = train(train_set.features, train_set.labels,
                             candidates[i].config(ds.dim(), ds.num_classes), s);
    predictions[i] = predict_labels(m, test_set.features);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < predictions[i].size(); ++r) hits += predictions[i][r] == test_set.labels[r];
    sel.accuracies[i] = static_cast<double>(hits) / static_cast<double>(test_set.size());
  });
  double best = sel.accuracies[0];
  for (std::size_t i = 1; i < candidates.size(); ++i)
    if (sel.accuracies[i] > best) {
      best = sel.accuracies[i];
      sel.best_index = static_cast<int>(i);
    }
  sel.best_id = candidates[sel.best_index].id;
  sel.probe_confusion = build_confusion(test_set.labels, predictions[0], ds.num_classes);
  return sel;
}

struct Selector {
  MLPModel regressor;
  CandidateSet candidates;
};

/// Nearest candidate in (layers, units) space, each axis scaled by the candidates' range.
/// Ties go to the smaller net (fewer units, then fewer layers, then earlier).
inline int snap_to_candidate(const CandidateSet& candidates, double layers, double units) {
  candidates.validate();
  double lmin = 1e300, lmax = -1e300, umin = 1e300, umax = -1e300;
  for (const auto& c : candidates.candidates) {
    lmin = std::min(lmin, double(c.layers()));
    lmax = std::max(lmax, double(c.layers()));
    umin = std::min(umin, double(c.units()));
    umax = std::max(umax, double(c.units()));
  }
  const double lr = lmax > lmin ? lmax - lmin : 1.0;
  const double ur = umax > umin ? umax - umin : 1.0;
  int best = -1;
  double best_d = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const double dl = (c.layers() - layers) / lr;
    const double du = (c.units() - units) / ur;
    const double d = dl * dl + du * du;
    if (best < 0 || d < best_d) {
      best = static_cast<int>(i);
      best_d = d;
      continue;
    }
    if (d == best_d) {
      const auto& b = candidates[static_cast<std::size_t>(best)];
      if (std::pair(c.units(), c.layers()) < std::pair(b.units(), b.layers())) best = static_cast<int>(i);
    }
  }
  return best;
}

inline Selector train_selector(const MetaDataset& meta, const CandidateSet& candidates, const TrainSpec& spec) {
  require(meta.rows.size() >= 5, "selector training needs at least 5 meta-dataset rows");
  candidates.validate();
  const auto n = static_cast<Eigen::Index>(meta.rows.size());
  Matrix x(n, ClusterFeatures::kSize), y(n, 2);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = meta.rows[static_cast<std::size_t>(r)];
    require(candidates.index_of(row.best_id) >= 0, "meta row references unknown candidate " + row.best_id);
    const auto v = row.features.values();
    for (int c = 0; c < ClusterFeatures::kSize; ++c) x(r, c) = v[static_cast<std::size_t>(c)];
    y(r, 0) = row.best_layers;
    y(r, 1) = row.best_units;
  }
  MLPConfig cfg;
  cfg.input_dim = ClusterFeatures::kSize;
  cfg.hidden_layers = {8};
  cfg.output_dim = 2;
  cfg.output = OutputKind::kLinear;
  TrainSpec s = spec;
  s.seed = derive_seed(spec.seed, "selector");
  s.batch_size = std::min<int>(s.batch_size, static_cast<int>(n));
  return {train_regressor(x, y, cfg, s), candidates};
}

inline std::string predict_config(const Selector& selector, const ClusterFeatures& f) {
  const auto v = f.values();
  Matrix x(1, ClusterFeatures::kSize);
  for (int c = 0; c < ClusterFeatures::kSize; ++c) x(0, c) = v[static_cast<std::size_t>(c)];
  const Matrix y = predict_values(selector.regressor, x);
  return selector.candidates[static_cast<std::size_t>(snap_to_candidate(selector.candidates, y(0, 0), y(0, 1)))].id;
}

struct AdaptiveResult {
  HierarchicalModel model;
  MetaDataset meta;
  std::vector<Selection> selections;  // empty accuracies for single-class clusters
};

/// Runs select_best on every cluster, then trains the hierarchical model with each
/// cluster's winning network. Cluster statistics come from the first candidate's holdout
/// confusion. Single-class clusters keep a constant classifier and record the first
/// candidate.
inline AdaptiveResult build_adaptive_hierarchical(const Matrix& features, std::span<const ClassId> labels,
                                                  const Clustering& clustering, const CandidateSet& candidates,
                                                  const MLPConfig& hier_config, const TrainSpec& spec,
                                                  double holdout = 0.2, std::optional<int> top_k = std::nullopt) {
  candidates.validate();
  clustering.validate();
  AdaptiveResult out;
  const std::size_t c = clustering.size();
  out.selections.resize(c);
  std::vector<MLPConfig> configs;
  std::vector<std::string> chosen;
  for (std::size_t i = 0; i < c; ++i) {
    const auto& q = clustering.clusters[i];
    MetaRow row;
    if (q.size() >= 2) {
      out.selections[i] = select_best(features, labels, q, candidates, spec, holdout);
      std::vector<ClassId> local(q.size());
      std::iota(local.begin(), local.end(), 0);
      row.features = cluster_features(out.selections[i].probe_confusion, local, out.selections[i].sample_count);
    } else {
      out.selections[i].best_id = candidates[0].id;
      out.selections[i].sample_count = cluster_rows(labels, q).first.size();
      row.features.n_classes = 1;
      row.features.sample_count = static_cast<double>(out.selections[i].sample_count);
    }
    const Candidate& best = candidates[static_cast<std::size_t>(out.selections[i].best_index)];
    row.best_id = best.id;
    row.best_layers = best.layers();
    row.best_units = best.units();
    out.meta.rows.push_back(row);
    configs.push_back(best.config(static_cast<int>(features.cols()), static_cast<int>(q.size())));
    chosen.push_back(best.id);
  }
  out.model = train_hierarchical(features, labels, clustering, hier_config, configs, spec, top_k);
  out.model.selected_ids = chosen;
  return out;
}

// Persistence

inline std::string meta_to_csv(const MetaDataset& meta) {
  std::ostringstream out;
  out << "n_classes,mean_offdiag_confusion,max_offdiag_confusion,confusion_entropy,sample_count,best_id,layers,units\n";
  for (const auto& r : meta.rows) {
    for (double v : r.features.values()) out << detail::format_double(v) << ',';
    out << r.best_id << ',' << r.best_layers << ',' << r.best_units << '\n';
  }
  return out.str();
}

inline MetaDataset meta_from_csv(std::istream& in) {
  MetaDataset meta;
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::strip(line);
    if (t.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto cells = detail::split_csv_line(t);
    if (cells.size() != 8) throw ValidationError("line " + std::to_string(line_no) + ": expected 8 columns");
    MetaRow r;
    r.features.n_classes = detail::parse_number(cells[0], line_no);
    r.features.mean_offdiag_confusion = detail::parse_number(cells[1], line_no);
    r.features.max_offdiag_confusion = detail::parse_number(cells[2], line_no);
    r.features.confusion_entropy = detail::parse_number(cells[3], line_no);
    r.features.sample_count = detail::parse_number(cells[4], line_no);
    r.best_id = detail::strip(cells[5]);
    r.best_layers = static_cast<int>(detail::parse_number(cells[6], line_no));
    r.best_units = static_cast<int>(detail::parse_number(cells[7], line_no));
    meta.rows.push_back(r);
  }
  return meta;
}

inline nlohmann::json candidates_to_json(const CandidateSet& set) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : set.candidates)
    j.push_back({{"id", c.id}, {"hidden_layers", c.hidden_layers}, {"dropout_rate", c.dropout_rate}});
  return j;
}

inline CandidateSet candidates_from_json(const nlohmann::json& j) {
  CandidateSet set;
  try {
    const auto& arr = j.is_object() ? j.at("candidates") : j;
    for (const auto& c : arr)
      set.candidates.push_back({c.at("id").get<std::string>(), c.at("hidden_layers").get<std::vector<int>>(),
                                c.value("dropout_rate", 0.0)});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed candidate set: ") + e.what());
  }
  set.validate();
  return set;
}

inline nlohmann::json selector_to_json(const Selector& s) {
  return {{"model", mlp_to_json(s.regressor)}, {"candidates", candidates_to_json(s.candidates)}};
}

inline Selector selector_from_json(const nlohmann::json& j) {
  return {mlp_from_json(j.at("model")), candidates_from_json(j.at("candidates"))};
}

}  // namespace hierdecomp
