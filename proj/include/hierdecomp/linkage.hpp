/*
 * Copyright 2026 The hierdecomp Authors
 * SPDX-License-Identifier: Apache-2.0
 */

/// @file linkage.hpp
/// @brief Average-linkage (UPGMA) dendrograms over classes, size-capped cluster cuts,
/// DOT rendering and the clustering JSON format.
#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "common.hpp"
#include "confmat.hpp"

namespace hierdecomp {

/// One agglomeration step. Nodes 0..K-1 are leaves; merge m creates node K+m.
struct Merge {
  int left = 0;
  int right = 0;
  double height = 0.0;
  int size = 0;
};

struct Dendrogram {
  std::vector<ClassId> leaves;
  std::vector<Merge> merges;

  int num_leaves() const { return static_cast<int>(leaves.size()); }
  int root() const { return num_leaves() == 1 ? 0 : 2 * num_leaves() - 2; }

  int node_size(int node) const { return node < num_leaves() ? 1 : merges[node - num_leaves()].size; }

  /// Leaf positions (indices into leaves) under a node, left to right.
  std::vector<int> leaves_under(int node) const {
    std::vector<int> out;
    std::vector<int> stack{node};
    while (!stack.empty()) {
      const int n = stack.back();
      stack.pop_back();
      if (n < num_leaves()) {
        out.push_back(n);
      } else {
        const Merge& m = merges[n - num_leaves()];
        stack.push_back(m.right);
        stack.push_back(m.left);
      }
    }
    return out;
  }
};

struct Clustering {
  std::vector<std::vector<ClassId>> clusters;  // sorted members
  std::vector<std::vector<ClassId>> cores;     // pre-overlap members; equal to clusters when not overlapping
  bool overlapping = false;
  int parent_k = 0;
  std::optional<int> theta;
  std::optional<double> gamma;

  std::size_t size() const { return clusters.size(); }

  std::vector<ClassId> all_classes() const {
    std::set<ClassId> s;
    for (const auto& c : clusters) s.insert(c.begin(), c.end());
    return {s.begin(), s.end()};
  }

  /// Index of the cluster whose core holds `id`, or -1.
  int core_cluster_of(ClassId id) const {
    for (std::size_t i = 0; i < cores.size(); ++i)
      if (std::binary_search(cores[i].begin(), cores[i].end(), id)) return static_cast<int>(i);
    return -1;
  }

  void validate() const {
    require(!clusters.empty(), "clustering has no clusters");
    require(cores.size() == clusters.size(), "clustering cores/clusters length mismatch");
    std::set<ClassId> seen;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      require(!clusters[i].empty() && !cores[i].empty(), "clustering contains an empty cluster");
      require(std::is_sorted(clusters[i].begin(), clusters[i].end()), "cluster members must be sorted");
      require(std::includes(clusters[i].begin(), clusters[i].end(), cores[i].begin(), cores[i].end()),
              "cluster does not contain its core");
      for (ClassId id : cores[i]) require(seen.insert(id).second, "class " + std::to_string(id) + " in two cores");
    }
    require(seen.size() == all_classes().size(), "every class must belong to exactly one core");
    if (!overlapping) require(cores == clusters, "non-overlapping clustering must have clusters equal to cores");
    if (theta && !overlapping)
      for (const auto& c : clusters) require(static_cast<int>(c.size()) <= *theta, "cluster exceeds theta");
  }
};

/// Average-linkage agglomeration. Ties on distance go to the pair with the smallest
/// (min representative, max representative), a cluster's representative being its
/// smallest leaf position.
inline Dendrogram upgma_linkage(const DissimilarityMatrix& dm) {
  const int k = static_cast<int>(dm.size());
  require(k >= 2, "linkage needs at least two classes");
  require(dm.values.rows() == k && dm.values.cols() == k, "dissimilarity matrix shape mismatch");

  // d holds average linkage; s holds the underlying sums so each average is one division.
  Eigen::MatrixXd d = dm.values, s = dm.values;
  std::vector<bool> active(k, true);
  std::vector<int> node(k), count(k, 1);
  for (int i = 0; i < k; ++i) node[i] = i;

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<int> nn(k, -1);
  std::vector<double> nn_dist(k, kInf);
  auto refresh = [&](int i) {
    nn[i] = -1;
    nn_dist[i] = kInf;
    for (int j = 0; j < k; ++j) {
      if (j == i || !active[j]) continue;
      if (d(i, j) < nn_dist[i]) {
        nn_dist[i] = d(i, j);
        nn[i] = j;
      }
    }
  };
  for (int i = 0; i < k; ++i) refresh(i);

  Dendrogram out;
  out.leaves = dm.class_ids;
  out.merges.reserve(k - 1);
  for (int step = 0; step < k - 1; ++step) {
    int a = -1;
    for (int i = 0; i < k; ++i) {
      if (!active[i] || nn[i] < 0) continue;
      if (a < 0) {
        a = i;
        continue;
      }
      const auto key = [&](int r) { return std::tuple(nn_dist[r], std::min(r, nn[r]), std::max(r, nn[r])); };
      if (key(i) < key(a)) a = i;
    }
    int b = nn[a];
    if (b < a) std::swap(a, b);
    const double height = d(a, b);

    out.merges.push_back({node[a], node[b], height, count[a] + count[b]});
    const double merged = count[a] + count[b];
    for (int j = 0; j < k; ++j) {
      if (!active[j] || j == a || j == b) continue;
      s(a, j) = s(j, a) = s(a, j) + s(b, j);
      d(a, j) = d(j, a) = s(a, j) / (merged * count[j]);
    }
    active[b] = false;
    count[a] += count[b];
    node[a] = k + step;

    for (int j = 0; j < k; ++j) {
      if (!active[j] || j == a) continue;
      if (nn[j] == a || nn[j] == b) {
        refresh(j);
      } else if (d(j, a) < nn_dist[j] || (d(j, a) == nn_dist[j] && a < nn[j])) {
        nn[j] = a;
        nn_dist[j] = d(j, a);
      }
    }
    refresh(a);
  }
  return out;
}

/// Top-down cut: a subtree with at most `theta` leaves becomes a cluster, larger
/// subtrees are split at their top merge.
inline Clustering cut_clusters(const Dendrogram& dg, int theta) {
  require(theta >= 1, "theta must be >= 1");
  require(dg.num_leaves() >= 1, "dendrogram has no leaves");
  Clustering out;
  std::vector<int> stack{dg.root()};
  while (!stack.empty()) {
    const int n = stack.back();
    stack.pop_back();
    if (dg.node_size(n) <= theta) {
      std::vector<ClassId> members;
      for (int leaf : dg.leaves_under(n)) members.push_back(dg.leaves[leaf]);
      std::sort(members.begin(), members.end());
      out.clusters.push_back(std::move(members));
    } else {
      const Merge& m = dg.merges[n - dg.num_leaves()];
      stack.push_back(m.right);
      stack.push_back(m.left);
    }
  }
  std::sort(out.clusters.begin(), out.clusters.end());
  out.cores = out.clusters;
  out.parent_k = dg.num_leaves();
  out.theta = theta;
  return out;
}

/// Graphviz digraph of the dendrogram. Leaves of the same core cluster share a fill color.
inline std::string export_dot(const Dendrogram& dg, const Clustering* clustering = nullptr) {
  std::ostringstream out;
  out << "digraph dendrogram {\n  rankdir=TB;\n  node [fontname=\"Helvetica\"];\n";
  const int k = dg.num_leaves();
  for (int i = 0; i < k; ++i) {
    out << "  n" << i << " [shape=box, label=\"" << dg.leaves[i] << "\"";
    if (clustering) {
      const int c = clustering->core_cluster_of(dg.leaves[i]);
      if (c >= 0) {
        char color[48];
        std::snprintf(color, sizeof color, "%.3f 0.450 0.950",
                      static_cast<double>(c) / static_cast<double>(clustering->size()));
        out << ", style=filled, fillcolor=\"" << color << "\"";
      }
    }
    out << "];\n";
  }
  for (std::size_t m = 0; m < dg.merges.size(); ++m) {
    char label[32];
    std::snprintf(label, sizeof label, "%.3f", dg.merges[m].height);
    out << "  n" << k + static_cast<int>(m) << " [shape=point, xlabel=\"" << label << "\", label=\"" << label
        << "\"];\n";
  }
  for (std::size_t m = 0; m < dg.merges.size(); ++m) {
    const int parent = k + static_cast<int>(m);
    out << "  n" << parent << " -> n" << dg.merges[m].left << ";\n";
    out << "  n" << parent << " -> n" << dg.merges[m].right << ";\n";
  }
  out << "}\n";
  return out.str();
}

inline nlohmann::json clustering_to_json(const Clustering& c) {
  nlohmann::json j;
  j["overlapping"] = c.overlapping;
  j["theta"] = c.theta ? nlohmann::json(*c.theta) : nlohmann::json(nullptr);
  j["gamma"] = c.gamma ? nlohmann::json(*c.gamma) : nlohmann::json(nullptr);
  j["clusters"] = c.clusters;
  j["cores"] = c.cores;
  return j;
}

inline Clustering clustering_from_json(const nlohmann::json& j) {
  Clustering c;
  try {
    c.overlapping = j.at("overlapping").get<bool>();
    if (j.contains("theta") && !j["theta"].is_null()) c.theta = j["theta"].get<int>();
    if (j.contains("gamma") && !j["gamma"].is_null()) c.gamma = j["gamma"].get<double>();
    c.clusters = j.at("clusters").get<std::vector<std::vector<ClassId>>>();
    c.cores = j.contains("cores") ? j["cores"].get<std::vector<std::vector<ClassId>>>() : c.clusters;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed clustering JSON: ") + e.what());
  }
  for (auto& v : c.clusters) std::sort(v.begin(), v.end());
  for (auto& v : c.cores) std::sort(v.begin(), v.end());
  c.parent_k = static_cast<int>(c.all_classes().size());
  c.validate();
  return c;
}

}  // namespace hierdecomp
