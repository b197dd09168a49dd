/*
 * Copyright 2026 The hierdecomp Authors
 * SPDX-License-Identifier: Apache-2.0
 */

/// @file confmat.hpp
/// @brief Confusion matrices and the dissimilarity / posterior matrices derived from them.
///
/// A confusion matrix is read row = true class, column = predicted class. Clustering
/// consumes two transforms of it: a symmetric dissimilarity (for linkage) and a
/// column-normalized posterior (for overlap expansion).
#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"

namespace hierdecomp {

struct ConfusionMatrix {
  Eigen::MatrixXd counts;  // K x K, rows = true class
  std::vector<ClassId> class_ids;
  int stage = 0;

  std::size_t size() const { return class_ids.size(); }

  /// Position of a class id in class_ids, or -1.
  int index_of(ClassId id) const {
    for (std::size_t i = 0; i < class_ids.size(); ++i)
      if (class_ids[i] == id) return static_cast<int>(i);
    return -1;
  }

  void validate() const {
    const auto k = static_cast<Eigen::Index>(class_ids.size());
    require(k >= 1, "confusion matrix must have at least one class");
    require(counts.rows() == k && counts.cols() == k, "confusion matrix must be square and match class_ids");
    require((counts.array() >= 0.0).all() && counts.allFinite(), "confusion counts must be finite and non-negative");
  }
};

struct DissimilarityMatrix {
  Eigen::MatrixXd values;
  std::vector<ClassId> class_ids;

  std::size_t size() const { return class_ids.size(); }
};

struct PosteriorMatrix {
  Eigen::MatrixXd values;  // values(i, j) = P(true class i | predicted class j)
  std::vector<ClassId> class_ids;
  std::vector<bool> zero_column;  // source column had no predictions

  std::size_t size() const { return class_ids.size(); }

  int index_of(ClassId id) const {
    for (std::size_t i = 0; i < class_ids.size(); ++i)
      if (class_ids[i] == id) return static_cast<int>(i);
    return -1;
  }
};

inline ConfusionMatrix build_confusion(std::span<const int> true_labels, std::span<const int> predicted_labels,
                                       int num_classes) {
  require(num_classes >= 1, "class count must be >= 1");
  require(true_labels.size() == predicted_labels.size(), "label lists differ in length");
  require(!true_labels.empty(), "label lists are empty");
  ConfusionMatrix cm;
  cm.counts = Eigen::MatrixXd::Zero(num_classes, num_classes);
  cm.class_ids.resize(num_classes);
  for (int i = 0; i < num_classes; ++i) cm.class_ids[i] = i;
  for (std::size_t n = 0; n < true_labels.size(); ++n) {
    const int t = true_labels[n];
    const int p = predicted_labels[n];
    require(t >= 0 && t < num_classes && p >= 0 && p < num_classes,
            "label out of range at position " + std::to_string(n));
    cm.counts(t, p) += 1.0;
  }
  return cm;
}

/// Row-normalize to recall proportions, take 1 - C', zero the diagonal, symmetrize.
/// The upper triangle is mirrored so symmetry holds bit-for-bit.
inline DissimilarityMatrix to_dissimilarity(const ConfusionMatrix& cm) {
  cm.validate();
  const Eigen::Index k = cm.counts.rows();
  Eigen::MatrixXd d(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double total = cm.counts.row(i).sum();
    require(total > 0.0, "class " + std::to_string(cm.class_ids[i]) + " has no evaluated samples");
    for (Eigen::Index j = 0; j < k; ++j) d(i, j) = 1.0 - cm.counts(i, j) / total;
  }
  DissimilarityMatrix out{Eigen::MatrixXd::Zero(k, k), cm.class_ids};
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const double v = std::clamp(0.5 * (d(i, j) + d(j, i)), 0.0, 1.0);
      out.values(i, j) = v;
      out.values(j, i) = v;
    }
  }
  return out;
}

inline PosteriorMatrix column_normalize(const ConfusionMatrix& cm) {
  cm.validate();
  const Eigen::Index k = cm.counts.rows();
  PosteriorMatrix out{Eigen::MatrixXd::Zero(k, k), cm.class_ids, std::vector<bool>(k, false)};
  for (Eigen::Index j = 0; j < k; ++j) {
    const double total = cm.counts.col(j).sum();
    if (total <= 0.0) {
      out.zero_column[j] = true;
      continue;
    }
    out.values.col(j) = cm.counts.col(j) / total;
  }
  return out;
}

inline ConfusionMatrix sub_confusion(const ConfusionMatrix& cm, std::span<const ClassId> subset) {
  require(!subset.empty(), "subset is empty");
  std::vector<Eigen::Index> idx;
  idx.reserve(subset.size());
  for (ClassId id : subset) {
    const int i = cm.index_of(id);
    require(i >= 0, "class " + std::to_string(id) + " not in confusion matrix");
    idx.push_back(i);
  }
  const auto n = static_cast<Eigen::Index>(idx.size());
  ConfusionMatrix out;
  out.counts.resize(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) out.counts(a, b) = cm.counts(idx[a], idx[b]);
  out.class_ids.assign(subset.begin(), subset.end());
  out.stage = cm.stage;
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string strip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  return s.substr(b);
}

inline double parse_number(const std::string& raw, std::size_t line_no) {
  const std::string s = strip(raw);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw ValidationError("line " + std::to_string(line_no) + ": non-numeric cell '" + s + "'");
  return v;
}

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline std::string confusion_to_csv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  for (std::size_t i = 0; i < cm.class_ids.size(); ++i) out << (i ? "," : "") << cm.class_ids[i];
  out << '\n';
  for (Eigen::Index r = 0; r < cm.counts.rows(); ++r) {
    for (Eigen::Index c = 0; c < cm.counts.cols(); ++c)
      out << (c ? "," : "") << detail::format_double(cm.counts(r, c));
    out << '\n';
  }
  return out.str();
}

inline ConfusionMatrix confusion_from_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  ConfusionMatrix cm;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::strip(line).empty()) continue;
    const auto cells = detail::split_csv_line(detail::strip(line));
    if (cm.class_ids.empty()) {
      for (const auto& c : cells) cm.class_ids.push_back(static_cast<ClassId>(detail::parse_number(c, line_no)));
      continue;
    }
    if (cells.size() != cm.class_ids.size())
      throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(cm.class_ids.size()) + " cells, got " + std::to_string(cells.size()));
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(detail::parse_number(c, line_no));
    rows.push_back(std::move(row));
  }
  require(!cm.class_ids.empty(), "confusion CSV is empty");
  require(rows.size() == cm.class_ids.size(), "confusion CSV must have one count row per class");
  const auto k = static_cast<Eigen::Index>(rows.size());
  cm.counts.resize(k, k);
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = 0; c < k; ++c) cm.counts(r, c) = rows[r][c];
  cm.validate();
  return cm;
}

inline ConfusionMatrix load_confusion_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return confusion_from_csv(in);
}

inline void save_confusion_csv(const ConfusionMatrix& cm, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << confusion_to_csv(cm);
}

}  // namespace hierdecomp
