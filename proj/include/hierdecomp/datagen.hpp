/*
 * Copyright 2026 The hierdecomp Authors
 * SPDX-License-Identifier: Apache-2.0
 */

/// @file datagen.hpp
/// @brief Labelled feature datasets: CSV I/O, a seeded Gaussian generator with a planted
/// coarse/fine class hierarchy, and stratified splitting.
#pragma once

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "confmat.hpp"
#include "mlp.hpp"

namespace hierdecomp {

struct Dataset {
  Matrix features;  // N x d
  std::vector<int> labels;
  int num_classes = 0;
  std::vector<std::string> class_names;

  std::size_t size() const { return labels.size(); }
  int dim() const { return static_cast<int>(features.cols()); }

  void validate() const {
    require(!labels.empty(), "dataset is empty");
    require(static_cast<Eigen::Index>(labels.size()) == features.rows(), "feature/label row count mismatch");
    require(features.allFinite(), "dataset features must be finite");
    for (int y : labels) require(y >= 0 && y < num_classes, "label out of range");
  }

  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.features = detail::gather_rows(features, rows);
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) out.labels.push_back(labels[r]);
    out.num_classes = num_classes;
    out.class_names = class_names;
    return out;
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> c(static_cast<std::size_t>(num_classes), 0);
    for (int y : labels) ++c[static_cast<std::size_t>(y)];
    return c;
  }
};

inline Dataset dataset_from_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string trimmed = detail::strip(line);
    if (trimmed.empty()) continue;
    const auto cells = detail::split_csv_line(trimmed);
    if (columns == 0) {
      require(cells.size() >= 2 && detail::strip(cells[0]) == "label",
              "line " + std::to_string(line_no) + ": header must be label,f0,f1,...");
      columns = cells.size();
      continue;
    }
    if (cells.size() != columns)
      throw ValidationError("line " + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                            " columns, got " + std::to_string(cells.size()));
    const double y = detail::parse_number(cells[0], line_no);
    if (y < 0 || y != static_cast<double>(static_cast<int>(y)))
      throw ValidationError("line " + std::to_string(line_no) + ": label must be a non-negative integer");
    labels.push_back(static_cast<int>(y));
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      row.push_back(detail::parse_number(cells[c], line_no));
      if (!std::isfinite(row.back()))
        throw ValidationError("line " + std::to_string(line_no) + ": non-finite feature");
    }
    rows.push_back(std::move(row));
  }
  require(columns > 0, "dataset CSV has no header");
  require(!rows.empty(), "dataset CSV has no rows");
  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns - 1));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c + 1 < columns; ++c) ds.features(r, c) = rows[r][c];
  ds.labels = std::move(labels);
  ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  return ds;
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return dataset_from_csv(in);
}

inline std::string dataset_to_csv(const Dataset& ds) {
  std::ostringstream out;
  out << "label";
  for (int c = 0; c < ds.dim(); ++c) out << ",f" << c;
  out << '\n';
  for (std::size_t r = 0; r < ds.size(); ++r) {
    out << ds.labels[r];
    for (int c = 0; c < ds.dim(); ++c) out << ',' << detail::format_double(ds.features(r, c));
    out << '\n';
  }
  return out.str();
}

inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << dataset_to_csv(ds);
}

/// Separations are in units of the within-class standard deviation.
struct SynthSpec {
  int coarse_groups = 4;
  int classes_per_group = 3;
  int samples_per_class = 100;
  int dim = 16;
  double coarse_separation = 10.0;
  double fine_separation = 3.0;
  double sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(coarse_groups >= 1 && classes_per_group >= 1 && samples_per_class >= 1 && dim >= 1,
            "synthetic spec counts must be >= 1");
    require(coarse_separation >= 0.0 && fine_separation >= 0.0, "separations must be >= 0");
    require(sigma > 0.0, "sigma must be > 0");
  }

  int num_classes() const { return coarse_groups * classes_per_group; }
};

/// Isotropic Gaussian class clouds; class `g * classes_per_group + c` belongs to group g.
///
/// Group centers are (coarse_separation / sqrt 2) * e_g, pairwise exactly
/// coarse_separation apart, when dim >= coarse_groups; otherwise they are drawn on a
/// sphere with rejection until every pair is at least coarse_separation apart. Class
/// offsets within a group are (fine_separation / sqrt 2) * e_a minus their mean, with
/// axis a = (coarse_groups + g * classes_per_group + c) mod dim, so classes of one group
/// are pairwise fine_separation apart whenever those axes are distinct.
inline Dataset generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int d = spec.dim;
  const double sigma = spec.sigma;
  std::vector<Eigen::VectorXd> group_centers;
  if (d >= spec.coarse_groups) {
    for (int g = 0; g < spec.coarse_groups; ++g) {
      Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
      c(g) = spec.coarse_separation * sigma / std::sqrt(2.0);
      group_centers.push_back(c);
    }
  } else {
    const double need = spec.coarse_separation * sigma;
    double radius = std::max(need, 1e-9);
    int attempts = 0;
    while (static_cast<int>(group_centers.size()) < spec.coarse_groups) {
      Eigen::VectorXd c(d);
      for (int i = 0; i < d; ++i) c(i) = rng.normal();
      c *= radius / std::max(c.norm(), 1e-12);
      bool ok = true;
      for (const auto& o : group_centers) ok = ok && (o - c).norm() >= need;
      if (ok) {
        group_centers.push_back(c);
        attempts = 0;
      } else if (++attempts > 1000) {
        radius *= 1.5;
        group_centers.clear();
        attempts = 0;
      }
    }
  }

  Dataset ds;
  ds.num_classes = spec.num_classes();
  const std::size_t n = static_cast<std::size_t>(ds.num_classes) * static_cast<std::size_t>(spec.samples_per_class);
  ds.features.resize(static_cast<Eigen::Index>(n), d);
  ds.labels.reserve(n);
  Eigen::Index row = 0;
  for (int g = 0; g < spec.coarse_groups; ++g) {
    std::vector<Eigen::VectorXd> offsets;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (int c = 0; c < spec.classes_per_group; ++c) {
      Eigen::VectorXd o = Eigen::VectorXd::Zero(d);
      o((spec.coarse_groups + g * spec.classes_per_group + c) % d) = spec.fine_separation * sigma / std::sqrt(2.0);
      mean += o;
      offsets.push_back(o);
    }
    mean /= spec.classes_per_group;
    for (int c = 0; c < spec.classes_per_group; ++c) {
      const Eigen::VectorXd center = group_centers[g] + offsets[c] - mean;
      const int label = g * spec.classes_per_group + c;
      for (int s = 0; s < spec.samples_per_class; ++s, ++row) {
        for (int i = 0; i < d; ++i) ds.features(row, i) = center(i) + sigma * rng.normal();
        ds.labels.push_back(label);
      }
    }
  }
  for (int k = 0; k < ds.num_classes; ++k)
    ds.class_names.push_back("g" + std::to_string(k / spec.classes_per_group) + "c" +
                             std::to_string(k % spec.classes_per_group));
  return ds;
}

inline nlohmann::json synth_spec_to_json(const SynthSpec& s) {
  return {{"coarse_groups", s.coarse_groups},         {"classes_per_group", s.classes_per_group},
          {"samples_per_class", s.samples_per_class}, {"dim", s.dim},
          {"coarse_separation", s.coarse_separation}, {"fine_separation", s.fine_separation},
          {"sigma", s.sigma},                         {"seed", s.seed}};
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.coarse_groups = j.value("coarse_groups", s.coarse_groups);
    s.classes_per_group = j.value("classes_per_group", s.classes_per_group);
    s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
    s.dim = j.value("dim", s.dim);
    s.coarse_separation = j.value("coarse_separation", s.coarse_separation);
    s.fine_separation = j.value("fine_separation", s.fine_separation);
    s.sigma = j.value("sigma", s.sigma);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed synthetic spec JSON: ") + e.what());
  }
  s.validate();
  return s;
}

/// Row indices per class, each list in ascending order.
inline std::vector<std::vector<std::size_t>> rows_by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by(static_cast<std::size_t>(ds.num_classes));
  for (std::size_t i = 0; i < ds.size(); ++i) by[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  return by;
}

/// Stratified holdout. Each class keeps round(fraction * n_c) samples for training,
/// clamped to [1, n_c - 1]; both outputs preserve the original row order.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction < 1.0, "split fraction must be in (0, 1)");
  ds.validate();
  Rng rng(seed);
  std::vector<bool> in_train(ds.size(), false);
  auto by = rows_by_class(ds);
  for (std::size_t c = 0; c < by.size(); ++c) {
    auto& rows = by[c];
    if (rows.empty()) continue;
    require(rows.size() >= 2, "class " + std::to_string(c) + " has fewer than 2 samples");
    rng.shuffle(rows);
    const auto take = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::floor(fraction * static_cast<double>(rows.size()) + 0.5)), 1, rows.size() - 1);
    for (std::size_t i = 0; i < take; ++i) in_train[rows[i]] = true;
  }
  std::vector<std::size_t> tr, te;
  for (std::size_t i = 0; i < ds.size(); ++i) (in_train[i] ? tr : te).push_back(i);
  return {ds.subset(tr), ds.subset(te)};
}

/// Stratified k-fold assignment: fold index per row.
inline std::vector<int> stratified_folds(const Dataset& ds, int folds, std::uint64_t seed) {
  require(folds >= 2, "fold count must be >= 2");
  Rng rng(seed);
  std::vector<int> fold(ds.size(), 0);
  auto by = rows_by_class(ds);
  for (auto& rows : by) {
    rng.shuffle(rows);
    for (std::size_t i = 0; i < rows.size(); ++i) fold[rows[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  }
  return fold;
}

}  // namespace hierdecomp
