/*
 * Copyright 2026 The hierdecomp Authors
 * SPDX-License-Identifier: Apache-2.0
 */

/// @file overlap.hpp
/// @brief Posterior-threshold expansion of disjoint clusters into overlapping ones.
#pragma once

#include <algorithm>
#include <vector>

#include "confmat.hpp"
#include "linkage.hpp"

namespace hierdecomp {

/// How many core members must pass the posterior threshold for an outside class to join.
enum class OverlapQuantifier {
  kAnyMember,  // default
  kAllMembers,
};

/// Adds outside class j to cluster Q iff DCN(i, j) >= 1 / (gamma * parent_k) for some
/// (or, with kAllMembers, every) core class i of Q.
inline Clustering expand_overlap(const Clustering& base, const PosteriorMatrix& dcn, double gamma, int parent_k,
                                 OverlapQuantifier quantifier = OverlapQuantifier::kAnyMember) {
  require(gamma > 0.0, "gamma must be > 0");
  require(parent_k >= 1, "parent class count must be >= 1");
  require(!base.overlapping, "base clustering must be non-overlapping");
  base.validate();

  const std::vector<ClassId> classes = base.all_classes();
  for (ClassId id : classes)
    require(dcn.index_of(id) >= 0, "posterior matrix does not cover class " + std::to_string(id));

  const double threshold = 1.0 / (gamma * static_cast<double>(parent_k));
  Clustering out = base;
  out.overlapping = true;
  out.gamma = gamma;
  out.parent_k = parent_k;
  out.cores = base.clusters;

  for (std::size_t q = 0; q < base.clusters.size(); ++q) {
    const auto& core = base.clusters[q];
    std::vector<ClassId> expanded = core;
    for (ClassId j : classes) {
      if (std::binary_search(core.begin(), core.end(), j)) continue;
      const int col = dcn.index_of(j);
      const auto passes = [&](ClassId i) { return dcn.values(dcn.index_of(i), col) >= threshold; };
      const bool join = quantifier == OverlapQuantifier::kAnyMember ? std::any_of(core.begin(), core.end(), passes)
                                                                    : std::all_of(core.begin(), core.end(), passes);
      if (join) expanded.push_back(j);
    }
    std::sort(expanded.begin(), expanded.end());
    out.clusters[q] = std::move(expanded);
  }
  return out;
}

}  // namespace hierdecomp
