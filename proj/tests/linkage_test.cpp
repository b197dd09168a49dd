/*
 * Copyright 2026 The hierdecomp Authors
 * SPDX-License-Identifier: Apache-2.0
 */

#include <gtest/gtest.h>

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/graphviz.hpp>

#include "test_support.hpp"

using namespace hierdecomp;
using testsupport::random_dissimilarity;

namespace {

DissimilarityMatrix three_class() {
  DissimilarityMatrix d;
  d.values = (Matrix(3, 3) << 0, 0.2, 0.8, 0.2, 0, 0.6, 0.8, 0.6, 0).finished();
  d.class_ids = {0, 1, 2};
  return d;
}

struct DotGraph {
  std::size_t vertices = 0;
  std::size_t edges = 0;
  std::vector<std::string> fill_colors;
};

DotGraph parse_dot(const std::string& dot) {
  struct Vertex {
    std::string node_id, label, fillcolor, shape;
  };
  using Graph = boost::adjacency_list<boost::vecS, boost::vecS, boost::directedS, Vertex>;
  Graph g;
  boost::dynamic_properties dp(boost::ignore_other_properties);
  dp.property("node_id", boost::get(&Vertex::node_id, g));
  dp.property("label", boost::get(&Vertex::label, g));
  dp.property("fillcolor", boost::get(&Vertex::fillcolor, g));
  dp.property("shape", boost::get(&Vertex::shape, g));
  std::istringstream in(dot);
  if (!boost::read_graphviz(in, g, dp, "node_id")) throw std::runtime_error("not a graph");
  DotGraph out{boost::num_vertices(g), boost::num_edges(g), {}};
  for (auto v : boost::make_iterator_range(boost::vertices(g)))
    if (g[v].shape == "box") out.fill_colors.push_back(g[v].fillcolor);
  return out;
}

}  // namespace

TEST(Upgma, TwoClasses) {
  DissimilarityMatrix d;
  d.values = (Matrix(2, 2) << 0, 0.6, 0.6, 0).finished();
  d.class_ids = {0, 1};
  const auto dg = upgma_linkage(d);
  ASSERT_EQ(dg.merges.size(), 1u);
  EXPECT_DOUBLE_EQ(dg.merges[0].height, 0.6);
}

TEST(Upgma, ThreeClassHandExample) {
  const auto dg = upgma_linkage(three_class());
  ASSERT_EQ(dg.merges.size(), 2u);
  EXPECT_EQ(dg.merges[0].left, 0);
  EXPECT_EQ(dg.merges[0].right, 1);
  EXPECT_NEAR(dg.merges[0].height, 0.2, 1e-15);
  EXPECT_NEAR(dg.merges[1].height, 0.7, 1e-15);
  EXPECT_EQ(dg.merges[1].size, 3);
}

TEST(Upgma, MatchesNaiveReference) {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(11));
    const auto d = random_dissimilarity(rng, k);
    const auto dg = upgma_linkage(d);
    std::string why;
    EXPECT_TRUE(testsupport::matches_reference(dg, testsupport::reference_upgma(d.values), 1e-12, &why))
        << "trial " << trial << ": " << why;
  }
}

TEST(Upgma, TiesResolvedLikeReference) {
  // Integer-valued distances force many exact ties.
  Rng rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(9));
    auto d = random_dissimilarity(rng, k);
    for (int i = 0; i < k; ++i)
      for (int j = i + 1; j < k; ++j) d.values(i, j) = d.values(j, i) = static_cast<double>(1 + rng.below(3)) / 4.0;
    std::string why;
    EXPECT_TRUE(testsupport::matches_reference(upgma_linkage(d), testsupport::reference_upgma(d.values), 1e-12, &why))
        << "trial " << trial << ": " << why;
  }
}

TEST(Upgma, MergeCountAndMonotoneHeights) {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(20));
    const auto dg = upgma_linkage(random_dissimilarity(rng, k));
    ASSERT_EQ(static_cast<int>(dg.merges.size()), k - 1);
    for (std::size_t m = 1; m < dg.merges.size(); ++m) EXPECT_GE(dg.merges[m].height, dg.merges[m - 1].height);
    EXPECT_EQ(dg.merges.back().size, k);
  }
}

TEST(Upgma, PermutationGivesIsomorphicTree) {
  Rng rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 3 + static_cast<int>(rng.below(9));
    const auto d = random_dissimilarity(rng, k);
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    DissimilarityMatrix p;
    p.values.resize(k, k);
    for (int i = 0; i < k; ++i) {
      p.class_ids.push_back(d.class_ids[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
      for (int j = 0; j < k; ++j) p.values(i, j) = d.values(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    const auto a = upgma_linkage(d), b = upgma_linkage(p);
    std::vector<double> ha, hb;
    for (const auto& m : a.merges) ha.push_back(m.height);
    for (const auto& m : b.merges) hb.push_back(m.height);
    std::sort(ha.begin(), ha.end());
    std::sort(hb.begin(), hb.end());
    for (std::size_t i = 0; i < ha.size(); ++i) EXPECT_NEAR(ha[i], hb[i], 1e-12);
    const int theta = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    EXPECT_EQ(cut_clusters(a, theta).clusters, cut_clusters(b, theta).clusters);
  }
}

TEST(Upgma, RejectsSingleClass) {
  DissimilarityMatrix d{Matrix::Zero(1, 1), {0}};
  EXPECT_THROW(upgma_linkage(d), ValidationError);
}

TEST(Cut, Examples) {
  const auto dg = upgma_linkage(three_class());
  EXPECT_EQ(cut_clusters(dg, 3).clusters, (std::vector<std::vector<ClassId>>{{0, 1, 2}}));
  EXPECT_EQ(cut_clusters(dg, 7).clusters.size(), 1u);
  EXPECT_EQ(cut_clusters(dg, 1).clusters, (std::vector<std::vector<ClassId>>{{0}, {1}, {2}}));
  EXPECT_EQ(cut_clusters(dg, 2).clusters, (std::vector<std::vector<ClassId>>{{0, 1}, {2}}));
  EXPECT_THROW(cut_clusters(dg, 0), ValidationError);
}

TEST(Cut, PartitionProperties) {
  Rng rng(25);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(25));
    const auto dg = upgma_linkage(random_dissimilarity(rng, k));
    const int theta = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(k + 2)));
    const auto c = cut_clusters(dg, theta);
    EXPECT_NO_THROW(c.validate());
    std::size_t total = 0;
    std::set<ClassId> seen;
    for (const auto& q : c.clusters) {
      EXPECT_LE(static_cast<int>(q.size()), theta);
      total += q.size();
      seen.insert(q.begin(), q.end());
    }
    EXPECT_EQ(total, static_cast<std::size_t>(k));
    EXPECT_EQ(seen.size(), static_cast<std::size_t>(k));
    EXPECT_FALSE(c.overlapping);
    EXPECT_EQ(c.parent_k, k);
  }
}

TEST(Dot, TwoLeafStructure) {
  DissimilarityMatrix d{(Matrix(2, 2) << 0, 0.5, 0.5, 0).finished(), {0, 1}};
  const auto g = parse_dot(export_dot(upgma_linkage(d)));
  EXPECT_EQ(g.vertices, 3u);
  EXPECT_EQ(g.edges, 2u);
}

TEST(Dot, RandomTreesParse) {
  Rng rng(26);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(15));
    const auto dg = upgma_linkage(random_dissimilarity(rng, k));
    const auto c = cut_clusters(dg, 3);
    DotGraph g;
    ASSERT_NO_THROW(g = parse_dot(export_dot(dg, &c)));
    EXPECT_EQ(g.vertices, static_cast<std::size_t>(2 * k - 1));
    EXPECT_EQ(g.edges, static_cast<std::size_t>(2 * k - 2));
  }
}

TEST(Dot, OneColorPerCluster) {
  const auto dg = upgma_linkage(three_class());
  const auto c = cut_clusters(dg, 2);
  const auto g = parse_dot(export_dot(dg, &c));
  std::set<std::string> colors(g.fill_colors.begin(), g.fill_colors.end());
  EXPECT_EQ(colors.size(), 2u);
}

TEST(ClusteringJson, RoundTripAndValidation) {
  Clustering c;
  c.clusters = {{0, 1, 2}, {2, 3}};
  c.cores = {{0, 1}, {2, 3}};
  c.overlapping = true;
  c.theta = 2;
  c.gamma = 3.0;
  const auto back = clustering_from_json(clustering_to_json(c));
  EXPECT_EQ(back.clusters, c.clusters);
  EXPECT_EQ(back.cores, c.cores);
  EXPECT_EQ(back.gamma, c.gamma);
  EXPECT_EQ(back.theta, c.theta);
  EXPECT_EQ(back.parent_k, 4);

  auto j = clustering_to_json(c);
  j["cores"] = {{0, 1}, {1, 2, 3}};
  EXPECT_THROW(clustering_from_json(j), ValidationError);
  EXPECT_THROW(clustering_from_json(nlohmann::json{{"clusters", 3}}), ValidationError);
}
