/*
 * Copyright 2026 The hierdecomp Authors
 * SPDX-License-Identifier: Apache-2.0
 */

#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace hierdecomp;

namespace {

/// A stage whose softmax output is `probs` for every input.
StageClassifier fixed_stage(std::vector<double> probs) {
  StageClassifier s;
  s.outputs = static_cast<int>(probs.size());
  if (probs.size() == 1) return s;
  MLPConfig c;
  c.input_dim = 1;
  c.output_dim = s.outputs;
  Rng rng(0);
  MLPModel m = initialize_mlp(c, rng);
  m.weights[0].setZero();
  for (std::size_t i = 0; i < probs.size(); ++i) m.biases[0](static_cast<Eigen::Index>(i)) = std::log(probs[i]);
  s.net = m;
  return s;
}

HierarchicalModel fixed_model(Clustering clustering, std::vector<double> p, std::vector<std::vector<double>> q, int k) {
  HierarchicalModel m;
  m.clustering = std::move(clustering);
  m.hierarchy = fixed_stage(std::move(p));
  for (auto& v : q) m.assign.push_back(fixed_stage(std::move(v)));
  m.local_to_global = m.clustering.clusters;
  m.top_k = k;
  m.validate();
  return m;
}

Clustering disjoint(std::vector<std::vector<ClassId>> clusters) {
  Clustering c;
  c.clusters = clusters;
  c.cores = clusters;
  c.parent_k = static_cast<int>(c.all_classes().size());
  return c;
}

Dataset planted(std::uint64_t seed, int groups = 3, int per_group = 3, int samples = 60, int dim = 12) {
  SynthSpec s;
  s.coarse_groups = groups;
  s.classes_per_group = per_group;
  s.samples_per_class = samples;
  s.dim = dim;
  s.seed = seed;
  return generate(s);
}

Clustering planted_clustering(int groups, int per_group) {
  std::vector<std::vector<ClassId>> c(static_cast<std::size_t>(groups));
  for (int k = 0; k < groups * per_group; ++k) c[static_cast<std::size_t>(k / per_group)].push_back(k);
  return disjoint(c);
}

const Matrix kOneRow = Matrix::Zero(1, 1);

}  // namespace

TEST(CoarseLabels, Lookup) {
  const auto c = disjoint({{0, 1}, {2, 3}, {4, 5}});
  const std::vector<ClassId> y{5, 2, 0};
  EXPECT_EQ(coarse_labels(c, y), (std::vector<int>{2, 1, 0}));
  Clustering o = c;
  o.overlapping = true;
  o.clusters[1] = {2, 3, 5};
  EXPECT_EQ(coarse_labels(o, std::vector<ClassId>{5}), std::vector<int>{2});
  EXPECT_EQ(coarse_labels(disjoint({{0, 1, 2}}), std::vector<ClassId>{2, 0, 1}), (std::vector<int>{0, 0, 0}));
  EXPECT_THROW(coarse_labels(c, std::vector<ClassId>{9}), ValidationError);
}

TEST(Infer, ProductScoresHandExample) {
  const auto m = fixed_model(disjoint({{0, 1}, {2, 3}}), {0.7, 0.3}, {{0.9, 0.1}, {0.6, 0.4}}, 2);
  const auto p = infer(m, Eigen::RowVectorXd::Zero(1));
  EXPECT_EQ(p.class_id, 0);
  EXPECT_NEAR(p.confidence, 0.63, 1e-12);
  EXPECT_EQ(p.cluster, 0);
  EXPECT_EQ(p.local_index, 0);
  ASSERT_EQ(p.alternatives.size(), 4u);
  const std::vector<std::pair<ClassId, double>> expect{{0, 0.63}, {2, 0.18}, {3, 0.12}, {1, 0.07}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(p.alternatives[i].first, expect[i].first);
    EXPECT_NEAR(p.alternatives[i].second, expect[i].second, 1e-12);
  }
}

TEST(Infer, TopOneOnlyScoresArgmaxCluster) {
  const auto m = fixed_model(disjoint({{0, 1}, {2, 3}}), {0.7, 0.3}, {{0.9, 0.1}, {0.6, 0.4}}, 1);
  const auto p = infer(m, Eigen::RowVectorXd::Zero(1));
  ASSERT_EQ(p.alternatives.size(), 2u);
  for (const auto& [cls, s] : p.alternatives) EXPECT_LE(cls, 1);
}

TEST(Infer, ClusterTiesGoToLowerIndex) {
  const auto m = fixed_model(disjoint({{0, 1}, {2, 3}}), {0.5, 0.5}, {{0.9, 0.1}, {0.9, 0.1}}, 1);
  EXPECT_EQ(infer(m, Eigen::RowVectorXd::Zero(1)).cluster, 0);
}

TEST(Infer, SharedClassKeepsMaximum) {
  Clustering c = disjoint({{0, 1}, {2, 3}});
  c.overlapping = true;
  c.clusters[0] = {0, 1, 2};
  const auto m = fixed_model(c, {0.6, 0.4}, {{0.1, 0.1, 0.8}, {0.9, 0.1}}, 2);
  const auto p = infer(m, Eigen::RowVectorXd::Zero(1));
  EXPECT_EQ(p.class_id, 2);
  EXPECT_NEAR(p.confidence, 0.48, 1e-12);
  EXPECT_EQ(p.cluster, 0);
  EXPECT_EQ(p.alternatives.size(), 4u);
}

TEST(Infer, OverlapRecoversMisroutedSample) {
  // True class 2 has its core in cluster 1, but the hierarchy prefers cluster 0.
  const auto plain = fixed_model(disjoint({{0, 1}, {2, 3}}), {0.6, 0.4}, {{0.5, 0.5}, {0.9, 0.1}}, 1);
  EXPECT_NE(infer(plain, Eigen::RowVectorXd::Zero(1)).class_id, 2);
  Clustering c = disjoint({{0, 1}, {2, 3}});
  c.overlapping = true;
  c.clusters[0] = {0, 1, 2};
  const auto overlapped = fixed_model(c, {0.6, 0.4}, {{0.1, 0.1, 0.8}, {0.9, 0.1}}, 2);
  EXPECT_EQ(infer(overlapped, Eigen::RowVectorXd::Zero(1)).class_id, 2);
}

TEST(Infer, ConstantStagesForSingletons) {
  const auto m = fixed_model(disjoint({{0}, {1, 2}}), {0.3, 0.7}, {{1.0}, {0.2, 0.8}}, 2);
  const auto p = infer(m, Eigen::RowVectorXd::Zero(1));
  EXPECT_EQ(p.class_id, 2);
  EXPECT_NEAR(p.confidence, 0.56, 1e-12);
  EXPECT_NEAR(p.alternatives.back().second, 0.14, 1e-12);
}

TEST(Hierarchical, ScoresSumToOneWhenAllClustersVisited) {
  const Dataset ds = planted(1);
  const auto clustering = planted_clustering(3, 3);
  TrainSpec spec;
  spec.epochs = 5;
  const auto m = train_hierarchical(ds.features, ds.labels, clustering, stage_config(ds.dim(), {10}, 3),
                                    assign_configs_for(clustering, ds.dim(), {10}), spec);
  Rng rng(2);
  Matrix x(300, ds.dim());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = 5.0 * rng.normal();
  for (const auto& p : infer_batch(m, x, 3)) {
    double sum = 0.0;
    for (const auto& a : p.alternatives) sum += a.second;
    EXPECT_NEAR(sum, 1.0, 1e-9);
    EXPECT_EQ(p.alternatives.size(), 9u);
  }
}

TEST(Hierarchical, WiderRoutingIsSupersetOfCandidates) {
  const Dataset ds = planted(3);
  const auto cm = [&] {
    std::vector<int> pred = ds.labels;
    for (std::size_t i = 0; i < pred.size(); i += 7) pred[i] = (pred[i] + 3) % ds.num_classes;
    return build_confusion(ds.labels, pred, ds.num_classes);
  }();
  const auto clustering = expand_overlap(planted_clustering(3, 3), column_normalize(cm), 3.0, 9);
  TrainSpec spec;
  spec.epochs = 5;
  const auto m = train_hierarchical(ds.features, ds.labels, clustering, stage_config(ds.dim(), {10}, 3),
                                    assign_configs_for(clustering, ds.dim(), {10}), spec);
  EXPECT_EQ(m.top_k, 2);
  const auto one = infer_batch(m, ds.features, 1), two = infer_batch(m, ds.features, 2);
  for (std::size_t i = 0; i < one.size(); ++i) {
    std::set<ClassId> a, b;
    for (const auto& x : one[i].alternatives) a.insert(x.first);
    for (const auto& x : two[i].alternatives) b.insert(x.first);
    EXPECT_TRUE(std::includes(b.begin(), b.end(), a.begin(), a.end()));
  }
}

TEST(Hierarchical, SingleClusterMatchesFlatModel) {
  const Dataset ds = planted(4);
  const auto [tr, te] = split(ds, 0.8, 5);
  const auto clustering = planted_clustering(1, 9);
  TrainSpec spec;
  spec.epochs = 10;
  spec.seed = 77;
  const MLPConfig flat_cfg = stage_config(ds.dim(), {16, 8}, 9);
  const auto m = train_hierarchical(tr.features, tr.labels, clustering, stage_config(ds.dim(), {16, 8}, 1),
                                    {flat_cfg}, spec);
  EXPECT_FALSE(m.hierarchy.net.has_value());
  const auto flat = train(tr.features, tr.labels, flat_cfg, spec);
  const auto score = evaluate_hierarchical(m, te.features, te.labels);
  EXPECT_EQ(score.hc, 1.0);
  EXPECT_EQ(score.fc, evaluate(flat, te.features, te.labels));
  const auto preds = infer_batch(m, te.features);
  const auto flat_pred = predict_labels(flat, te.features);
  for (std::size_t i = 0; i < preds.size(); ++i) EXPECT_EQ(preds[i].class_id, flat_pred[i]);
}

TEST(Hierarchical, SeparatedGroupsGiveAccurateHierarchyClassifier) {
  const Dataset ds = planted(6, 2, 3, 80, 10);
  const auto clustering = planted_clustering(2, 3);
  const auto m = train_hierarchical(ds.features, ds.labels, clustering, stage_config(ds.dim(), {25, 10}, 2),
                                    assign_configs_for(clustering, ds.dim(), {25, 10}), TrainSpec{});
  const auto score = evaluate_hierarchical(m, ds.features, ds.labels);
  EXPECT_GE(score.hc, 0.95);
  EXPECT_LE(score.fc, score.hc);
}

TEST(Hierarchical, PerfectStagesScoreOne) {
  const auto m = fixed_model(disjoint({{0, 1}}), {1.0}, {{0.9, 0.1}}, 1);
  const auto s = evaluate_hierarchical(m, kOneRow, std::vector<ClassId>{0});
  EXPECT_EQ(s.hc, 1.0);
  EXPECT_EQ(s.fc, 1.0);
}

TEST(Hierarchical, ParallelTrainingMatchesSerial) {
  const Dataset ds = planted(7);
  const auto clustering = planted_clustering(3, 3);
  TrainSpec spec;
  spec.epochs = 3;
  auto run = [&] {
    return bundle_to_json(train_hierarchical(ds.features, ds.labels, clustering, stage_config(ds.dim(), {8}, 3),
                                             assign_configs_for(clustering, ds.dim(), {8}), spec))
        .dump();
  };
  ::setenv("HIERDECOMP_THREADS", "1", 1);
  const std::string serial = run();
  ::setenv("HIERDECOMP_THREADS", "4", 1);
  const std::string parallel = run();
  ::unsetenv("HIERDECOMP_THREADS");
  EXPECT_EQ(serial, parallel);
}

TEST(Hierarchical, Preconditions) {
  const Dataset ds = planted(8);
  const auto clustering = planted_clustering(3, 3);
  EXPECT_THROW(train_hierarchical(ds.features, ds.labels, clustering, stage_config(ds.dim(), {8}, 2),
                                  assign_configs_for(clustering, ds.dim(), {8}), TrainSpec{}),
               ValidationError);
  EXPECT_THROW(evaluate_hierarchical(fixed_model(disjoint({{0, 1}}), {1.0}, {{0.5, 0.5}}, 1), Matrix(0, 1),
                                     std::vector<ClassId>{}),
               ValidationError);
}

TEST(Bundle, RoundTripPreservesPredictions) {
  const Dataset ds = planted(9);
  const auto clustering = planted_clustering(3, 3);
  TrainSpec spec;
  spec.epochs = 3;
  const auto m = train_hierarchical(ds.features, ds.labels, clustering, stage_config(ds.dim(), {8}, 3),
                                    assign_configs_for(clustering, ds.dim(), {8}), spec);
  const auto back = bundle_from_json(nlohmann::json::parse(bundle_to_json(m).dump()));
  const auto a = infer_batch(m, ds.features), b = infer_batch(back, ds.features);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].class_id, b[i].class_id);
    EXPECT_EQ(a[i].confidence, b[i].confidence);
  }
  auto j = bundle_to_json(m);
  j["format"] = "other";
  EXPECT_THROW(bundle_from_json(j), ValidationError);
}
