/*
 * Copyright 2026 The hierdecomp Authors
 * SPDX-License-Identifier: Apache-2.0
 */

// hierdecomp command-line driver. One subcommand per pipeline stage:
//
//   synth    -> dataset CSV
//   probe    dataset -> confusion CSV of a flat probe classifier
//   cluster  confusion CSV -> clustering JSON (+ dendrogram DOT)
//   train    dataset + clustering -> model bundle + HC/FC report
//   adapt    dataset + clustering + candidates -> model bundle + meta-dataset CSV
//   infer    model bundle + dataset -> predictions CSV
//   memory   network specs -> memory report
//
// Exit codes: 0 success, 1 validation error, 2 I/O error.

#include <CLI11.hpp>
#include <hierdecomp/hierdecomp.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace hd = hierdecomp;

namespace {

std::vector<int> parse_layers(const std::string& text) {
  std::vector<int> out;
  std::string cell;
  std::istringstream in(text);
  while (std::getline(in, cell, ',')) {
    cell = hd::detail::strip(cell);
    if (cell.empty()) continue;
    const double v = hd::detail::parse_number(cell, 0);
    hd::require(v >= 1 && v == static_cast<int>(v), "layer widths must be positive integers: " + text);
    out.push_back(static_cast<int>(v));
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw hd::IoError("cannot write " + path);
  out << text;
  if (!out) throw hd::IoError("write failed for " + path);
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw hd::IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw hd::ValidationError(path + ": " + e.what());
  }
}

std::string fraction(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct TrainFlags {
  std::uint64_t seed = 0;
  int epochs = 40;
  double lr = 0.01;
  double momentum = 0.9;
  int batch_size = 32;
  double dropout = 0.0;

  void add_to(CLI::App* app) {
    app->add_option("--seed", seed, "Run seed; every stage seed derives from it");
    app->add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
    app->add_option("--lr", lr, "Learning rate")->check(CLI::PositiveNumber);
    app->add_option("--momentum", momentum, "Momentum in [0, 1)")->check(CLI::Range(0.0, 0.999999));
    app->add_option("--batch-size", batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
    app->add_option("--dropout", dropout, "Dropout after hidden activations")->check(CLI::Range(0.0, 0.999999));
  }

  hd::TrainSpec spec(std::string_view stage) const {
    hd::TrainSpec s;
    s.learning_rate = lr;
    s.momentum = momentum;
    s.epochs = epochs;
    s.batch_size = batch_size;
    s.seed = hd::derive_seed(seed, stage);
    return s;
  }
};

// synth

struct SynthArgs {
  std::string output;
  std::string spec_path;
  hd::SynthSpec spec;
};

void run_synth(const SynthArgs& a) {
  hd::SynthSpec spec = a.spec;
  if (!a.spec_path.empty()) spec = hd::synth_spec_from_json(read_json(a.spec_path));
  hd::save_csv(hd::generate(spec), a.output);
}

// probe

struct ProbeArgs {
  std::string input, output, hidden = "200,150";
  double holdout = 0.2;
  TrainFlags train;
};

void run_probe(const ProbeArgs& a) {
  const hd::Dataset ds = hd::load_csv(a.input);
  ds.validate();
  const auto [tr, te] = hd::split(ds, 1.0 - a.holdout, hd::derive_seed(a.train.seed, "split"));
  const hd::MLPConfig cfg = hd::stage_config(ds.dim(), parse_layers(a.hidden), ds.num_classes, a.train.dropout);
  const hd::MLPModel probe = hd::train(tr.features, tr.labels, cfg, a.train.spec("probe"));
  const auto cm = hd::build_confusion(te.labels, hd::predict_labels(probe, te.features), ds.num_classes);
  hd::save_confusion_csv(cm, a.output);
}

// cluster

struct ClusterArgs {
  std::string input, output, dot;
  int theta = 0;
  std::optional<double> gamma;
  std::optional<int> parent_k;
  bool all_members = false;
};

void run_cluster(const ClusterArgs& a) {
  const hd::ConfusionMatrix cm = hd::load_confusion_csv(a.input);
  hd::Clustering clustering;
  std::optional<hd::Dendrogram> dg;
  if (cm.size() >= 2) {
    dg = hd::upgma_linkage(hd::to_dissimilarity(cm));
    clustering = hd::cut_clusters(*dg, a.theta);
  } else {
    clustering.clusters = {{cm.class_ids[0]}};
    clustering.cores = clustering.clusters;
    clustering.parent_k = 1;
    clustering.theta = a.theta;
  }
  if (a.gamma) {
    const int parent_k = a.parent_k.value_or(static_cast<int>(cm.size()));
    clustering = hd::expand_overlap(clustering, hd::column_normalize(cm), *a.gamma, parent_k,
                                    a.all_members ? hd::OverlapQuantifier::kAllMembers
                                                  : hd::OverlapQuantifier::kAnyMember);
  }
  write_text(a.output, hd::clustering_to_json(clustering).dump(2) + "\n");
  if (dg) {
    const std::string dot =
        a.dot.empty() ? std::filesystem::path(a.output).replace_extension(".dot").string() : a.dot;
    write_text(dot, hd::export_dot(*dg, &clustering));
  }
}

// train

struct TrainArgs {
  std::string input, clustering, output, report;
  std::string hier_hidden = "25,10", assign_hidden = "25,10", flat_hidden;
  std::optional<int> top_k;
  double holdout = 0.2;
  int folds = 0;
  TrainFlags train;
};

std::string method_name(const hd::Clustering& c) { return c.overlapping ? "Overlap" : "Non-Overlap"; }

void run_train(const TrainArgs& a) {
  const hd::Dataset ds = hd::load_csv(a.input);
  ds.validate();
  const hd::Clustering clustering = hd::clustering_from_json(read_json(a.clustering));
  const int c = static_cast<int>(clustering.size());
  const hd::MLPConfig hier_cfg = hd::stage_config(ds.dim(), parse_layers(a.hier_hidden), c, a.train.dropout);
  const auto assign_cfgs = hd::assign_configs_for(clustering, ds.dim(), parse_layers(a.assign_hidden), a.train.dropout);
  const hd::TrainSpec spec = a.train.spec("hierarchical");
  const std::optional<std::vector<int>> flat_layers =
      a.flat_hidden.empty() ? std::nullopt : std::optional(parse_layers(a.flat_hidden));

  // (train, test) pairs: one stratified holdout, or k folds
  std::vector<std::pair<hd::Dataset, hd::Dataset>> runs;
  if (a.folds >= 2) {
    const auto fold = hd::stratified_folds(ds, a.folds, hd::derive_seed(a.train.seed, "folds"));
    for (int f = 0; f < a.folds; ++f) {
      std::vector<std::size_t> tr, te;
      for (std::size_t i = 0; i < ds.size(); ++i) (fold[i] == f ? te : tr).push_back(i);
      runs.emplace_back(ds.subset(tr), ds.subset(te));
    }
  } else {
    runs.push_back(hd::split(ds, 1.0 - a.holdout, hd::derive_seed(a.train.seed, "split")));
  }

  double hc = 0, fc = 0, flat = 0;
  std::optional<hd::HierarchicalModel> model;
  for (const auto& [tr, te] : runs) {
    hd::HierarchicalModel m = hd::train_hierarchical(tr.features, tr.labels, clustering, hier_cfg, assign_cfgs, spec, a.top_k);
    const auto score = hd::evaluate_hierarchical(m, te.features, te.labels);
    hc += score.hc;
    fc += score.fc;
    if (flat_layers) {
      const auto flat_model = hd::train(tr.features, tr.labels,
                                        hd::stage_config(ds.dim(), *flat_layers, ds.num_classes, a.train.dropout), spec);
      flat += hd::evaluate(flat_model, te.features, te.labels);
    }
    if (runs.size() == 1) model = std::move(m);
  }
  const double n = static_cast<double>(runs.size());
  if (!model) model = hd::train_hierarchical(ds.features, ds.labels, clustering, hier_cfg, assign_cfgs, spec, a.top_k);
  write_text(a.output, hd::bundle_to_json(*model).dump() + "\n");

  if (!a.report.empty()) {
    std::ostringstream r;
    r << "C,method,gamma,HC,FC\n";
    if (flat_layers) r << "1,Flat,,," << fraction(flat / n) << '\n';
    r << c << ',' << method_name(clustering) << ','
      << (clustering.gamma ? hd::detail::format_double(*clustering.gamma) : std::string()) << ',' << fraction(hc / n)
      << ',' << fraction(fc / n) << '\n';
    write_text(a.report, r.str());
  }
}

// adapt

struct AdaptArgs {
  std::string input, clustering, candidates, output, meta, report, selector;
  std::string hier_hidden = "25,10";
  std::optional<int> top_k;
  double holdout = 0.2;
  TrainFlags train;
};

void run_adapt(const AdaptArgs& a) {
  const hd::Dataset ds = hd::load_csv(a.input);
  ds.validate();
  const hd::Clustering clustering = hd::clustering_from_json(read_json(a.clustering));
  const hd::CandidateSet candidates = hd::candidates_from_json(read_json(a.candidates));
  const hd::MLPConfig hier_cfg =
      hd::stage_config(ds.dim(), parse_layers(a.hier_hidden), static_cast<int>(clustering.size()), a.train.dropout);
  const hd::TrainSpec spec = a.train.spec("hierarchical");
  const auto result =
      hd::build_adaptive_hierarchical(ds.features, ds.labels, clustering, candidates, hier_cfg, spec, a.holdout, a.top_k);
  write_text(a.output, hd::bundle_to_json(result.model).dump() + "\n");
  write_text(a.meta, hd::meta_to_csv(result.meta));
  if (!a.report.empty()) {
    std::ostringstream r;
    r << "cluster,classes,best_id,best_accuracy";
    for (const auto& cand : candidates.candidates) r << ",acc_" << cand.id;
    r << '\n';
    for (std::size_t i = 0; i < result.selections.size(); ++i) {
      const auto& s = result.selections[i];
      r << i << ',' << hd::detail::cluster_key(clustering.clusters[i]) << ',' << s.best_id << ',';
      r << (s.accuracies.empty() ? std::string() : fraction(s.accuracies[static_cast<std::size_t>(s.best_index)]));
      for (std::size_t k = 0; k < candidates.size(); ++k)
        r << ',' << (s.accuracies.empty() ? std::string() : fraction(s.accuracies[k]));
      r << '\n';
    }
    write_text(a.report, r.str());
  }
  if (!a.selector.empty()) {
    const auto selector = hd::train_selector(result.meta, candidates, a.train.spec("selector"));
    write_text(a.selector, hd::selector_to_json(selector).dump() + "\n");
  }
}

// infer

struct InferArgs {
  std::string input, data, output;
  std::optional<int> top_k;
};

void run_infer(const InferArgs& a) {
  const hd::HierarchicalModel model = hd::bundle_from_json(read_json(a.input));
  const hd::Dataset ds = hd::load_csv(a.data);
  const auto preds = hd::infer_batch(model, ds.features, a.top_k);
  std::ostringstream out;
  out << "row,label,class,confidence,cluster,local,alternatives\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    out << i << ',' << ds.labels[i] << ',' << p.class_id << ',' << hd::detail::format_double(p.confidence) << ','
        << p.cluster << ',' << p.local_index << ',';
    for (std::size_t k = 0; k < p.alternatives.size(); ++k)
      out << (k ? ";" : "") << p.alternatives[k].first << ':' << hd::detail::format_double(p.alternatives[k].second);
    out << '\n';
  }
  write_text(a.output, out.str());
}

// memory

struct MemoryArgs {
  std::vector<std::string> inputs, builtins;
  std::vector<std::string> hierarchical;
  std::string output, csv;
  int batch = 1;
};

hd::NetworkSpec resolve_network(const std::string& ref) {
  if (std::filesystem::exists(ref)) return hd::network_from_json(read_json(ref));
  return hd::builtin_network(ref);
}

void run_memory(const MemoryArgs& a) {
  std::vector<hd::NetworkSpec> specs;
  for (const auto& p : a.inputs) specs.push_back(hd::network_from_json(read_json(p)));
  for (const auto& b : a.builtins) specs.push_back(hd::builtin_network(b));
  hd::require(!specs.empty() || !a.hierarchical.empty(), "memory needs --input, --builtin or --hierarchical");
  std::ostringstream text, csv;
  for (const auto& s : specs) {
    const auto r = hd::network_memory(s, a.batch);
    text << hd::format_report_table(r) << '\n';
    std::string part = hd::format_report_csv(r);
    if (csv.tellp() > 0) part.erase(0, part.find('\n') + 1);
    csv << part;
  }
  if (!a.hierarchical.empty()) {
    hd::require(a.hierarchical.size() == 2, "--hierarchical takes two networks: HIER,ASSIGN");
    const auto h = resolve_network(a.hierarchical[0]);
    const auto c = resolve_network(a.hierarchical[1]);
    const auto m = hd::hierarchical_memory(h, c, a.batch);
    text << "Hierarchical " << h.name << " + " << c.name << " (batch " << a.batch << "): " << m.hierarchy_params.str()
         << " + " << m.assign_params.str() << " + " << m.shared_data.str() << " = " << m.total.str() << " MB\n";
  }
  if (a.output.empty())
    std::cout << text.str();
  else
    write_text(a.output, text.str());
  if (!a.csv.empty()) write_text(a.csv, csv.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical decomposition of flat classification problems"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset with a planted class hierarchy");
  s->add_option("--output", synth.output, "Dataset CSV")->required();
  s->add_option("--spec", synth.spec_path, "Generator spec JSON (overrides flags)");
  s->add_option("--groups", synth.spec.coarse_groups, "Coarse groups");
  s->add_option("--classes-per-group", synth.spec.classes_per_group, "Classes per group");
  s->add_option("--samples", synth.spec.samples_per_class, "Samples per class");
  s->add_option("--dim", synth.spec.dim, "Feature dimension");
  s->add_option("--coarse-sep", synth.spec.coarse_separation, "Group center separation (sigmas)");
  s->add_option("--fine-sep", synth.spec.fine_separation, "Class center separation within a group (sigmas)");
  s->add_option("--sigma", synth.spec.sigma, "Within-class standard deviation");
  s->add_option("--seed", synth.spec.seed, "Generator seed");

  ProbeArgs probe;
  auto* p = app.add_subcommand("probe", "Train a flat probe classifier and emit its holdout confusion matrix");
  p->add_option("--input", probe.input, "Dataset CSV")->required();
  p->add_option("--output", probe.output, "Confusion CSV")->required();
  p->add_option("--hidden", probe.hidden, "Hidden layer widths, comma separated");
  p->add_option("--holdout", probe.holdout, "Holdout fraction")->check(CLI::Range(0.01, 0.99));
  probe.train.add_to(p);

  ClusterArgs cluster;
  auto* c = app.add_subcommand("cluster", "Cluster classes from a confusion matrix");
  c->add_option("--input", cluster.input, "Confusion CSV")->required();
  c->add_option("--output", cluster.output, "Clustering JSON")->required();
  c->add_option("--theta", cluster.theta, "Maximum classes per cluster")->required()->check(CLI::PositiveNumber);
  c->add_option("--gamma", cluster.gamma, "Overlap factor; omit for disjoint clusters")->check(CLI::PositiveNumber);
  c->add_option("--parent-k", cluster.parent_k, "Class count of the parent stage (default: all classes)");
  c->add_option("--dot", cluster.dot, "Dendrogram DOT path (default: output with .dot)");
  c->add_flag("--all-members", cluster.all_members, "Require the posterior threshold against every core member");

  TrainArgs trainargs;
  auto* t = app.add_subcommand("train", "Train a hierarchical model and report HC/FC accuracy");
  t->add_option("--input", trainargs.input, "Dataset CSV")->required();
  t->add_option("--clustering", trainargs.clustering, "Clustering JSON")->required();
  t->add_option("--output", trainargs.output, "Model bundle JSON")->required();
  t->add_option("--report", trainargs.report, "Report CSV (C,method,gamma,HC,FC)");
  t->add_option("--hier-hidden", trainargs.hier_hidden, "Hierarchy classifier hidden widths");
  t->add_option("--assign-hidden", trainargs.assign_hidden, "Class-assignment classifier hidden widths");
  t->add_option("--flat-hidden", trainargs.flat_hidden, "Also report a flat baseline with these widths");
  t->add_option("--top-k", trainargs.top_k, "Routing width")->check(CLI::PositiveNumber);
  t->add_option("--holdout", trainargs.holdout, "Holdout fraction")->check(CLI::Range(0.01, 0.99));
  t->add_option("--folds", trainargs.folds, "Stratified k-fold evaluation instead of holdout (k >= 2)");
  trainargs.train.add_to(t);

  AdaptArgs adapt;
  auto* ad = app.add_subcommand("adapt", "Select a network per cluster and train the adaptive hierarchical model");
  ad->add_option("--input", adapt.input, "Dataset CSV")->required();
  ad->add_option("--clustering", adapt.clustering, "Clustering JSON")->required();
  ad->add_option("--candidates", adapt.candidates, "Candidate set JSON")->required();
  ad->add_option("--output", adapt.output, "Model bundle JSON")->required();
  ad->add_option("--meta", adapt.meta, "Meta-dataset CSV")->required();
  ad->add_option("--report", adapt.report, "Per-cluster selection CSV");
  ad->add_option("--selector", adapt.selector, "Also fit and save the network selector (needs >= 5 clusters)");
  ad->add_option("--hier-hidden", adapt.hier_hidden, "Hierarchy classifier hidden widths");
  ad->add_option("--top-k", adapt.top_k, "Routing width")->check(CLI::PositiveNumber);
  ad->add_option("--holdout", adapt.holdout, "Selection holdout fraction")->check(CLI::Range(0.01, 0.99));
  adapt.train.add_to(ad);

  InferArgs inferargs;
  auto* in = app.add_subcommand("infer", "Predict with a model bundle");
  in->add_option("--input", inferargs.input, "Model bundle JSON")->required();
  in->add_option("--data", inferargs.data, "Dataset CSV")->required();
  in->add_option("--output", inferargs.output, "Predictions CSV")->required();
  in->add_option("--top-k", inferargs.top_k, "Routing width override")->check(CLI::PositiveNumber);

  MemoryArgs mem;
  auto* m = app.add_subcommand("memory", "Inference memory report for network specs");
  m->add_option("--input", mem.inputs, "Network spec JSON (repeatable)");
  m->add_option("--builtin", mem.builtins, "Built-in network TL1..TL5 (repeatable)");
  m->add_option("--hierarchical", mem.hierarchical, "HIER,ASSIGN pair (built-in names or JSON paths)")->delimiter(',');
  m->add_option("--batch", mem.batch, "Batch size")->check(CLI::PositiveNumber);
  m->add_option("--output", mem.output, "Text report path (default stdout)");
  m->add_option("--csv", mem.csv, "CSV report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*s) run_synth(synth);
    if (*p) run_probe(probe);
    if (*c) run_cluster(cluster);
    if (*t) run_train(trainargs);
    if (*ad) run_adapt(adapt);
    if (*in) run_infer(inferargs);
    if (*m) run_memory(mem);
  } catch (const hd::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const hd::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
