#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "idhnet/pipeline.hpp"

namespace {

using namespace idhnet;

void add_common(CLI::App* cmd, CommonOptions& common) {
  cmd->add_option("--config", common.config, "JSON config file");
  cmd->add_option("--seed", common.seed, "global seed (overrides the config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IDH status classification from structural brain networks"};
  app.require_subcommand(1);
  int code = kExitOk;

  SynthGenerateOptions synth_generate;
  auto* synth = app.add_subcommand("synth", "synthetic cohorts")->require_subcommand(1);
  auto* synth_gen = synth->add_subcommand("generate", "write a synthetic cohort and its ground truth");
  add_common(synth_gen, synth_generate.common);
  synth_gen->add_option("--level", synth_generate.level, "volume or graph")
      ->check(CLI::IsMember({"volume", "graph"}))
      ->capture_default_str();
  synth_gen->add_option("--out", synth_generate.out, "output directory")->required();
  synth_gen->callback([&] { code = cmd_synth_generate(synth_generate, std::cout, std::cerr); });

  AtlasBuildOptions atlas_build;
  auto* atlas = app.add_subcommand("atlas", "edge atlas construction")->require_subcommand(1);
  auto* atlas_b = atlas->add_subcommand("build", "build the edge atlas from tract densities");
  add_common(atlas_b, atlas_build.common);
  atlas_b->add_option("--densities", atlas_build.densities, "directory of per-subject tract densities")->required();
  atlas_b->add_option("--quorum", atlas_build.quorum, "subjects an edge must appear in");
  atlas_b->add_option("--top-frac", atlas_build.top_fraction, "fraction of voxels kept per edge");
  atlas_b->add_option("--out", atlas_build.out, "edge atlas output path")->required();
  atlas_b->callback([&] { code = cmd_atlas_build(atlas_build, std::cout, std::cerr); });

  FeaturesExtractOptions features_extract;
  auto* features = app.add_subcommand("features", "voxel vectors")->require_subcommand(1);
  auto* features_x = features->add_subcommand("extract", "extract node and edge voxel vectors per subject");
  add_common(features_x, features_extract.common);
  features_x->add_option("--cohort", features_extract.cohort, "cohort directory with subjects.json")->required();
  features_x->add_option("--node-atlas", features_extract.node_atlas, "node atlas volume")->required();
  features_x->add_option("--edge-atlas", features_extract.edge_atlas, "edge atlas")->required();
  features_x->add_option("--out", features_extract.out, "feature directory")->required();
  features_x->callback([&] { code = cmd_features_extract(features_extract, std::cout, std::cerr); });

  AeTrainOptions ae_train_opts;
  AeEncodeOptions ae_encode_opts;
  auto* ae = app.add_subcommand("ae", "autoencoders")->require_subcommand(1);
  auto* ae_t = ae->add_subcommand("train", "train a node or edge autoencoder on training subjects");
  add_common(ae_t, ae_train_opts.common);
  ae_t->add_option("--features", ae_train_opts.features, "feature directory")->required();
  ae_t->add_option("--kind", ae_train_opts.kind, "node or edge")
      ->check(CLI::IsMember({"node", "edge"}))
      ->capture_default_str();
  ae_t->add_option("--epochs", ae_train_opts.epochs, "training epochs");
  ae_t->add_option("--out", ae_train_opts.out, "checkpoint path")->required();
  ae_t->callback([&] { code = cmd_ae_train(ae_train_opts, std::cout, std::cerr); });
  auto* ae_e = ae->add_subcommand("encode", "encode every subject into latent features");
  ae_e->add_option("--features", ae_encode_opts.features, "feature directory")->required();
  ae_e->add_option("--node-model", ae_encode_opts.node_model, "node autoencoder checkpoint")->required();
  ae_e->add_option("--edge-model", ae_encode_opts.edge_model, "edge autoencoder checkpoint")->required();
  ae_e->add_option("--out", ae_encode_opts.out, "latent JSON path")->required();
  ae_e->callback([&] { code = cmd_ae_encode(ae_encode_opts, std::cout, std::cerr); });

  GraphBuildOptions graph_build;
  auto* graph = app.add_subcommand("graph", "graph datasets")->require_subcommand(1);
  auto* graph_b = graph->add_subcommand("build", "assemble latents into a graph dataset");
  graph_b->add_option("--latents", graph_build.latents, "latent JSON from ae encode")->required();
  graph_b->add_option("--out", graph_build.out, "dataset JSON path")->required();
  graph_b->callback([&] { code = cmd_graph_build(graph_build, std::cout, std::cerr); });

  GnnTrainOptions gnn_train_opts;
  GnnEvalOptions gnn_eval_opts;
  auto* gnn = app.add_subcommand("gnn", "graph classifier")->require_subcommand(1);
  auto* gnn_t = gnn->add_subcommand("train", "train the classifier on the recorded split");
  add_common(gnn_t, gnn_train_opts.common);
  gnn_t->add_option("--dataset", gnn_train_opts.dataset, "dataset JSON")->required();
  gnn_t->add_option("--max-epochs", gnn_train_opts.max_epochs, "epoch limit");
  gnn_t->add_option("--out", gnn_train_opts.out, "output directory")->required();
  gnn_t->callback([&] { code = cmd_gnn_train(gnn_train_opts, std::cout, std::cerr); });
  auto* gnn_e = gnn->add_subcommand("eval", "report accuracy, sensitivity and specificity");
  gnn_e->add_option("--dataset", gnn_eval_opts.dataset, "dataset JSON")->required();
  gnn_e->add_option("--model", gnn_eval_opts.model, "model checkpoint")->required();
  gnn_e->add_option("--subset", gnn_eval_opts.subset, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}))
      ->capture_default_str();
  gnn_e->add_option("--out", gnn_eval_opts.out, "metrics JSON path")->required();
  gnn_e->callback([&] { code = cmd_gnn_eval(gnn_eval_opts, std::cout, std::cerr); });

  ExplainRunOptions explain_opts;
  auto* explain = app.add_subcommand("explain", "edge-level explanations")->require_subcommand(1);
  auto* explain_r = explain->add_subcommand("run", "score edges for one subject");
  add_common(explain_r, explain_opts.common);
  explain_r->add_option("--dataset", explain_opts.dataset, "dataset JSON")->required();
  explain_r->add_option("--model", explain_opts.model, "model checkpoint")->required();
  explain_r->add_option("--subject", explain_opts.subject, "subject id")->required();
  explain_r->add_option("--edge-atlas", explain_opts.edge_atlas, "edge atlas for density maps");
  explain_r->add_option("--thresholds", explain_opts.thresholds, "score thresholds")->capture_default_str();
  explain_r->add_option("--out", explain_opts.out, "output directory")->required();
  explain_r->callback([&] { code = cmd_explain_run(explain_opts, std::cout, std::cerr); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int parse_code = app.exit(e);
    return parse_code == 0 ? kExitOk : kExitFormat;
  }
  return code;
}
