#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "idhnet/atlas.hpp"
#include "idhnet/autoencoder.hpp"
#include "idhnet/explain.hpp"
#include "idhnet/gnn.hpp"
#include "idhnet/synth.hpp"

namespace idhnet {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitFormat = 2,
  kExitEmptyAtlas = 3,
  kExitSplitLeakage = 4,
  kExitCheckpointMismatch = 5,
};

/// All module settings plus the global seed. Module seeds not given
/// explicitly in the config file are derived from the global seed.
struct PipelineConfig {
  std::uint64_t seed = 7;
  SynthConfig synth;
  EdgeAtlasConfig atlas;
  AeConfig autoencoder;
  GnnArch arch;
  TrainConfig train;
  ExplainConfig explain;
  std::uint64_t split_seed = 0;
};

/// Reads a JSON config with optional sections "seed", "synth", "atlas",
/// "autoencoder", "gnn" ({"arch": ..., "train": ...}) and "explain".
/// `seed_override` replaces the file's global seed before module seeds are derived.
PipelineConfig load_pipeline_config(const std::optional<std::filesystem::path>& path,
                                    std::optional<std::uint64_t> seed_override = std::nullopt);
nlohmann::json pipeline_config_json(const PipelineConfig& config);

/// Train/val/test subject ids plus the seed that produced them.
struct SplitManifest {
  std::uint64_t seed = 0;
  std::vector<std::string> train, val, test;

  std::string hash() const;
};

nlohmann::json split_json(const SplitManifest& split);
SplitManifest split_from_json(const nlohmann::json& j);
/// Throws SplitLeakageError when the file does not exist.
SplitManifest load_split(const std::filesystem::path& path);
void save_split(const SplitManifest& split, const std::filesystem::path& path);
SplitManifest make_split(const std::vector<std::string>& ids, const std::vector<int>& labels, std::uint64_t seed);
/// Manifest stored next to a graph dataset: "<stem>.split.json".
std::filesystem::path dataset_split_path(const std::filesystem::path& dataset);

/// Maps library exceptions onto exit codes and prints the message to `err`.
int run_guarded(std::ostream& err, const std::function<int()>& body);

struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
};

struct SynthGenerateOptions {
  CommonOptions common;
  std::string level = "graph";  // "volume" or "graph"
  std::filesystem::path out;
};
int cmd_synth_generate(const SynthGenerateOptions& o, std::ostream& out, std::ostream& err);

struct AtlasBuildOptions {
  CommonOptions common;
  std::filesystem::path densities;
  std::optional<std::size_t> quorum;
  std::optional<double> top_fraction;
  std::filesystem::path out;
};
int cmd_atlas_build(const AtlasBuildOptions& o, std::ostream& out, std::ostream& err);

struct FeaturesExtractOptions {
  CommonOptions common;
  std::filesystem::path cohort;
  std::filesystem::path node_atlas;
  std::filesystem::path edge_atlas;
  std::filesystem::path out;
};
int cmd_features_extract(const FeaturesExtractOptions& o, std::ostream& out, std::ostream& err);

struct AeTrainOptions {
  CommonOptions common;
  std::filesystem::path features;
  std::string kind = "node";  // "node" or "edge"
  std::optional<std::size_t> epochs;
  std::filesystem::path out;
};
int cmd_ae_train(const AeTrainOptions& o, std::ostream& out, std::ostream& err);

struct AeEncodeOptions {
  std::filesystem::path features;
  std::filesystem::path node_model;
  std::filesystem::path edge_model;
  std::filesystem::path out;
};
int cmd_ae_encode(const AeEncodeOptions& o, std::ostream& out, std::ostream& err);

struct GraphBuildOptions {
  std::filesystem::path latents;
  std::filesystem::path out;
};
int cmd_graph_build(const GraphBuildOptions& o, std::ostream& out, std::ostream& err);

struct GnnTrainOptions {
  CommonOptions common;
  std::filesystem::path dataset;
  std::optional<std::size_t> max_epochs;
  std::filesystem::path out;
};
int cmd_gnn_train(const GnnTrainOptions& o, std::ostream& out, std::ostream& err);

struct GnnEvalOptions {
  std::filesystem::path dataset;
  std::filesystem::path model;
  std::string subset = "test";  // "train", "val", "test" or "all"
  std::filesystem::path out;
};
int cmd_gnn_eval(const GnnEvalOptions& o, std::ostream& out, std::ostream& err);

struct ExplainRunOptions {
  CommonOptions common;
  std::filesystem::path dataset;
  std::filesystem::path model;
  std::string subject;
  std::optional<std::filesystem::path> edge_atlas;
  std::vector<double> thresholds = {0.5, 0.9};
  std::filesystem::path out;
};
int cmd_explain_run(const ExplainRunOptions& o, std::ostream& out, std::ostream& err);

}  // namespace idhnet
