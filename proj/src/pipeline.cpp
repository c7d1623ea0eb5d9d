#include "idhnet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "idhnet/errors.hpp"
#include "idhnet/rng.hpp"

namespace idhnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path sibling(const fs::path& path, const std::string& suffix) {
  fs::path p = path;
  p.replace_extension();
  return p.string() + suffix;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t seed_for(const json& section, std::uint64_t global, const char* tag) {
  if (section.is_object() && section.contains("seed")) return section.at("seed").get<std::uint64_t>();
  return derive_seed(global, tag);
}

const json& section_of(const json& root, const char* name) {
  static const json kEmpty = json::object();
  auto it = root.find(name);
  return it == root.end() ? kEmpty : *it;
}

struct SubjectEntry {
  std::string id;
  int label = 0;
};

std::vector<SubjectEntry> read_subjects(const fs::path& path) {
  const json j = read_json(path);
  std::vector<SubjectEntry> out;
  for (const auto& s : j.at("subjects")) out.push_back({s.at("id").get<std::string>(), s.at("label").get<int>()});
  if (out.empty()) throw FormatError("no subjects listed in " + path.string());
  return out;
}

json subjects_json(const std::vector<SubjectEntry>& subjects) {
  json list = json::array();
  for (const auto& s : subjects) list.push_back({{"id", s.id}, {"label", s.label}});
  return {{"subjects", list}};
}

json edges_json(const std::vector<EdgeKey>& edges) {
  json list = json::array();
  for (const auto& e : edges) list.push_back({e.first, e.second});
  return list;
}

std::vector<EdgeKey> edges_from_json(const json& j) {
  std::vector<EdgeKey> out;
  for (const auto& e : j) out.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
  return out;
}

/// Feature matrix of one subject: region rows 1..R, then one row per atlas edge.
struct FeatureFile {
  std::string id;
  int label = 0;
  int regions = 0;
  std::vector<EdgeKey> edges;
  std::vector<float> values;  // rows × kVoxelVectorLength

  std::size_t rows() const { return static_cast<std::size_t>(regions) + edges.size(); }
  std::span<const float> row(std::size_t r) const {
    return std::span<const float>(values).subspan(r * kVoxelVectorLength, kVoxelVectorLength);
  }
};

void save_feature_file(const FeatureFile& f, const fs::path& dir) {
  write_json(dir / (f.id + ".json"), {{"id", f.id},
                                      {"label", f.label},
                                      {"regions", f.regions},
                                      {"edges", edges_json(f.edges)},
                                      {"rows", f.rows()},
                                      {"cols", kVoxelVectorLength},
                                      {"dtype", "f32le"}});
  std::ofstream out(dir / (f.id + ".raw"), std::ios::binary);
  if (!out) throw FormatError("cannot write feature payload for " + f.id);
  out.write(reinterpret_cast<const char*>(f.values.data()), static_cast<std::streamsize>(f.values.size() * sizeof(float)));
}

FeatureFile load_feature_file(const fs::path& dir, const std::string& id) {
  const json h = read_json(dir / (id + ".json"));
  FeatureFile f;
  f.id = h.at("id").get<std::string>();
  f.label = h.at("label").get<int>();
  f.regions = h.at("regions").get<int>();
  f.edges = edges_from_json(h.at("edges"));
  if (h.at("cols").get<std::size_t>() != kVoxelVectorLength || h.at("rows").get<std::size_t>() != f.rows()) {
    throw FormatError("feature header for " + id + " has inconsistent rows/cols");
  }
  const fs::path raw = dir / (id + ".raw");
  std::ifstream in(raw, std::ios::binary);
  if (!in) throw FormatError("missing feature payload " + raw.string());
  f.values.resize(f.rows() * kVoxelVectorLength);
  in.read(reinterpret_cast<char*>(f.values.data()), static_cast<std::streamsize>(f.values.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(f.values.size() * sizeof(float)) || in.peek() != EOF) {
    throw FormatError("feature payload " + raw.string() + " does not match its header");
  }
  return f;
}

const std::vector<std::string>& subset_ids(const SplitManifest& split, const std::string& subset) {
  if (subset == "train") return split.train;
  if (subset == "val") return split.val;
  if (subset == "test") return split.test;
  throw FormatError("unknown subset '" + subset + "' (train, val, test or all)");
}

std::vector<BrainGraph> graphs_for(const GraphDataset& dataset, const std::vector<std::string>& ids) {
  std::vector<BrainGraph> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(dataset.find(id));
  return out;
}

/// Every manifest id must exist in the dataset and appear in exactly one subset.
void check_split_against(const SplitManifest& split, const GraphDataset& dataset) {
  std::set<std::string> seen;
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (const auto& id : *part) {
      if (!seen.insert(id).second) throw SplitLeakageError("subject " + id + " appears in more than one split");
      dataset.find(id);
    }
  }
  if (seen.size() != dataset.graphs.size()) {
    throw SplitLeakageError("split manifest covers " + std::to_string(seen.size()) + " subjects, dataset has " +
                            std::to_string(dataset.graphs.size()));
  }
}

Tensor rows_to_tensor(const json& rows, std::size_t cols) {
  Tensor t({rows.size(), cols});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw DimensionError("latent row has the wrong width");
    for (std::size_t c = 0; c < cols; ++c) t(r, c) = rows[r][c].get<double>();
  }
  return t;
}

std::string format_percent(double v) {
  if (std::isnan(v)) return "n/a";
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << v;
  return s.str();
}

}  // namespace

PipelineConfig load_pipeline_config(const std::optional<fs::path>& path, std::optional<std::uint64_t> seed_override) {
  const json root = path ? read_json(*path) : json::object();
  if (!root.is_object()) throw FormatError("config must be a JSON object");
  PipelineConfig c;
  try {
    c.seed = seed_override ? *seed_override : root.value("seed", c.seed);
    const json& synth = section_of(root, "synth");
    from_json(synth, c.synth);
    c.synth.seed = seed_for(synth, c.seed, "synth");
    const json& atlas = section_of(root, "atlas");
    c.atlas.retention_quorum = atlas.value("quorum", c.atlas.retention_quorum);
    c.atlas.top_fraction = atlas.value("top_fraction", c.atlas.top_fraction);
    const json& ae = section_of(root, "autoencoder");
    from_json(ae, c.autoencoder);
    c.autoencoder.seed = seed_for(ae, c.seed, "autoencoder");
    const json& gnn = section_of(root, "gnn");
    from_json(section_of(gnn, "arch"), c.arch);
    const json& train = section_of(gnn, "train");
    from_json(train, c.train);
    c.train.seed = seed_for(train, c.seed, "gnn");
    from_json(section_of(root, "explain"), c.explain);
    c.split_seed = root.contains("split_seed") ? root.at("split_seed").get<std::uint64_t>() : derive_seed(c.seed, "split");
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid config: ") + e.what());
  }
  c.synth.validate();
  c.autoencoder.validate();
  c.arch.validate();
  c.train.validate();
  c.explain.validate();
  return c;
}

json pipeline_config_json(const PipelineConfig& c) {
  return {{"seed", c.seed},
          {"split_seed", c.split_seed},
          {"synth", c.synth},
          {"atlas", {{"quorum", c.atlas.retention_quorum}, {"top_fraction", c.atlas.top_fraction}}},
          {"autoencoder", c.autoencoder},
          {"gnn", {{"arch", c.arch}, {"train", c.train}}},
          {"explain", c.explain}};
}

std::string SplitManifest::hash() const {
  return hex64(fnv1a64(json{{"train", train}, {"val", val}, {"test", test}}.dump()));
}

json split_json(const SplitManifest& split) {
  return {{"seed", split.seed}, {"train", split.train}, {"val", split.val}, {"test", split.test}, {"hash", split.hash()}};
}

SplitManifest split_from_json(const json& j) {
  SplitManifest s;
  try {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train = j.at("train").get<std::vector<std::string>>();
    s.val = j.at("val").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed split manifest: ") + e.what());
  }
  if (j.contains("hash") && j.at("hash").get<std::string>() != s.hash()) {
    throw SplitLeakageError("split manifest was edited after it was recorded (hash mismatch)");
  }
  return s;
}

SplitManifest load_split(const fs::path& path) {
  if (!fs::exists(path)) throw SplitLeakageError("no split manifest at " + path.string() + "; record the split first");
  return split_from_json(read_json(path));
}

void save_split(const SplitManifest& split, const fs::path& path) { write_json(path, split_json(split)); }

SplitManifest make_split(const std::vector<std::string>& ids, const std::vector<int>& labels, std::uint64_t seed) {
  if (ids.size() != labels.size()) throw DimensionError("make_split: ids and labels differ in length");
  const CohortSplit split = split_cohort(labels, seed);
  SplitManifest m;
  m.seed = seed;
  for (auto i : split.train) m.train.push_back(ids[i]);
  for (auto i : split.val) m.val.push_back(ids[i]);
  for (auto i : split.test) m.test.push_back(ids[i]);
  return m;
}

fs::path dataset_split_path(const fs::path& dataset) { return sibling(dataset, ".split.json"); }

int run_guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const SplitLeakageError& e) {
    err << "split error: " << e.what() << '\n';
    return kExitSplitLeakage;
  } catch (const CheckpointMismatchError& e) {
    err << "checkpoint mismatch: " << e.what() << '\n';
    return kExitCheckpointMismatch;
  } catch (const EmptyAtlasError& e) {
    err << "empty atlas: " << e.what() << '\n';
    return kExitEmptyAtlas;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const json::exception& e) {
    err << "format error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitFailure;
  }
}

int cmd_synth_generate(const SynthGenerateOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const PipelineConfig cfg = load_pipeline_config(o.common.config, o.common.seed);
    fs::create_directories(o.out);
    write_json(o.out / "config.json", pipeline_config_json(cfg));
    if (o.level == "graph") {
      const GraphCohort cohort = generate_graph_cohort(cfg.synth);
      const fs::path dataset = o.out / "dataset.json";
      save_graph_dataset(cohort.dataset, dataset);
      std::vector<std::string> ids;
      std::vector<int> labels;
      for (const auto& g : cohort.dataset.graphs) {
        ids.push_back(g.id);
        labels.push_back(g.label);
      }
      save_split(make_split(ids, labels, cfg.split_seed), dataset_split_path(dataset));
      write_json(o.out / "truth.json", truth_json(cohort.truth));
      out << "graph cohort: " << cohort.dataset.graphs.size() << " graphs, " << cohort.dataset.nodes << " nodes, "
          << (cohort.dataset.graphs.empty() ? 0 : cohort.dataset.graphs.front().num_edges()) << " edges\n";
      return kExitOk;
    }
    if (o.level != "volume") throw FormatError("--level must be 'volume' or 'graph'");
    const AtlasPair pair = generate_atlas_pair(cfg.synth);
    save_volume(pair.node_atlas.labels(), o.out / "atlas" / "node_atlas");
    save_tract_densities(pair.densities, o.out / "atlas" / "densities");
    const EdgeAtlas edge_atlas = build_edge_atlas(pair.densities, cfg.atlas);
    const PhantomCohort cohort = generate_phantom_cohort(cfg.synth, pair.node_atlas, edge_atlas);
    std::vector<SubjectEntry> subjects;
    for (const auto& s : cohort.subjects) {
      for (std::size_t m = 0; m < kModalityCount; ++m) {
        save_volume(s.scan.modality(static_cast<Modality>(m)), o.out / "cohort" / s.id / kModalityNames[m]);
      }
      subjects.push_back({s.id, s.label});
    }
    write_json(o.out / "cohort" / "subjects.json", subjects_json(subjects));
    write_json(o.out / "truth.json", truth_json(cohort.truth));
    out << "volume cohort: " << subjects.size() << " subjects on " << cfg.synth.grid.nx << "x" << cfg.synth.grid.ny << "x"
        << cfg.synth.grid.nz << ", " << cfg.synth.regions << " regions, " << edge_atlas.size() << " atlas edges\n";
    return kExitOk;
  });
}

int cmd_atlas_build(const AtlasBuildOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    PipelineConfig cfg = load_pipeline_config(o.common.config, o.common.seed);
    if (o.quorum) cfg.atlas.retention_quorum = static_cast<int>(*o.quorum);
    if (o.top_fraction) cfg.atlas.top_fraction = *o.top_fraction;
    if (!fs::is_directory(o.densities)) throw FormatError("density directory not found: " + o.densities.string());
    const TractDensitySet densities = load_tract_densities(o.densities);
    const EdgeAtlas atlas = build_edge_atlas(densities, cfg.atlas);
    save_edge_atlas(atlas, o.out);
    write_json(sibling(o.out, ".config.json"), pipeline_config_json(cfg));

    std::size_t lo = std::numeric_limits<std::size_t>::max(), hi = 0, total = 0;
    for (const auto& m : atlas.masks()) {
      lo = std::min(lo, m.size());
      hi = std::max(hi, m.size());
      total += m.size();
    }
    out << "subjects: " << densities.subjects.size() << "  quorum: " << cfg.atlas.retention_quorum
        << "  top fraction: " << cfg.atlas.top_fraction << '\n';
    out << "edges: " << atlas.size() << '\n';
    out << "voxels per edge: min " << lo << "  mean " << std::fixed << std::setprecision(1)
        << static_cast<double>(total) / static_cast<double>(atlas.size()) << "  max " << hi << '\n';
    return kExitOk;
  });
}

int cmd_features_extract(const FeaturesExtractOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const PipelineConfig cfg = load_pipeline_config(o.common.config, o.common.seed);
    const NodeAtlas node_atlas = load_node_atlas(o.node_atlas);
    const EdgeAtlas edge_atlas = load_edge_atlas(o.edge_atlas);
    const auto subjects = read_subjects(o.cohort / "subjects.json");
    const Mask brain = node_atlas.brain_mask();
    std::vector<Mask> rois;
    for (int r = 1; r <= node_atlas.region_count(); ++r) rois.push_back(node_atlas.region_mask(r));
    for (const auto& m : edge_atlas.masks()) rois.push_back(m);

    fs::create_directories(o.out);
    std::vector<std::string> ids;
    std::vector<int> labels;
    for (const auto& s : subjects) {
      std::array<Volume, kModalityCount> modalities;
      for (std::size_t m = 0; m < kModalityCount; ++m) modalities[m] = load_volume(o.cohort / s.id / kModalityNames[m]);
      const MultiModalScan scan = normalize_scan(MultiModalScan(std::move(modalities)), brain);
      FeatureFile f{s.id, s.label, node_atlas.region_count(), edge_atlas.edges(), {}};
      f.values.reserve(rois.size() * kVoxelVectorLength);
      for (const auto& roi : rois) {
        const VoxelVector v = extract_voxel_vector(scan, roi);
        f.values.insert(f.values.end(), v.begin(), v.end());
      }
      save_feature_file(f, o.out);
      ids.push_back(s.id);
      labels.push_back(s.label);
    }
    write_json(o.out / "subjects.json", subjects_json(subjects));
    save_split(make_split(ids, labels, cfg.split_seed), o.out / "split.json");
    write_json(o.out / "config.json", pipeline_config_json(cfg));
    out << "extracted " << subjects.size() << " subjects: " << node_atlas.region_count() << " node and "
        << edge_atlas.size() << " edge vectors of length " << kVoxelVectorLength << " each\n";
    return kExitOk;
  });
}

int cmd_ae_train(const AeTrainOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    PipelineConfig cfg = load_pipeline_config(o.common.config, o.common.seed);
    if (o.kind != "node" && o.kind != "edge") throw FormatError("--kind must be 'node' or 'edge'");
    const SplitManifest split = load_split(o.features / "split.json");
    AeConfig ae = cfg.autoencoder;
    ae.input_dim = kVoxelVectorLength;
    ae.seed = derive_seed(cfg.autoencoder.seed, o.kind);
    if (o.epochs) ae.epochs = *o.epochs;

    std::vector<VoxelVector> vectors;
    for (const auto& id : split.train) {
      const FeatureFile f = load_feature_file(o.features, id);
      const std::size_t begin = o.kind == "node" ? 0 : static_cast<std::size_t>(f.regions);
      const std::size_t end = o.kind == "node" ? static_cast<std::size_t>(f.regions) : f.rows();
      for (std::size_t r = begin; r < end; ++r) {
        const auto row = f.row(r);
        vectors.emplace_back(row.begin(), row.end());
      }
    }
    const AeTrainResult result = ae_train(vectors, ae);
    save_autoencoder(result.model, ae,
                     {{"roi_kind", o.kind}, {"split_hash", split.hash()}, {"train_subjects", split.train.size()},
                      {"train_vectors", vectors.size()}},
                     o.out);
    cfg.autoencoder = ae;
    write_json(sibling(o.out, ".config.json"), pipeline_config_json(cfg));
    out << o.kind << " autoencoder: " << vectors.size() << " vectors from " << split.train.size()
        << " training subjects, loss " << result.initial_loss << " -> " << result.epoch_loss.back() << '\n';
    return kExitOk;
  });
}

int cmd_ae_encode(const AeEncodeOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const SplitManifest split = load_split(o.features / "split.json");
    const LoadedAutoencoder node = load_autoencoder(o.node_model);
    const LoadedAutoencoder edge = load_autoencoder(o.edge_model);
    for (const auto* m : {&node, &edge}) {
      if (m->header.value("split_hash", std::string()) != split.hash()) {
        throw SplitLeakageError("autoencoder was not trained on the recorded split of " + o.features.string());
      }
    }
    if (node.header.value("roi_kind", std::string()) != "node" || edge.header.value("roi_kind", std::string()) != "edge") {
      throw CheckpointMismatchError("expected a node autoencoder and an edge autoencoder");
    }

    const auto subjects = read_subjects(o.features / "subjects.json");
    json list = json::array();
    int regions = 0;
    std::vector<EdgeKey> edges;
    for (const auto& s : subjects) {
      const FeatureFile f = load_feature_file(o.features, s.id);
      regions = f.regions;
      edges = f.edges;
      json node_latents = json::array(), edge_latents = json::array();
      for (std::size_t r = 0; r < f.rows(); ++r) {
        const bool is_node = r < static_cast<std::size_t>(f.regions);
        (is_node ? node_latents : edge_latents).push_back(encode((is_node ? node : edge).model, f.row(r)));
      }
      list.push_back({{"id", s.id}, {"label", s.label}, {"node_latents", node_latents}, {"edge_latents", edge_latents}});
    }
    write_json(o.out, {{"regions", regions},
                       {"latent_dim", node.model.latent_dim()},
                       {"edges", edges_json(edges)},
                       {"split", split_json(split)},
                       {"subjects", list}});
    out << "encoded " << subjects.size() << " subjects into " << node.model.latent_dim() << "-dim latents\n";
    return kExitOk;
  });
}

int cmd_graph_build(const GraphBuildOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const json latents = read_json(o.latents);
    if (!latents.contains("split")) throw SplitLeakageError("latent file carries no split manifest");
    const SplitManifest split = split_from_json(latents.at("split"));
    GraphDataset dataset;
    dataset.nodes = latents.at("regions").get<std::size_t>();
    dataset.latent_dim = latents.at("latent_dim").get<std::size_t>();
    std::vector<EdgeKey> edges;
    for (const auto& e : edges_from_json(latents.at("edges"))) edges.push_back({e.first - 1, e.second - 1});
    for (const auto& s : latents.at("subjects")) {
      BrainGraph g;
      g.id = s.at("id").get<std::string>();
      g.label = s.at("label").get<int>();
      g.node_features = rows_to_tensor(s.at("node_latents"), dataset.latent_dim);
      g.edges = edges;
      g.edge_features = rows_to_tensor(s.at("edge_latents"), dataset.latent_dim);
      g.validate();
      dataset.graphs.push_back(std::move(g));
    }
    check_split_against(split, dataset);
    save_graph_dataset(dataset, o.out);
    save_split(split, dataset_split_path(o.out));
    out << "graph dataset: " << dataset.graphs.size() << " graphs, " << dataset.nodes << " nodes, " << edges.size()
        << " edges\n";
    return kExitOk;
  });
}

int cmd_gnn_train(const GnnTrainOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    PipelineConfig cfg = load_pipeline_config(o.common.config, o.common.seed);
    if (o.max_epochs) cfg.train.max_epochs = *o.max_epochs;
    const GraphDataset dataset = load_graph_dataset(o.dataset);
    const SplitManifest split = load_split(dataset_split_path(o.dataset));
    check_split_against(split, dataset);
    GnnArch arch = cfg.arch;
    arch.node_dim = dataset.latent_dim;
    if (!dataset.graphs.empty()) arch.edge_dim = dataset.graphs.front().edge_dim();
    cfg.arch = arch;

    const auto train = graphs_for(dataset, split.train);
    const auto val = graphs_for(dataset, split.val);
    const TrainResult result = train_gnn(train, val, arch, cfg.train);

    fs::create_directories(o.out);
    save_gnn(result.model, cfg.train, {{"split_hash", split.hash()}, {"best_epoch", result.best_epoch}},
             o.out / "model.ckpt");
    json log = json::array();
    for (const auto& e : result.log) {
      log.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"lr", e.learning_rate}});
    }
    write_json(o.out / "train_log.json",
               {{"best_epoch", result.best_epoch},
                {"best_val_loss", result.best_val_loss},
                {"class_weights", {{"mutant", result.weights.mutant}, {"wild_type", result.weights.wild_type}}},
                {"epochs", log}});
    write_json(o.out / "config.json", pipeline_config_json(cfg));
    out << "trained on " << train.size() << " graphs (val " << val.size() << "), " << result.log.size()
        << " epochs, best epoch " << result.best_epoch << ", val loss " << result.best_val_loss << '\n';
    return kExitOk;
  });
}

int cmd_gnn_eval(const GnnEvalOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const LoadedGnn model = load_gnn(o.model);
    const GraphDataset dataset = load_graph_dataset(o.dataset);
    const SplitManifest split = load_split(dataset_split_path(o.dataset));
    if (model.header.value("split_hash", std::string()) != split.hash()) {
      throw SplitLeakageError("model was trained against a different split than " + o.dataset.string());
    }
    if (model.model.arch().node_dim != dataset.latent_dim) {
      throw CheckpointMismatchError("model expects " + std::to_string(model.model.arch().node_dim) +
                                    " node features, dataset has " + std::to_string(dataset.latent_dim));
    }
    std::vector<BrainGraph> graphs;
    if (o.subset == "all") {
      graphs = dataset.graphs;
    } else {
      graphs = graphs_for(dataset, subset_ids(split, o.subset));
    }
    if (graphs.empty()) throw DataError("no graphs in subset '" + o.subset + "'");
    const Metrics m = evaluate(model.model, graphs);
    json report = metrics_json(m);
    report["subset"] = o.subset;
    write_json(o.out, report);
    out << metrics_table(m);
    out << "(" << o.subset << " subset, n = " << m.total() << "; accuracy " << format_percent(m.accuracy()) << "%)\n";
    return kExitOk;
  });
}

int cmd_explain_run(const ExplainRunOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const PipelineConfig cfg = load_pipeline_config(o.common.config, o.common.seed);
    const LoadedGnn model = load_gnn(o.model);
    const GraphDataset dataset = load_graph_dataset(o.dataset);
    const BrainGraph& graph = dataset.find(o.subject);
    const EdgeMaskResult result = explain_edges(model.model, graph, cfg.explain);

    fs::create_directories(o.out);
    save_edge_scores_csv(result, o.out / (o.subject + "_edge_scores.csv"));
    std::optional<EdgeAtlas> atlas;
    if (o.edge_atlas) atlas = load_edge_atlas(*o.edge_atlas);
    out << "subject " << o.subject << ": predicted " << (result.explained_class == kMutant ? "mutant" : "wild-type")
        << ", objective " << result.objective.front() << " -> " << result.objective.back() << '\n';
    for (double t : o.thresholds) {
      const Subnetwork sub = threshold_subnetwork(result, t);
      const int percent = static_cast<int>(std::lround(t * 100.0));
      out << "  score > " << t << ": " << sub.edges.size() << " of " << result.edges.size() << " edges\n";
      if (atlas) {
        save_volume(tract_density_map(sub, *atlas), o.out / (o.subject + "_density_p" + std::to_string(percent)));
      }
    }
    write_json(o.out / "config.json", pipeline_config_json(cfg));
    return kExitOk;
  });
}

}  // namespace idhnet
