// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include "idhnet/autoencoder.hpp"
#include "idhnet/errors.hpp"
#include "idhnet/explain.hpp"
#include "idhnet/grad_check.hpp"
#include "idhnet/layers.hpp"
#include "idhnet/pipeline.hpp"
#include "test_support.hpp"

using namespace idhnet;
using namespace idhnet::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

GnnArch small_arch(Theta2Mode mode) {
  GnnArch a;
  a.node_dim = 3;
  a.edge_dim = 2;
  a.conv_widths = {4, 5, 3};
  a.embed_width = 6;
  a.hidden_width = 4;
  a.mode = mode;
  return a;
}

std::vector<BrainGraph> pick(const std::vector<BrainGraph>& all, const std::vector<std::size_t>& idx) {
  std::vector<BrainGraph> out;
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

std::vector<int> labels_of(const std::vector<BrainGraph>& graphs) {
  std::vector<int> labels;
  for (const auto& g : graphs) labels.push_back(g.label);
  return labels;
}

double worst_with_prefix(const GradCheckReport& r, std::initializer_list<std::string> prefixes) {
  double worst = 0.0;
  for (const auto& [name, err] : r.max_relative_error) {
    for (const auto& p : prefixes) {
      if (name.rfind(p, 0) == 0) worst = std::max(worst, err);
    }
  }
  return worst;
}

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double ae = 0, conv = 0, embed = 0, head = 0, mask = 0;

  for (int trial = 0; trial < 20; ++trial) {
    AeModel m = ae_init(16, 3, 200 + trial);
    AeConfig c;
    c.input_dim = 16;
    c.latent_dim = 3;
    c.sparsity_weight = rng.uniform(0.0, 2.0);
    Tensor batch = random_tensor({5, 16}, rng, 0.0, 1.0);
    auto loss = [&](ParamSet& p) {
      ParamSet g = p;
      const double l = ae_loss(AeModel{p}, batch, c, &g);
      for (const auto& [name, t] : g.grads()) p.set_grad(name, t);
      return l;
    };
    ae = std::max(ae, grad_check(loss, m.params).worst);
  }

  for (int trial = 0; trial < 20; ++trial) {
    const Theta2Mode mode = trial % 2 ? Theta2Mode::PerChannel : Theta2Mode::Shared;
    const GnnArch arch = small_arch(mode);
    GnnModel init(arch, 300 + trial);
    for (auto name : {"fc1.b", "fc2.b"}) {
      init.params().value(name) = random_tensor(init.params().value(name).shape(), rng, -0.3, 0.3);
    }
    BrainGraph g = random_graph(4, 3, 2, rng, 0.8);
    const ClassWeights w{1.4, 0.7};
    ParamSet params = init.params();
    auto loss = [&](ParamSet& ps) {
      GnnModel m(arch, ps);
      auto trace = m.forward(g, g.edge_features);
      ParamSet grads = ps;
      grads.zero_grad();
      m.backward(trace, weighted_bce_grad_logit(trace.probability, g.label, w), grads);
      for (const auto& [name, t] : grads.grads()) ps.set_grad(name, t);
      return weighted_bce(trace.probability, g.label, w);
    };
    GradCheckReport r = grad_check(loss, params);
    conv = std::max(conv, worst_with_prefix(r, {"conv"}));
    embed = std::max(embed, worst_with_prefix(r, {"embed"}));
    head = std::max(head, worst_with_prefix(r, {"fc1", "fc2"}));
  }

  for (int trial = 0; trial < 20; ++trial) {
    GnnModel m(small_arch(trial % 2 ? Theta2Mode::PerChannel : Theta2Mode::Shared), 400 + trial);
    BrainGraph g = random_graph(4, 3, 2, rng, 1.0);
    const int cls = static_cast<int>(rng.below(2));
    ExplainConfig c;
    ParamSet p;
    p.add("mask", random_tensor({g.num_edges()}, rng, -2, 2));
    auto loss = [&](ParamSet& ps) {
      std::vector<double> grad;
      const auto logits = ps.value("mask").data();
      const double obj = explain_objective(m, g, std::vector<double>(logits.begin(), logits.end()), cls, c, &grad);
      ps.set_grad("mask", Tensor::vector(grad));
      return obj;
    };
    mask = std::max(mask, grad_check(loss, p).worst);
  }

  const double secs = seconds_since(t0);
  const double worst = std::max({ae, conv, embed, head, mask});
  return {worst < 1e-4 && secs < 60.0,
          fmt("max rel err: autoencoder %.1e, conv %.1e, embed %.1e, fc head %.1e, explainer mask %.1e; %.1f s", ae,
              conv, embed, head, mask, secs)};
}

Outcome convolution_fidelity() {
  Rng rng(102);
  double triple = 0.0, collapse = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(5), z = 1 + rng.below(3);
    BrainGraph g = random_graph(n, 3, z, rng);
    GraphConvLayer l{random_tensor({3, 4}, rng), {random_tensor({3, 4}, rng)}};
    const Tensor pre = graph_conv_preactivation(l, g, g.node_features);
    triple = std::max(triple, max_abs_diff(pre, naive_graph_conv_pre(l.theta1, l.theta2, g, g.node_features)));

    BrainGraph moved = g;
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
      double sum = 0.0;
      for (std::size_t c = 0; c < z; ++c) sum += g.edge_features(e, c);
      for (std::size_t c = 0; c + 1 < z; ++c) moved.edge_features(e, c) = rng.uniform(-1, 1);
      double rest = 0.0;
      for (std::size_t c = 0; c + 1 < z; ++c) rest += moved.edge_features(e, c);
      moved.edge_features(e, z - 1) = sum - rest;
    }
    collapse = std::max(collapse, max_abs_diff(graph_conv(l, g, g.node_features), graph_conv(l, moved, moved.node_features)));
  }
  return {triple <= 1e-12 && collapse <= 1e-12,
          fmt("100 graphs: triple-loop max diff %.1e, same-sum edge features max diff %.1e", triple, collapse)};
}

Outcome permutation_invariance() {
  Rng rng(103);
  double embed = 0.0, model = 0.0;
  for (int graph = 0; graph < 4; ++graph) {
    const Theta2Mode mode = graph % 2 ? Theta2Mode::PerChannel : Theta2Mode::Shared;
    GnnModel m(small_arch(mode), 500 + graph);
    EmbedLayer e{random_tensor({3, 6}, rng)};
    BrainGraph g = random_graph(5, 3, 2, rng);
    const double p = gnn_forward(m, g);
    const Tensor readout = graph_embed(e, g.node_features);
    for (int k = 0; k < 100; ++k) {
      BrainGraph q = permute_nodes(g, random_permutation(5, rng));
      model = std::max(model, std::abs(gnn_forward(m, q) - p));
      embed = std::max(embed, max_abs_diff(graph_embed(e, q.node_features), readout));
    }
  }
  return {embed <= 1e-9 && model <= 1e-9,
          fmt("4 graphs x 100 permutations: embedding max diff %.1e, gnn_forward max diff %.1e", embed, model)};
}

Outcome atlas_oracle() {
  Rng rng(104);
  std::size_t equal = 0, recount = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t subjects = 4 + rng.below(7);
    const int quorum = 1 + static_cast<int>(rng.below(subjects));
    const double fraction = std::vector<double>{0.05, 0.1, 0.2, 0.5}[rng.below(4)];
    TractDensitySet set = random_density_set(rng, subjects, 4, {5, 4, 3}, 0.7);
    const auto expected = brute_force_atlas(set, quorum, fraction);

    std::set<EdgeKey> quorate;
    std::map<EdgeKey, int> with_tracts;
    for (const auto& subject : set.subjects) {
      for (const auto& [key, vol] : subject) {
        if (std::any_of(vol.data().begin(), vol.data().end(), [](float v) { return v > 0.0f; })) ++with_tracts[key];
      }
    }
    for (const auto& [key, count] : with_tracts) {
      if (count >= quorum) quorate.insert(key);
    }

    std::map<EdgeKey, std::vector<std::uint32_t>> got;
    try {
      EdgeAtlas a = build_edge_atlas(set, {quorum, fraction});
      for (std::size_t e = 0; e < a.size(); ++e) {
        got[a.edges()[e]] = {a.masks()[e].indices().begin(), a.masks()[e].indices().end()};
      }
    } catch (const EmptyAtlasError&) {
    }
    equal += got == expected;
    std::set<EdgeKey> kept;
    for (const auto& [key, idx] : got) kept.insert(key);
    recount += kept == quorate;
  }
  return {equal == 50 && recount == 50,
          fmt("50 random sets: voxel sets equal %zu/50, quorum recount equal %zu/50", equal, recount)};
}

Outcome synthetic_learnability() {
  SynthConfig sc;
  sc.mutant.amplitude = sc.wild_type.amplitude = amplitude_for_snr(5.0, sc);
  const auto t0 = Clock::now();
  GraphCohort cohort = generate_graph_cohort(sc);
  const auto labels = labels_of(cohort.dataset.graphs);
  const CohortSplit split = split_cohort(labels, sc.seed);
  TrainConfig tc;
  tc.seed = sc.seed;
  TrainResult r = train_gnn(pick(cohort.dataset.graphs, split.train), pick(cohort.dataset.graphs, split.val), GnnArch{}, tc);
  const double secs = seconds_since(t0);
  const Metrics m = evaluate(r.model, pick(cohort.dataset.graphs, split.test));
  bool pass = m.accuracy() >= 90.0 && m.sensitivity() >= 85.0 && m.specificity() >= 85.0 && secs <= 300.0;

  std::string null_runs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig nc;
    nc.seed = seed;
    nc.mutant.amplitude = nc.wild_type.amplitude = 0.0;
    GraphCohort null = generate_graph_cohort(nc);
    const CohortSplit ns = split_cohort(labels_of(null.dataset.graphs), seed);
    TrainConfig ntc;
    ntc.seed = seed;
    TrainResult nr = train_gnn(pick(null.dataset.graphs, ns.train), pick(null.dataset.graphs, ns.val), GnnArch{}, ntc);
    const double acc = evaluate(nr.model, pick(null.dataset.graphs, ns.test)).accuracy();
    pass = pass && acc >= 35.0 && acc <= 65.0;
    null_runs += fmt("%s%.1f", seed == 1 ? "" : " ", acc);
  }
  return {pass, fmt("SNR 5: acc %.1f sens %.1f spec %.1f in %.1f s; null accuracies %s", m.accuracy(),
                    m.sensitivity(), m.specificity(), secs, null_runs.c_str())};
}

struct PhantomRun {
  bool ok = false;
  double accuracy = 0.0;
  double seconds = 0.0;
  std::string metrics;
  std::string error;
};

PhantomRun run_phantom_pipeline(const fs::path& config, const fs::path& root) {
  PhantomRun run;
  const auto t0 = Clock::now();
  std::ostringstream out, err;
  const CommonOptions common{config, {}};
  auto step = [&](int code) {
    if (code != 0 && run.error.empty()) run.error = err.str();
    return code == 0;
  };
  run.ok = step(cmd_synth_generate({common, "volume", root / "synth"}, out, err)) &&
           step(cmd_atlas_build({common, root / "synth/atlas/densities", {}, {}, root / "edge_atlas"}, out, err)) &&
           step(cmd_features_extract(
               {common, root / "synth/cohort", root / "synth/atlas/node_atlas", root / "edge_atlas", root / "features"},
               out, err)) &&
           step(cmd_ae_train({common, root / "features", "node", {}, root / "node_ae.ckpt"}, out, err)) &&
           step(cmd_ae_train({common, root / "features", "edge", {}, root / "edge_ae.ckpt"}, out, err)) &&
           step(cmd_ae_encode({root / "features", root / "node_ae.ckpt", root / "edge_ae.ckpt", root / "latents.json"},
                              out, err)) &&
           step(cmd_graph_build({root / "latents.json", root / "dataset.json"}, out, err)) &&
           step(cmd_gnn_train({common, root / "dataset.json", {}, root / "gnn"}, out, err)) &&
           step(cmd_gnn_eval({root / "dataset.json", root / "gnn/model.ckpt", "test", root / "metrics.json"}, out, err));
  run.seconds = seconds_since(t0);
  if (run.ok) {
    run.metrics = read_bytes(root / "metrics.json");
    run.accuracy = nlohmann::json::parse(run.metrics).at("accuracy").get<double>();
  }
  return run;
}

Outcome phantom_pipeline(const fs::path& config) {
  TempDir dir("acceptance");
  const PhantomRun first = run_phantom_pipeline(config, dir / "run1");
  if (!first.ok) return {false, "pipeline failed: " + first.error};
  const PhantomRun second = run_phantom_pipeline(config, dir / "run2");
  if (!second.ok) return {false, "rerun failed: " + second.error};
  const bool identical = first.metrics == second.metrics;
  return {first.accuracy >= 85.0 && first.seconds <= 900.0 && second.seconds <= 900.0 && identical,
          fmt("test accuracy %.1f; runs %.0f s and %.0f s; metrics.json %s", first.accuracy, first.seconds,
              second.seconds, identical ? "byte-identical" : "differs")};
}

Outcome autoencoder_compression() {
  const std::size_t n = 200, d = kVoxelVectorLength, rank = 8;
  Rng rng(42);
  Tensor a = random_tensor({n, rank}, rng), b = random_tensor({rank, d}, rng);
  Tensor x = matmul(a, b);
  for (double& v : x.data()) v = 0.5 + v / 16.0;
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j) / static_cast<double>(n);
  }
  double baseline = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) baseline += (x(i, j) - mean[j]) * (x(i, j) - mean[j]);
  }
  baseline /= static_cast<double>(n * d);

  AeConfig c;
  c.input_dim = d;
  const auto t0 = Clock::now();
  AeTrainResult r = ae_train(x, c);
  const double mse = reconstruction_mse(r.model, x);
  const std::size_t latent = encode(r.model, x.row(0)).size();
  return {mse <= 0.2 * baseline && latent == 12,
          fmt("MSE %.3e vs mean baseline %.3e (ratio %.3f), latent dim %zu, %.0f s", mse, baseline, mse / baseline,
              latent, seconds_since(t0))};
}

Outcome explainer_recovery() {
  SynthConfig sc;
  sc.mutant.affected_edges = 0;
  sc.wild_type.affected_edges = 1;
  sc.mutant.amplitude = sc.wild_type.amplitude = amplitude_for_snr(10.0, sc);
  GraphCohort cohort = generate_graph_cohort(sc);
  const CohortSplit split = split_cohort(labels_of(cohort.dataset.graphs), sc.seed);
  TrainConfig tc;
  tc.seed = sc.seed;
  TrainResult r = train_gnn(pick(cohort.dataset.graphs, split.train), pick(cohort.dataset.graphs, split.val), GnnArch{}, tc);
  int top = 0, nested = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const PlantedGraph pg = generate_planted_graph(sc, seed);
    const EdgeMaskResult res = explain_edges(r.model, pg.graph);
    const auto best = static_cast<std::size_t>(std::max_element(res.scores.begin(), res.scores.end()) - res.scores.begin());
    top += best == pg.planted_edge;
    const auto half = threshold_subnetwork(res, 0.5).edges, high = threshold_subnetwork(res, 0.9).edges;
    nested += std::includes(half.begin(), half.end(), high.begin(), high.end());
  }
  return {top >= 16 && nested == 20, fmt("planted edge top-scored in %d/20 runs, 0.9-set nested in 0.5-set %d/20", top, nested)};
}

Outcome metric_identities() {
  Rng rng(109);
  int exact = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<int> pred(n), label(n);
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(rng.below(2));
      label[i] = static_cast<int>(rng.below(2));
      tp += pred[i] == 1 && label[i] == 1;
      fp += pred[i] == 1 && label[i] == 0;
      tn += pred[i] == 0 && label[i] == 0;
      fn += pred[i] == 0 && label[i] == 1;
    }
    const Metrics m = metrics_from_predictions(pred, label);
    auto same = [](double got, std::size_t num, std::size_t den) {
      return den == 0 ? std::isnan(got) : got == 100.0 * static_cast<double>(num) / static_cast<double>(den);
    };
    exact += m.tp == tp && m.fp == fp && m.tn == tn && m.fn == fn && same(m.accuracy(), tp + tn, n) &&
             same(m.sensitivity(), tp, tp + fn) && same(m.specificity(), tn, tn + fp);
  }
  return {exact == 1000, fmt("%d/1000 random vectors match hand counts exactly", exact)};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path phantom_config = argc > 1 ? fs::path(argv[1]) : fs::path(IDHNET_SOURCE_DIR) / "configs/phantom60.json";
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient oracle", gradient_oracle},
      {"graph convolution fidelity", convolution_fidelity},
      {"permutation invariance", permutation_invariance},
      {"edge atlas oracle", atlas_oracle},
      {"synthetic learnability", synthetic_learnability},
      {"end-to-end phantom pipeline", [&] { return phantom_pipeline(phantom_config); }},
      {"autoencoder compression", autoencoder_compression},
      {"explainer recovery", explainer_recovery},
      {"metric identities", metric_identities},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
