#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hdgi/config.hpp"
#include "hdgi/eval.hpp"
#include "hdgi/hetgraph.hpp"
#include "hdgi/infomax.hpp"
#include "hdgi/io.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

hdgi::RunConfig load_config(const CommonArgs& args) {
  hdgi::RunConfig cfg = hdgi::parse_config(args.config_path);
  if (args.seed) cfg.train.seed = *args.seed;
  return cfg;
}

std::vector<int> require_labels(const hdgi::HeteroGraph& graph) {
  if (!graph.labels())
    throw hdgi::ConfigError("this command needs labels; the config provides none");
  return *graph.labels();
}

int cmd_synth(const hdgi::SynthOptions& opt, const std::string& out_dir) {
  const hdgi::HeteroGraph g = hdgi::synth_graph(opt);
  fs::create_directories(out_dir);
  hdgi::write_graph(g, out_dir + "/nodes.tsv", out_dir + "/edges.tsv", out_dir + "/features.tsv",
                    out_dir + "/labels.tsv");
  std::cout << "wrote synthetic graph to " << out_dir << " (" << g.target_count()
            << " target nodes)\n";
  return 0;
}

int cmd_metapaths(const CommonArgs& args, const std::string& out_dir) {
  const hdgi::RunConfig cfg = load_config(args);
  const hdgi::HeteroGraph g = cfg.load_or_generate_graph();
  if (!out_dir.empty()) fs::create_directories(out_dir);
  for (const auto& spec : cfg.metapaths) {
    const hdgi::SparseMatrix a = hdgi::derive_metapath_adjacency(g, spec);
    std::cout << spec.name << '\t' << a.n_rows << '\t' << a.nnz() << '\n';
    if (!out_dir.empty()) {
      std::ofstream out(out_dir + "/" + spec.name + ".adj.tsv");
      if (!out) throw std::runtime_error("cannot write adjacency for " + spec.name);
      for (int i = 0; i < a.n_rows; ++i) {
        auto [b, e] = a.row_range(i);
        for (int k = b; k < e; ++k)
          if (a.col_idx[static_cast<std::size_t>(k)] > i)
            out << i << '\t' << a.col_idx[static_cast<std::size_t>(k)] << '\n';
      }
    }
  }
  return 0;
}

int cmd_train(const CommonArgs& args, const std::string& output_dir_override) {
  hdgi::RunConfig cfg = load_config(args);
  if (!output_dir_override.empty()) cfg.output_dir = output_dir_override;
  const hdgi::HeteroGraph g = cfg.load_or_generate_graph();

  const std::string run_dir = hdgi::run_dir_name(cfg);
  fs::create_directories(run_dir);
  {
    std::ofstream out(run_dir + "/config.json");
    out << hdgi::to_json(cfg).dump(2) << '\n';
  }

  const auto start = std::chrono::steady_clock::now();
  const hdgi::TrainResult result = hdgi::train(g, cfg.metapaths, cfg.train);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  hdgi::save_checkpoint(result.params, run_dir + "/checkpoint.txt");
  hdgi::write_embeddings(result.embeddings, run_dir + "/embeddings.tsv");
  hdgi::write_training_log(result.log, run_dir + "/train.log");

  std::cout << "run directory: " << run_dir << '\n';
  std::cout << "epochs run: " << result.log.size() << ", best epoch: " << result.best_epoch
            << ", best loss: " << result.best_loss << '\n';
  std::cout << "training time: " << seconds << " s\n";
  return 0;
}

int cmd_embed(const CommonArgs& args, const std::string& checkpoint_path,
              const std::string& out_path) {
  const hdgi::RunConfig cfg = load_config(args);
  const hdgi::HeteroGraph g = cfg.load_or_generate_graph();
  const hdgi::ModelParams params = hdgi::load_checkpoint(checkpoint_path);
  const hdgi::Tensor h = hdgi::embed(g, cfg.metapaths, params);
  hdgi::write_embeddings(h, out_path);
  std::cout << "wrote " << h.rows << "x" << h.cols << " embeddings to " << out_path << '\n';
  return 0;
}

int cmd_eval_classify(const CommonArgs& args, const std::string& embeddings_path,
                      std::optional<double> ratio, std::optional<int> repeats,
                      const std::string& out_prefix) {
  const hdgi::RunConfig cfg = load_config(args);
  const hdgi::HeteroGraph g = cfg.load_or_generate_graph();
  const std::vector<int> labels = require_labels(g);
  const hdgi::Tensor h = hdgi::read_embeddings(embeddings_path);
  if (h.rows != g.target_count())
    throw std::runtime_error("embeddings row count does not match the graph's target nodes");

  hdgi::ClassificationProtocolOptions opt;
  opt.train_ratio = ratio.value_or(cfg.eval.train_ratio);
  opt.repeats = repeats.value_or(cfg.eval.repeats);
  opt.seed = args.seed.value_or(cfg.eval.seed);
  opt.logreg = hdgi::LogRegOptions{cfg.eval.logreg_epochs, cfg.eval.logreg_lr, cfg.eval.logreg_l2,
                                   0, cfg.eval.logreg_patience};
  const auto [micro, macro] = hdgi::run_classification_protocol(h, labels, opt);
  const std::vector<hdgi::EvalReport> reports{micro, macro};
  std::cout << hdgi::eval_report_text(reports);
  if (!out_prefix.empty())
    hdgi::write_eval_reports(reports, out_prefix + ".txt", out_prefix + ".json");
  return 0;
}

int cmd_eval_cluster(const CommonArgs& args, const std::string& embeddings_path,
                     std::optional<int> repeats, const std::string& out_prefix) {
  const hdgi::RunConfig cfg = load_config(args);
  const hdgi::HeteroGraph g = cfg.load_or_generate_graph();
  const std::vector<int> labels = require_labels(g);
  const hdgi::Tensor h = hdgi::read_embeddings(embeddings_path);
  if (h.rows != g.target_count())
    throw std::runtime_error("embeddings row count does not match the graph's target nodes");

  hdgi::ClusteringProtocolOptions opt;
  opt.repeats = repeats.value_or(cfg.eval.repeats);
  opt.seed = args.seed.value_or(cfg.eval.seed);
  opt.max_iters = cfg.eval.kmeans_max_iters;
  const auto [nmi_report, ari_report] = hdgi::run_clustering_protocol(h, labels, opt);
  const std::vector<hdgi::EvalReport> reports{nmi_report, ari_report};
  std::cout << hdgi::eval_report_text(reports);
  if (!out_prefix.empty())
    hdgi::write_eval_reports(reports, out_prefix + ".txt", out_prefix + ".json");
  return 0;
}

// Full-loss finite-difference check: both encoders, both readouts, on a
// 10-node graph with 2 meta-paths, F=8, q_dim=4.
int cmd_gradcheck(std::uint64_t seed, double tolerance) {
  hdgi::SynthOptions synth_opt;
  synth_opt.n_target = 10;
  synth_opt.n_aux_per_type = 6;
  synth_opt.n_classes = 2;
  synth_opt.edge_density = 0.5;
  synth_opt.noise = 0.3;
  synth_opt.feature_dim = 5;
  synth_opt.seed = seed;
  const hdgi::HeteroGraph g = hdgi::synth_graph(synth_opt);
  const std::vector<hdgi::MetaPathSpec> specs{{"PAP", {"PA", "PA"}}, {"PSP", {"PS", "PS"}}};

  bool all_pass = true;
  double overall = 0.0;
  for (const auto encoder : {hdgi::EncoderKind::kGcn, hdgi::EncoderKind::kGat}) {
    for (const auto readout : {hdgi::ReadoutKind::kMean, hdgi::ReadoutKind::kPool}) {
      hdgi::TrainConfig cfg;
      cfg.encoder = encoder;
      cfg.readout = readout;
      cfg.rep_dim = 8;
      cfg.q_dim = 4;
      cfg.heads = 4;
      cfg.seed = seed;
      const hdgi::GradCheckReport report = hdgi::grad_check_full_loss(g, specs, cfg);
      overall = std::max(overall, report.max_rel_error);
      const bool pass = report.passes(tolerance);
      all_pass = all_pass && pass;
      std::cout << (encoder == hdgi::EncoderKind::kGcn ? "HDGI-C" : "HDGI-A") << "/"
                << (readout == hdgi::ReadoutKind::kMean ? "mean" : "pool")
                << ": max rel error = " << report.max_rel_error << " over "
                << report.entries_checked << " entries -> " << (pass ? "ok" : "FAIL") << '\n';
    }
  }
  std::cout << "gradcheck: max rel error " << overall << (all_pass ? " < " : " >= ") << tolerance
            << " -> " << (all_pass ? "PASS" : "FAIL") << '\n';
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous Deep Graph Infomax: meta-path representation learning"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a planted-partition heterograph as TSV files");
  hdgi::SynthOptions synth_opt;
  std::string synth_out;
  synth->add_option("--n-target", synth_opt.n_target, "Target (paper) node count");
  synth->add_option("--n-aux", synth_opt.n_aux_per_type, "Nodes per auxiliary type");
  synth->add_option("--classes", synth_opt.n_classes, "Number of planted classes");
  synth->add_option("--density", synth_opt.edge_density, "Within-class edge probability");
  synth->add_option("--noise", synth_opt.noise, "Cross-class probability multiplier in [0,1]");
  synth->add_option("--second-aux-noise", synth_opt.second_aux_noise,
                    "Override noise for the subject type (-1: same as --noise)");
  synth->add_option("--feature-dim", synth_opt.feature_dim, "Feature dimension");
  synth->add_option("--feature-scale", synth_opt.feature_scale, "Class-mean magnitude");
  synth->add_option("--seed", synth_opt.seed, "Generator seed");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // metapaths
  auto* metapaths = app.add_subcommand("metapaths", "Derive meta-path adjacency matrices");
  CommonArgs mp_args;
  std::string mp_out;
  metapaths->add_option("--config", mp_args.config_path, "Run config (JSON)")->required();
  metapaths->add_option("--out", mp_out, "Directory for <name>.adj.tsv pair lists");

  // train
  auto* train = app.add_subcommand("train", "Train the model and write run artifacts");
  CommonArgs train_args;
  std::string train_out_dir;
  train->add_option("--config", train_args.config_path, "Run config (JSON)")->required();
  train->add_option("--seed", train_args.seed, "Override train.seed");
  train->add_option("--output-dir", train_out_dir, "Override output_dir");

  // embed
  auto* embed = app.add_subcommand("embed", "Recompute embeddings from a checkpoint");
  CommonArgs embed_args;
  std::string embed_checkpoint, embed_out;
  embed->add_option("--config", embed_args.config_path, "Run config (JSON)")->required();
  embed->add_option("--checkpoint", embed_checkpoint, "Checkpoint file")->required();
  embed->add_option("--out", embed_out, "Embeddings output file")->required();

  // eval-classify
  auto* evalc = app.add_subcommand("eval-classify",
                                   "Logistic-regression protocol: Micro/Macro-F1 over repeats");
  CommonArgs evalc_args;
  std::string evalc_embeddings, evalc_prefix;
  std::optional<double> evalc_ratio;
  std::optional<int> evalc_repeats;
  evalc->add_option("--config", evalc_args.config_path, "Run config (JSON)")->required();
  evalc->add_option("--embeddings", evalc_embeddings, "Embeddings file")->required();
  evalc->add_option("--ratio", evalc_ratio, "Training ratio (0.2 or 0.8 in the protocol)");
  evalc->add_option("--repeats", evalc_repeats, "Number of repeats");
  evalc->add_option("--seed", evalc_args.seed, "Protocol seed");
  evalc->add_option("--out-prefix", evalc_prefix, "Write <prefix>.txt and <prefix>.json");

  // eval-cluster
  auto* evalk = app.add_subcommand("eval-cluster", "K-means protocol: NMI/ARI over repeats");
  CommonArgs evalk_args;
  std::string evalk_embeddings, evalk_prefix;
  std::optional<int> evalk_repeats;
  evalk->add_option("--config", evalk_args.config_path, "Run config (JSON)")->required();
  evalk->add_option("--embeddings", evalk_embeddings, "Embeddings file")->required();
  evalk->add_option("--repeats", evalk_repeats, "Number of repeats");
  evalk->add_option("--seed", evalk_args.seed, "Protocol seed");
  evalk->add_option("--out-prefix", evalk_prefix, "Write <prefix>.txt and <prefix>.json");

  // gradcheck
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "Finite-difference check of the full HDGI-C and HDGI-A losses");
  std::uint64_t gradcheck_seed = 7;
  double gradcheck_tol = 1e-5;
  gradcheck->add_option("--seed", gradcheck_seed, "Seed for the check instance");
  gradcheck->add_option("--tolerance", gradcheck_tol, "Max relative error allowed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(synth)) return cmd_synth(synth_opt, synth_out);
    if (app.got_subcommand(metapaths)) return cmd_metapaths(mp_args, mp_out);
    if (app.got_subcommand(train)) return cmd_train(train_args, train_out_dir);
    if (app.got_subcommand(embed)) return cmd_embed(embed_args, embed_checkpoint, embed_out);
    if (app.got_subcommand(evalc))
      return cmd_eval_classify(evalc_args, evalc_embeddings, evalc_ratio, evalc_repeats,
                               evalc_prefix);
    if (app.got_subcommand(evalk))
      return cmd_eval_cluster(evalk_args, evalk_embeddings, evalk_repeats, evalk_prefix);
    if (app.got_subcommand(gradcheck)) return cmd_gradcheck(gradcheck_seed, gradcheck_tol);
  } catch (const hdgi::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    // constraint violations (bad flag values, incompatible shapes/settings)
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (...) {
    std::cerr << "error: unknown failure\n";
    return 1;
  }
  return 2;
}
