// ======================================================
// protodiv -- command-line front end for the toolkit
// ======================================================
//
//   protodiv gen            render a synthetic dataset to PGM + manifest
//   protodiv train          one training run into a run directory
//   protodiv sweep          the lambda_pd x seed grid with table.csv
//   protodiv eval           accuracy/diversity/confusion for a checkpoint
//   protodiv export-latent  joint t-SNE embedding of data and prototypes
//
// Every command reads one JSON config (all keys optional, unknown keys
// rejected) and resolves all paths relative to --out.  Exit codes:
// 0 success, 2 invalid input or configuration, 3 numeric failure.
//
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "protodiv/config.hpp"
#include "protodiv/dataset.hpp"
#include "protodiv/diversity.hpp"
#include "protodiv/errors.hpp"
#include "protodiv/latent.hpp"
#include "protodiv/model.hpp"
#include "protodiv/signal.hpp"
#include "protodiv/trainer.hpp"
#include "protodiv/version.hpp"

namespace {

namespace fs = std::filesystem;
using namespace protodiv;

struct CliArgs {
  std::string config_path;
  std::string out = ".";
  bool force = false;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda_pd;
  std::optional<std::size_t> prototypes;
  std::optional<std::size_t> epochs;
};

// Load the config (or defaults when --config is absent) and fold in the
// flag overrides.  --seed retargets the seed of the invoked command.
CliConfig resolve(const CliArgs& args, const std::string& command) {
  CliConfig cfg = args.config_path.empty() ? CliConfig{} : load_config(args.config_path);
  if (args.seed) {
    if (command == "gen")
      cfg.dataset.seed = *args.seed;
    else if (command == "export-latent")
      cfg.exp.tsne.seed = *args.seed;
    else
      cfg.train.seed = *args.seed;
  }
  if (args.lambda_pd) cfg.train.weights.lambda_pd = *args.lambda_pd;
  if (args.prototypes) cfg.train.model.prototypes = *args.prototypes;
  if (args.epochs) cfg.train.epochs = *args.epochs;
  return cfg;
}

std::string under_out(const CliArgs& args, const std::string& rel) {
  return (fs::path(args.out) / rel).string();
}

Dataset load_data(const CliArgs& args, const CliConfig& cfg) {
  return load_dataset(under_out(args, cfg.dataset.dir));
}

PrototypeModel load_model(const CliArgs& args, const std::string& rel) {
  const std::string path = under_out(args, rel);
  return decode_checkpoint(read_file(path), path);
}

int cmd_gen(const CliArgs& args) {
  const CliConfig cfg = resolve(args, "gen");
  const std::string dir = under_out(args, cfg.dataset.dir);
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!args.force)
      throw ValidationError(dir + " is not empty; pass --force to regenerate");
    fs::remove_all(dir);
  }
  for (int c = 0; c < 3; ++c)
    if (cfg.dataset.counts[static_cast<std::size_t>(c)] == 0)
      std::fprintf(stderr, "warning: class %s has count 0 and will be absent\n",
                   severity_name(static_cast<Severity>(c)));
  const Dataset ds =
      build_dataset(cfg.dataset.modality, cfg.dataset.counts, cfg.dataset.seed);
  save_dataset(dir, ds);

  nlohmann::json manifest;
  manifest["tool"] = kToolName;
  manifest["version"] = kVersion;
  manifest["modality"] = modality_name(cfg.dataset.modality);
  manifest["seed"] = cfg.dataset.seed;
  for (int c = 0; c < 3; ++c)
    manifest["counts"][severity_name(static_cast<Severity>(c))] =
        cfg.dataset.counts[static_cast<std::size_t>(c)];
  write_file((fs::path(dir) / "dataset.json").string(), manifest.dump(2) + "\n");

  std::printf("wrote %zu images to %s\n", ds.size(), dir.c_str());
  return 0;
}

int cmd_train(const CliArgs& args) {
  CliConfig cfg = resolve(args, "train");
  const Dataset ds = load_data(args, cfg);
  cfg.train.batch_size = cfg.resolve_batch(ds.modality);
  const RunRecord rec = train(ds, cfg.train, under_out(args, cfg.run_dir));
  std::printf("best epoch %zu with test accuracy %s (run in %s)\n", rec.best_epoch,
              fmt_double(rec.best_accuracy).c_str(), rec.out_dir.c_str());
  return 0;
}

int cmd_sweep(const CliArgs& args) {
  CliConfig cfg = resolve(args, "sweep");
  const Dataset ds = load_data(args, cfg);
  cfg.train.batch_size = cfg.resolve_batch(ds.modality);
  const SweepResult res = sweep(ds, cfg.train, under_out(args, cfg.sweep_dir));
  std::size_t complete = 0;
  for (const SweepCell& c : res.cells) complete += c.complete ? 1 : 0;
  std::printf("%zu/%zu cells complete; table in %s\n", complete, res.cells.size(),
              under_out(args, cfg.sweep_dir + "/table.csv").c_str());
  return complete == res.cells.size() ? 0 : 3;
}

int cmd_eval(const CliArgs& args) {
  const CliConfig cfg = resolve(args, "eval");
  const Dataset ds = load_data(args, cfg);
  const PrototypeModel mdl = load_model(args, cfg.eval.checkpoint);

  const Tensor all = ds.to_batch();
  if (mdl.config.input_dim != all.cols())
    throw DimensionError("eval: checkpoint expects input_dim " +
                         std::to_string(mdl.config.input_dim) + ", dataset images flatten to " +
                         std::to_string(all.cols()));
  const std::vector<int> labels = ds.labels();
  const Split split =
      stratified_split(labels, cfg.train.split_fraction, mix_seed(cfg.train.seed, 1));

  Tensor train_x({split.train.size(), all.cols()});
  Tensor test_x({split.test.size(), all.cols()});
  std::vector<int> train_y, test_y;
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    for (std::size_t j = 0; j < all.cols(); ++j) train_x(i, j) = all(split.train[i], j);
    train_y.push_back(labels[split.train[i]]);
  }
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    for (std::size_t j = 0; j < all.cols(); ++j) test_x(i, j) = all(split.test[i], j);
    test_y.push_back(labels[split.test[i]]);
  }

  const std::vector<int> pred = mdl.predict(test_x);
  const std::size_t k = mdl.config.classes;
  std::vector<std::vector<std::size_t>> confusion(k, std::vector<std::size_t>(k, 0));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    confusion[static_cast<std::size_t>(test_y[i])][static_cast<std::size_t>(pred[i])] += 1;
    hits += pred[i] == test_y[i] ? 1 : 0;
  }
  const double accuracy = static_cast<double>(hits) / static_cast<double>(pred.size());
  const DiversityReport div =
      diversity_report(mdl.prototypes, mdl.encode(train_x), train_y, k);

  nlohmann::json out;
  out["tool"] = kToolName;
  out["version"] = kVersion;
  out["checkpoint"] = cfg.eval.checkpoint;
  out["dataset"] = cfg.dataset.dir;
  out["examples"] = ds.size();
  out["split"] = {{"train", split.train.size()}, {"test", split.test.size()}};
  out["accuracy"] = accuracy;
  out["psi_n"] = div.psi_n;
  out["psi_c"] = div.psi_c;
  out["confusion"] = confusion;
  write_file(under_out(args, cfg.eval.out), out.dump(2) + "\n");
  std::printf("test accuracy %s, psi_n %s, psi_c %s -> %s\n", fmt_double(accuracy).c_str(),
              fmt_double(div.psi_n).c_str(), fmt_double(div.psi_c).c_str(),
              under_out(args, cfg.eval.out).c_str());
  return 0;
}

int cmd_export_latent(const CliArgs& args) {
  const CliConfig cfg = resolve(args, "export-latent");
  const Dataset ds = load_data(args, cfg);
  const PrototypeModel mdl = load_model(args, cfg.exp.checkpoint);

  if (ds.size() < 5)
    throw ValidationError("export-latent: need at least 5 examples, dataset has " +
                          std::to_string(ds.size()));
  const Tensor all = ds.to_batch();
  if (mdl.config.input_dim != all.cols())
    throw DimensionError("export-latent: checkpoint expects input_dim " +
                         std::to_string(mdl.config.input_dim) + ", dataset images flatten to " +
                         std::to_string(all.cols()));
  const Tensor z = mdl.encode(all);
  const std::size_t n = z.rows(), m = mdl.prototypes.rows(), q = z.cols();

  // joint rows: data latents then prototypes
  Tensor joint({n + m, q});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < q; ++j) joint(i, j) = z(i, j);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < q; ++j) joint(n + i, j) = mdl.prototypes(i, j);

  const std::size_t d = std::min<std::size_t>({500, q, n + m - 1});
  const PcaResult reduced = pca(joint, d);
  std::fprintf(stderr, "pca kept %zu/%zu dimensions (%.1f%% of variance)\n", d, q,
               100.0 * reduced.retained);

  std::vector<std::string> warnings;
  const Tensor sim = cosine_similarity(reduced.projected, &warnings);
  for (const std::string& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  Tensor dist({n + m, n + m});
  for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = 1.0 - sim[i];

  TsneParams params = cfg.exp.tsne;
  params.out_dim = 3;
  const Embedding emb = tsne_distances(dist, params);

  const std::vector<std::size_t> neighbors = nearest_neighbors(mdl.prototypes, z);
  std::vector<std::string> ids;
  std::vector<int> labels = ds.labels();
  for (const ImageExample& ex : ds.examples) ids.push_back(ex.id);
  for (std::size_t j = 0; j < m; ++j) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "proto_%02zu", j);
    ids.push_back(buf);
    labels.push_back(labels[neighbors[j]]);  // prototype inherits its neighbor's class
  }
  write_file(under_out(args, cfg.exp.out),
             encode_embedding_csv(emb, ids, labels, n, neighbors));
  std::printf("embedded %zu points (+%zu prototypes) -> %s\n", n, m,
              under_out(args, cfg.exp.out).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prototype-diversity classification toolkit"};
  app.set_version_flag("--version", std::string(kToolName) + " " + kVersion);
  app.require_subcommand(1);

  CliArgs args;
  app.add_option("--config", args.config_path, "JSON configuration file")
      ->check(CLI::ExistingFile);
  app.add_option("--out", args.out, "root directory for inputs and artifacts");
  app.add_flag("--force", args.force, "overwrite non-empty output directories");
  app.add_option("--seed", args.seed, "override the invoked command's seed");
  app.add_option("--lambda-pd", args.lambda_pd, "override weights.lambda_pd");
  app.add_option("--prototypes", args.prototypes, "override model.prototypes");
  app.add_option("--epochs", args.epochs, "override train.epochs");

  CLI::App* gen = app.add_subcommand("gen", "render a synthetic dataset");
  CLI::App* train_cmd = app.add_subcommand("train", "run one training job");
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "train the lambda_pd x seed grid");
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  CLI::App* export_cmd =
      app.add_subcommand("export-latent", "embed data and prototypes to embedding.csv");
  for (CLI::App* sub : {gen, train_cmd, sweep_cmd, eval_cmd, export_cmd}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(args);
    if (train_cmd->parsed()) return cmd_train(args);
    if (sweep_cmd->parsed()) return cmd_sweep(args);
    if (eval_cmd->parsed()) return cmd_eval(args);
    if (export_cmd->parsed()) return cmd_export_latent(args);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
