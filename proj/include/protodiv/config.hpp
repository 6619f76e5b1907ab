// ======================================================
// config.hpp -- strict JSON configuration for the CLI
// ======================================================
//
// One JSON document drives every subcommand.  Parsing is strict:
// unknown keys anywhere in the tree are rejected, so a typo like
// "lamda_pd" fails loudly instead of silently training the wrong
// model.  Every field has a default; an empty document {} is a
// complete configuration.
//
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "latent.hpp"
#include "signal.hpp"
#include "trainer.hpp"

namespace protodiv {

struct DatasetSpec {
  Modality modality = Modality::ecg;
  std::array<std::size_t, 3> counts = {200, 200, 200};  // normal, mild, moderate_severe
  std::uint64_t seed = 1;
  std::string dir = "data";
};

struct EvalSpec {
  std::string checkpoint = "run/best.ckpt";
  std::string out = "eval.json";
};

struct ExportSpec {
  std::string checkpoint = "run/best.ckpt";
  std::string out = "embedding.csv";
  TsneParams tsne;  // out_dim fixed at 3 by the pipeline
};

struct CliConfig {
  DatasetSpec dataset;
  TrainConfig train;
  std::optional<std::size_t> batch_size;  // absent -> 100 ECG / 125 respiration
  std::string run_dir = "run";
  std::string sweep_dir = "sweep";
  EvalSpec eval;
  ExportSpec exp;

  // The modality-dependent batch default, applied once the dataset is
  // known.
  std::size_t resolve_batch(Modality m) const {
    if (batch_size) return *batch_size;
    return m == Modality::ecg ? 100 : 125;
  }
};

namespace detail {

inline void expect_keys(const nlohmann::json& j, const std::string& where,
                        std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ParseError("config: " + where + " must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    if (!known) throw ParseError("config: unknown key '" + item.key() + "' in " + where);
  }
}

inline double get_number(const nlohmann::json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError("config: " + where + " must be a number");
  return j.get<double>();
}

inline std::uint64_t get_u64(const nlohmann::json& j, const std::string& where) {
  if (!j.is_number_unsigned())
    throw ParseError("config: " + where + " must be a non-negative integer");
  return j.get<std::uint64_t>();
}

inline std::size_t get_size(const nlohmann::json& j, const std::string& where) {
  return static_cast<std::size_t>(get_u64(j, where));
}

inline std::string get_string(const nlohmann::json& j, const std::string& where) {
  if (!j.is_string()) throw ParseError("config: " + where + " must be a string");
  return j.get<std::string>();
}

inline void parse_dataset(const nlohmann::json& j, DatasetSpec& spec) {
  expect_keys(j, "dataset", {"modality", "counts", "seed", "dir"});
  if (j.contains("modality")) {
    const std::string name = get_string(j["modality"], "dataset.modality");
    const auto m = modality_from_name(name);
    if (!m) throw ParseError("config: dataset.modality '" + name + "' is not ecg|respiration");
    spec.modality = *m;
  }
  if (j.contains("counts")) {
    const nlohmann::json& c = j["counts"];
    expect_keys(c, "dataset.counts", {"normal", "mild", "moderate_severe"});
    for (int cls = 0; cls < 3; ++cls) {
      const char* name = severity_name(static_cast<Severity>(cls));
      if (c.contains(name))
        spec.counts[static_cast<std::size_t>(cls)] =
            get_size(c[name], std::string("dataset.counts.") + name);
    }
  }
  if (j.contains("seed")) spec.seed = get_u64(j["seed"], "dataset.seed");
  if (j.contains("dir")) spec.dir = get_string(j["dir"], "dataset.dir");
}

inline void parse_model(const nlohmann::json& j, ModelConfig& m) {
  expect_keys(j, "model", {"latent_dim", "prototypes", "classes", "hidden"});
  if (j.contains("latent_dim")) m.latent_dim = get_size(j["latent_dim"], "model.latent_dim");
  if (j.contains("prototypes")) m.prototypes = get_size(j["prototypes"], "model.prototypes");
  if (j.contains("classes")) m.classes = get_size(j["classes"], "model.classes");
  if (j.contains("hidden")) {
    if (!j["hidden"].is_array()) throw ParseError("config: model.hidden must be an array");
    m.hidden.clear();
    for (const auto& h : j["hidden"]) m.hidden.push_back(get_size(h, "model.hidden[]"));
  }
}

inline void parse_weights(const nlohmann::json& j, LossWeights& w) {
  expect_keys(j, "weights",
              {"lambda_r", "lambda_1", "lambda_2", "lambda_pd", "eps", "pdl_variant"});
  if (j.contains("lambda_r")) w.lambda_r = get_number(j["lambda_r"], "weights.lambda_r");
  if (j.contains("lambda_1")) w.lambda_1 = get_number(j["lambda_1"], "weights.lambda_1");
  if (j.contains("lambda_2")) w.lambda_2 = get_number(j["lambda_2"], "weights.lambda_2");
  if (j.contains("lambda_pd")) w.lambda_pd = get_number(j["lambda_pd"], "weights.lambda_pd");
  if (j.contains("eps")) w.eps = get_number(j["eps"], "weights.eps");
  if (j.contains("pdl_variant")) {
    const std::string v = get_string(j["pdl_variant"], "weights.pdl_variant");
    if (v == "shifted")
      w.pdl_variant = PdlVariant::shifted;
    else if (v == "literal")
      w.pdl_variant = PdlVariant::literal;
    else
      throw ParseError("config: weights.pdl_variant '" + v + "' is not shifted|literal");
  }
}

inline void parse_train(const nlohmann::json& j, CliConfig& cfg) {
  expect_keys(j, "train",
              {"learning_rate", "batch_size", "epochs", "split_fraction", "seed",
               "snapshot_epochs", "run_dir", "autoencoder_only"});
  TrainConfig& t = cfg.train;
  if (j.contains("learning_rate"))
    t.learning_rate = get_number(j["learning_rate"], "train.learning_rate");
  if (j.contains("batch_size")) cfg.batch_size = get_size(j["batch_size"], "train.batch_size");
  if (j.contains("epochs")) t.epochs = get_size(j["epochs"], "train.epochs");
  if (j.contains("split_fraction"))
    t.split_fraction = get_number(j["split_fraction"], "train.split_fraction");
  if (j.contains("seed")) t.seed = get_u64(j["seed"], "train.seed");
  if (j.contains("snapshot_epochs")) {
    if (!j["snapshot_epochs"].is_array())
      throw ParseError("config: train.snapshot_epochs must be an array");
    t.snapshot_epochs.clear();
    for (const auto& e : j["snapshot_epochs"])
      t.snapshot_epochs.push_back(get_size(e, "train.snapshot_epochs[]"));
  }
  if (j.contains("run_dir")) cfg.run_dir = get_string(j["run_dir"], "train.run_dir");
  if (j.contains("autoencoder_only")) {
    if (!j["autoencoder_only"].is_boolean())
      throw ParseError("config: train.autoencoder_only must be a boolean");
    t.autoencoder_only = j["autoencoder_only"].get<bool>();
  }
}

inline void parse_sweep(const nlohmann::json& j, CliConfig& cfg) {
  expect_keys(j, "sweep", {"lambdas", "seeds", "dir"});
  if (j.contains("lambdas")) {
    if (!j["lambdas"].is_array()) throw ParseError("config: sweep.lambdas must be an array");
    cfg.train.lambda_sweep.clear();
    for (const auto& l : j["lambdas"])
      cfg.train.lambda_sweep.push_back(get_number(l, "sweep.lambdas[]"));
  }
  if (j.contains("seeds")) {
    if (!j["seeds"].is_array()) throw ParseError("config: sweep.seeds must be an array");
    cfg.train.sweep_seeds.clear();
    for (const auto& s : j["seeds"]) cfg.train.sweep_seeds.push_back(get_u64(s, "sweep.seeds[]"));
  }
  if (j.contains("dir")) cfg.sweep_dir = get_string(j["dir"], "sweep.dir");
}

inline void parse_eval(const nlohmann::json& j, EvalSpec& spec) {
  expect_keys(j, "eval", {"checkpoint", "out"});
  if (j.contains("checkpoint")) spec.checkpoint = get_string(j["checkpoint"], "eval.checkpoint");
  if (j.contains("out")) spec.out = get_string(j["out"], "eval.out");
}

inline void parse_export(const nlohmann::json& j, ExportSpec& spec) {
  expect_keys(j, "export", {"checkpoint", "out", "perplexity", "iterations", "seed"});
  if (j.contains("checkpoint")) spec.checkpoint = get_string(j["checkpoint"], "export.checkpoint");
  if (j.contains("out")) spec.out = get_string(j["out"], "export.out");
  if (j.contains("perplexity"))
    spec.tsne.perplexity = get_number(j["perplexity"], "export.perplexity");
  if (j.contains("iterations")) spec.tsne.iters = get_size(j["iterations"], "export.iterations");
  if (j.contains("seed")) spec.tsne.seed = get_u64(j["seed"], "export.seed");
}

}  // namespace detail

inline CliConfig parse_config_text(const std::string& text, const std::string& what) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
  detail::expect_keys(j, "the top level",
                      {"dataset", "model", "weights", "train", "sweep", "eval", "export"});
  CliConfig cfg;
  if (j.contains("dataset")) detail::parse_dataset(j["dataset"], cfg.dataset);
  if (j.contains("model")) detail::parse_model(j["model"], cfg.train.model);
  if (j.contains("weights")) detail::parse_weights(j["weights"], cfg.train.weights);
  if (j.contains("train")) detail::parse_train(j["train"], cfg);
  if (j.contains("sweep")) detail::parse_sweep(j["sweep"], cfg);
  if (j.contains("eval")) detail::parse_eval(j["eval"], cfg.eval);
  if (j.contains("export")) detail::parse_export(j["export"], cfg.exp);
  return cfg;
}

inline CliConfig load_config(const std::string& path) {
  return parse_config_text(read_file(path), path);
}

}  // namespace protodiv
