// ==========================================================
// trainer.hpp -- Adam, the epoch loop, and the lambda sweep
// ==========================================================
//
// One run is driven by a single master seed.  Sub-streams are derived
// by fixed mixing so that no draw ever depends on loop interleaving:
//   mix_seed(seed, 1)          stratified split
//   mix_seed(seed, 2)          model initialization
//   mix_seed(seed, 2 + epoch)  shuffle for epoch >= 1
// Adding runs or resuming from a checkpoint therefore replays the
// identical stream.
//
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dataset.hpp"
#include "diversity.hpp"
#include "errors.hpp"
#include "hash.hpp"
#include "io.hpp"
#include "model.hpp"
#include "objective.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "version.hpp"

namespace protodiv {

// ---------- Adam ----------

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;

  static AdamState init(const std::vector<const Tensor*>& params) {
    AdamState st;
    for (const Tensor* p : params) {
      st.m.push_back(Tensor(p->shape()));
      st.v.push_back(Tensor(p->shape()));
    }
    return st;
  }
};

// Bias-corrected Adam update, in place.
inline void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                      AdamState& st, double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8, const std::string& context = "adam_step") {
  if (params.size() != grads.size() || params.size() != st.m.size())
    throw DimensionError(context + ": params/grads/state size mismatch");
  st.t += 1;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    if (g.shape() != p.shape())
      throw DimensionError(context + ": gradient " + std::to_string(k) + " is " + g.shape_str() +
                           ", expected " + p.shape_str());
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!std::isfinite(g[i]))
        throw NumericError(context + ": non-finite gradient in parameter " + std::to_string(k));
    Tensor& m = st.m[k];
    Tensor& v = st.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
}

// ---------- configuration ----------

struct TrainConfig {
  ModelConfig model;        // input_dim is overwritten from the dataset
  LossWeights weights;
  double learning_rate = 0.002;
  std::size_t batch_size = 100;   // 125 for respiration (set by the caller)
  std::size_t epochs = 100;
  double split_fraction = 0.8;
  std::uint64_t seed = 1;
  std::vector<std::size_t> snapshot_epochs = {0, 20, 100};  // final is implicit
  std::vector<double> lambda_sweep = {0.0, 500.0, 1000.0, 2000.0};
  std::vector<std::uint64_t> sweep_seeds = {1, 2, 3, 4, 5};
  bool autoencoder_only = false;  // optimize reconstruction only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (!(learning_rate > 0)) throw ValidationError("TrainConfig: learning_rate must be positive");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
      throw ValidationError("TrainConfig: split fraction outside (0, 1)");
    if (epochs < 1 || epochs > 500)
      throw ValidationError("TrainConfig: epochs must be in [1, 500]");
    if (batch_size < 1) throw ValidationError("TrainConfig: batch_size must be positive");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
      throw ValidationError("TrainConfig: Adam betas outside [0, 1)");
    if (!(adam_eps > 0)) throw ValidationError("TrainConfig: adam_eps must be positive");
    weights.validate();
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based; completed epochs
  LossBreakdown train;    // example-weighted mean over the epoch's batches
  double test_accuracy = 0.0;
  double psi_n = 0.0;
  double psi_c = 0.0;
};

struct RunRecord {
  std::vector<EpochMetrics> epochs;
  std::size_t best_epoch = 0;      // 1-based epoch number
  double best_accuracy = 0.0;
  PrototypeModel model;            // final state
  PrototypeModel best;             // state at best_epoch
  Split split;
  std::string out_dir;
};

// ---------- internals ----------

namespace detail {

inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx,
                          std::size_t begin, std::size_t end) {
  Tensor out({end - begin, x.cols()});
  for (std::size_t i = begin; i < end; ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i - begin, j) = x(idx[i], j);
  return out;
}

inline double accuracy(const PrototypeModel& mdl, const Tensor& x, const std::vector<int>& y) {
  const std::vector<int> pred = mdl.predict(x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (pred[i] == y[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

// Reconstruction-only objective used by the autoencoder_only mode; the
// classifier and prototypes receive exact-zero gradients and stay put.
inline ObjectiveResult recon_loss_grad(const PrototypeModel& mdl, const Tensor& batch,
                                       double lambda_r) {
  Tape tape;
  PrototypeModel::TapeVars v = mdl.leaves_on(tape);
  Tape::Var x = tape.leaf(batch, false);
  Tape::Var z = PrototypeModel::encode_on(tape, v, x);
  Tape::Var rec = PrototypeModel::decode_on(tape, v, z);
  Tape::Var r = tape.mean(tape.row_sum(tape.square(tape.sub(rec, x))));
  Tape::Var total = tape.scale(r, lambda_r);
  ObjectiveResult out;
  out.breakdown.r = tape.val(r).value();
  out.breakdown.total = tape.val(total).value();
  out.grads = tape.backward(total, v.leaves);
  return out;
}

// Decoded prototype images: proto_epoch<k>_p<j>.pgm.
inline void snapshot_prototypes(const PrototypeModel& mdl, std::size_t epoch, std::size_t h,
                                std::size_t w, const std::string& dir) {
  const Tensor imgs = mdl.decode(mdl.prototypes);
  for (std::size_t j = 0; j < imgs.rows(); ++j) {
    Tensor img({h, w});
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) img(r, c) = imgs(j, r * w + c);
    const std::string name =
        "proto_epoch" + std::to_string(epoch) + "_p" + std::to_string(j) + ".pgm";
    write_pgm((std::filesystem::path(dir) / name).string(), img);
  }
}

inline std::string metrics_row(const EpochMetrics& em) {
  std::string row = std::to_string(em.epoch);
  for (double v : {em.train.e, em.train.r, em.train.r1, em.train.r2, em.train.pdl,
                   em.train.total, em.test_accuracy, em.psi_n, em.psi_c}) {
    row += ',';
    row += fmt_double(v);
  }
  row += '\n';
  return row;
}

inline constexpr const char* kMetricsHeader =
    "epoch,e,r,r1,r2,pdl,total,test_accuracy,psi_n,psi_c\n";

inline nlohmann::json config_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["model"] = {{"input_dim", cfg.model.input_dim},
                {"latent_dim", cfg.model.latent_dim},
                {"prototypes", cfg.model.prototypes},
                {"classes", cfg.model.classes},
                {"hidden", cfg.model.hidden}};
  j["weights"] = {{"lambda_r", cfg.weights.lambda_r},
                  {"lambda_1", cfg.weights.lambda_1},
                  {"lambda_2", cfg.weights.lambda_2},
                  {"lambda_pd", cfg.weights.lambda_pd},
                  {"eps", cfg.weights.eps},
                  {"pdl_variant",
                   cfg.weights.pdl_variant == PdlVariant::shifted ? "shifted" : "literal"}};
  j["learning_rate"] = cfg.learning_rate;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["split_fraction"] = cfg.split_fraction;
  j["seed"] = cfg.seed;
  j["snapshot_epochs"] = cfg.snapshot_epochs;
  j["autoencoder_only"] = cfg.autoencoder_only;
  j["adam"] = {{"beta1", cfg.beta1}, {"beta2", cfg.beta2}, {"eps", cfg.adam_eps}};
  return j;
}

// Content hash of the training inputs: raw batch bytes plus labels.
inline std::string dataset_hash(const Tensor& batch, const std::vector<int>& labels) {
  std::string bytes;
  bytes.reserve(batch.size() * 8 + labels.size() * 4);
  for (std::size_t i = 0; i < batch.size(); ++i) put_f64(bytes, batch[i]);
  for (int l : labels) put_u32(bytes, static_cast<std::uint32_t>(l));
  return sha256_hex(bytes);
}

// Mid-run trainer state, enough to resume bit-exactly.
inline std::string encode_trainer_state(const PrototypeModel& mdl, const PrototypeModel& best,
                                        const AdamState& st, std::uint64_t seed,
                                        std::uint32_t epochs_done, std::uint32_t best_epoch,
                                        double best_accuracy) {
  std::string out = "PDTS";
  put_u32(out, 1);
  put_u64(out, seed);
  put_u32(out, epochs_done);
  put_u32(out, best_epoch);
  put_f64(out, best_accuracy);
  const std::string model_bytes = encode_checkpoint(mdl);
  put_u64(out, model_bytes.size());
  out += model_bytes;
  const std::string best_bytes = encode_checkpoint(best);
  put_u64(out, best_bytes.size());
  out += best_bytes;
  put_u64(out, st.t);
  for (const Tensor& t : st.m)
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(out, t[i]);
  for (const Tensor& t : st.v)
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(out, t[i]);
  return out;
}

struct TrainerState {
  PrototypeModel model;
  PrototypeModel best;
  AdamState adam;
  std::uint64_t seed = 0;
  std::uint32_t epochs_done = 0;
  std::uint32_t best_epoch = 0;
  double best_accuracy = 0.0;
};

inline TrainerState decode_trainer_state(const std::string& bytes, const std::string& what) {
  ByteReader r(bytes, what);
  if (r.raw(4) != "PDTS") throw ParseError(what + ": bad trainer state magic");
  const std::uint32_t version = r.u32();
  if (version != 1)
    throw ParseError(what + ": unsupported trainer state version " + std::to_string(version));
  TrainerState st;
  st.seed = r.u64();
  st.epochs_done = r.u32();
  st.best_epoch = r.u32();
  st.best_accuracy = r.f64();
  st.model = decode_checkpoint(r.raw(r.u64()), what + " (model)");
  st.best = decode_checkpoint(r.raw(r.u64()), what + " (best)");
  st.adam = AdamState::init(static_cast<const PrototypeModel&>(st.model).params());
  st.adam.t = r.u64();
  for (Tensor& t : st.adam.m)
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.f64();
  for (Tensor& t : st.adam.v)
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.f64();
  r.expect_end();
  return st;
}

// The epoch loop shared by train() and resume_train().
inline RunRecord run_epochs(const Dataset& ds, const TrainConfig& cfg, const std::string& out_dir,
                            TrainerState st, std::size_t first_epoch, bool fresh_metrics) {
  const Tensor all = ds.to_batch();
  const std::vector<int> all_labels = ds.labels();
  if (st.model.config.input_dim != all.cols())
    throw DimensionError("train: model expects input_dim " +
                         std::to_string(st.model.config.input_dim) + ", dataset images flatten to " +
                         std::to_string(all.cols()));
  const Split split = stratified_split(all_labels, cfg.split_fraction, mix_seed(cfg.seed, 1));
  const std::size_t n_train = split.train.size();
  if (cfg.batch_size > n_train)
    throw ValidationError("train: batch_size " + std::to_string(cfg.batch_size) +
                          " exceeds train split " + std::to_string(n_train));

  Tensor train_x = gather_rows(all, split.train, 0, n_train);
  Tensor test_x = gather_rows(all, split.test, 0, split.test.size());
  std::vector<int> train_y, test_y;
  for (std::size_t i : split.train) train_y.push_back(all_labels[i]);
  for (std::size_t i : split.test) test_y.push_back(all_labels[i]);

  std::filesystem::create_directories(out_dir);
  const auto path = [&](const std::string& name) {
    return (std::filesystem::path(out_dir) / name).string();
  };

  RunRecord rec;
  rec.split = split;
  rec.out_dir = out_dir;
  rec.best_epoch = st.best_epoch;
  rec.best_accuracy = st.best_accuracy;
  const std::size_t h = ds.image_rows(), w = ds.image_cols();

  std::ofstream metrics(path("metrics.csv"),
                        fresh_metrics ? std::ios::trunc : std::ios::app);
  if (!metrics) throw ParseError(path("metrics.csv") + ": cannot open for writing");
  if (fresh_metrics) {
    metrics << kMetricsHeader;
    snapshot_prototypes(st.model, 0, h, w, out_dir);
  }

  const std::set<std::size_t> snaps(cfg.snapshot_epochs.begin(), cfg.snapshot_epochs.end());
  std::vector<std::size_t> order(n_train);

  for (std::size_t epoch = first_epoch; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(cfg.seed, 2 + epoch));
    shuffle_rng.shuffle(order);

    LossBreakdown mean{};
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, n_train);
      Tensor xb = gather_rows(train_x, order, start, end);
      std::vector<int> yb;
      for (std::size_t i = start; i < end; ++i) yb.push_back(train_y[order[i]]);
      const std::string where = "epoch " + std::to_string(epoch) + " batch " +
                                std::to_string(start / cfg.batch_size);
      ObjectiveResult res;
      try {
        res = cfg.autoencoder_only
                  ? recon_loss_grad(st.model, xb, cfg.weights.lambda_r)
                  : total_loss_grad(st.model, xb, yb, cfg.weights);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (" + where + ")");
      }
      if (!std::isfinite(res.breakdown.total))
        throw NumericError("train: non-finite loss (" + where + ")");
      adam_step(st.model.params(), res.grads, st.adam, cfg.learning_rate, cfg.beta1, cfg.beta2,
                cfg.adam_eps, where);
      const double frac = static_cast<double>(end - start) / static_cast<double>(n_train);
      mean.e += frac * res.breakdown.e;
      mean.r += frac * res.breakdown.r;
      mean.r1 += frac * res.breakdown.r1;
      mean.r2 += frac * res.breakdown.r2;
      mean.pdl += frac * res.breakdown.pdl;
      mean.total += frac * res.breakdown.total;
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train = mean;
    em.test_accuracy = accuracy(st.model, test_x, test_y);
    const DiversityReport div = diversity_report(st.model.prototypes, st.model.encode(train_x),
                                                 train_y, st.model.config.classes);
    em.psi_n = div.psi_n;
    em.psi_c = div.psi_c;
    rec.epochs.push_back(em);
    metrics << metrics_row(em);
    metrics.flush();

    if (em.test_accuracy > rec.best_accuracy || rec.best_epoch == 0) {
      rec.best_accuracy = em.test_accuracy;
      rec.best_epoch = epoch;
      st.best = st.model;
      st.best_epoch = static_cast<std::uint32_t>(epoch);
      st.best_accuracy = em.test_accuracy;
      save_checkpoint(st.model, path("best.ckpt"));
    }
    if (snaps.count(epoch) || epoch == cfg.epochs)
      snapshot_prototypes(st.model, epoch, h, w, out_dir);
    save_checkpoint(st.model, path("last.ckpt"));
    st.epochs_done = static_cast<std::uint32_t>(epoch);
    write_file(path("state.bin"),
               encode_trainer_state(st.model, st.best, st.adam, cfg.seed, st.epochs_done,
                                    st.best_epoch, st.best_accuracy));
  }

  nlohmann::json manifest;
  manifest["tool"] = kToolName;
  manifest["version"] = kVersion;
  manifest["config"] = config_json(cfg);
  manifest["dataset"] = {{"modality", modality_name(ds.modality)},
                         {"examples", ds.size()},
                         {"hash", dataset_hash(all, all_labels)}};
  manifest["best_epoch"] = rec.best_epoch;
  manifest["best_test_accuracy"] = rec.best_accuracy;
  write_file(path("manifest.json"), manifest.dump(2) + "\n");

  rec.model = std::move(st.model);
  rec.best = std::move(st.best);
  return rec;
}

}  // namespace detail

// ---------- public entry points ----------

inline RunRecord train(const Dataset& ds, TrainConfig cfg, const std::string& out_dir) {
  cfg.model.input_dim = ds.image_rows() * ds.image_cols();
  cfg.model.seed = mix_seed(cfg.seed, 2);
  cfg.validate();
  cfg.model.validate();
  detail::TrainerState st;
  st.model = PrototypeModel::init(cfg.model);
  st.best = st.model;
  st.adam = AdamState::init(static_cast<const PrototypeModel&>(st.model).params());
  st.seed = cfg.seed;
  return detail::run_epochs(ds, cfg, out_dir, std::move(st), 1, true);
}

// Continue a run from its saved state; epochs already done are kept
// as-is in metrics.csv and the remaining ones replay the same seed
// stream, so a resumed run is bitwise identical to an uninterrupted
// one.
inline RunRecord resume_train(const Dataset& ds, TrainConfig cfg, const std::string& out_dir) {
  const std::string state_path = (std::filesystem::path(out_dir) / "state.bin").string();
  detail::TrainerState st = detail::decode_trainer_state(read_file(state_path), state_path);
  if (st.seed != cfg.seed)
    throw ValidationError("resume: config seed " + std::to_string(cfg.seed) +
                          " does not match saved state seed " + std::to_string(st.seed));
  cfg.model = st.model.config;
  cfg.validate();
  if (st.epochs_done >= cfg.epochs)
    throw ValidationError("resume: state already has " + std::to_string(st.epochs_done) +
                          " epochs, config asks for " + std::to_string(cfg.epochs));
  return detail::run_epochs(ds, cfg, out_dir, std::move(st), st.epochs_done + 1, false);
}

// ---------- lambda sweep ----------

struct SweepCell {
  double lambda_pd = 0.0;
  std::uint64_t seed = 0;
  bool complete = false;
  double accuracy = 0.0;
  double psi_n = 0.0;
  double psi_c = 0.0;
  std::size_t best_epoch = 0;
  std::string error;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::string table_csv;
};

namespace detail {

// Lambda values name run directories and table rows; integral ones
// print plain (2000, not 2e+03).
inline std::string fmt_lambda(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15)
    return std::to_string(static_cast<long long>(v));
  return fmt_double(v);
}

inline void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  sd = 0.0;
  if (xs.size() > 1) {
    for (double x : xs) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(xs.size() - 1));
  }
}

}  // namespace detail

// Full grid of lambda_pd values x seeds; one training run per cell
// under out_root/runs/, aggregated per lambda into table.csv.  A cell
// that aborts numerically marks its row incomplete instead of
// vanishing.
inline SweepResult sweep(const Dataset& ds, const TrainConfig& base, const std::string& out_root) {
  if (base.sweep_seeds.size() < 2)
    throw ValidationError("sweep: need at least 2 seeds");
  if (base.lambda_sweep.empty()) throw ValidationError("sweep: empty lambda list");
  SweepResult result;
  for (double lambda : base.lambda_sweep)
    for (std::uint64_t seed : base.sweep_seeds) {
      TrainConfig cfg = base;
      cfg.weights.lambda_pd = lambda;
      cfg.seed = seed;
      SweepCell cell;
      cell.lambda_pd = lambda;
      cell.seed = seed;
      const std::string id = "lpd" + detail::fmt_lambda(lambda) + "_seed" + std::to_string(seed);
      try {
        const RunRecord rec =
            train(ds, cfg, (std::filesystem::path(out_root) / "runs" / id).string());
        const EpochMetrics& best = rec.epochs[rec.best_epoch - 1];
        cell.complete = true;
        cell.accuracy = rec.best_accuracy;
        cell.psi_n = best.psi_n;
        cell.psi_c = best.psi_c;
        cell.best_epoch = rec.best_epoch;
      } catch (const NumericError& e) {
        cell.error = e.what();
      }
      result.cells.push_back(cell);
    }

  std::string table =
      "lambda_pd,seeds,completed,accuracy_mean,accuracy_std,psi_n_mean,psi_n_std,"
      "psi_c_mean,psi_c_std,status\n";
  for (double lambda : base.lambda_sweep) {
    std::vector<double> accs, psins, psics;
    std::size_t seeds = 0;
    for (const SweepCell& c : result.cells) {
      if (c.lambda_pd != lambda) continue;
      ++seeds;
      if (!c.complete) continue;
      accs.push_back(c.accuracy);
      psins.push_back(c.psi_n);
      psics.push_back(c.psi_c);
    }
    table += detail::fmt_lambda(lambda);
    table += ',' + std::to_string(seeds) + ',' + std::to_string(accs.size());
    if (accs.empty()) {
      table += ",,,,,,";
    } else {
      double mean, sd;
      for (const std::vector<double>* xs : {&accs, &psins, &psics}) {
        detail::mean_std(*xs, mean, sd);
        table += ',';
        table += fmt_double(mean);
        table += ',';
        table += fmt_double(sd);
      }
    }
    table += accs.size() == seeds ? ",complete\n" : ",incomplete\n";
  }
  result.table_csv = table;
  std::filesystem::create_directories(out_root);
  write_file((std::filesystem::path(out_root) / "table.csv").string(), table);
  return result;
}

}  // namespace protodiv
