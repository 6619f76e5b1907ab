// =============================================================
// model.hpp -- autoencoder + prototype layer + linear classifier
// =============================================================
//
// Architecture:
//   encoder  f: R^p -> R^q   four affine layers p->512->256->128->q,
//                            sigmoid after every layer
//   decoder  g: R^q -> R^p   mirror stack q->128->256->512->p,
//                            sigmoid after every layer (so pixels and
//                            latents both live in (0,1))
//   prototype layer          P in R^{m x q}
//   classifier               W in R^{K x m}, no bias;
//                            logits = pairwise_sq_dist(f(X), P) * W^T
//
// W starts at -1 on a round-robin prototype->class assignment so that a
// SMALL distance to an assigned prototype produces a LARGE class logit.
//
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "errors.hpp"
#include "io.hpp"
#include "rng.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace protodiv {

struct ModelConfig {
  std::size_t input_dim = 2048;                      // p = H*W
  std::size_t latent_dim = 64;                       // q
  std::size_t prototypes = 10;                       // m
  std::size_t classes = 3;                           // K
  std::vector<std::size_t> hidden = {512, 256, 128};
  std::uint64_t seed = 1;

  void validate() const {
    if (input_dim == 0 || latent_dim == 0 || prototypes == 0 || classes == 0)
      throw ValidationError("ModelConfig: all extents must be positive");
    for (std::size_t h : hidden)
      if (h == 0) throw ValidationError("ModelConfig: hidden sizes must be positive");
    if (prototypes < classes)
      throw ValidationError("ModelConfig: need at least one prototype per class (m >= K)");
  }

  // Layer widths along the encoder: p, hidden..., q.
  std::vector<std::size_t> encoder_widths() const {
    std::vector<std::size_t> w;
    w.push_back(input_dim);
    for (std::size_t h : hidden) w.push_back(h);
    w.push_back(latent_dim);
    return w;
  }
};

struct AffineLayer {
  Tensor w;  // [out x in]
  Tensor b;  // [out]
};

class PrototypeModel {
 public:
  ModelConfig config;
  std::vector<AffineLayer> encoder;  // config.hidden.size()+1 layers
  std::vector<AffineLayer> decoder;
  Tensor prototypes;                 // [m x q]
  Tensor classifier;                 // [K x m]

  // Deterministic initialization from config.seed.  RNG draw order is
  // fixed: encoder weights front to back, then decoder weights, then
  // the prototype matrix.  Biases and W consume no randomness.
  static PrototypeModel init(const ModelConfig& cfg) {
    cfg.validate();
    PrototypeModel mdl;
    mdl.config = cfg;
    Rng rng(cfg.seed);

    const std::vector<std::size_t> widths = cfg.encoder_widths();
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
      mdl.encoder.push_back(glorot_affine(widths[l], widths[l + 1], rng));
    for (std::size_t l = widths.size(); l-- > 1;)
      mdl.decoder.push_back(glorot_affine(widths[l], widths[l - 1], rng));

    mdl.prototypes = Tensor({cfg.prototypes, cfg.latent_dim});
    for (std::size_t i = 0; i < mdl.prototypes.size(); ++i) mdl.prototypes[i] = rng.uniform();

    mdl.classifier = Tensor({cfg.classes, cfg.prototypes});
    for (std::size_t j = 0; j < cfg.prototypes; ++j)
      mdl.classifier(j % cfg.classes, j) = -1.0;
    return mdl;
  }

  // All trainable tensors in the fixed order shared by checkpoints,
  // the optimizer, and tape leaves: enc0.w enc0.b ... dec0.w dec0.b
  // ... P W.
  std::vector<Tensor*> params() {
    std::vector<Tensor*> out;
    for (AffineLayer& l : encoder) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    }
    for (AffineLayer& l : decoder) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    }
    out.push_back(&prototypes);
    out.push_back(&classifier);
    return out;
  }

  std::vector<const Tensor*> params() const {
    std::vector<const Tensor*> out;
    for (const AffineLayer& l : encoder) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    }
    for (const AffineLayer& l : decoder) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    }
    out.push_back(&prototypes);
    out.push_back(&classifier);
    return out;
  }

  // ---- inference (no tape) ----

  Tensor encode(const Tensor& batch) const {
    check_input(batch, config.input_dim, "encode");
    Tensor x = batch;
    for (const AffineLayer& l : encoder) x = sigmoid_affine(x, l);
    return x;
  }

  Tensor decode(const Tensor& z) const {
    check_input(z, config.latent_dim, "decode");
    Tensor x = z;
    for (const AffineLayer& l : decoder) x = sigmoid_affine(x, l);
    return x;
  }

  Tensor classify(const Tensor& batch) const {
    Tensor z = encode(batch);
    Tensor d = sq_dists(z, prototypes);
    return matmul_nt(d, classifier);
  }

  // argmax over logits; ties break to the lowest class index.
  std::vector<int> predict(const Tensor& batch) const {
    Tensor logits = classify(batch);
    std::vector<int> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < logits.cols(); ++k)
        if (logits(i, k) > logits(i, best)) best = k;
      out[i] = static_cast<int>(best);
    }
    return out;
  }

  // ---- tape-facing forward pass ----

  struct TapeVars {
    std::vector<Tape::Var> leaves;  // same order as params()
    Tape::Var prototypes;
    Tape::Var classifier;
    std::vector<Tape::Var> enc_w, enc_b, dec_w, dec_b;
  };

  TapeVars leaves_on(Tape& tape) const {
    TapeVars v;
    for (const AffineLayer& l : encoder) {
      v.enc_w.push_back(tape.leaf(l.w));
      v.enc_b.push_back(tape.leaf(l.b));
      v.leaves.push_back(v.enc_w.back());
      v.leaves.push_back(v.enc_b.back());
    }
    for (const AffineLayer& l : decoder) {
      v.dec_w.push_back(tape.leaf(l.w));
      v.dec_b.push_back(tape.leaf(l.b));
      v.leaves.push_back(v.dec_w.back());
      v.leaves.push_back(v.dec_b.back());
    }
    v.prototypes = tape.leaf(prototypes);
    v.classifier = tape.leaf(classifier);
    v.leaves.push_back(v.prototypes);
    v.leaves.push_back(v.classifier);
    return v;
  }

  static Tape::Var encode_on(Tape& tape, const TapeVars& v, Tape::Var x) {
    Tape::Var h = x;
    for (std::size_t l = 0; l < v.enc_w.size(); ++l)
      h = tape.sigmoid(tape.add_rowvec(tape.matmul_nt(h, v.enc_w[l]), v.enc_b[l]));
    return h;
  }

  static Tape::Var decode_on(Tape& tape, const TapeVars& v, Tape::Var z) {
    Tape::Var h = z;
    for (std::size_t l = 0; l < v.dec_w.size(); ++l)
      h = tape.sigmoid(tape.add_rowvec(tape.matmul_nt(h, v.dec_w[l]), v.dec_b[l]));
    return h;
  }

  static Tape::Var classify_on(Tape& tape, const TapeVars& v, Tape::Var z) {
    return tape.matmul_nt(tape.pairwise_sq_dist(z, v.prototypes), v.classifier);
  }

 private:
  static AffineLayer glorot_affine(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    AffineLayer l;
    l.w = Tensor({fan_out, fan_in});
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < l.w.size(); ++i) l.w[i] = rng.uniform(-a, a);
    l.b = Tensor({fan_out});
    return l;
  }

  static Tensor sigmoid_affine(const Tensor& x, const AffineLayer& l) {
    Tensor y = matmul_nt(x, l.w);
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) {
        const double t = y(i, j) + l.b[j];
        y(i, j) = t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
      }
    return y;
  }

  static Tensor sq_dists(const Tensor& a, const Tensor& b) {
    const std::size_t n = a.rows(), m = b.rows(), q = a.cols();
    Tensor out({n, m});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < q; ++k) {
          const double d = a(i, k) - b(j, k);
          acc += d * d;
        }
        out(i, j) = acc;
      }
    return out;
  }

  static void check_input(const Tensor& batch, std::size_t dim, const char* what) {
    if (batch.rank() != 2 || batch.cols() != dim)
      throw DimensionError(std::string(what) + ": expected [n," + std::to_string(dim) +
                           "], have " + batch.shape_str());
  }
};

// ---------- checkpoint (magic "PDIV", version 1) ----------
//
// Layout: "PDIV" | u32 version | u32 p q m K | u32 n_hidden | u32
// hidden[...] | u64 seed | raw f64 LE data for each parameter tensor in
// params() order.  Shapes are implied by the extents, so only data is
// stored.  Round-trip is bitwise exact.

inline std::string encode_checkpoint(const PrototypeModel& mdl) {
  std::string out = "PDIV";
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(mdl.config.input_dim));
  put_u32(out, static_cast<std::uint32_t>(mdl.config.latent_dim));
  put_u32(out, static_cast<std::uint32_t>(mdl.config.prototypes));
  put_u32(out, static_cast<std::uint32_t>(mdl.config.classes));
  put_u32(out, static_cast<std::uint32_t>(mdl.config.hidden.size()));
  for (std::size_t h : mdl.config.hidden) put_u32(out, static_cast<std::uint32_t>(h));
  put_u64(out, mdl.config.seed);
  for (const Tensor* t : mdl.params())
    for (std::size_t i = 0; i < t->size(); ++i) put_f64(out, (*t)[i]);
  return out;
}

inline void save_checkpoint(const PrototypeModel& mdl, const std::string& path) {
  write_file(path, encode_checkpoint(mdl));
}

inline PrototypeModel decode_checkpoint(const std::string& bytes, const std::string& what) {
  ByteReader r(bytes, what);
  if (r.raw(4) != "PDIV") throw ParseError(what + ": bad checkpoint magic");
  const std::uint32_t version = r.u32();
  if (version != 1) throw ParseError(what + ": unsupported checkpoint version " +
                                     std::to_string(version));
  ModelConfig cfg;
  cfg.input_dim = r.u32();
  cfg.latent_dim = r.u32();
  cfg.prototypes = r.u32();
  cfg.classes = r.u32();
  cfg.hidden.resize(r.u32());
  for (std::size_t& h : cfg.hidden) h = r.u32();
  cfg.seed = r.u64();
  cfg.validate();

  PrototypeModel mdl;
  mdl.config = cfg;
  const std::vector<std::size_t> widths = cfg.encoder_widths();
  for (std::size_t l = 0; l + 1 < widths.size(); ++l)
    mdl.encoder.push_back({Tensor({widths[l + 1], widths[l]}), Tensor({widths[l + 1]})});
  for (std::size_t l = widths.size(); l-- > 1;)
    mdl.decoder.push_back({Tensor({widths[l - 1], widths[l]}), Tensor({widths[l - 1]})});
  mdl.prototypes = Tensor({cfg.prototypes, cfg.latent_dim});
  mdl.classifier = Tensor({cfg.classes, cfg.prototypes});
  for (Tensor* t : mdl.params())
    for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = r.f64();
  r.expect_end();
  for (Tensor* t : mdl.params()) t->check_finite(what);
  return mdl;
}

inline PrototypeModel load_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file(path), path);
}

}  // namespace protodiv
