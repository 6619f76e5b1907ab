// =============================================================
// objective.hpp -- the five-term training objective
// =============================================================
//
//   L = E + lambda_r * R + lambda_1 * R1 + lambda_2 * R2 + lambda_pd * PDL
//
//   E    softmax cross entropy of the prototype classifier
//   R    mean per-example squared reconstruction error ||g(f(x)) - x||^2
//   R1   (1/m) sum_j min_i ||p_j - z_i||^2   (prototypes -> latents)
//   R2   (1/n) sum_i min_j ||z_i - p_j||^2   (latents -> prototypes)
//   PDL  diversity penalty on dbar = (1/m) sum_j min_{i != j} ||p_i - p_j||^2:
//          shifted (default):  1 / (log(1 + dbar) + eps)
//          literal:            1 / max(log(dbar) + eps, delta) with
//                              delta = 1e-3.  The inner log argument is
//                              pre-clamped at e^{delta-eps} so the log
//                              primitive never sees a non-positive
//                              value; the outer clamp pins the clamped
//                              branch at exactly 1/delta.
//
// Values and gradients come from one tape graph; there is no second
// hand-derived formula to drift out of sync.
//
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "errors.hpp"
#include "model.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace protodiv {

enum class PdlVariant { shifted, literal };

inline constexpr double kLiteralPdlDelta = 1e-3;

struct LossWeights {
  double lambda_r = 1.0;
  double lambda_1 = 1.0;
  double lambda_2 = 1.0;
  double lambda_pd = 0.0;
  double eps = 1e-6;
  PdlVariant pdl_variant = PdlVariant::shifted;

  void validate() const {
    if (lambda_r < 0 || lambda_1 < 0 || lambda_2 < 0 || lambda_pd < 0)
      throw ValidationError("LossWeights: lambdas must be non-negative");
    if (!(eps > 0)) throw ValidationError("LossWeights: eps must be positive");
  }
};

struct LossBreakdown {
  double e = 0, r = 0, r1 = 0, r2 = 0, pdl = 0, total = 0;
};

namespace detail {

inline Tape::Var pdl_on(Tape& tape, Tape::Var P, double eps, PdlVariant variant) {
  const Tensor& pv = tape.val(P);
  if (pv.rank() != 2 || pv.rows() < 2)
    throw ValidationError("pdl: need at least 2 prototypes, have " + pv.shape_str());
  Tape::Var dbar = tape.mean(tape.row_min_offdiag(tape.pairwise_sq_dist(P, P)));
  if (variant == PdlVariant::shifted)
    return tape.reciprocal(tape.add_scalar(tape.log(tape.add_scalar(dbar, 1.0)), eps));
  Tape::Var safe = tape.clamp_min(dbar, std::exp(kLiteralPdlDelta - eps));
  Tape::Var den = tape.clamp_min(tape.add_scalar(tape.log(safe), eps), kLiteralPdlDelta);
  return tape.reciprocal(den);
}

inline Tape::Var r1_on(Tape& tape, Tape::Var P, Tape::Var Z) {
  if (tape.val(Z).rank() != 2 || tape.val(Z).rows() == 0)
    throw ValidationError("r1: empty latent batch");
  return tape.mean(tape.row_min(tape.pairwise_sq_dist(P, Z)));
}

inline Tape::Var r2_on(Tape& tape, Tape::Var P, Tape::Var Z) {
  if (tape.val(Z).rank() != 2 || tape.val(Z).rows() == 0)
    throw ValidationError("r2: empty latent batch");
  return tape.mean(tape.row_min(tape.pairwise_sq_dist(Z, P)));
}

struct ObjectiveGraph {
  Tape::Var e, r, r1, r2, pdl, total;
};

// The full Eq.-style objective on a tape.  `x` must be an n x p leaf.
inline ObjectiveGraph objective_on(Tape& tape, const PrototypeModel::TapeVars& v, Tape::Var x,
                                   const std::vector<int>& labels, const LossWeights& w) {
  ObjectiveGraph g;
  Tape::Var z = PrototypeModel::encode_on(tape, v, x);
  g.e = tape.softmax_cross_entropy(PrototypeModel::classify_on(tape, v, z), labels);
  Tape::Var recon = PrototypeModel::decode_on(tape, v, z);
  g.r = tape.mean(tape.row_sum(tape.square(tape.sub(recon, x))));
  g.r1 = r1_on(tape, v.prototypes, z);
  g.r2 = r2_on(tape, v.prototypes, z);
  g.pdl = pdl_on(tape, v.prototypes, w.eps, w.pdl_variant);
  Tape::Var total = g.e;
  total = tape.add(total, tape.scale(g.r, w.lambda_r));
  total = tape.add(total, tape.scale(g.r1, w.lambda_1));
  total = tape.add(total, tape.scale(g.r2, w.lambda_2));
  total = tape.add(total, tape.scale(g.pdl, w.lambda_pd));
  g.total = total;
  return g;
}

inline LossBreakdown read_breakdown(const Tape& tape, const ObjectiveGraph& g) {
  LossBreakdown b;
  b.e = tape.val(g.e).value();
  b.r = tape.val(g.r).value();
  b.r1 = tape.val(g.r1).value();
  b.r2 = tape.val(g.r2).value();
  b.pdl = tape.val(g.pdl).value();
  b.total = tape.val(g.total).value();
  return b;
}

}  // namespace detail

// ---- standalone term values (evaluated through the same tape ops) ----

inline double pdl(const Tensor& P, double eps = 1e-6,
                  PdlVariant variant = PdlVariant::shifted) {
  if (!(eps > 0)) throw ValidationError("pdl: eps must be positive");
  Tape tape;
  return tape.val(detail::pdl_on(tape, tape.leaf(P, false), eps, variant)).value();
}

inline double r1(const Tensor& P, const Tensor& Z) {
  Tape tape;
  return tape.val(detail::r1_on(tape, tape.leaf(P, false), tape.leaf(Z, false))).value();
}

inline double r2(const Tensor& P, const Tensor& Z) {
  Tape tape;
  return tape.val(detail::r2_on(tape, tape.leaf(P, false), tape.leaf(Z, false))).value();
}

// ---- full objective ----

inline LossBreakdown total_loss(const PrototypeModel& mdl, const Tensor& batch,
                                const std::vector<int>& labels, const LossWeights& weights) {
  weights.validate();
  Tape tape;
  PrototypeModel::TapeVars v = mdl.leaves_on(tape);
  Tape::Var x = tape.leaf(batch, false);
  detail::ObjectiveGraph g = detail::objective_on(tape, v, x, labels, weights);
  return detail::read_breakdown(tape, g);
}

struct ObjectiveResult {
  LossBreakdown breakdown;
  std::vector<Tensor> grads;  // aligned with PrototypeModel::params()
};

inline ObjectiveResult total_loss_grad(const PrototypeModel& mdl, const Tensor& batch,
                                       const std::vector<int>& labels,
                                       const LossWeights& weights) {
  weights.validate();
  Tape tape;
  PrototypeModel::TapeVars v = mdl.leaves_on(tape);
  Tape::Var x = tape.leaf(batch, false);
  detail::ObjectiveGraph g = detail::objective_on(tape, v, x, labels, weights);
  ObjectiveResult out;
  out.breakdown = detail::read_breakdown(tape, g);
  out.grads = tape.backward(g.total, v.leaves);
  return out;
}

}  // namespace protodiv
