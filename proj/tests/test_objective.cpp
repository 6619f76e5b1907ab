// Objective terms against hand arithmetic and brute-force loop oracles,
// plus the full-gradient finite-difference check on a tiny model.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "protodiv/model.hpp"
#include "protodiv/objective.hpp"
#include "protodiv/rng.hpp"

using namespace protodiv;

namespace {

Tensor rand_matrix(std::size_t n, std::size_t q, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor t({n, q});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

double sq_dist_rows(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const double d = a(i, k) - b(j, k);
    acc += d * d;
  }
  return acc;
}

// Brute-force oracles, written independently of the tape path.
double oracle_r1(const Tensor& P, const Tensor& Z) {
  double total = 0.0;
  for (std::size_t j = 0; j < P.rows(); ++j) {
    double best = sq_dist_rows(P, j, Z, 0);
    for (std::size_t i = 1; i < Z.rows(); ++i) best = std::min(best, sq_dist_rows(P, j, Z, i));
    total += best;
  }
  return total / static_cast<double>(P.rows());
}

double oracle_r2(const Tensor& P, const Tensor& Z) {
  double total = 0.0;
  for (std::size_t i = 0; i < Z.rows(); ++i) {
    double best = sq_dist_rows(Z, i, P, 0);
    for (std::size_t j = 1; j < P.rows(); ++j) best = std::min(best, sq_dist_rows(Z, i, P, j));
    total += best;
  }
  return total / static_cast<double>(Z.rows());
}

double oracle_dbar(const Tensor& P) {
  double total = 0.0;
  for (std::size_t j = 0; j < P.rows(); ++j) {
    double best = 1e300;
    for (std::size_t i = 0; i < P.rows(); ++i)
      if (i != j) best = std::min(best, sq_dist_rows(P, i, P, j));
    total += best;
  }
  return total / static_cast<double>(P.rows());
}

double oracle_pdl(const Tensor& P, double eps, PdlVariant variant) {
  const double dbar = oracle_dbar(P);
  if (variant == PdlVariant::shifted) return 1.0 / (std::log1p(dbar) + eps);
  const double den = std::max(std::log(dbar) + eps, kLiteralPdlDelta);
  return 1.0 / den;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.input_dim = 6;
  cfg.latent_dim = 3;
  cfg.prototypes = 4;
  cfg.classes = 3;
  cfg.hidden = {6, 5, 4};
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("pdl pinned values") {
  // Coincident prototypes, shifted: dbar = 0 -> 1/eps.
  Tensor coincident({2, 2}, {0.3, 0.7, 0.3, 0.7});
  CHECK(pdl(coincident, 1e-6, PdlVariant::shifted) == Catch::Approx(1e6).epsilon(1e-9));

  // m=2 at squared distance e-1, shifted: log(1+(e-1)) = 1 -> 1/(1+eps).
  const double s = std::sqrt(std::exp(1.0) - 1.0);
  Tensor two({2, 2}, {0, 0, s, 0});
  CHECK(pdl(two, 1e-6, PdlVariant::shifted) ==
        Catch::Approx(1.0 / (1.0 + 1e-6)).epsilon(1e-12));

  // m=3 mutually at squared distance e, literal: log(e) = 1 -> 1/(1+eps).
  const double side = std::sqrt(std::exp(1.0));
  Tensor tri({3, 2},
             {0, 0, side, 0, side / 2.0, side * std::sqrt(3.0) / 2.0});
  CHECK(pdl(tri, 1e-6, PdlVariant::literal) ==
        Catch::Approx(1.0 / (1.0 + 1e-6)).epsilon(1e-12));

  // Literal mode clamps at delta instead of going singular/negative.
  CHECK(pdl(coincident, 1e-6, PdlVariant::literal) ==
        Catch::Approx(1.0 / kLiteralPdlDelta).epsilon(1e-9));

  Tensor one({1, 2}, {0, 0});
  CHECK_THROWS_AS(pdl(one), ValidationError);
  CHECK_THROWS_AS(pdl(two, 0.0), ValidationError);
}

TEST_CASE("shifted pdl bounds and dilation monotonicity") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor P = rand_matrix(5, 3, rng);
    const double v = pdl(P);
    CHECK(v > 0.0);
    CHECK(v <= 1e6 + 1e-6);
    for (double c : {1.5, 2.0, 5.0}) {
      CHECK(pdl(scale(P, c)) <= v + 1e-15);
    }
  }
}

TEST_CASE("r1/r2 hand values") {
  Tensor P({2, 2}, {0, 0, 3, 4});
  Tensor Z({2, 2}, {0, 1, 3, 4});
  CHECK(r1(P, Z) == Catch::Approx(0.5).epsilon(1e-14));
  CHECK(r2(P, Z) == Catch::Approx(0.5).epsilon(1e-14));

  // Prototypes subset of latents -> r1 = 0; and vice versa for r2.
  Tensor Zbig({3, 2}, {0, 0, 3, 4, 7, 7});
  CHECK(r1(P, Zbig) == 0.0);
  CHECK(r2(Zbig, Zbig) == 0.0);

  Tensor empty({0, 2});
  CHECK_THROWS_AS(r1(P, empty), ValidationError);
  CHECK_THROWS_AS(r2(P, empty), ValidationError);
}

TEST_CASE("loss terms match brute-force oracles on 100 random instances") {
  Rng rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 2 + rng.below(5);
    const std::size_t n = 1 + rng.below(20);
    const std::size_t q = 1 + rng.below(6);
    Tensor P = rand_matrix(m, q, rng, -2.0, 2.0);
    Tensor Z = rand_matrix(n, q, rng, -2.0, 2.0);

    CHECK(std::abs(r1(P, Z) - oracle_r1(P, Z)) < 1e-12);
    CHECK(std::abs(r2(P, Z) - oracle_r2(P, Z)) < 1e-12);
    CHECK(std::abs(pdl(P, 1e-6, PdlVariant::shifted) -
                   oracle_pdl(P, 1e-6, PdlVariant::shifted)) < 1e-12);
    CHECK(std::abs(pdl(P, 1e-6, PdlVariant::literal) -
                   oracle_pdl(P, 1e-6, PdlVariant::literal)) < 1e-12);
    CHECK(std::abs(r2(P, Z) - r1(Z, P)) < 1e-15);
  }
}

TEST_CASE("total_loss breakdown invariant and degeneracies") {
  PrototypeModel mdl = PrototypeModel::init(tiny_config());
  Rng rng(44);
  Tensor batch = rand_matrix(8, 6, rng);
  std::vector<int> labels;
  for (int i = 0; i < 8; ++i) labels.push_back(static_cast<int>(rng.below(3)));

  // All lambdas zero -> total == e exactly.
  LossWeights zero;
  zero.lambda_r = zero.lambda_1 = zero.lambda_2 = zero.lambda_pd = 0.0;
  LossBreakdown b0 = total_loss(mdl, batch, labels, zero);
  CHECK(b0.total == b0.e);
  CHECK(b0.pdl > 0.0);  // still reported even when unweighted

  // Random weights: invariant to 1e-12, terms non-negative.
  for (int trial = 0; trial < 5; ++trial) {
    LossWeights w;
    w.lambda_r = rng.uniform(0.0, 2.0);
    w.lambda_1 = rng.uniform(0.0, 2.0);
    w.lambda_2 = rng.uniform(0.0, 2.0);
    w.lambda_pd = rng.uniform(0.0, 2.0);
    LossBreakdown b = total_loss(mdl, batch, labels, w);
    CHECK(b.e >= 0.0);
    CHECK(b.r >= 0.0);
    CHECK(b.r1 >= 0.0);
    CHECK(b.r2 >= 0.0);
    const double recomposed =
        b.e + w.lambda_r * b.r + w.lambda_1 * b.r1 + w.lambda_2 * b.r2 + w.lambda_pd * b.pdl;
    CHECK(std::abs(b.total - recomposed) <= 1e-12);
  }

  LossWeights bad;
  bad.lambda_r = -1.0;
  CHECK_THROWS_AS(total_loss(mdl, batch, labels, bad), ValidationError);
}

TEST_CASE("total_loss is batch-permutation invariant") {
  PrototypeModel mdl = PrototypeModel::init(tiny_config());
  Rng rng(55);
  Tensor batch = rand_matrix(6, 6, rng);
  std::vector<int> labels = {0, 1, 2, 0, 1, 2};
  LossWeights w;
  w.lambda_pd = 0.5;
  LossBreakdown fwd = total_loss(mdl, batch, labels, w);

  Tensor rev({6, 6});
  std::vector<int> rev_labels(6);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) rev(i, j) = batch(5 - i, j);
    rev_labels[i] = labels[5 - i];
  }
  LossBreakdown bwd = total_loss(mdl, rev, rev_labels, w);
  CHECK(std::abs(fwd.total - bwd.total) < 1e-12);
  CHECK(std::abs(fwd.e - bwd.e) < 1e-12);
  CHECK(std::abs(fwd.r - bwd.r) < 1e-12);
  CHECK(std::abs(fwd.r1 - bwd.r1) < 1e-12);
  CHECK(std::abs(fwd.r2 - bwd.r2) < 1e-12);
}

TEST_CASE("full objective gradient matches finite differences") {
  for (PdlVariant variant : {PdlVariant::shifted, PdlVariant::literal}) {
    PrototypeModel mdl = PrototypeModel::init(tiny_config());
    Rng rng(66);
    Tensor batch = rand_matrix(5, 6, rng);
    std::vector<int> labels = {0, 1, 2, 1, 0};
    LossWeights w;
    w.lambda_r = 1.0;
    w.lambda_1 = 1.0;
    w.lambda_2 = 1.0;
    w.lambda_pd = 1.0;
    w.pdl_variant = variant;

    ObjectiveResult res = total_loss_grad(mdl, batch, labels, w);
    const double h = 1e-5;
    std::vector<Tensor*> params = mdl.params();
    for (std::size_t t = 0; t < params.size(); ++t) {
      for (std::size_t i = 0; i < params[t]->size(); ++i) {
        const double keep = (*params[t])[i];
        (*params[t])[i] = keep + h;
        const double fp = total_loss(mdl, batch, labels, w).total;
        (*params[t])[i] = keep - h;
        const double fm = total_loss(mdl, batch, labels, w).total;
        (*params[t])[i] = keep;
        const double numeric = (fp - fm) / (2.0 * h);
        const double analytic = res.grads[t][i];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        INFO("variant " << (variant == PdlVariant::shifted ? "shifted" : "literal")
                        << " param " << t << " elem " << i);
        CHECK(std::abs(analytic - numeric) / denom < 1e-4);
      }
    }
  }
}

TEST_CASE("non-finite parameters are surfaced, not propagated") {
  PrototypeModel mdl = PrototypeModel::init(tiny_config());
  mdl.encoder[0].w[0] = std::numeric_limits<double>::infinity();
  Rng rng(77);
  Tensor batch = rand_matrix(3, 6, rng);
  std::vector<int> labels = {0, 1, 2};
  CHECK_THROWS_AS(total_loss(mdl, batch, labels, LossWeights{}), NumericError);
}
