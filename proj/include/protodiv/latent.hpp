// ==========================================================
// latent.hpp -- latent-space analysis: PCA, cosine, t-SNE
// ==========================================================
//
// Pipeline for the latent view: encode -> pca -> cosine similarity ->
// t-SNE on 1 - S -> (dim2, dim3) scatter with prototype markers.
//
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "errors.hpp"
#include "io.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace protodiv {

// ---------- PCA ----------

struct PcaResult {
  Tensor components;   // [d x q], rows orthonormal, sorted by variance
  Tensor projected;    // [n x d]
  std::vector<double> eigenvalues;  // all q, descending
  std::vector<double> mean;         // length q
  double retained = 0.0;            // fraction of total variance kept
};

namespace detail {

// Cyclic Jacobi eigensolver for a symmetric matrix; returns
// eigenvalues on the diagonal of `a` and eigenvectors as columns of
// `v`.
inline void jacobi_eigen(Tensor& a, Tensor& v) {
  const std::size_t q = a.rows();
  v = Tensor({q, q});
  for (std::size_t i = 0; i < q; ++i) v(i, i) = 1.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < q; ++j) scale = std::max(scale, std::abs(a(i, j)));
  if (scale == 0.0) return;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < q; ++i)
      for (std::size_t j = i + 1; j < q; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(off) < 1e-14 * scale * static_cast<double>(q)) break;
    for (std::size_t p = 0; p < q; ++p)
      for (std::size_t r = p + 1; r < q; ++r) {
        if (std::abs(a(p, r)) < 1e-300) continue;
        const double theta = (a(r, r) - a(p, p)) / (2.0 * a(p, r));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < q; ++k) {
          const double akp = a(k, p), akr = a(k, r);
          a(k, p) = c * akp - s * akr;
          a(k, r) = s * akp + c * akr;
        }
        for (std::size_t k = 0; k < q; ++k) {
          const double apk = a(p, k), ark = a(r, k);
          a(p, k) = c * apk - s * ark;
          a(r, k) = s * apk + c * ark;
        }
        for (std::size_t k = 0; k < q; ++k) {
          const double vkp = v(k, p), vkr = v(k, r);
          v(k, p) = c * vkp - s * vkr;
          v(k, r) = s * vkp + c * vkr;
        }
      }
  }
}

}  // namespace detail

inline PcaResult pca(const Tensor& x, std::size_t d) {
  const std::size_t n = x.rows(), q = x.cols();
  if (n < 2) throw ValidationError("pca: need at least 2 rows");
  const std::size_t d_max = std::min(n - 1, q);
  if (d < 1 || d > d_max)
    throw ValidationError("pca: d=" + std::to_string(d) + " outside [1, " +
                          std::to_string(d_max) + "]");
  x.check_finite("pca input");

  PcaResult out;
  out.mean.assign(q, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < q; ++j) out.mean[j] += x(i, j);
  for (double& m : out.mean) m /= static_cast<double>(n);
  Tensor xc({n, q});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < q; ++j) xc(i, j) = x(i, j) - out.mean[j];

  // sample covariance via one gemm
  Tensor cov = matmul_tn(xc, xc);
  const double inv = 1.0 / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < cov.size(); ++i) cov[i] *= inv;

  Tensor evecs;
  detail::jacobi_eigen(cov, evecs);
  std::vector<std::size_t> order(q);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cov(a, a) > cov(b, b);
  });

  out.eigenvalues.resize(q);
  double total = 0.0;
  for (std::size_t k = 0; k < q; ++k) {
    out.eigenvalues[k] = cov(order[k], order[k]);
    total += std::max(0.0, out.eigenvalues[k]);
  }
  double kept = 0.0;
  for (std::size_t k = 0; k < d; ++k) kept += std::max(0.0, out.eigenvalues[k]);
  out.retained = total > 0.0 ? kept / total : 1.0;

  out.components = Tensor({d, q});
  for (std::size_t k = 0; k < d; ++k) {
    // sign convention: largest-magnitude entry positive
    std::size_t arg = 0;
    for (std::size_t j = 1; j < q; ++j)
      if (std::abs(evecs(j, order[k])) > std::abs(evecs(arg, order[k]))) arg = j;
    const double flip = evecs(arg, order[k]) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < q; ++j) out.components(k, j) = flip * evecs(j, order[k]);
  }
  out.projected = matmul_nt(xc, out.components);
  out.projected.check_finite("pca projection");
  return out;
}

// ---------- cosine similarity ----------

inline Tensor cosine_similarity(const Tensor& x, std::vector<std::string>* warnings = nullptr) {
  const std::size_t n = x.rows(), d = x.cols();
  x.check_finite("cosine_similarity input");
  std::vector<double> norms(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x(i, j) * x(i, j);
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0 && warnings)
      warnings->push_back("cosine_similarity: zero row " + std::to_string(i) +
                          ", similarities set to 0");
  }
  Tensor s({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    s(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += x(i, k) * x(j, k);
      const double v =
          (norms[i] == 0.0 || norms[j] == 0.0) ? 0.0 : dot / (norms[i] * norms[j]);
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return s;
}

// ---------- t-SNE ----------

struct TsneParams {
  std::size_t out_dim = 3;
  double perplexity = 30.0;
  std::size_t iters = 1000;
  double learning_rate = 100.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (out_dim < 1) throw ValidationError("tsne: out_dim must be positive");
    if (!(perplexity > 1.0)) throw ValidationError("tsne: perplexity must exceed 1");
    if (iters < 1) throw ValidationError("tsne: iters must be positive");
    if (!(learning_rate > 0.0)) throw ValidationError("tsne: learning rate must be positive");
  }
};

struct Embedding {
  Tensor points;                  // [n x out_dim]
  std::vector<double> kl_trace;   // per iteration, vs the true P
  TsneParams params;
};

namespace detail {

// Row-conditional probabilities from squared distances, with per-point
// sigma found by binary search to the target perplexity.
inline Tensor conditional_probabilities(const Tensor& d2, double perplexity) {
  const std::size_t n = d2.rows();
  if (d2.cols() != n) throw DimensionError("conditional_probabilities: matrix not square");
  const double target_h = std::log(perplexity);
  Tensor cond({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0, beta_lo = 0.0, beta_hi = 1e300;
    std::vector<double> p(n, 0.0);
    for (int it = 0; it < 50; ++it) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        p[j] = j == i ? 0.0 : std::exp(-beta * d2(i, j));
        sum += p[j];
      }
      double h;
      if (sum <= 0.0) {
        h = 0.0;
      } else {
        // H = log(sum) + beta * <d2> under p
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j)
          if (j != i) acc += p[j] * d2(i, j);
        h = std::log(sum) + beta * acc / sum;
        for (std::size_t j = 0; j < n; ++j) p[j] /= sum;
      }
      if (std::abs(std::exp(h) - perplexity) <= 1e-5) break;
      if (h > target_h) {
        beta_lo = beta;
        beta = beta_hi >= 1e300 ? beta * 2.0 : 0.5 * (beta + beta_hi);
      } else {
        beta_hi = beta;
        beta = beta_lo <= 0.0 ? beta / 2.0 : 0.5 * (beta + beta_lo);
      }
    }
    for (std::size_t j = 0; j < n; ++j) cond(i, j) = p[j];
  }
  return cond;
}

inline Tensor joint_probabilities(const Tensor& d2, double perplexity) {
  const Tensor cond = conditional_probabilities(d2, perplexity);
  const std::size_t n = d2.rows();
  Tensor joint({n, n});
  const double inv2n = 1.0 / (2.0 * static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      joint(i, j) = (cond(i, j) + cond(j, i)) * inv2n;
  return joint;
}

inline Tensor squared_distances_from_points(const Tensor& x) {
  const std::size_t n = x.rows(), d = x.cols();
  Tensor d2({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = x(i, k) - x(j, k);
        s += diff * diff;
      }
      d2(i, j) = s;
      d2(j, i) = s;
    }
  return d2;
}

inline Embedding tsne_core(const Tensor& d2, const TsneParams& params) {
  params.validate();
  const std::size_t n = d2.rows();
  if (n < 5) throw ValidationError("tsne: need at least 5 points");
  d2.check_finite("tsne distances");

  const Tensor p_true = joint_probabilities(d2, params.perplexity);
  Embedding emb;
  emb.params = params;
  const std::size_t d = params.out_dim;
  emb.points = Tensor({n, d});
  Rng rng(params.seed);
  for (std::size_t i = 0; i < emb.points.size(); ++i) emb.points[i] = rng.normal(0.0, 1e-4);

  Tensor vel({n, d});
  Tensor grad({n, d});
  std::vector<double> w(n * n, 0.0);
  Tensor& y = emb.points;
  for (std::size_t iter = 0; iter < params.iters; ++iter) {
    const double exaggeration = iter < 100 ? 4.0 : 1.0;
    const double momentum = iter < 250 ? 0.5 : 0.8;

    // Student-t weights and their sum
    double wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = y(i, k) - y(j, k);
          s += diff * diff;
        }
        const double wij = 1.0 / (1.0 + s);
        w[i * n + j] = wij;
        w[j * n + i] = wij;
        wsum += 2.0 * wij;
      }

    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) grad(i, k) = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double wij = w[i * n + j];
        const double qij = std::max(wij / wsum, 1e-12);
        const double pij = p_true(i, j);
        if (pij > 0.0) kl += pij * std::log(std::max(pij, 1e-12) / qij);
        const double coef = 4.0 * (exaggeration * pij - qij) * wij;
        for (std::size_t k = 0; k < d; ++k) grad(i, k) += coef * (y(i, k) - y(j, k));
      }
    emb.kl_trace.push_back(std::max(kl, 0.0));

    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) {
        vel(i, k) = momentum * vel(i, k) - params.learning_rate * grad(i, k);
        y(i, k) += vel(i, k);
      }
    // re-center
    for (std::size_t k = 0; k < d; ++k) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += y(i, k);
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) y(i, k) -= mean;
    }
    y.check_finite("tsne iteration");
  }
  return emb;
}

}  // namespace detail

// t-SNE on raw points (squared Euclidean affinities).
inline Embedding tsne(const Tensor& points, const TsneParams& params = {}) {
  return detail::tsne_core(detail::squared_distances_from_points(points), params);
}

// t-SNE on a precomputed distance matrix (e.g. 1 - cosine similarity);
// entries are squared for the Gaussian kernel, negatives clamped to 0.
inline Embedding tsne_distances(const Tensor& dist, const TsneParams& params = {}) {
  const std::size_t n = dist.rows();
  if (dist.cols() != n) throw DimensionError("tsne_distances: matrix not square");
  Tensor d2({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double v = std::max(0.0, dist(i, j));
      d2(i, j) = v * v;
    }
  for (std::size_t i = 0; i < n; ++i) d2(i, i) = 0.0;
  return detail::tsne_core(d2, params);
}

// ---------- view export ----------

struct ViewRow {
  std::size_t index = 0;        // row in the embedding
  bool is_prototype = false;
  double dim2 = 0.0;
  double dim3 = 0.0;
  std::ptrdiff_t nearest_neighbor = -1;  // data row index; -1 for data rows
};

// The (dim2, dim3) scatter: first n_data embedding rows are data, the
// remaining rows are prototypes with their nearest-neighbor markers.
inline std::vector<ViewRow> project_view(const Embedding& emb, std::size_t n_data,
                                         const std::vector<std::size_t>& proto_neighbors) {
  if (emb.points.cols() < 3)
    throw ValidationError("project_view: embedding needs at least 3 dimensions");
  if (emb.points.rows() != n_data + proto_neighbors.size())
    throw ValidationError("project_view: row count " + std::to_string(emb.points.rows()) +
                          " != data " + std::to_string(n_data) + " + prototypes " +
                          std::to_string(proto_neighbors.size()));
  for (std::size_t nb : proto_neighbors)
    if (nb >= n_data) throw ValidationError("project_view: neighbor index out of range");
  std::vector<ViewRow> rows;
  rows.reserve(emb.points.rows());
  for (std::size_t i = 0; i < emb.points.rows(); ++i) {
    ViewRow r;
    r.index = i;
    r.is_prototype = i >= n_data;
    r.dim2 = emb.points(i, 1);
    r.dim3 = emb.points(i, 2);
    r.nearest_neighbor =
        r.is_prototype ? static_cast<std::ptrdiff_t>(proto_neighbors[i - n_data]) : -1;
    rows.push_back(r);
  }
  return rows;
}

// embedding.csv: id, is_prototype, dim1, dim2, dim3, label,
// nearest_neighbor_id (empty for data rows).
inline std::string encode_embedding_csv(const Embedding& emb, const std::vector<std::string>& ids,
                                        const std::vector<int>& labels, std::size_t n_data,
                                        const std::vector<std::size_t>& proto_neighbors) {
  const std::size_t n = emb.points.rows();
  if (emb.points.cols() < 3)
    throw ValidationError("embedding csv: need 3 output dimensions");
  if (ids.size() != n || labels.size() != n)
    throw ValidationError("embedding csv: ids/labels must cover all rows");
  if (n_data + proto_neighbors.size() != n)
    throw ValidationError("embedding csv: data + prototype counts mismatch rows");
  std::string out = "id,is_prototype,dim1,dim2,dim3,label,nearest_neighbor_id\n";
  for (std::size_t i = 0; i < n; ++i) {
    const bool proto = i >= n_data;
    out += ids[i];
    out += proto ? ",1," : ",0,";
    out += fmt_double(emb.points(i, 0));
    out += ',';
    out += fmt_double(emb.points(i, 1));
    out += ',';
    out += fmt_double(emb.points(i, 2));
    out += ',';
    out += std::to_string(labels[i]);
    out += ',';
    if (proto) out += ids[proto_neighbors[i - n_data]];
    out += '\n';
  }
  return out;
}

}  // namespace protodiv
