// =============================================================
// tape.hpp -- reverse-mode automatic differentiation
// =============================================================
//
// A GradTape records every primitive applied during a forward pass as a
// node (value + parent links + backward closure).  backward() seeds the
// adjoint of a scalar loss with 1 and replays the nodes in reverse,
// accumulating adjoints into every participating leaf.  Leaves that did
// not participate come back as exact zeros.
//
// Conventions pinned here (and relied on by the objective):
//   * min-reductions route the adjoint to the argmin element only; ties
//     are broken to the lowest index.
//   * clamp_min passes the adjoint iff x >= threshold.
//   * relu passes the adjoint iff x > 0 (zero at the kink).
//   * every primitive checks its output for NaN/Inf and raises
//     NumericError naming itself, so poison never propagates silently.
//
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

namespace protodiv {

class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  // ---- leaves ----

  Var leaf(Tensor value, bool requires_grad = true) {
    value.check_finite("leaf");
    return push(std::move(value), requires_grad, {}, nullptr);
  }

  const Tensor& val(Var v) const { return node(v).value; }

  // ---- elementwise ----

  Var add(Var a, Var b) {
    Tensor out = protodiv::add(val(a), val(b));
    return unary_or_binary("add", std::move(out), {a, b}, [](Tape& t, int self) {
      const Tensor& g = t.adj_[self];
      t.accumulate(t.nodes_[self].parents[0], g);
      t.accumulate(t.nodes_[self].parents[1], g);
    });
  }

  Var sub(Var a, Var b) {
    Tensor out = protodiv::sub(val(a), val(b));
    return unary_or_binary("sub", std::move(out), {a, b}, [](Tape& t, int self) {
      const Tensor& g = t.adj_[self];
      t.accumulate(t.nodes_[self].parents[0], g);
      t.accumulate_scaled(t.nodes_[self].parents[1], g, -1.0);
    });
  }

  Var square(Var a) {
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= out[i];
    return unary_or_binary("square", std::move(out), {a}, [](Tape& t, int self) {
      const int p = t.nodes_[self].parents[0];
      const Tensor& x = t.nodes_[p].value;
      const Tensor& g = t.adj_[self];
      Tensor d = x;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = 2.0 * x[i] * g[i];
      t.accumulate(p, d);
    });
  }

  Var scale(Var a, double s) {
    Tensor out = protodiv::scale(val(a), s);
    return unary_or_binary("scale", std::move(out), {a}, [s](Tape& t, int self) {
      t.accumulate_scaled(t.nodes_[self].parents[0], t.adj_[self], s);
    });
  }

  Var add_scalar(Var a, double c) {
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c;
    return unary_or_binary("add_scalar", std::move(out), {a}, [](Tape& t, int self) {
      t.accumulate(t.nodes_[self].parents[0], t.adj_[self]);
    });
  }

  Var sigmoid(Var a) {
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double x = out[i];
      if (x >= 0.0) {
        out[i] = 1.0 / (1.0 + std::exp(-x));
      } else {
        const double e = std::exp(x);
        out[i] = e / (1.0 + e);
      }
    }
    return unary_or_binary("sigmoid", std::move(out), {a}, [](Tape& t, int self) {
      const Tensor& s = t.nodes_[self].value;
      const Tensor& g = t.adj_[self];
      Tensor d = s;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = s[i] * (1.0 - s[i]) * g[i];
      t.accumulate(t.nodes_[self].parents[0], d);
    });
  }

  Var relu(Var a) {
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return unary_or_binary("relu", std::move(out), {a}, [](Tape& t, int self) {
      const int p = t.nodes_[self].parents[0];
      const Tensor& x = t.nodes_[p].value;
      const Tensor& g = t.adj_[self];
      Tensor d = x;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] > 0.0 ? g[i] : 0.0;
      t.accumulate(p, d);
    });
  }

  Var log(Var a) {
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!(out[i] > 0.0)) throw NumericError("log: non-positive argument");
      out[i] = std::log(out[i]);
    }
    return unary_or_binary("log", std::move(out), {a}, [](Tape& t, int self) {
      const int p = t.nodes_[self].parents[0];
      const Tensor& x = t.nodes_[p].value;
      const Tensor& g = t.adj_[self];
      Tensor d = x;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] / x[i];
      t.accumulate(p, d);
    });
  }

  Var reciprocal(Var a) {
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i] == 0.0) throw NumericError("reciprocal: zero argument");
      out[i] = 1.0 / out[i];
    }
    return unary_or_binary("reciprocal", std::move(out), {a}, [](Tape& t, int self) {
      const int p = t.nodes_[self].parents[0];
      const Tensor& x = t.nodes_[p].value;
      const Tensor& g = t.adj_[self];
      Tensor d = x;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = -g[i] / (x[i] * x[i]);
      t.accumulate(p, d);
    });
  }

  // max(x, c) elementwise; adjoint passes iff x >= c.
  Var clamp_min(Var a, double c) {
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] < c ? c : out[i];
    return unary_or_binary("clamp_min", std::move(out), {a}, [c](Tape& t, int self) {
      const int p = t.nodes_[self].parents[0];
      const Tensor& x = t.nodes_[p].value;
      const Tensor& g = t.adj_[self];
      Tensor d = x;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] >= c ? g[i] : 0.0;
      t.accumulate(p, d);
    });
  }

  // ---- linear algebra ----

  Var matmul(Var a, Var b) {
    Tensor out = matmul_nn(val(a), val(b));
    return unary_or_binary("matmul", std::move(out), {a, b}, [](Tape& t, int self) {
      const int pa = t.nodes_[self].parents[0];
      const int pb = t.nodes_[self].parents[1];
      const Tensor& g = t.adj_[self];
      if (t.needs(pa)) t.accumulate(pa, protodiv::matmul_nt(g, t.nodes_[pb].value));
      if (t.needs(pb)) t.accumulate(pb, protodiv::matmul_tn(t.nodes_[pa].value, g));
    });
  }

  // a * b^T
  Var matmul_nt(Var a, Var b) {
    Tensor out = protodiv::matmul_nt(val(a), val(b));
    return unary_or_binary("matmul_nt", std::move(out), {a, b}, [](Tape& t, int self) {
      const int pa = t.nodes_[self].parents[0];
      const int pb = t.nodes_[self].parents[1];
      const Tensor& g = t.adj_[self];
      if (t.needs(pa)) t.accumulate(pa, protodiv::matmul_nn(g, t.nodes_[pb].value));
      if (t.needs(pb)) t.accumulate(pb, protodiv::matmul_tn(g, t.nodes_[pa].value));
    });
  }

  // x[n,m] + b[m] broadcast over rows.
  Var add_rowvec(Var x, Var b) {
    const Tensor& xv = val(x);
    const Tensor& bv = val(b);
    if (xv.rank() != 2 || bv.rank() != 1 || bv.shape()[0] != xv.cols())
      throw DimensionError("add_rowvec: " + xv.shape_str() + " vs " + bv.shape_str());
    Tensor out = xv;
    for (std::size_t i = 0; i < xv.rows(); ++i)
      for (std::size_t j = 0; j < xv.cols(); ++j) out(i, j) += bv[j];
    return unary_or_binary("add_rowvec", std::move(out), {x, b}, [](Tape& t, int self) {
      const int px = t.nodes_[self].parents[0];
      const int pb = t.nodes_[self].parents[1];
      const Tensor& g = t.adj_[self];
      t.accumulate(px, g);
      if (t.needs(pb)) {
        Tensor db({g.cols()});
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) db[j] += g(i, j);
        t.accumulate(pb, db);
      }
    });
  }

  // out[i][j] = sum_k (a[i][k] - b[j][k])^2.  Direct differences, which
  // makes the a==b diagonal exactly zero (the norm-expansion shortcut
  // does not).  The matrices here are small; no BLAS needed.
  Var pairwise_sq_dist(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.cols())
      throw DimensionError("pairwise_sq_dist: " + av.shape_str() + " vs " + bv.shape_str());
    const std::size_t n = av.rows(), m = bv.rows(), q = av.cols();
    Tensor out({n, m});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < q; ++k) {
          const double d = av(i, k) - bv(j, k);
          acc += d * d;
        }
        out(i, j) = acc;
      }
    return unary_or_binary("pairwise_sq_dist", std::move(out), {a, b}, [](Tape& t, int self) {
      const int pa = t.nodes_[self].parents[0];
      const int pb = t.nodes_[self].parents[1];
      const Tensor& av = t.nodes_[pa].value;
      const Tensor& bv = t.nodes_[pb].value;
      const Tensor& g = t.adj_[self];
      const std::size_t n = av.rows(), m = bv.rows(), q = av.cols();
      if (t.needs(pa)) {
        Tensor da(av.shape());
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            const double gij = 2.0 * g(i, j);
            if (gij == 0.0) continue;
            for (std::size_t k = 0; k < q; ++k) da(i, k) += gij * (av(i, k) - bv(j, k));
          }
        t.accumulate(pa, da);
      }
      if (t.needs(pb)) {
        Tensor db(bv.shape());
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            const double gij = 2.0 * g(i, j);
            if (gij == 0.0) continue;
            for (std::size_t k = 0; k < q; ++k) db(j, k) += gij * (bv(j, k) - av(i, k));
          }
        t.accumulate(pb, db);
      }
    });
  }

  // ---- reductions ----

  Var row_sum(Var a) {
    const Tensor& av = val(a);
    if (av.rank() != 2) throw DimensionError("row_sum: need rank 2, have " + av.shape_str());
    Tensor out({av.rows()});
    for (std::size_t i = 0; i < av.rows(); ++i)
      for (std::size_t j = 0; j < av.cols(); ++j) out[i] += av(i, j);
    return unary_or_binary("row_sum", std::move(out), {a}, [](Tape& t, int self) {
      const int p = t.nodes_[self].parents[0];
      const Tensor& x = t.nodes_[p].value;
      const Tensor& g = t.adj_[self];
      Tensor d(x.shape());
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) d(i, j) = g[i];
      t.accumulate(p, d);
    });
  }

  // Minimum over each row.  Adjoint goes to the argmin only; ties break
  // to the lowest column index.
  Var row_min(Var a) {
    const Tensor& av = val(a);
    if (av.rank() != 2) throw DimensionError("row_min: need rank 2, have " + av.shape_str());
    const std::size_t n = av.rows(), m = av.cols();
    if (m == 0) throw DimensionError("row_min: empty rows");
    Tensor out({n});
    auto amin = std::make_shared<std::vector<std::size_t>>(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < m; ++j)
        if (av(i, j) < av(i, best)) best = j;
      (*amin)[i] = best;
      out[i] = av(i, best);
    }
    return unary_or_binary("row_min", std::move(out), {a}, [amin](Tape& t, int self) {
      const int p = t.nodes_[self].parents[0];
      const Tensor& x = t.nodes_[p].value;
      const Tensor& g = t.adj_[self];
      Tensor d(x.shape());
      for (std::size_t i = 0; i < x.rows(); ++i) d(i, (*amin)[i]) = g[i];
      t.accumulate(p, d);
    });
  }

  // Minimum over each row excluding the diagonal element (square input,
  // at least 2 columns).  Same tie rule as row_min.
  Var row_min_offdiag(Var a) {
    const Tensor& av = val(a);
    if (av.rank() != 2 || av.rows() != av.cols())
      throw DimensionError("row_min_offdiag: need square, have " + av.shape_str());
    const std::size_t n = av.rows();
    if (n < 2) throw DimensionError("row_min_offdiag: need at least 2 rows");
    Tensor out({n});
    auto amin = std::make_shared<std::vector<std::size_t>>(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = i == 0 ? 1 : 0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i && av(i, j) < av(i, best)) best = j;
      (*amin)[i] = best;
      out[i] = av(i, best);
    }
    return unary_or_binary("row_min_offdiag", std::move(out), {a}, [amin](Tape& t, int self) {
      const int p = t.nodes_[self].parents[0];
      const Tensor& x = t.nodes_[p].value;
      const Tensor& g = t.adj_[self];
      Tensor d(x.shape());
      for (std::size_t i = 0; i < x.rows(); ++i) d(i, (*amin)[i]) = g[i];
      t.accumulate(p, d);
    });
  }

  Var sum(Var a) {
    Tensor out = Tensor::scalar(protodiv::sum(val(a)));
    return unary_or_binary("sum", std::move(out), {a}, [](Tape& t, int self) {
      const int p = t.nodes_[self].parents[0];
      const double g = t.adj_[self].value();
      Tensor d = Tensor::full(t.nodes_[p].value.shape(), g);
      t.accumulate(p, d);
    });
  }

  Var mean(Var a) {
    const std::size_t n = val(a).size();
    if (n == 0) throw DimensionError("mean: empty tensor");
    Tensor out = Tensor::scalar(protodiv::sum(val(a)) / static_cast<double>(n));
    return unary_or_binary("mean", std::move(out), {a}, [n](Tape& t, int self) {
      const int p = t.nodes_[self].parents[0];
      const double g = t.adj_[self].value() / static_cast<double>(n);
      Tensor d = Tensor::full(t.nodes_[p].value.shape(), g);
      t.accumulate(p, d);
    });
  }

  // Mean over the batch of -log softmax(logits)[label].  Max-subtracted
  // log-sum-exp; the softmax matrix is cached for the backward pass.
  Var softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
    const Tensor& lv = val(logits);
    if (lv.rank() != 2) throw DimensionError("softmax_cross_entropy: need rank 2 logits");
    const std::size_t n = lv.rows(), k = lv.cols();
    if (labels.size() != n)
      throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                           " labels for " + std::to_string(n) + " rows");
    for (int lab : labels)
      if (lab < 0 || static_cast<std::size_t>(lab) >= k)
        throw ValidationError("softmax_cross_entropy: label " + std::to_string(lab) +
                              " outside [0," + std::to_string(k) + ")");
    auto probs = std::make_shared<Tensor>(std::vector<std::size_t>{n, k});
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double mx = lv(i, 0);
      for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, lv(i, j));
      double z = 0.0;
      for (std::size_t j = 0; j < k; ++j) z += std::exp(lv(i, j) - mx);
      const double logz = std::log(z) + mx;
      for (std::size_t j = 0; j < k; ++j) (*probs)(i, j) = std::exp(lv(i, j) - logz);
      loss += logz - lv(i, static_cast<std::size_t>(labels[i]));
    }
    loss /= static_cast<double>(n);
    auto labs = std::make_shared<std::vector<int>>(labels);
    return unary_or_binary("softmax_cross_entropy", Tensor::scalar(loss), {logits},
                           [probs, labs](Tape& t, int self) {
                             const int p = t.nodes_[self].parents[0];
                             const double g = t.adj_[self].value();
                             const std::size_t n = probs->rows(), k = probs->cols();
                             Tensor d({n, k});
                             const double inv_n = g / static_cast<double>(n);
                             for (std::size_t i = 0; i < n; ++i) {
                               for (std::size_t j = 0; j < k; ++j)
                                 d(i, j) = (*probs)(i, j) * inv_n;
                               d(i, static_cast<std::size_t>((*labs)[i])) -= inv_n;
                             }
                             t.accumulate(p, d);
                           });
  }

  // ---- backward ----

  // Gradients of scalar `loss` w.r.t. each of `wrt` (exact zeros for
  // leaves the loss does not depend on).
  std::vector<Tensor> backward(Var loss, const std::vector<Var>& wrt) {
    const Tensor& lv = val(loss);
    if (lv.size() != 1)
      throw DimensionError("backward: loss must be scalar, have " + lv.shape_str());
    adj_.assign(nodes_.size(), Tensor());
    adj_[loss.id] = Tensor::full(lv.shape(), 1.0);
    for (int i = loss.id; i >= 0; --i) {
      if (adj_[i].size() == 0 || !nodes_[i].back) continue;
      if (!nodes_[i].needs_grad) continue;
      nodes_[i].back(*this, i);
    }
    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (Var v : wrt) {
      const Node& nd = node(v);
      if (adj_[v.id].size() == 0)
        out.push_back(Tensor::zeros(nd.value.shape()));
      else
        out.push_back(adj_[v.id]);
    }
    adj_.clear();
    return out;
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<int> parents;
    std::function<void(Tape&, int)> back;
    bool needs_grad = false;
  };

  const Node& node(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
      throw ValidationError("Tape: variable does not belong to this tape");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  bool needs(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  Var push(Tensor value, bool needs_grad, std::vector<int> parents,
           std::function<void(Tape&, int)> back) {
    Node nd;
    nd.value = std::move(value);
    nd.parents = std::move(parents);
    nd.back = std::move(back);
    nd.needs_grad = needs_grad;
    nodes_.push_back(std::move(nd));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var unary_or_binary(const char* op, Tensor out, std::initializer_list<Var> parents,
                      std::function<void(Tape&, int)> back) {
    out.check_finite(op);
    std::vector<int> ids;
    bool needs = false;
    for (Var p : parents) {
      needs = needs || node(p).needs_grad;
      ids.push_back(p.id);
    }
    return push(std::move(out), needs, std::move(ids), std::move(back));
  }

  // Accumulate g into the adjoint of node `id` (allocating zeros first).
  void accumulate(int id, const Tensor& g) {
    Tensor& a = adj_[static_cast<std::size_t>(id)];
    if (a.size() == 0)
      a = g;
    else
      axpy(a, g);
  }

  void accumulate_scaled(int id, const Tensor& g, double s) {
    Tensor& a = adj_[static_cast<std::size_t>(id)];
    if (a.size() == 0)
      a = protodiv::scale(g, s);
    else
      axpy(a, g, s);
  }

  std::vector<Node> nodes_;
  std::vector<Tensor> adj_;
};

}  // namespace protodiv
