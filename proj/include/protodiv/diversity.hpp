// =============================================================
// diversity.hpp -- prototype diversity scores and evaluation
// =============================================================
//
// Psi = (1/Z) * sum_i sqrt(|phi_i|) over the non-empty bins of a
// grouping of the m prototypes, Z = sqrt(min(bins, m) * m).
//
//   Psi_N  groups prototypes by nearest training latent (bins = m, so
//          Z = m): 1.0 iff all nearest neighbors are distinct.
//   Psi_C  groups prototypes by the class of that neighbor (bins = K):
//          1.0 iff prototypes spread over classes as evenly as integer
//          counts allow (Cauchy-Schwarz equality).
//
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "model.hpp"
#include "tensor.hpp"

namespace protodiv {

struct DiversityReport {
  double psi_n = 0.0;
  double psi_c = 0.0;
  std::vector<std::size_t> neighbor_of;       // per prototype: index into training latents
  std::vector<int> class_of;                  // per prototype: label of that neighbor
  std::vector<std::size_t> neighbor_bins;     // |phi_i| per non-empty neighbor bin
  std::vector<std::size_t> class_bins;        // |phi_i| per class (K entries, zeros kept)
  std::size_t t_neighbor = 0;                 // non-empty bins in the neighbor grouping
  std::size_t t_class = 0;
};

struct EvalReport {
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<std::string> warnings;
};

// Nearest training latent per prototype (squared L2, ties -> lowest index).
inline std::vector<std::size_t> nearest_neighbors(const Tensor& P, const Tensor& Z) {
  if (P.rank() != 2 || Z.rank() != 2 || P.cols() != Z.cols())
    throw DimensionError("nearest_neighbors: " + P.shape_str() + " vs " + Z.shape_str());
  if (Z.rows() == 0) throw ValidationError("nearest_neighbors: empty latent set");
  std::vector<std::size_t> out(P.rows());
  for (std::size_t j = 0; j < P.rows(); ++j) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t i = 0; i < Z.rows(); ++i) {
      double d = 0.0;
      for (std::size_t k = 0; k < P.cols(); ++k) {
        const double diff = P(j, k) - Z(i, k);
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    out[j] = best;
  }
  return out;
}

// The Eq.-5-style score for a grouping with `bins` possible bins.
inline double psi(const std::vector<std::size_t>& bin_sizes, std::size_t m, std::size_t bins) {
  std::size_t total = 0;
  for (std::size_t c : bin_sizes) total += c;
  if (total != m)
    throw ValidationError("psi: bin sizes sum to " + std::to_string(total) + ", expected m=" +
                          std::to_string(m));
  if (m == 0 || bins == 0) throw ValidationError("psi: m and bins must be positive");
  double s = 0.0;
  for (std::size_t c : bin_sizes) s += std::sqrt(static_cast<double>(c));
  const double z = std::sqrt(static_cast<double>(std::min(bins, m)) * static_cast<double>(m));
  return s / z;
}

// Diversity of a model's prototypes against a set of training latents.
inline DiversityReport diversity_report(const Tensor& P, const Tensor& Z,
                                        const std::vector<int>& z_labels, std::size_t classes) {
  if (Z.rows() != z_labels.size())
    throw DimensionError("diversity_report: " + std::to_string(z_labels.size()) +
                         " labels for " + std::to_string(Z.rows()) + " latents");
  DiversityReport rep;
  rep.neighbor_of = nearest_neighbors(P, Z);
  const std::size_t m = P.rows();

  // Neighbor grouping: count prototypes per distinct neighbor index.
  std::vector<std::size_t> sorted = rep.neighbor_of;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    rep.neighbor_bins.push_back(j - i);
    i = j;
  }
  rep.t_neighbor = rep.neighbor_bins.size();
  rep.psi_n = psi(rep.neighbor_bins, m, m);

  // Class grouping: label of each prototype's nearest neighbor.
  rep.class_bins.assign(classes, 0);
  for (std::size_t j = 0; j < m; ++j) {
    const int lab = z_labels[rep.neighbor_of[j]];
    if (lab < 0 || static_cast<std::size_t>(lab) >= classes)
      throw ValidationError("diversity_report: label " + std::to_string(lab) +
                            " outside [0," + std::to_string(classes) + ")");
    rep.class_of.push_back(lab);
    ++rep.class_bins[static_cast<std::size_t>(lab)];
  }
  for (std::size_t c : rep.class_bins)
    if (c > 0) ++rep.t_class;
  rep.psi_c = psi(rep.class_bins, m, classes);
  return rep;
}

// Accuracy + confusion on a test set, diversity against TRAINING latents.
inline std::pair<EvalReport, DiversityReport> evaluate(const PrototypeModel& mdl,
                                                       const Tensor& test_batch,
                                                       const std::vector<int>& test_labels,
                                                       const Tensor& train_batch,
                                                       const std::vector<int>& train_labels) {
  if (test_batch.rows() == 0) throw ValidationError("evaluate: empty test set");
  if (test_batch.rows() != test_labels.size())
    throw DimensionError("evaluate: test labels misaligned");
  const std::size_t K = mdl.config.classes;

  EvalReport ev;
  ev.confusion.assign(K, std::vector<std::size_t>(K, 0));
  const std::vector<int> pred = mdl.predict(test_batch);
  std::size_t correct = 0;
  std::vector<std::size_t> per_class(K, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int truth = test_labels[i];
    if (truth < 0 || static_cast<std::size_t>(truth) >= K)
      throw ValidationError("evaluate: test label out of range");
    ++ev.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(pred[i])];
    ++per_class[static_cast<std::size_t>(truth)];
    if (pred[i] == truth) ++correct;
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  for (std::size_t k = 0; k < K; ++k)
    if (per_class[k] == 0)
      ev.warnings.push_back("class " + std::to_string(k) + " absent from test set");

  Tensor train_z = mdl.encode(train_batch);
  DiversityReport div = diversity_report(mdl.prototypes, train_z, train_labels, K);
  return {ev, div};
}

}  // namespace protodiv
