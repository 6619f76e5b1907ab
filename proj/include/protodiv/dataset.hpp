// ============================================================
// dataset.hpp -- rendered image datasets on disk and in memory
// ============================================================
//
// A dataset is one modality's worth of rendered segments: one PGM per
// example plus a manifest.csv row (id, modality, class, seed, flagged).
// The manifest seed reproduces the example exactly, so a dataset
// directory is fully regenerable.
//
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "io.hpp"
#include "rng.hpp"
#include "signal.hpp"
#include "tensor.hpp"

namespace protodiv {

struct ImageExample {
  std::string id;
  Modality modality = Modality::ecg;
  Severity label = Severity::normal;
  std::uint64_t seed = 0;
  bool flagged = false;
  Tensor image;  // [H x W], values in [0, 1]
};

struct Dataset {
  Modality modality = Modality::ecg;
  std::vector<ImageExample> examples;

  std::size_t size() const { return examples.size(); }

  std::size_t image_rows() const { return examples.empty() ? 0 : examples[0].image.rows(); }
  std::size_t image_cols() const { return examples.empty() ? 0 : examples[0].image.cols(); }

  // Flatten to a [n x H*W] batch, row-major pixels.
  Tensor to_batch() const {
    if (examples.empty()) throw ValidationError("Dataset: no examples to batch");
    const std::size_t h = image_rows(), w = image_cols();
    Tensor x({examples.size(), h * w});
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const ImageExample& ex = examples[i];
      if (ex.image.rows() != h || ex.image.cols() != w)
        throw DimensionError("Dataset: example " + ex.id + " is " + ex.image.shape_str());
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) x(i, r * w + c) = ex.image(r, c);
    }
    return x;
  }

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(examples.size());
    for (const ImageExample& ex : examples) out.push_back(static_cast<int>(ex.label));
    return out;
  }

  std::array<std::size_t, 3> class_counts() const {
    std::array<std::size_t, 3> counts{0, 0, 0};
    for (const ImageExample& ex : examples) ++counts[static_cast<std::size_t>(ex.label)];
    return counts;
  }
};

namespace detail {

inline std::string example_id(Modality modality, Severity cls, std::size_t index_in_class) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", index_in_class);
  return std::string(modality_name(modality)) + "_" + severity_name(cls) + "_" + buf;
}

}  // namespace detail

// Generate `counts[c]` examples of each class.  Example k (global,
// class-major order) draws its seed as mix_seed(master_seed, k), so
// regeneration with the same master seed is byte-identical and
// per-example streams are independent.
inline Dataset build_dataset(Modality modality, const std::array<std::size_t, 3>& counts,
                             std::uint64_t master_seed, std::size_t h = 32, std::size_t w = 64) {
  Dataset ds;
  ds.modality = modality;
  std::uint64_t global = 0;
  for (int c = 0; c < 3; ++c) {
    const Severity cls = static_cast<Severity>(c);
    for (std::size_t i = 0; i < counts[static_cast<std::size_t>(c)]; ++i, ++global) {
      const LabeledSegment seg = generate(modality, cls, mix_seed(master_seed, global));
      ImageExample ex;
      ex.id = detail::example_id(modality, cls, i);
      ex.modality = modality;
      ex.label = cls;
      ex.seed = seg.seed;
      ex.flagged = seg.flagged;
      ex.image = render_image(seg.waveform, h, w);
      ds.examples.push_back(std::move(ex));
    }
  }
  if (ds.examples.empty()) throw ValidationError("build_dataset: all class counts are zero");
  return ds;
}

inline std::string encode_manifest(const Dataset& ds) {
  std::string out = "id,modality,class,seed,flagged\n";
  for (const ImageExample& ex : ds.examples) {
    out += ex.id;
    out += ',';
    out += modality_name(ex.modality);
    out += ',';
    out += severity_name(ex.label);
    out += ',';
    out += std::to_string(ex.seed);
    out += ex.flagged ? ",1\n" : ",0\n";
  }
  return out;
}

// Write <id>.pgm per example plus manifest.csv into `dir`.
inline void save_dataset(const std::string& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  for (const ImageExample& ex : ds.examples)
    write_pgm((std::filesystem::path(dir) / (ex.id + ".pgm")).string(), ex.image);
  write_file((std::filesystem::path(dir) / "manifest.csv").string(), encode_manifest(ds));
}

inline Dataset load_dataset(const std::string& dir) {
  const std::string manifest_path = (std::filesystem::path(dir) / "manifest.csv").string();
  std::istringstream in(read_file(manifest_path));
  std::string line;
  if (!std::getline(in, line) || line != "id,modality,class,seed,flagged")
    throw ParseError(manifest_path + ": bad manifest header");
  Dataset ds;
  bool first = true;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, mod, cls, seed, flagged;
    if (!std::getline(row, id, ',') || !std::getline(row, mod, ',') ||
        !std::getline(row, cls, ',') || !std::getline(row, seed, ',') ||
        !std::getline(row, flagged))
      throw ParseError(manifest_path + " line " + std::to_string(lineno) + ": expected 5 fields");
    const auto modality = modality_from_name(mod);
    const auto label = severity_from_name(cls);
    if (!modality)
      throw ParseError(manifest_path + " line " + std::to_string(lineno) + ": bad modality '" +
                       mod + "'");
    if (!label)
      throw ParseError(manifest_path + " line " + std::to_string(lineno) + ": bad class '" + cls +
                       "'");
    if (flagged != "0" && flagged != "1")
      throw ParseError(manifest_path + " line " + std::to_string(lineno) + ": bad flag '" +
                       flagged + "'");
    ImageExample ex;
    ex.id = id;
    ex.modality = *modality;
    ex.label = *label;
    try {
      ex.seed = std::stoull(seed);
    } catch (const std::exception&) {
      throw ParseError(manifest_path + " line " + std::to_string(lineno) + ": bad seed '" + seed +
                       "'");
    }
    ex.flagged = flagged == "1";
    ex.image = read_pgm((std::filesystem::path(dir) / (id + ".pgm")).string());
    if (first) {
      ds.modality = ex.modality;
      first = false;
    } else if (ex.modality != ds.modality) {
      throw ValidationError(manifest_path + ": mixed modalities in one dataset");
    }
    ds.examples.push_back(std::move(ex));
  }
  if (ds.examples.empty()) throw ValidationError(manifest_path + ": no examples");
  return ds;
}

// Stratified split: within each label (ascending), indices are shuffled
// by a label-specific stream and the first round(n_c * frac) go to
// train.  Class proportions survive to within one example per class.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline Split stratified_split(const std::vector<int>& labels, double frac, std::uint64_t seed) {
  if (!(frac > 0.0 && frac < 1.0)) throw ValidationError("stratified_split: frac outside (0, 1)");
  if (labels.empty()) throw ValidationError("stratified_split: no labels");
  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  Split split;
  for (int cls : classes) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) idx.push_back(i);
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(cls)));
    rng.shuffle(idx);
    const std::size_t n_train =
        static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * frac));
    split.train.insert(split.train.end(), idx.begin(), idx.begin() + n_train);
    split.test.insert(split.test.end(), idx.begin() + n_train, idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace protodiv
