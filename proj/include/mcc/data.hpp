#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcc/matrix.hpp"
#include "mcc/prob.hpp"
#include "mcc/rng.hpp"

namespace mcc {

enum class Scenario { A, B };

// Generative knobs for the synthetic Gaussian mixtures: equiprobable classes,
// means drawn i.i.d. standard normal from the seed. Scenario A uses isotropic
// class covariances sigma^2 I; scenario B adds alpha_scale * A_i^T A_i with
// per-class standard-normal factor matrices A_i.
struct GaussianMixtureSpec {
  int num_classes = 10;
  int dim = 20;
  Scenario scenario = Scenario::A;
  double sigma = 1.8;
  double alpha_scale = 0.1;
  std::uint64_t seed = 1;
};

struct LabeledDataset {
  Matrix features;  // N x (d+1), constant-1 intercept appended
  std::vector<int> labels;
  std::optional<Matrix> posteriors;  // N x K exact Bayes posteriors
  int num_classes = 0;

  std::int64_t size() const { return features.rows(); }
  int dim() const { return static_cast<int>(features.cols()); }  // includes intercept
};

// A materialized mixture draw: means, covariance Cholesky factors and
// log-determinants, all deterministic in the spec seed.
class Mixture {
 public:
  static Mixture from_spec(const GaussianMixtureSpec& spec);

  const GaussianMixtureSpec& spec() const { return spec_; }
  std::span<const double> mean(int class_id) const { return means_.row(class_id); }

  // Exact class posterior at x (feature vector of length d, no intercept).
  Categorical bayes_posterior(std::span<const double> x) const;
  void bayes_posterior_row(std::span<const double> x, std::span<double> out) const;

  // n labeled samples with exact posteriors attached; the tag keeps the
  // train and test draws on disjoint streams of the same mixture.
  LabeledDataset sample(std::int64_t n, rng::StreamTag tag) const;
  LabeledDataset sample_serial(std::int64_t n, rng::StreamTag tag) const;

  // Digest over the materialized means/factors, for provenance files.
  std::uint64_t digest() const;

 private:
  Mixture() = default;

  GaussianMixtureSpec spec_;
  Matrix means_;               // K x d
  std::vector<Matrix> chol_;   // K lower-triangular factors (scenario B only)
  std::vector<double> logdet_; // K log-determinants of the covariances
};

// Convenience wrappers taking the generative knobs directly.
LabeledDataset sample_mixture(const GaussianMixtureSpec& spec, std::int64_t n);
Categorical bayes_posterior(const GaussianMixtureSpec& spec, std::span<const double> x);

// IDX ingestion: big-endian magic + dimensions, then raw unsigned bytes.
// Pixels are scaled to [0,1], the margin is center-cropped by `crop` pixels
// per side, rows are flattened row-major and the intercept appended.
LabeledDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                              int crop);

// Binary dataset container with a plain-text header; round-trips bit-exact.
void save_dataset(const LabeledDataset& dataset, const std::string& path);
LabeledDataset load_dataset(const std::string& path);

// FNV-1a over a byte span; used for provenance digests and trial records.
std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t basis = 0xcbf29ce484222325ull);
std::uint64_t fnv1a_doubles(std::span<const double> values, std::uint64_t basis = 0xcbf29ce484222325ull);

}  // namespace mcc
