#include "mcc/data.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mcc/parallel.hpp"

namespace mcc {

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t basis) {
  std::uint64_t hash = basis;
  for (unsigned char b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

std::uint64_t fnv1a_doubles(std::span<const double> values, std::uint64_t basis) {
  return fnv1a({reinterpret_cast<const unsigned char*>(values.data()), values.size() * 8}, basis);
}

Mixture Mixture::from_spec(const GaussianMixtureSpec& spec) {
  require(spec.num_classes >= 2, ErrorKind::InvalidArgument, "mixture needs K >= 2");
  require(spec.dim >= 1, ErrorKind::InvalidArgument, "mixture needs d >= 1");
  require(spec.sigma > 0.0, ErrorKind::NonPDCovariance, "sigma must be positive");

  Mixture mix;
  mix.spec_ = spec;
  mix.means_ = Matrix(spec.num_classes, spec.dim);
  for (int c = 0; c < spec.num_classes; ++c) {
    auto stream = rng::stream_for(spec.seed, rng::kMixtureMeans, static_cast<std::uint64_t>(c));
    for (double& v : mix.means_.row(c)) v = stream.normal();
  }

  mix.logdet_.resize(spec.num_classes);
  if (spec.scenario == Scenario::A) {
    double logdet = spec.dim * 2.0 * std::log(spec.sigma);
    std::ranges::fill(mix.logdet_, logdet);
    return mix;
  }

  mix.chol_.resize(spec.num_classes);
  for (int c = 0; c < spec.num_classes; ++c) {
    auto stream = rng::stream_for(spec.seed, rng::kMixtureFactors, static_cast<std::uint64_t>(c));
    Eigen::MatrixXd factor(spec.dim, spec.dim);
    for (int i = 0; i < spec.dim; ++i) {
      for (int j = 0; j < spec.dim; ++j) factor(i, j) = stream.normal();
    }
    Eigen::MatrixXd cov = spec.sigma * spec.sigma *
                              Eigen::MatrixXd::Identity(spec.dim, spec.dim) +
                          spec.alpha_scale * factor.transpose() * factor;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    require(llt.info() == Eigen::Success, ErrorKind::NonPDCovariance,
            "covariance factorization failed for class " + std::to_string(c));
    Eigen::MatrixXd lower = llt.matrixL();
    Matrix& out = mix.chol_[c];
    out = Matrix(spec.dim, spec.dim);
    double logdet = 0.0;
    for (int i = 0; i < spec.dim; ++i) {
      for (int j = 0; j <= i; ++j) out.at(i, j) = lower(i, j);
      logdet += 2.0 * std::log(lower(i, i));
    }
    mix.logdet_[c] = logdet;
  }
  return mix;
}

void Mixture::bayes_posterior_row(std::span<const double> x, std::span<double> out) const {
  const int k = spec_.num_classes;
  const int d = spec_.dim;
  require(static_cast<int>(x.size()) == d, ErrorKind::LengthMismatch,
          "posterior input must have length d");
  // Uniform priors: posterior = softmax of the per-class Gaussian log-densities
  // (the common -d/2 log(2 pi) cancels in the normalization).
  std::vector<double> diff(d), solved(d);
  for (int c = 0; c < k; ++c) {
    for (int j = 0; j < d; ++j) diff[j] = x[j] - means_.at(c, j);
    double quad = 0.0;
    if (spec_.scenario == Scenario::A) {
      for (int j = 0; j < d; ++j) quad += diff[j] * diff[j];
      quad /= spec_.sigma * spec_.sigma;
    } else {
      // Forward substitution with the lower factor: quad = ||L^-1 (x - mu)||^2.
      const Matrix& lower = chol_[c];
      for (int i = 0; i < d; ++i) {
        double v = diff[i];
        for (int j = 0; j < i; ++j) v -= lower.at(i, j) * solved[j];
        solved[i] = v / lower.at(i, i);
        quad += solved[i] * solved[i];
      }
    }
    out[c] = -0.5 * (quad + logdet_[c]);
  }
  double max_z = *std::ranges::max_element(out);
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    out[c] = std::exp(out[c] - max_z);
    total += out[c];
  }
  for (int c = 0; c < k; ++c) out[c] /= total;
}

Categorical Mixture::bayes_posterior(std::span<const double> x) const {
  std::vector<double> row(spec_.num_classes);
  bayes_posterior_row(x, row);
  return Categorical(std::move(row));
}

namespace {

LabeledDataset empty_dataset(std::int64_t n, int d, int k) {
  LabeledDataset data;
  data.num_classes = k;
  data.features = Matrix(n, d + 1);
  data.labels.assign(n, 0);
  data.posteriors.emplace(n, k);
  return data;
}

// One sample = one stream, so the fill order of the samples (and hence the
// worker count) cannot change the result.
void draw_sample(const Mixture& mix, const GaussianMixtureSpec& spec, const Matrix& means,
                 const std::vector<Matrix>& chol, rng::StreamTag tag, std::int64_t i,
                 LabeledDataset& data) {
  const int d = spec.dim;
  auto stream = rng::stream_for(spec.seed, tag, static_cast<std::uint64_t>(i));
  int label = static_cast<int>(stream.below(static_cast<std::uint64_t>(spec.num_classes)));
  data.labels[i] = label;
  auto row = data.features.row(i);
  if (spec.scenario == Scenario::A) {
    for (int j = 0; j < d; ++j) row[j] = means.at(label, j) + spec.sigma * stream.normal();
  } else {
    std::vector<double> z(d);
    for (int j = 0; j < d; ++j) z[j] = stream.normal();
    const Matrix& lower = chol[label];
    for (int j = 0; j < d; ++j) {
      double v = means.at(label, j);
      for (int m = 0; m <= j; ++m) v += lower.at(j, m) * z[m];
      row[j] = v;
    }
  }
  row[d] = 1.0;
  mix.bayes_posterior_row(row.first(d), data.posteriors->row(i));
}

}  // namespace

LabeledDataset Mixture::sample_serial(std::int64_t n, rng::StreamTag tag) const {
  require(n >= 1, ErrorKind::InvalidArgument, "need n >= 1 samples");
  LabeledDataset data = empty_dataset(n, spec_.dim, spec_.num_classes);
  for (std::int64_t i = 0; i < n; ++i) draw_sample(*this, spec_, means_, chol_, tag, i, data);
  return data;
}

LabeledDataset Mixture::sample(std::int64_t n, rng::StreamTag tag) const {
  require(n >= 1, ErrorKind::InvalidArgument, "need n >= 1 samples");
  LabeledDataset data = empty_dataset(n, spec_.dim, spec_.num_classes);
  parallel_for(n, [&](std::int64_t i) { draw_sample(*this, spec_, means_, chol_, tag, i, data); });
  return data;
}

std::uint64_t Mixture::digest() const {
  std::uint64_t hash = fnv1a_doubles({means_.data(), static_cast<std::size_t>(means_.size())});
  for (const Matrix& factor : chol_) {
    hash = fnv1a_doubles({factor.data(), static_cast<std::size_t>(factor.size())}, hash);
  }
  return hash;
}

LabeledDataset sample_mixture(const GaussianMixtureSpec& spec, std::int64_t n) {
  return Mixture::from_spec(spec).sample(n, rng::kTrainSamples);
}

Categorical bayes_posterior(const GaussianMixtureSpec& spec, std::span<const double> x) {
  return Mixture::from_spec(spec).bayes_posterior(x);
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  require(static_cast<bool>(in), ErrorKind::TruncatedFile, path + " ended inside a header field");
  return (static_cast<std::uint32_t>(bytes[0]) << 24) | (static_cast<std::uint32_t>(bytes[1]) << 16) |
         (static_cast<std::uint32_t>(bytes[2]) << 8) | static_cast<std::uint32_t>(bytes[3]);
}

}  // namespace

LabeledDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                              int crop) {
  require(crop >= 0, ErrorKind::InvalidArgument, "crop must be nonnegative");

  std::ifstream images(images_path, std::ios::binary);
  require(static_cast<bool>(images), ErrorKind::IoError, "cannot open '" + images_path + "'");
  require(read_be32(images, images_path) == 0x00000803u, ErrorKind::BadMagic,
          images_path + " is not an IDX image file");
  std::int64_t n = read_be32(images, images_path);
  int rows = static_cast<int>(read_be32(images, images_path));
  int cols = static_cast<int>(read_be32(images, images_path));
  require(rows > 2 * crop && cols > 2 * crop, ErrorKind::InvalidArgument,
          "crop leaves no pixels");

  std::ifstream labels(labels_path, std::ios::binary);
  require(static_cast<bool>(labels), ErrorKind::IoError, "cannot open '" + labels_path + "'");
  require(read_be32(labels, labels_path) == 0x00000801u, ErrorKind::BadMagic,
          labels_path + " is not an IDX label file");
  std::int64_t n_labels = read_be32(labels, labels_path);
  require(n == n_labels, ErrorKind::CountMismatch,
          "image count " + std::to_string(n) + " != label count " + std::to_string(n_labels));

  const int out_rows = rows - 2 * crop;
  const int out_cols = cols - 2 * crop;
  const int d = out_rows * out_cols;
  LabeledDataset data;
  data.features = Matrix(n, d + 1);
  data.labels.assign(n, 0);

  std::vector<unsigned char> image(static_cast<std::size_t>(rows) * cols);
  int max_label = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    images.read(reinterpret_cast<char*>(image.data()), static_cast<std::streamsize>(image.size()));
    require(static_cast<bool>(images), ErrorKind::TruncatedFile,
            images_path + " ended inside image " + std::to_string(i));
    auto row = data.features.row(i);
    int pos = 0;
    for (int r = crop; r < rows - crop; ++r) {
      for (int c = crop; c < cols - crop; ++c) {
        row[pos++] = image[static_cast<std::size_t>(r) * cols + c] / 255.0;
      }
    }
    row[d] = 1.0;
    char label = 0;
    labels.read(&label, 1);
    require(static_cast<bool>(labels), ErrorKind::TruncatedFile,
            labels_path + " ended inside label " + std::to_string(i));
    data.labels[i] = static_cast<unsigned char>(label);
    max_label = std::max(max_label, data.labels[i]);
  }
  data.num_classes = max_label + 1;
  return data;
}

void save_dataset(const LabeledDataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::IoError, "cannot open '" + path + "' for writing");
  const std::int64_t n = dataset.size();
  const int d = dataset.dim() - 1;
  out << "MCCDS1\n"
      << "n " << n << "\n"
      << "d " << d << "\n"
      << "classes " << dataset.num_classes << "\n"
      << "posteriors " << (dataset.posteriors ? 1 : 0) << "\n"
      << "end\n";
  auto write_block = [&](const double* data, std::int64_t count) {
    for (std::int64_t i = 0; i < count; ++i) {
      auto bits = std::bit_cast<std::uint64_t>(data[i]);
      unsigned char bytes[8];
      for (int j = 0; j < 8; ++j) bytes[j] = static_cast<unsigned char>((bits >> (8 * j)) & 0xff);
      out.write(reinterpret_cast<const char*>(bytes), 8);
    }
  };
  write_block(dataset.features.data(), dataset.features.size());
  for (int label : dataset.labels) {
    unsigned char bytes[4];
    for (int j = 0; j < 4; ++j) bytes[j] = static_cast<unsigned char>((label >> (8 * j)) & 0xff);
    out.write(reinterpret_cast<const char*>(bytes), 4);
  }
  if (dataset.posteriors) write_block(dataset.posteriors->data(), dataset.posteriors->size());
  require(static_cast<bool>(out), ErrorKind::IoError, "short write to '" + path + "'");
}

LabeledDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::IoError, "cannot open '" + path + "'");
  std::string line;
  require(std::getline(in, line) && line == "MCCDS1", ErrorKind::BadMagic,
          path + " is not a dataset file");
  auto expect = [&](const std::string& key) {
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::TruncatedFile,
            "dataset header ended early");
    require(line.rfind(key + " ", 0) == 0, ErrorKind::HeaderMismatch,
            "expected '" + key + "' line in dataset header");
    return line.substr(key.size() + 1);
  };
  std::int64_t n = std::stoll(expect("n"));
  int d = std::stoi(expect("d"));
  int k = std::stoi(expect("classes"));
  int has_posteriors = std::stoi(expect("posteriors"));
  require(std::getline(in, line) && line == "end", ErrorKind::HeaderMismatch, "missing end line");
  require(n >= 1 && d >= 1 && k >= 2 && (has_posteriors == 0 || has_posteriors == 1),
          ErrorKind::HeaderMismatch, "implausible dataset header");

  // The header must account for the file byte-for-byte.
  std::streampos body_start = in.tellg();
  in.seekg(0, std::ios::end);
  std::int64_t body_bytes = static_cast<std::int64_t>(in.tellg() - body_start);
  std::int64_t expected = n * (d + 1) * 8 + n * 4 + (has_posteriors ? n * k * 8 : 0);
  require(body_bytes == expected, ErrorKind::HeaderMismatch,
          "dataset body has " + std::to_string(body_bytes) + " bytes, header implies " +
              std::to_string(expected));
  in.seekg(body_start);

  LabeledDataset data;
  data.num_classes = k;
  data.features = Matrix(n, d + 1);
  auto read_block = [&](double* dest, std::int64_t count) {
    std::vector<unsigned char> bytes(static_cast<std::size_t>(count) * 8);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(in), ErrorKind::TruncatedFile, "dataset body ended early");
    for (std::int64_t i = 0; i < count; ++i) {
      std::uint64_t bits = 0;
      for (int j = 0; j < 8; ++j) {
        bits |= static_cast<std::uint64_t>(bytes[static_cast<std::size_t>(i) * 8 + j]) << (8 * j);
      }
      dest[i] = std::bit_cast<double>(bits);
    }
  };
  read_block(data.features.data(), data.features.size());
  data.labels.assign(n, 0);
  for (std::int64_t i = 0; i < n; ++i) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    require(static_cast<bool>(in), ErrorKind::TruncatedFile, "dataset labels ended early");
    int label = 0;
    for (int j = 0; j < 4; ++j) label |= static_cast<int>(bytes[j]) << (8 * j);
    require(label >= 0 && label < k, ErrorKind::LabelOutOfRange, "stored label out of range");
    data.labels[i] = label;
  }
  if (has_posteriors) {
    data.posteriors.emplace(n, k);
    read_block(data.posteriors->data(), data.posteriors->size());
  }
  return data;
}

}  // namespace mcc
