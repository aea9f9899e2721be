#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "mcc/data.hpp"
#include "mcc/train.hpp"

using namespace mcc;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "mcc_data_test";
  fs::create_directories(dir);
  return dir;
}

void write_be32(std::ofstream& out, std::uint32_t value) {
  unsigned char bytes[4] = {static_cast<unsigned char>(value >> 24),
                            static_cast<unsigned char>(value >> 16),
                            static_cast<unsigned char>(value >> 8),
                            static_cast<unsigned char>(value)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

}  // namespace

TEST_CASE("mixture sampling determinism and shape") {
  GaussianMixtureSpec spec;
  spec.num_classes = 4;
  spec.dim = 3;
  spec.sigma = 1.5;
  spec.seed = 10;

  LabeledDataset one = sample_mixture(spec, 1);
  CHECK(one.size() == 1);
  CHECK(one.dim() == 4);
  CHECK(one.features.at(0, 3) == 1.0);
  LabeledDataset again = sample_mixture(spec, 1);
  CHECK(one.features == again.features);
  CHECK(one.labels == again.labels);
  CHECK(*one.posteriors == *again.posteriors);

  // Prefixes agree: the first n samples of a longer draw are the short draw.
  LabeledDataset more = sample_mixture(spec, 10);
  for (int j = 0; j < 4; ++j) CHECK(more.features.at(0, j) == one.features.at(0, j));

  // Train and test tags give different streams on the same mixture.
  Mixture mixture = Mixture::from_spec(spec);
  LabeledDataset train = mixture.sample(5, rng::kTrainSamples);
  LabeledDataset test = mixture.sample(5, rng::kTestSamples);
  CHECK(train.features != test.features);
}

TEST_CASE("posterior validity and limits") {
  GaussianMixtureSpec spec;
  spec.num_classes = 6;
  spec.dim = 4;
  spec.sigma = 1.0;
  spec.seed = 21;

  SUBCASE("rows are strictly positive unit-sum vectors") {
    for (Scenario scenario : {Scenario::A, Scenario::B}) {
      spec.scenario = scenario;
      LabeledDataset data = sample_mixture(spec, 500);
      for (std::int64_t i = 0; i < data.size(); ++i) {
        double sum = 0.0;
        for (double v : data.posteriors->row(i)) {
          CHECK(v > 0.0);
          sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }

  SUBCASE("huge noise flattens the posterior to uniform") {
    spec.sigma = 1000.0;
    LabeledDataset data = sample_mixture(spec, 2000);
    double bayes = 0.0;
    for (std::int64_t i = 0; i < data.size(); ++i) {
      bayes -= std::log(data.posteriors->row(i)[data.labels[i]]);
    }
    bayes /= static_cast<double>(data.size());
    CHECK(std::abs(bayes - std::log(6.0)) < 0.02);
  }

  SUBCASE("tiny noise concentrates the posterior") {
    spec.sigma = 1e-3;
    LabeledDataset data = sample_mixture(spec, 2000);
    double bayes = 0.0;
    int misses = 0;
    for (std::int64_t i = 0; i < data.size(); ++i) {
      bayes -= std::log(std::max(data.posteriors->row(i)[data.labels[i]], 1e-300));
      misses += detail::argmax_row(data.posteriors->row(i)) != data.labels[i];
    }
    bayes /= static_cast<double>(data.size());
    CHECK(bayes < 0.01);
    CHECK(misses == 0);
  }

  SUBCASE("equidistant point between two means splits evenly") {
    GaussianMixtureSpec two = spec;
    two.num_classes = 2;
    two.scenario = Scenario::A;
    two.sigma = 1.3;
    Mixture mixture = Mixture::from_spec(two);
    std::vector<double> mid(two.dim);
    for (int j = 0; j < two.dim; ++j) {
      mid[j] = 0.5 * (mixture.mean(0)[j] + mixture.mean(1)[j]);
    }
    Categorical p = mixture.bayes_posterior(mid);
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("scenario-A log-odds are affine in x") {
    spec.scenario = Scenario::A;
    spec.sigma = 2.0;
    LabeledDataset data = sample_mixture(spec, 400);
    SoftmaxParams fitted = fit_softmax_to_posteriors(data.features, *data.posteriors);
    SoftmaxScorer scorer(fitted);
    double worst = 0.0;
    for (std::int64_t i = 0; i < data.size(); ++i) {
      std::vector<double> row(spec.num_classes);
      scorer.score_row(data.features.row(i), row);
      for (int c = 0; c < spec.num_classes; ++c) {
        worst = std::max(worst, std::abs(row[c] - data.posteriors->row(i)[c]));
      }
    }
    CHECK(worst <= 1e-10);
  }

  SUBCASE("invalid sigma is rejected") {
    spec.sigma = 0.0;
    CHECK_THROWS_AS(Mixture::from_spec(spec), Error);
  }
}

TEST_CASE("class frequencies stay inside binomial bands") {
  GaussianMixtureSpec spec;
  spec.num_classes = 10;
  spec.dim = 2;
  spec.seed = 5;
  const std::int64_t n = 100000;
  LabeledDataset data = sample_mixture(spec, n);
  std::vector<std::int64_t> counts(10, 0);
  for (int label : data.labels) ++counts[label];
  double expect = static_cast<double>(n) / 10.0;
  double band = 3.0 * std::sqrt(static_cast<double>(n) * 0.1 * 0.9);
  for (std::int64_t count : counts) {
    CHECK(std::abs(static_cast<double>(count) - expect) <= band);
  }
}

TEST_CASE("dataset container round-trip") {
  fs::path dir = temp_dir();
  GaussianMixtureSpec spec;
  spec.num_classes = 3;
  spec.dim = 2;
  spec.seed = 8;
  LabeledDataset data = sample_mixture(spec, 50);

  std::string path = (dir / "round.ds").string();
  save_dataset(data, path);
  LabeledDataset loaded = load_dataset(path);
  CHECK(loaded.features == data.features);
  CHECK(loaded.labels == data.labels);
  CHECK(*loaded.posteriors == *data.posteriors);
  CHECK(loaded.num_classes == 3);

  // Corrupt the declared dimension: the body no longer matches the header.
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  std::string corrupt = bytes;
  std::size_t pos = corrupt.find("d 2");
  corrupt.replace(pos, 3, "d 3");
  std::string bad_path = (dir / "bad.ds").string();
  std::ofstream out(bad_path, std::ios::binary);
  out << corrupt;
  out.close();
  CHECK_THROWS_AS(load_dataset(bad_path), Error);

  // A large draw survives the disk trip quickly and bit-exactly.
  GaussianMixtureSpec big = spec;
  big.num_classes = 10;
  big.dim = 20;
  LabeledDataset large = sample_mixture(big, 100000);
  std::string big_path = (dir / "big.ds").string();
  auto start = std::chrono::steady_clock::now();
  save_dataset(large, big_path);
  LabeledDataset big_loaded = load_dataset(big_path);
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(big_loaded.features == large.features);
  CHECK(seconds < 5.0);
}

TEST_CASE("idx ingestion") {
  fs::path dir = temp_dir();

  // Hand-built fixture: two 4x4 images, known byte values.
  std::string images_path = (dir / "images.idx").string();
  std::string labels_path = (dir / "labels.idx").string();
  {
    std::ofstream images(images_path, std::ios::binary);
    write_be32(images, 0x00000803u);
    write_be32(images, 2);
    write_be32(images, 4);
    write_be32(images, 4);
    for (int i = 0; i < 32; ++i) {
      unsigned char byte = static_cast<unsigned char>(i * 8);
      images.write(reinterpret_cast<const char*>(&byte), 1);
    }
    std::ofstream labels(labels_path, std::ios::binary);
    write_be32(labels, 0x00000801u);
    write_be32(labels, 2);
    unsigned char values[2] = {7, 1};
    labels.write(reinterpret_cast<const char*>(values), 2);
  }

  SUBCASE("no crop keeps every pixel, scaled") {
    LabeledDataset data = load_mnist_idx(images_path, labels_path, 0);
    CHECK(data.size() == 2);
    CHECK(data.dim() == 17);
    CHECK(data.labels == std::vector<int>{7, 1});
    CHECK(data.num_classes == 8);
    CHECK(data.features.at(0, 0) == doctest::Approx(0.0));
    CHECK(data.features.at(0, 5) == doctest::Approx(40.0 / 255.0));
    CHECK(data.features.at(1, 0) == doctest::Approx(128.0 / 255.0));
    CHECK(data.features.at(0, 16) == 1.0);  // intercept
    CHECK_FALSE(data.posteriors.has_value());
  }

  SUBCASE("center crop selects the middle block") {
    LabeledDataset data = load_mnist_idx(images_path, labels_path, 1);
    CHECK(data.dim() == 5);  // 2x2 + intercept
    // Rows 1..2, cols 1..2 of the first image: bytes 5,6,9,10 (x8).
    CHECK(data.features.at(0, 0) == doctest::Approx(40.0 / 255.0));
    CHECK(data.features.at(0, 1) == doctest::Approx(48.0 / 255.0));
    CHECK(data.features.at(0, 2) == doctest::Approx(72.0 / 255.0));
    CHECK(data.features.at(0, 3) == doctest::Approx(80.0 / 255.0));
  }

  SUBCASE("format errors") {
    std::string bad = (dir / "bad.idx").string();
    {
      std::ofstream out(bad, std::ios::binary);
      write_be32(out, 0x00000801u);  // label magic in an image slot
      write_be32(out, 1);
      write_be32(out, 4);
      write_be32(out, 4);
    }
    CHECK_THROWS_AS(load_mnist_idx(bad, labels_path, 0), Error);

    std::string truncated = (dir / "short.idx").string();
    {
      std::ofstream out(truncated, std::ios::binary);
      write_be32(out, 0x00000803u);
      write_be32(out, 2);
      write_be32(out, 4);
      write_be32(out, 4);
      unsigned char byte = 1;
      for (int i = 0; i < 20; ++i) out.write(reinterpret_cast<const char*>(&byte), 1);
    }
    CHECK_THROWS_AS(load_mnist_idx(truncated, labels_path, 0), Error);

    std::string miscounted = (dir / "miscount.idx").string();
    {
      std::ofstream out(miscounted, std::ios::binary);
      write_be32(out, 0x00000801u);
      write_be32(out, 3);
      unsigned char values[3] = {0, 1, 2};
      out.write(reinterpret_cast<const char*>(values), 3);
    }
    CHECK_THROWS_AS(load_mnist_idx(images_path, miscounted, 0), Error);

    CHECK_THROWS_AS(load_mnist_idx(images_path, labels_path, 2), Error);  // nothing left
  }
}
