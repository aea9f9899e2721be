#include <doctest.h>

#include <cmath>

#include "mcc/data.hpp"
#include "mcc/train.hpp"
#include "mcc/verify.hpp"
#include "test_oracles.hpp"

using namespace mcc;

TEST_CASE("ova bound check") {
  TheoremCheckResult result = check_ova_bound(1000, 2, 10, 12345);
  CHECK(result.pass);
  CHECK(result.max_violation <= 0.0);
  REQUIRE(result.extras.size() == 2);
  CHECK(result.extras[0].second >= -1e-10);  // min F1
  CHECK(result.extras[1].second >= -1e-10);  // min F2
  CHECK(result.records.size() == 1000);
}

TEST_CASE("ova bound with exact estimates is tight at zero") {
  // q_i = p_i: the normalized combination is p itself and every term is 0.
  rng::Stream stream(808);
  for (int t = 0; t < 50; ++t) {
    int k = 2 + static_cast<int>(stream.below(9));
    Categorical p = sample_simplex(stream, k);
    std::vector<double> probs(p.probs().begin(), p.probs().end());
    // Renormalization inside the combination perturbs the last bit, so the
    // divergence is zero only to machine precision; the term sum is exact.
    double lhs = kl_divergence(p, Categorical(probs));
    double rhs = 0.0;
    for (int i = 0; i < k; ++i) rhs += binary_divergence(p[i], p[i]);
    CHECK(std::abs(lhs) <= 1e-12);
    CHECK(rhs == 0.0);
  }
}

TEST_CASE("ova bound components reconstruct the gap") {
  // rhs - lhs decomposes exactly into the two nonnegative pieces: a log-sum
  // residual and K*d(1/K || mean estimate).
  rng::Stream stream(909);
  for (int t = 0; t < 300; ++t) {
    int k = 2 + static_cast<int>(stream.below(9));
    Categorical p = sample_simplex(stream, k);
    std::vector<double> q(k);
    double alpha = 0.0;
    for (double& v : q) {
      v = stream.uniform(1e-6, 1.0 - 1e-6);
      alpha += v;
    }
    alpha /= k;
    std::vector<double> normalized(k);
    for (int i = 0; i < k; ++i) normalized[i] = q[i] / (alpha * k);
    double lhs = kl_divergence(p, Categorical(normalized));
    double rhs = 0.0, f1 = 0.0;
    for (int i = 0; i < k; ++i) {
      rhs += binary_divergence(p[i], q[i]);
      f1 += (1.0 - p[i]) * std::log((1.0 - p[i]) / (1.0 - q[i]));
    }
    f1 -= (k - 1) * std::log((k - 1) / (k * (1.0 - alpha)));
    double f2 = k * binary_divergence(1.0 / k, alpha);
    CHECK(f1 >= -1e-10);
    CHECK(f2 >= -1e-10);
    CHECK(rhs - lhs == doctest::Approx(f1 + f2).epsilon(1e-9));
  }
}

TEST_CASE("tree decomposition equality") {
  TheoremCheckResult result = check_tree_decomposition(1000, 2, 10, 99);
  CHECK(result.pass);
  CHECK(result.max_violation <= 1e-10);

  // The worked COVA example: both sides from the independent oracle values.
  ClassTree cova3 = build_cova_tree(3);
  Categorical p({0.5, 0.3, 0.2});
  Categorical q({0.4, 0.3, 0.3});
  double lhs = kl_divergence(p, q);
  NodeProbabilities pn = induce_node_probs(cova3, p);
  NodeProbabilities qn = induce_node_probs(cova3, q);
  std::vector<double> w = node_reach_probs(cova3, p);
  double rhs = w[0] * binary_divergence(pn[0], qn[0]) + w[1] * binary_divergence(pn[1], qn[1]);
  CHECK(lhs == doctest::Approx(oracle::kKl_532_433).epsilon(1e-14));
  CHECK(binary_divergence(pn[0], qn[0]) == doctest::Approx(oracle::kCova3_node0).epsilon(1e-12));
  CHECK(binary_divergence(pn[1], qn[1]) == doctest::Approx(oracle::kCova3_node1).epsilon(1e-12));
  CHECK(std::abs(lhs - rhs) <= 1e-10);

  // Q = P: both sides vanish.
  CHECK(kl_divergence(p, p) == 0.0);
}

TEST_CASE("tree decomposition fault injection fails") {
  TheoremCheckResult result =
      check_tree_decomposition(200, 3, 10, 7, DecompositionFault::RotateNodes);
  CHECK_FALSE(result.pass);
  CHECK(!result.violation_inputs.empty());
  CHECK_THROWS_AS(throw_if_violated(result), Error);
}

TEST_CASE("cova decomposition") {
  TheoremCheckResult result = check_cova_decomposition(1000, 2, 10, 4242);
  CHECK(result.pass);
  CHECK(result.max_violation <= 1e-10);
  REQUIRE(result.extras.size() == 1);
  CHECK(result.extras[0].second <= 1e-12);  // formula vs tree-induced values

  // K=5 uniform: weights are the tail masses, conditional values 1/(5-i).
  ClassTree tree = build_cova_tree(5);
  Categorical uniform({0.2, 0.2, 0.2, 0.2, 0.2});
  std::vector<double> w = node_reach_probs(tree, uniform);
  NodeProbabilities values = induce_node_probs(tree, uniform);
  CHECK(w[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(w[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(w[2] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(w[3] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(values[0] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(values[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(values[2] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(values[3] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("cova and tree checks agree on cova trees") {
  // Same instance pushed through both decomposition routes.
  rng::Stream stream(31337);
  for (int t = 0; t < 100; ++t) {
    int k = 2 + static_cast<int>(stream.below(9));
    Categorical p = sample_simplex(stream, k);
    Categorical q = sample_simplex(stream, k);
    ClassTree tree = build_cova_tree(k);
    NodeProbabilities pn = induce_node_probs(tree, p);
    NodeProbabilities qn = induce_node_probs(tree, q);
    std::vector<double> w = node_reach_probs(tree, p);
    double rhs_tree = 0.0;
    for (int j = 0; j < k - 1; ++j) rhs_tree += w[j] * binary_divergence(pn[j], qn[j]);

    double rhs_cond = 0.0, tail_p = 1.0, tail_q = 1.0;
    for (int i = 0; i < k - 1; ++i) {
      rhs_cond += tail_p * binary_divergence(p[i] / tail_p, q[i] / tail_q);
      tail_p -= p[i];
      tail_q -= q[i];
    }
    CHECK(rhs_tree == doctest::Approx(rhs_cond).epsilon(1e-12));
  }
}

TEST_CASE("dpi loose bound") {
  TheoremCheckResult result = check_dpi_loose_bound(1000, 2, 10, 55);
  CHECK(result.pass);
  // The unweighted sum is genuinely looser somewhere in the sample.
  CHECK(result.max_slack > 0.0);
}

TEST_CASE("replayability: identical seeds give identical records") {
  TheoremCheckResult a = check_tree_decomposition(200, 2, 10, 2718);
  TheoremCheckResult b = check_tree_decomposition(200, 2, 10, 2718);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].digest == b.records[i].digest);
    CHECK(a.records[i].lhs == b.records[i].lhs);
    CHECK(a.records[i].rhs == b.records[i].rhs);
  }
}

TEST_CASE("conditional decomposition on synthetic data") {
  GaussianMixtureSpec spec;
  spec.num_classes = 8;
  spec.dim = 6;
  spec.sigma = 2.0;
  spec.seed = 606;
  Mixture mixture = Mixture::from_spec(spec);
  LabeledDataset data = mixture.sample(2000, rng::kTestSamples);
  rng::Stream stream(13);
  ClassTree tree = sample_random_tree(stream, spec.num_classes);

  SUBCASE("trained softmax scorer") {
    TrainConfig cfg;
    cfg.epochs = 6;
    SoftmaxParams params = train_softmax(mixture.sample(2000, rng::kTrainSamples), cfg);
    TheoremCheckResult result = check_conditional_decomposition(data, tree, SoftmaxScorer(params));
    CHECK(result.pass);
    CHECK(result.max_violation <= 1e-9);
  }

  SUBCASE("exact posterior projections give zero on both sides") {
    SoftmaxParams params = fit_softmax_to_posteriors(data.features, *data.posteriors);
    TheoremCheckResult result = check_conditional_decomposition(data, tree, SoftmaxScorer(params));
    CHECK(result.pass);
    CHECK(std::abs(result.records[0].lhs) <= 1e-9);
    CHECK(std::abs(result.records[0].rhs) <= 1e-9);
  }

  SUBCASE("single sample reduces to the pointwise identity") {
    LabeledDataset one;
    one.num_classes = data.num_classes;
    one.features = Matrix(1, data.dim());
    std::ranges::copy(data.features.row(0), one.features.row(0).begin());
    one.labels = {data.labels[0]};
    one.posteriors.emplace(1, data.num_classes);
    std::ranges::copy(data.posteriors->row(0), one.posteriors->row(0).begin());
    TrainConfig cfg;
    cfg.epochs = 2;
    SoftmaxParams params = train_softmax(mixture.sample(500, rng::kTrainSamples), cfg);
    TheoremCheckResult result = check_conditional_decomposition(one, tree, SoftmaxScorer(params));
    CHECK(result.pass);
  }

  SUBCASE("missing posteriors raise") {
    LabeledDataset plain = data;
    plain.posteriors.reset();
    CHECK_THROWS_AS(check_conditional_decomposition(plain, tree, SoftmaxScorer(SoftmaxParams{
                        Matrix(8, 7)})),
                    Error);
  }
}

TEST_CASE("pinsker zero-one bound") {
  GaussianMixtureSpec spec;
  spec.num_classes = 6;
  spec.dim = 5;
  spec.sigma = 2.0;
  spec.seed = 777;
  Mixture mixture = Mixture::from_spec(spec);
  LabeledDataset train = mixture.sample(3000, rng::kTrainSamples);
  LabeledDataset test = mixture.sample(3000, rng::kTestSamples);
  TrainConfig cfg;
  cfg.epochs = 10;

  SUBCASE("trained OVA satisfies the bound") {
    OvaScorer ova(train_ova(train, cfg));
    TheoremCheckResult result = check_pinsker_zero_one(test, ova);
    CHECK(result.pass);
  }

  SUBCASE("exact posterior components make both sides vanish") {
    struct PosteriorComponent : BinaryScorer {
      const Mixture* mixture;
      int class_id;
      PosteriorComponent(const Mixture* m, int c) : mixture(m), class_id(c) {}
      double score(std::span<const double> x) const override {
        // Feature rows carry the intercept; the posterior wants raw features.
        return mixture->bayes_posterior(x.first(x.size() - 1))[class_id];
      }
    };
    std::vector<BinaryScorerPtr> components;
    for (int c = 0; c < spec.num_classes; ++c) {
      components.push_back(std::make_shared<PosteriorComponent>(&mixture, c));
    }
    OvaScorer exact(components);
    TheoremCheckResult result = check_pinsker_zero_one(test, exact);
    CHECK(result.pass);
    CHECK(result.records[0].lhs <= 0.0);
    CHECK(result.records[0].rhs <= 1e-4);
  }

  SUBCASE("a label-permuted scorer still satisfies the bound, with a large rhs") {
    std::vector<BinaryScorerPtr> scorers = train_ova(train, cfg);
    std::rotate(scorers.begin(), scorers.begin() + 1, scorers.end());
    OvaScorer permuted(scorers);
    TheoremCheckResult result = check_pinsker_zero_one(test, permuted);
    CHECK(result.pass);
    CHECK(result.records[0].rhs > 0.3);
  }
}
