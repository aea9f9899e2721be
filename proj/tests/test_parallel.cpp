#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mcc/batch.hpp"
#include "mcc/data.hpp"
#include "mcc/parallel.hpp"
#include "mcc/train.hpp"
#include "mcc/verify.hpp"

using namespace mcc;

// Every parallel kernel must match its serial reference bit-for-bit at any
// worker count.

namespace {

struct ThreadGuard {
  ~ThreadGuard() { set_num_threads(0); }
};

}  // namespace

TEST_CASE("rng streams split cleanly") {
  // Same coordinates, same stream; any coordinate change decouples it.
  auto a = rng::stream_for(7, rng::kTrainSamples, 3);
  auto b = rng::stream_for(7, rng::kTrainSamples, 3);
  auto c = rng::stream_for(7, rng::kTestSamples, 3);
  auto d = rng::stream_for(7, rng::kTrainSamples, 4);
  auto e = rng::stream_for(8, rng::kTrainSamples, 3);
  std::uint64_t first = a.next();
  CHECK(first == b.next());
  CHECK(first != c.next());
  CHECK(first != d.next());
  CHECK(first != e.next());

  rng::Stream draws(99);
  double mean = 0.0, square = 0.0;
  for (int i = 0; i < 20000; ++i) {
    double u = draws.uniform01();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    double z = draws.normal();
    mean += z;
    square += z * z;
  }
  mean /= 20000.0;
  square /= 20000.0;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(square - 1.0) < 0.05);

  // Fisher-Yates permutes; same stream position, same permutation.
  std::vector<int> x{0, 1, 2, 3, 4, 5, 6, 7}, y = x;
  rng::Stream s1(5), s2(5);
  rng::shuffle(std::span<int>(x), s1);
  rng::shuffle(std::span<int>(y), s2);
  CHECK(x == y);
  std::vector<int> sorted = x;
  std::ranges::sort(sorted);
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("parallel kernels match the serial references exactly") {
  ThreadGuard guard;
  GaussianMixtureSpec spec;
  spec.num_classes = 7;
  spec.dim = 6;
  spec.scenario = Scenario::B;
  spec.sigma = 1.8;
  spec.seed = 404;
  Mixture mixture = Mixture::from_spec(spec);

  SUBCASE("mixture sampling") {
    LabeledDataset serial = mixture.sample_serial(2000, rng::kTrainSamples);
    for (int workers : {1, 2, 4}) {
      set_num_threads(workers);
      LabeledDataset parallel = mixture.sample(2000, rng::kTrainSamples);
      CHECK(parallel.features == serial.features);
      CHECK(parallel.labels == serial.labels);
      CHECK(*parallel.posteriors == *serial.posteriors);
    }
  }

  SUBCASE("batch scoring") {
    set_num_threads(0);
    LabeledDataset data = mixture.sample(1500, rng::kTrainSamples);
    TrainConfig cfg;
    cfg.epochs = 3;
    SoftmaxParams params = train_softmax(data, cfg);
    SoftmaxScorer scorer(params);
    Matrix reference = score_batch_serial(scorer, data.features);
    for (int workers : {1, 2, 4}) {
      set_num_threads(workers);
      CHECK(score_batch(scorer, data.features) == reference);
    }

    auto binary = train_binary_logistic(make_indicator_trainset(data, 0), cfg);
    std::vector<double> ref_binary = binary_score_batch_serial(*binary, data.features);
    for (int workers : {1, 2, 4}) {
      set_num_threads(workers);
      CHECK(binary_score_batch(*binary, data.features) == ref_binary);
    }
  }

  SUBCASE("training is identical at any worker count") {
    set_num_threads(0);
    LabeledDataset data = mixture.sample(1500, rng::kTrainSamples);
    TrainConfig cfg;
    cfg.epochs = 4;
    ClassTree tree = build_cova_tree(spec.num_classes);

    set_num_threads(1);
    SoftmaxParams sm1 = train_softmax(data, cfg);
    LeveragedParams lv1 = train_leveraged(data, tree, sm1, cfg);
    auto ova1 = train_ova(data, cfg);

    set_num_threads(4);
    SoftmaxParams sm4 = train_softmax(data, cfg);
    LeveragedParams lv4 = train_leveraged(data, tree, sm4, cfg);
    auto ova4 = train_ova(data, cfg);

    CHECK(sm1.betas == sm4.betas);
    for (int j = 0; j < tree.num_nodes(); ++j) CHECK(lv1.nodes[j].gammas == lv4.nodes[j].gammas);
    for (int c = 0; c < spec.num_classes; ++c) {
      CHECK(dynamic_cast<const LogisticScorer&>(*ova1[c]).weights() ==
            dynamic_cast<const LogisticScorer&>(*ova4[c]).weights());
    }
  }

  SUBCASE("verification trials are schedule-independent") {
    set_num_threads(1);
    TheoremCheckResult serial = check_ova_bound(500, 2, 10, 99);
    set_num_threads(4);
    TheoremCheckResult parallel = check_ova_bound(500, 2, 10, 99);
    CHECK(serial.max_violation == parallel.max_violation);
    CHECK(serial.max_slack == parallel.max_slack);
    REQUIRE(serial.records.size() == parallel.records.size());
    for (std::size_t i = 0; i < serial.records.size(); ++i) {
      CHECK(serial.records[i].digest == parallel.records[i].digest);
      CHECK(serial.records[i].lhs == parallel.records[i].lhs);
      CHECK(serial.records[i].rhs == parallel.records[i].rhs);
    }
  }

  SUBCASE("empirical report reduction is order-fixed") {
    set_num_threads(0);
    LabeledDataset data = mixture.sample(3000, rng::kTestSamples);
    TrainConfig cfg;
    cfg.epochs = 2;
    SoftmaxScorer scorer(train_softmax(mixture.sample(1000, rng::kTrainSamples), cfg));
    set_num_threads(1);
    Matrix rows = score_batch(scorer, data.features);
    LossReport serial = empirical_report_rows(rows, data.labels, &*data.posteriors);
    set_num_threads(4);
    LossReport parallel = empirical_report_rows(rows, data.labels, &*data.posteriors);
    CHECK(serial.log_loss == parallel.log_loss);
    CHECK(*serial.regret == *parallel.regret);
    CHECK(serial.zero_one_error == parallel.zero_one_error);
  }
}
