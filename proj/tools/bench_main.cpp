// Timing comparison of the serial reference kernels against the OpenMP paths.
// Results must be identical; this tool reports the speedups and asserts the
// parallel outputs match the references exactly.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mcc/batch.hpp"
#include "mcc/data.hpp"
#include "mcc/parallel.hpp"
#include "mcc/train.hpp"
#include "mcc/verify.hpp"

namespace {

double time_ms(const std::function<void()>& fn) {
  auto start = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

void report(const std::string& name, double serial_ms, double parallel_ms, bool identical) {
  std::printf("%-28s %10.1f ms %10.1f ms   x%.2f   %s\n", name.c_str(), serial_ms, parallel_ms,
              serial_ms / parallel_ms, identical ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mcc-bench - serial reference vs OpenMP kernels"};
  std::int64_t n = 200000;
  int dim = 20;
  int classes = 10;
  int threads = 0;
  app.add_option("--n", n, "samples");
  app.add_option("--dim", dim, "feature dimension");
  app.add_option("--classes", classes, "classes");
  app.add_option("--threads", threads, "parallel worker count (0 = all cores)");
  CLI11_PARSE(app, argc, argv);

  mcc::GaussianMixtureSpec spec;
  spec.num_classes = classes;
  spec.dim = dim;
  spec.scenario = mcc::Scenario::B;
  spec.seed = 7;
  mcc::Mixture mixture = mcc::Mixture::from_spec(spec);

  std::printf("%-28s %13s %13s   %6s\n", "kernel", "serial", "parallel", "speedup");

  mcc::LabeledDataset data_serial, data_parallel;
  {
    mcc::set_num_threads(1);
    double serial = time_ms([&] { data_serial = mixture.sample_serial(n, mcc::rng::kTrainSamples); });
    mcc::set_num_threads(threads);
    double parallel = time_ms([&] { data_parallel = mixture.sample(n, mcc::rng::kTrainSamples); });
    bool same = data_serial.features == data_parallel.features &&
                data_serial.labels == data_parallel.labels &&
                data_serial.posteriors == data_parallel.posteriors;
    report("mixture sampling", serial, parallel, same);
  }

  {
    mcc::TrainConfig quick;
    quick.epochs = 2;
    mcc::SoftmaxParams params = mcc::train_softmax(data_parallel, quick);
    mcc::SoftmaxScorer scorer(params);
    mcc::Matrix rows_serial, rows_parallel;
    double serial = time_ms([&] { rows_serial = mcc::score_batch_serial(scorer, data_parallel.features); });
    mcc::set_num_threads(threads);
    double parallel = time_ms([&] { rows_parallel = mcc::score_batch(scorer, data_parallel.features); });
    report("softmax batch scoring", serial, parallel, rows_serial == rows_parallel);

    mcc::ClassTree tree = mcc::build_cova_tree(classes);
    auto leveraged = std::make_shared<const mcc::LeveragedParams>(mcc::tie_to_softmax(params, tree));
    auto scorer_lv = mcc::leveraged_scorer(tree, leveraged);
    serial = time_ms([&] { rows_serial = mcc::score_batch_serial(*scorer_lv, data_parallel.features); });
    parallel = time_ms([&] { rows_parallel = mcc::score_batch(*scorer_lv, data_parallel.features); });
    report("leveraged batch scoring", serial, parallel, rows_serial == rows_parallel);

    mcc::LeveragedParams trained_serial, trained_parallel;
    mcc::TrainConfig node_cfg;
    node_cfg.epochs = 2;
    mcc::set_num_threads(1);
    serial = time_ms([&] { trained_serial = mcc::train_leveraged(data_parallel, tree, params, node_cfg); });
    mcc::set_num_threads(threads);
    parallel = time_ms([&] { trained_parallel = mcc::train_leveraged(data_parallel, tree, params, node_cfg); });
    bool same = true;
    for (std::size_t j = 0; j < trained_serial.nodes.size(); ++j) {
      same = same && trained_serial.nodes[j].gammas == trained_parallel.nodes[j].gammas;
    }
    report("leveraged node training", serial, parallel, same);
  }

  {
    mcc::set_num_threads(1);
    mcc::TheoremCheckResult serial_result, parallel_result;
    double serial = time_ms([&] { serial_result = mcc::check_tree_decomposition(20000, 2, 10, 7); });
    mcc::set_num_threads(threads);
    double parallel = time_ms([&] { parallel_result = mcc::check_tree_decomposition(20000, 2, 10, 7); });
    bool same = serial_result.max_violation == parallel_result.max_violation &&
                serial_result.records.size() == parallel_result.records.size();
    for (std::size_t i = 0; same && i < serial_result.records.size(); ++i) {
      same = serial_result.records[i].digest == parallel_result.records[i].digest &&
             serial_result.records[i].lhs == parallel_result.records[i].lhs &&
             serial_result.records[i].rhs == parallel_result.records[i].rhs;
    }
    report("tree identity trials", serial, parallel, same);
  }

  return 0;
}
