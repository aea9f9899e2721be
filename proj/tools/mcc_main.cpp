#include <CLI11.hpp>

#include <iostream>

#include "mcc/experiment.hpp"
#include "mcc/parallel.hpp"

namespace {

void add_train_options(CLI::App* cmd, mcc::TrainConfig& train) {
  cmd->add_option("--epochs", train.epochs, "training epochs (0 = keep the initialization)");
  cmd->add_option("--lr", train.learning_rate, "SGD learning rate");
  cmd->add_option("--batch", train.batch_size, "mini-batch size");
  cmd->add_option("--seed", train.seed, "RNG seed");
  cmd->add_option("--keep-best", train.keep_best,
                  "return the end-of-epoch checkpoint with the lowest train loss (0|1)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "mcc - multiclass soft classifiers built from binary elements, with an\n"
      "exact-identity verification suite.\n\n"
      "Exit codes: 0 success, 2 configuration error, 3 data error,\n"
      "4 verification failure."};
  app.require_subcommand(1);
  app.fallthrough(true);
  app.set_config("--config", "",
                 "key=value file with a [subcommand] section; flags override it");

  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = all cores, 1 = serial)")
      ->capture_default_str();

  mcc::GenConfig gen;
  std::string scenario = "A";
  auto* gen_cmd = app.add_subcommand("gen", "draw a synthetic Gaussian mixture dataset");
  gen_cmd->add_option("--scenario", scenario, "A (isotropic) or B (per-class covariance)");
  gen_cmd->add_option("--classes", gen.spec.num_classes, "number of classes");
  gen_cmd->add_option("--dim", gen.spec.dim, "feature dimension");
  gen_cmd->add_option("--sigma", gen.spec.sigma, "noise scale");
  gen_cmd->add_option("--alpha-scale", gen.spec.alpha_scale, "scenario-B covariance scale");
  gen_cmd->add_option("--seed", gen.spec.seed, "mixture + sampling seed");
  gen_cmd->add_option("--train-n", gen.train_n, "training samples");
  gen_cmd->add_option("--test-n", gen.test_n, "test samples");
  gen_cmd->add_option("--out", gen.out_dir, "output directory");
  gen_cmd->add_option("--mnist-train-images", gen.mnist_train_images,
                      "IDX image file; switches gen to ingestion mode");
  gen_cmd->add_option("--mnist-train-labels", gen.mnist_train_labels, "IDX label file");
  gen_cmd->add_option("--mnist-test-images", gen.mnist_test_images, "IDX image file");
  gen_cmd->add_option("--mnist-test-labels", gen.mnist_test_labels, "IDX label file");
  gen_cmd->add_option("--crop", gen.crop, "margin pixels cropped from each side");

  mcc::TrainCmdConfig train;
  auto* train_cmd = app.add_subcommand("train", "train a classifier on a dataset file");
  train_cmd->add_option("--data", train.data_path, "training dataset (.ds)")->required();
  train_cmd->add_option("--method", train.method, "softmax | ova | hierarchical | leveraged");
  train_cmd->add_option("--tree", train.tree_source,
                        "cova | balanced | balanced:<perm> | (expr) | tree file");
  train_cmd->add_option("--out", train.out_dir, "output directory");
  add_train_options(train_cmd, train.train);

  mcc::EvalCmdConfig eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained model");
  eval_cmd->add_option("--model", eval.model_path, "model file (.mccm)")->required();
  eval_cmd->add_option("--train-data", eval.train_data, "train dataset to report on");
  eval_cmd->add_option("--test-data", eval.test_data, "test dataset to report on");
  eval_cmd->add_option("--out", eval.report_path, "also write the report here");
  eval_cmd->add_option("--format", eval.format, "text | delimited");
  eval_cmd->add_option("--units", eval.units, "nats | bits (display only)");

  mcc::VerifyCmdConfig verify;
  auto* verify_cmd = app.add_subcommand("verify", "run the identity/bound checks");
  verify_cmd->add_option("--suite", verify.suite,
                         "checks to run: all | ova tree cova dpi conditional pinsker");
  verify_cmd->add_option("--trials", verify.trials, "random instances per check");
  verify_cmd->add_option("--seed", verify.seed, "RNG seed");
  verify_cmd->add_option("--out", verify.report_path, "machine-readable JSON report path");
  verify_cmd->add_flag("--inject-fault", verify.inject_fault,
                       "self-test: corrupt the tree check's node indexing; must fail");

  mcc::TreeCmdConfig tree;
  auto* tree_cmd = app.add_subcommand("tree", "print/validate a class tree");
  tree_cmd->add_option("--tree", tree.source, "cova | balanced | balanced:<perm> | (expr) | file")
      ->required();
  tree_cmd->add_option("--classes", tree.classes, "class count (builders; checked for files)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? mcc::kExitOk : mcc::kExitConfig;
  }
  mcc::set_num_threads(threads);

  try {
    if (*gen_cmd) {
      if (scenario == "A") {
        gen.spec.scenario = mcc::Scenario::A;
      } else if (scenario == "B") {
        gen.spec.scenario = mcc::Scenario::B;
      } else {
        mcc::raise(mcc::ErrorKind::ConfigError, "scenario must be A or B");
      }
      return mcc::run_gen(gen, std::cout);
    }
    if (*train_cmd) return mcc::run_train(train, std::cout);
    if (*eval_cmd) return mcc::run_eval(eval, std::cout);
    if (*verify_cmd) return mcc::run_verify(verify, std::cout);
    if (*tree_cmd) return mcc::run_tree(tree, std::cout);
  } catch (const mcc::Error& error) {
    std::cerr << "error: " << error.what() << "\n";
    return mcc::exit_code_for(error);
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return mcc::kExitInternal;
  }
  return mcc::kExitConfig;
}
