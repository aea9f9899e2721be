#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mcc/batch.hpp"
#include "mcc/experiment.hpp"

using namespace mcc;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "mcc_experiment_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

GenConfig small_gen(const fs::path& dir, Scenario scenario) {
  GenConfig gen;
  gen.spec.num_classes = 5;
  gen.spec.dim = 4;
  gen.spec.scenario = scenario;
  gen.spec.sigma = 1.6;
  gen.spec.seed = 12;
  gen.train_n = 800;
  gen.test_n = 400;
  gen.out_dir = dir.string();
  return gen;
}

}  // namespace

TEST_CASE("tree source resolution") {
  CHECK(resolve_tree("cova", 4).same_shape(build_cova_tree(4)));
  CHECK(resolve_tree("balanced", 4).same_shape(build_balanced_tree(4)));
  std::vector<int> order{3, 1, 0, 2};
  CHECK(resolve_tree("balanced:3,1,0,2", 4).same_shape(build_balanced_tree(4, &order)));
  CHECK(resolve_tree("((0 1) (2 3))", 4).num_nodes() == 3);
  CHECK_THROWS_AS(resolve_tree("((0 1) 2)", 4), Error);  // wrong class count
  CHECK_THROWS_AS(resolve_tree("", 4), Error);
  CHECK_THROWS_AS(resolve_tree("no_such_file.tree", 4), Error);

  fs::path dir = fresh_dir("tree");
  std::ofstream out(dir / "t.tree");
  out << "((0 1) (2 3))\n";
  out.close();
  CHECK(resolve_tree((dir / "t.tree").string(), 4).num_nodes() == 3);
}

TEST_CASE("gen is reproducible and scenario-B mixes per-class covariances") {
  fs::path dir_a = fresh_dir("gen_a");
  fs::path dir_b = fresh_dir("gen_b");
  std::ostringstream log;
  GenConfig gen = small_gen(dir_a, Scenario::A);
  CHECK(run_gen(gen, log) == kExitOk);
  gen.out_dir = dir_b.string();
  CHECK(run_gen(gen, log) == kExitOk);
  CHECK(slurp(dir_a / "train.ds") == slurp(dir_b / "train.ds"));
  CHECK(slurp(dir_a / "test.ds") == slurp(dir_b / "test.ds"));
  CHECK(slurp(dir_a / "mixture.json") == slurp(dir_b / "mixture.json"));

  // Train and test share the mixture (same digest) but not the samples.
  CHECK(slurp(dir_a / "mixture.json").find("mixture_digest") != std::string::npos);
  LabeledDataset train = load_dataset((dir_a / "train.ds").string());
  LabeledDataset test = load_dataset((dir_a / "test.ds").string());
  CHECK(train.features.row(0)[0] != test.features.row(0)[0]);
}

TEST_CASE("train, eval, verify round trip") {
  fs::path dir = fresh_dir("pipeline");
  std::ostringstream log;
  REQUIRE(run_gen(small_gen(dir, Scenario::B), log) == kExitOk);

  TrainCmdConfig train;
  train.data_path = (dir / "train.ds").string();
  train.out_dir = dir.string();
  train.train.epochs = 4;

  SUBCASE("softmax then eval") {
    train.method = "softmax";
    REQUIRE(run_train(train, log) == kExitOk);
    CHECK(fs::exists(dir / "softmax.mccm"));
    CHECK(fs::exists(dir / "softmax_manifest.txt"));

    EvalCmdConfig eval;
    eval.model_path = (dir / "softmax.mccm").string();
    eval.train_data = (dir / "train.ds").string();
    eval.test_data = (dir / "test.ds").string();
    eval.report_path = (dir / "report.txt").string();
    std::ostringstream eval_log;
    REQUIRE(run_eval(eval, eval_log) == kExitOk);
    CHECK(eval_log.str().find("train") != std::string::npos);
    CHECK(eval_log.str().find("regret") != std::string::npos);
    CHECK(slurp(dir / "report.txt") == eval_log.str());

    eval.format = "delimited";
    std::ostringstream csv_log;
    REQUIRE(run_eval(eval, csv_log) == kExitOk);
    CHECK(csv_log.str().find("method,dataset") != std::string::npos);

    eval.format = "text";
    eval.units = "bits";
    std::ostringstream bits_log;
    REQUIRE(run_eval(eval, bits_log) == kExitOk);
    CHECK(bits_log.str().find("losses in bits") != std::string::npos);
    eval.units = "furlongs";
    CHECK_THROWS_AS(run_eval(eval, bits_log), Error);
  }

  SUBCASE("leveraged trains its baseline once and reuses it") {
    train.method = "leveraged";
    train.tree_source = "cova";
    REQUIRE(run_train(train, log) == kExitOk);
    int baselines = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().filename().string().rfind("softmax_", 0) == 0 &&
          entry.path().extension() == ".mccm") {
        ++baselines;
      }
    }
    CHECK(baselines == 1);
    std::string manifest = slurp(dir / "leveraged_manifest.txt");
    CHECK(manifest.find("baseline trained") != std::string::npos);

    // Second run: the stored baseline is picked up.
    std::ostringstream log2;
    REQUIRE(run_train(train, log2) == kExitOk);
    CHECK(slurp(dir / "leveraged_manifest.txt").find("baseline loaded") != std::string::npos);

    // Per-node report appears in eval and reconstructs the total.
    EvalCmdConfig eval;
    eval.model_path = (dir / "leveraged.mccm").string();
    eval.test_data = (dir / "test.ds").string();
    std::ostringstream eval_log;
    REQUIRE(run_eval(eval, eval_log) == kExitOk);
    CHECK(eval_log.str().find("per-node binary log-losses") != std::string::npos);
    CHECK(eval_log.str().find("weighted sum") != std::string::npos);
  }

  SUBCASE("hierarchical on an explicit tree") {
    train.method = "hierarchical";
    train.tree_source = "((0 (1 2)) (3 4))";
    REQUIRE(run_train(train, log) == kExitOk);
    Model model = load_model((dir / "hierarchical.mccm").string());
    CHECK(model.binaries.size() == 4);

    LabeledDataset test = load_dataset((dir / "test.ds").string());
    NodeBreakdown breakdown = node_breakdown(model, test);
    CHECK(breakdown.gap <= 1e-9);
    double weighted = 0.0;
    for (const NodeLossEntry& entry : breakdown.entries) {
      weighted += entry.weight * entry.binary_log_loss;
    }
    CHECK(weighted == doctest::Approx(breakdown.weighted_sum).epsilon(1e-12));
  }

  SUBCASE("ova model counts its components") {
    train.method = "ova";
    REQUIRE(run_train(train, log) == kExitOk);
    Model model = load_model((dir / "ova.mccm").string());
    CHECK(model.binaries.size() == 5);
  }

  SUBCASE("unknown method is a config error") {
    train.method = "nope";
    CHECK_THROWS_AS(run_train(train, log), Error);
    try {
      run_train(train, log);
    } catch (const Error& error) {
      CHECK(exit_code_for(error) == kExitConfig);
    }
  }

  SUBCASE("missing files are data errors") {
    EvalCmdConfig eval;
    eval.model_path = (dir / "missing.mccm").string();
    eval.test_data = (dir / "test.ds").string();
    try {
      run_eval(eval, log);
      FAIL("expected an error");
    } catch (const Error& error) {
      CHECK(error.kind() == ErrorKind::IoError);
      CHECK(exit_code_for(error) == kExitData);
    }
  }
}

TEST_CASE("gen ingests IDX files") {
  fs::path dir = fresh_dir("idx_gen");
  auto write_be32 = [](std::ofstream& out, std::uint32_t value) {
    unsigned char bytes[4] = {static_cast<unsigned char>(value >> 24),
                              static_cast<unsigned char>(value >> 16),
                              static_cast<unsigned char>(value >> 8),
                              static_cast<unsigned char>(value)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  };
  auto write_idx_pair = [&](const fs::path& images, const fs::path& labels, int count) {
    std::ofstream img(images, std::ios::binary);
    write_be32(img, 0x00000803u);
    write_be32(img, count);
    write_be32(img, 3);
    write_be32(img, 3);
    for (int i = 0; i < count * 9; ++i) {
      unsigned char byte = static_cast<unsigned char>(i);
      img.write(reinterpret_cast<const char*>(&byte), 1);
    }
    std::ofstream lab(labels, std::ios::binary);
    write_be32(lab, 0x00000801u);
    write_be32(lab, count);
    for (int i = 0; i < count; ++i) {
      unsigned char byte = static_cast<unsigned char>(i % 2);
      lab.write(reinterpret_cast<const char*>(&byte), 1);
    }
  };
  write_idx_pair(dir / "tri.idx", dir / "trl.idx", 6);
  write_idx_pair(dir / "tei.idx", dir / "tel.idx", 4);

  GenConfig gen;
  gen.out_dir = dir.string();
  gen.mnist_train_images = (dir / "tri.idx").string();
  gen.mnist_train_labels = (dir / "trl.idx").string();
  gen.mnist_test_images = (dir / "tei.idx").string();
  gen.mnist_test_labels = (dir / "tel.idx").string();
  gen.crop = 1;
  std::ostringstream log;
  REQUIRE(run_gen(gen, log) == kExitOk);
  LabeledDataset train = load_dataset((dir / "train.ds").string());
  CHECK(train.size() == 6);
  CHECK(train.dim() == 2);  // 1x1 crop survivor + intercept
  CHECK(train.labels[3] == 1);

  gen.mnist_test_images.clear();
  CHECK_THROWS_AS(run_gen(gen, log), Error);
}

TEST_CASE("verify command") {
  std::ostringstream log;
  VerifyCmdConfig verify;
  verify.suite = {"ova", "tree", "cova", "dpi"};
  verify.trials = 200;
  verify.seed = 5;
  fs::path dir = fresh_dir("verify");
  verify.report_path = (dir / "report.json").string();
  CHECK(run_verify(verify, log) == kExitOk);
  CHECK(log.str().find("pass") != std::string::npos);
  std::string report = slurp(dir / "report.json");
  CHECK(report.find("tree_decomposition") != std::string::npos);
  CHECK(report.find("\"pass\": true") != std::string::npos);

  // Fault injection must flip the tree check to a verification failure.
  verify.inject_fault = true;
  std::ostringstream fail_log;
  CHECK(run_verify(verify, fail_log) == kExitVerification);
  CHECK(fail_log.str().find("FAIL") != std::string::npos);

  // Identical seeds, identical report bytes.
  verify.inject_fault = false;
  std::ostringstream log_a, log_b;
  VerifyCmdConfig again = verify;
  again.report_path = (dir / "a.json").string();
  CHECK(run_verify(again, log_a) == kExitOk);
  again.report_path = (dir / "b.json").string();
  CHECK(run_verify(again, log_b) == kExitOk);
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
  CHECK(log_a.str() == log_b.str());

  VerifyCmdConfig unknown;
  unknown.suite = {"nonsense"};
  CHECK_THROWS_AS(run_verify(unknown, log), Error);
}

TEST_CASE("tree command prints structure") {
  std::ostringstream log;
  TreeCmdConfig tree;
  tree.source = "cova";
  tree.classes = 3;
  CHECK(run_tree(tree, log) == kExitOk);
  CHECK(log.str().find("(0 (1 2))") != std::string::npos);
  CHECK(log.str().find("0 -> 1") != std::string::npos);
  CHECK(log.str().find("1 -> 01") != std::string::npos);
}
