#include "mcc/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mcc/batch.hpp"
#include "mcc/parallel.hpp"

namespace mcc {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

int exit_code_for(const Error& error) {
  switch (error.kind()) {
    case ErrorKind::ConfigError:
      return kExitConfig;
    case ErrorKind::ViolationFound:
    case ErrorKind::FormulaMismatch:
      return kExitVerification;
    default:
      return kExitData;
  }
}

ClassTree resolve_tree(const std::string& source, int num_classes) {
  require(!source.empty(), ErrorKind::ConfigError, "tree source is required for this method");
  if (source == "cova") return build_cova_tree(num_classes);
  if (source == "balanced") return build_balanced_tree(num_classes);
  if (source.rfind("balanced:", 0) == 0) {
    std::vector<int> order;
    std::istringstream fields(source.substr(9));
    std::string item;
    while (std::getline(fields, item, ',')) {
      require(!item.empty(), ErrorKind::ConfigError, "empty entry in permutation");
      order.push_back(std::stoi(item));
    }
    return build_balanced_tree(num_classes, &order);
  }
  std::string text = source;
  if (source.front() != '(') {
    std::ifstream in(source);
    require(static_cast<bool>(in), ErrorKind::IoError, "cannot open tree file '" + source + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    text = buffer.str();
  }
  ClassTree tree = parse_tree(text);
  require(num_classes == 0 || tree.num_classes() == num_classes, ErrorKind::ShapeMismatch,
          "tree has " + std::to_string(tree.num_classes()) + " classes, dataset has " +
              std::to_string(num_classes));
  return tree;
}

LossReport evaluate_scorer(const MulticlassScorer& scorer, const LabeledDataset& data) {
  require(scorer.num_classes() == data.num_classes, ErrorKind::ShapeMismatch,
          "model and dataset class counts disagree");
  Matrix q_rows = score_batch(scorer, data.features);
  return empirical_report_rows(q_rows, data.labels,
                               data.posteriors ? &*data.posteriors : nullptr);
}

namespace {

std::vector<BinaryScorerPtr> node_scorers_of(const Model& model) {
  if (model.kind == ModelKind::Hierarchical) return model.binaries;
  require(model.kind == ModelKind::Leveraged, ErrorKind::InvalidArgument,
          "node breakdown applies to tree-structured models only");
  std::vector<BinaryScorerPtr> scorers;
  for (int j = 0; j < model.tree->num_nodes(); ++j) {
    scorers.push_back(leveraged_node_scorer(model.leveraged, *model.tree, j));
  }
  return scorers;
}

double clamped_nll(double term) { return -std::log(std::max(term, kEvalClamp)); }

}  // namespace

NodeBreakdown node_breakdown(const Model& model, const LabeledDataset& data) {
  const ClassTree& tree = *model.tree;
  require(tree.num_classes() == data.num_classes, ErrorKind::ShapeMismatch,
          "model and dataset class counts disagree");
  std::vector<BinaryScorerPtr> scorers = node_scorers_of(model);
  const std::int64_t n = data.size();

  NodeBreakdown breakdown;
  // Per-node route: filter the samples whose label lies in the node subset,
  // batch-score them, and average the binary log-losses.
  for (int j = 0; j < tree.num_nodes(); ++j) {
    std::vector<signed char> side(data.num_classes, -1);
    for (int c : tree.node(j).zero_branch) side[c] = 0;
    for (int c : tree.node(j).one_branch) side[c] = 1;
    std::vector<int> rows;
    std::vector<char> bits;
    for (std::int64_t i = 0; i < n; ++i) {
      if (side[data.labels[i]] < 0) continue;
      rows.push_back(static_cast<int>(i));
      bits.push_back(side[data.labels[i]]);
    }
    NodeLossEntry entry;
    entry.node = j;
    entry.weight = static_cast<double>(rows.size()) / static_cast<double>(n);
    if (!rows.empty()) {
      std::vector<double> values = binary_score_batch(*scorers[j], data.features, rows);
      double total = 0.0;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        total += clamped_nll(bits[i] ? values[i] : 1.0 - values[i]);
      }
      entry.binary_log_loss = total / static_cast<double>(rows.size());
    }
    breakdown.entries.push_back(entry);
    breakdown.weighted_sum += entry.weight * entry.binary_log_loss;
  }

  // Per-sample route: walk each label's codeword path and sum the same
  // clamped terms; regrouping by node must give the weighted sum back.
  std::vector<double> path_nll(n);
  parallel_for(n, [&](std::int64_t i) {
    auto x = data.features.row(i);
    double total = 0.0;
    for (auto [node, bit] : tree.path(data.labels[i])) {
      double v = scorers[node]->score(x);
      total += clamped_nll(bit ? v : 1.0 - v);
    }
    path_nll[i] = total;
  });
  double total = 0.0;
  for (double v : path_nll) total += v;
  breakdown.path_total = total / static_cast<double>(n);
  breakdown.gap = std::abs(breakdown.weighted_sum - breakdown.path_total);
  return breakdown;
}

namespace {

std::uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::IoError, "cannot open '" + path + "'");
  std::uint64_t hash = 0xcbf29ce484222325ull;
  std::vector<unsigned char> buffer(1 << 16);
  while (in) {
    in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
    hash = fnv1a({buffer.data(), static_cast<std::size_t>(in.gcount())}, hash);
  }
  return hash;
}

std::string hex64(std::uint64_t value) {
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(value));
  return out;
}

// Manifests double as config files: `mcc <command> --config <manifest>`
// replays the run, so entries sit in the command's section.
void write_manifest(const std::string& path, const std::string& section,
                    const std::vector<std::pair<std::string, std::string>>& entries,
                    const std::vector<std::string>& comments) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::IoError, "cannot write '" + path + "'");
  for (const std::string& comment : comments) out << "# " << comment << "\n";
  out << "[" << section << "]\n";
  for (const auto& [key, value] : entries) out << key << "=" << value << "\n";
}

std::string format_nats(double value) {
  char out[32];
  std::snprintf(out, sizeof out, "%.4f", value);
  return out;
}

// Full-precision float for manifests, so replaying one is exact.
std::string format_exact(double value) {
  char out[40];
  std::snprintf(out, sizeof out, "%.17g", value);
  return out;
}

std::string scenario_name(Scenario s) { return s == Scenario::A ? "A" : "B"; }

}  // namespace

std::string model_path_for(const std::string& out_dir, const std::string& method) {
  return (fs::path(out_dir) / (method + ".mccm")).string();
}

int run_gen(const GenConfig& config, std::ostream& log) {
  fs::create_directories(config.out_dir);
  fs::path dir_path(config.out_dir);
  if (!config.mnist_train_images.empty() || !config.mnist_test_images.empty()) {
    require(!config.mnist_train_images.empty() && !config.mnist_train_labels.empty() &&
                !config.mnist_test_images.empty() && !config.mnist_test_labels.empty(),
            ErrorKind::ConfigError, "IDX ingestion needs all four --mnist-* paths");
    LabeledDataset train =
        load_mnist_idx(config.mnist_train_images, config.mnist_train_labels, config.crop);
    LabeledDataset test =
        load_mnist_idx(config.mnist_test_images, config.mnist_test_labels, config.crop);
    require(train.num_classes == test.num_classes && train.dim() == test.dim(),
            ErrorKind::CountMismatch, "train and test IDX shapes disagree");
    save_dataset(train, (dir_path / "train.ds").string());
    save_dataset(test, (dir_path / "test.ds").string());
    write_manifest((dir_path / "gen_manifest.txt").string(), "gen",
                   {{"mnist-train-images", config.mnist_train_images},
                    {"mnist-train-labels", config.mnist_train_labels},
                    {"mnist-test-images", config.mnist_test_images},
                    {"mnist-test-labels", config.mnist_test_labels},
                    {"crop", std::to_string(config.crop)},
                    {"out", config.out_dir}},
                   {"mcc gen manifest (IDX ingestion)"});
    log << "converted IDX files -> " << (dir_path / "train.ds").string() << " (" << train.size()
        << " samples, d=" << train.dim() - 1 << "), " << (dir_path / "test.ds").string() << " ("
        << test.size() << " samples)\n";
    return kExitOk;
  }

  Mixture mixture = Mixture::from_spec(config.spec);
  LabeledDataset train = mixture.sample(config.train_n, rng::kTrainSamples);
  LabeledDataset test = mixture.sample(config.test_n, rng::kTestSamples);
  fs::path dir(config.out_dir);
  save_dataset(train, (dir / "train.ds").string());
  save_dataset(test, (dir / "test.ds").string());

  json provenance;
  provenance["classes"] = config.spec.num_classes;
  provenance["dim"] = config.spec.dim;
  provenance["scenario"] = scenario_name(config.spec.scenario);
  provenance["sigma"] = config.spec.sigma;
  provenance["alpha_scale"] = config.spec.alpha_scale;
  provenance["seed"] = config.spec.seed;
  provenance["mixture_digest"] = hex64(mixture.digest());
  provenance["train_n"] = config.train_n;
  provenance["test_n"] = config.test_n;
  {
    std::ofstream out(dir / "mixture.json", std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::IoError, "cannot write mixture.json");
    out << provenance.dump(2) << "\n";
  }
  write_manifest((dir / "gen_manifest.txt").string(), "gen",
                 {{"scenario", scenario_name(config.spec.scenario)},
                  {"classes", std::to_string(config.spec.num_classes)},
                  {"dim", std::to_string(config.spec.dim)},
                  {"sigma", format_exact(config.spec.sigma)},
                  {"alpha-scale", format_exact(config.spec.alpha_scale)},
                  {"seed", std::to_string(config.spec.seed)},
                  {"train-n", std::to_string(config.train_n)},
                  {"test-n", std::to_string(config.test_n)},
                  {"out", config.out_dir}},
                 {"mcc gen manifest", "mixture_digest " + hex64(mixture.digest())});

  log << "wrote " << (dir / "train.ds").string() << " (" << config.train_n << " samples), "
      << (dir / "test.ds").string() << " (" << config.test_n << " samples)\n";
  return kExitOk;
}

int run_train(const TrainCmdConfig& config, std::ostream& log) {
  validate(config.train);
  fs::create_directories(config.out_dir);
  LabeledDataset data = load_dataset(config.data_path);
  const auto started = std::chrono::steady_clock::now();

  std::uint64_t digest = file_digest(config.data_path);
  digest = rng::mix(digest, config.train.seed);
  digest = rng::mix(digest, static_cast<std::uint64_t>(config.train.epochs));
  digest = rng::mix(digest, static_cast<std::uint64_t>(config.train.batch_size) * 2 +
                                (config.train.keep_best ? 1 : 0));
  digest = fnv1a_doubles({&config.train.learning_rate, 1}, digest);
  std::string config_digest = hex64(digest);

  Model model;
  std::string baseline_note = "none";
  if (config.method == "softmax") {
    model = make_softmax_model(train_softmax(data, config.train));
  } else if (config.method == "ova") {
    model = make_ova_model(train_ova(data, config.train), data.dim());
  } else if (config.method == "hierarchical") {
    ClassTree tree = resolve_tree(config.tree_source, data.num_classes);
    auto scorers = train_hierarchical(data, tree, config.train);
    model = make_hierarchical_model(std::move(tree), std::move(scorers), data.dim());
  } else if (config.method == "leveraged") {
    ClassTree tree = resolve_tree(config.tree_source, data.num_classes);
    std::string baseline_path =
        (fs::path(config.out_dir) / ("softmax_" + config_digest + ".mccm")).string();
    SoftmaxParams baseline;
    if (fs::exists(baseline_path)) {
      Model loaded = load_model(baseline_path);
      require(loaded.kind == ModelKind::Softmax, ErrorKind::HeaderMismatch,
              "baseline file is not a softmax model");
      baseline = loaded.softmax;
      baseline_note = "loaded " + baseline_path;
    } else {
      baseline = train_softmax(data, config.train);
      save_model(make_softmax_model(baseline), baseline_path);
      baseline_note = "trained " + baseline_path;
    }
    LeveragedParams params = train_leveraged(data, tree, baseline, config.train);
    model = make_leveraged_model(std::move(tree), std::move(params));
  } else {
    raise(ErrorKind::ConfigError, "unknown method '" + config.method + "'");
  }

  std::string model_path = model_path_for(config.out_dir, config.method);
  save_model(model, model_path);
  double train_loss = evaluate_scorer(*model.scorer(), data).log_loss;
  double wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  write_manifest((fs::path(config.out_dir) / (config.method + "_manifest.txt")).string(),
                 "train",
                 {{"data", config.data_path},
                  {"method", config.method},
                  {"tree", config.tree_source.empty() ? "" : config.tree_source},
                  {"epochs", std::to_string(config.train.epochs)},
                  {"lr", format_exact(config.train.learning_rate)},
                  {"batch", std::to_string(config.train.batch_size)},
                  {"seed", std::to_string(config.train.seed)},
                  {"keep-best", config.train.keep_best ? "1" : "0"},
                  {"out", config.out_dir}},
                 {"mcc train manifest", "config_digest " + config_digest,
                  "baseline " + baseline_note,
                  "wall_time_s " + std::to_string(wall_s),
                  "final_train_loss " + std::to_string(train_loss)});

  log << "trained " << config.method << " -> " << model_path
      << "  (train log-loss " << format_nats(train_loss) << ")\n";
  return kExitOk;
}

namespace {

struct EvalSection {
  std::string label;
  LossReport report;
  NodeBreakdown breakdown;
  bool has_breakdown = false;
};

void print_eval_text(std::ostream& out, const std::string& method,
                     const std::vector<EvalSection>& sections, double unit_scale,
                     const std::string& units) {
  out << "method: " << method << " (losses in " << units << ")\n";
  out << "dataset      log_loss  zero_one   regret\n";
  for (const EvalSection& section : sections) {
    out << section.label;
    for (std::size_t pad = section.label.size(); pad < 13; ++pad) out << ' ';
    out << format_nats(section.report.log_loss * unit_scale) << "    "
        << format_nats(section.report.zero_one_error) << "    "
        << (section.report.regret ? format_nats(*section.report.regret * unit_scale) : "-")
        << "\n";
  }
  for (const EvalSection& section : sections) {
    if (!section.has_breakdown) continue;
    out << "per-node binary log-losses (" << section.label << "):\n";
    out << "node   weight  log_loss  weighted\n";
    for (const NodeLossEntry& entry : section.breakdown.entries) {
      out << entry.node;
      for (std::size_t pad = std::to_string(entry.node).size(); pad < 7; ++pad) out << ' ';
      out << format_nats(entry.weight) << "  " << format_nats(entry.binary_log_loss * unit_scale)
          << "    " << format_nats(entry.weight * entry.binary_log_loss * unit_scale) << "\n";
    }
    out << "weighted sum " << format_nats(section.breakdown.weighted_sum * unit_scale)
        << " (path total " << format_nats(section.breakdown.path_total * unit_scale) << ", gap "
        << section.breakdown.gap << ")\n";
  }
}

void print_eval_delimited(std::ostream& out, const std::string& method,
                          const std::vector<EvalSection>& sections, double unit_scale) {
  out << "method,dataset,log_loss,zero_one,regret\n";
  for (const EvalSection& section : sections) {
    out << method << ',' << section.label << ','
        << format_nats(section.report.log_loss * unit_scale) << ','
        << format_nats(section.report.zero_one_error) << ','
        << (section.report.regret ? format_nats(*section.report.regret * unit_scale) : "")
        << "\n";
  }
  for (const EvalSection& section : sections) {
    if (!section.has_breakdown) continue;
    for (const NodeLossEntry& entry : section.breakdown.entries) {
      out << method << ',' << section.label << "_node" << entry.node << ','
          << format_nats(entry.binary_log_loss * unit_scale) << ',' << format_nats(entry.weight)
          << ",\n";
    }
  }
}

}  // namespace

int run_eval(const EvalCmdConfig& config, std::ostream& log) {
  require(config.format == "text" || config.format == "delimited", ErrorKind::ConfigError,
          "format must be text or delimited");
  require(config.units == "nats" || config.units == "bits", ErrorKind::ConfigError,
          "units must be nats or bits");
  const double unit_scale = config.units == "bits" ? 1.0 / std::log(2.0) : 1.0;
  require(!config.train_data.empty() || !config.test_data.empty(), ErrorKind::ConfigError,
          "eval needs --train-data and/or --test-data");
  Model model = load_model(config.model_path);
  MulticlassScorerPtr scorer = model.scorer();

  std::vector<EvalSection> sections;
  auto add_section = [&](const std::string& label, const std::string& path) {
    if (path.empty()) return;
    LabeledDataset data = load_dataset(path);
    require(data.dim() == model.dim, ErrorKind::ShapeMismatch,
            "dataset dim " + std::to_string(data.dim()) + " != model dim " +
                std::to_string(model.dim));
    EvalSection section;
    section.label = label;
    section.report = evaluate_scorer(*scorer, data);
    if (model.kind == ModelKind::Hierarchical || model.kind == ModelKind::Leveraged) {
      section.breakdown = node_breakdown(model, data);
      section.has_breakdown = true;
      require(section.breakdown.gap <= 1e-9, ErrorKind::ViolationFound,
              "per-node weighted sum does not reconstruct the total (gap " +
                  std::to_string(section.breakdown.gap) + ")");
    }
    sections.push_back(std::move(section));
  };
  add_section("train", config.train_data);
  add_section("test", config.test_data);

  std::ostringstream rendered;
  if (config.format == "text") {
    print_eval_text(rendered, model_kind_name(model.kind), sections, unit_scale, config.units);
  } else {
    print_eval_delimited(rendered, model_kind_name(model.kind), sections, unit_scale);
  }
  log << rendered.str();
  if (!config.report_path.empty()) {
    std::ofstream out(config.report_path, std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::IoError,
            "cannot write '" + config.report_path + "'");
    out << rendered.str();
  }
  return kExitOk;
}

namespace {

bool suite_has(const std::vector<std::string>& suite, const char* name) {
  return std::ranges::find(suite, std::string("all")) != suite.end() ||
         std::ranges::find(suite, std::string(name)) != suite.end();
}

json result_to_json(const TheoremCheckResult& result) {
  json j;
  j["name"] = result.name;
  j["trials"] = result.trials;
  j["tolerance"] = result.tolerance;
  j["equality"] = result.equality;
  j["max_violation"] = result.max_violation;
  j["max_slack"] = result.max_slack;
  j["pass"] = result.pass;
  for (const auto& [key, value] : result.extras) j[key] = value;
  if (!result.pass) j["violation_inputs"] = result.violation_inputs;
  return j;
}

}  // namespace

int run_verify(const VerifyCmdConfig& config, std::ostream& log) {
  require(config.trials >= 1, ErrorKind::ConfigError, "trials must be >= 1");
  for (const std::string& name : config.suite) {
    static const char* known[] = {"all", "ova", "tree", "cova", "dpi", "conditional", "pinsker"};
    require(std::ranges::find(known, name) != std::end(known), ErrorKind::ConfigError,
            "unknown check '" + name + "'");
  }
  std::vector<TheoremCheckResult> results;
  const int k_min = 2, k_max = 10;

  if (suite_has(config.suite, "ova")) {
    results.push_back(check_ova_bound(config.trials, k_min, k_max, config.seed));
  }
  if (suite_has(config.suite, "tree")) {
    results.push_back(check_tree_decomposition(
        config.trials, k_min, k_max, config.seed,
        config.inject_fault ? DecompositionFault::RotateNodes : DecompositionFault::None));
  }
  if (suite_has(config.suite, "cova")) {
    results.push_back(check_cova_decomposition(config.trials, k_min, k_max, config.seed));
  }
  if (suite_has(config.suite, "dpi")) {
    results.push_back(check_dpi_loose_bound(config.trials, k_min, k_max, config.seed));
  }
  if (suite_has(config.suite, "conditional") || suite_has(config.suite, "pinsker")) {
    // Self-contained data-backed checks on a small fresh scenario-A draw.
    GaussianMixtureSpec spec;
    spec.num_classes = 10;
    spec.dim = 10;
    spec.scenario = Scenario::A;
    spec.sigma = 1.8;
    spec.seed = config.seed;
    Mixture mixture = Mixture::from_spec(spec);
    LabeledDataset train = mixture.sample(3000, rng::kTrainSamples);
    LabeledDataset eval = mixture.sample(3000, rng::kTestSamples);
    TrainConfig quick;
    quick.epochs = 5;
    quick.seed = config.seed;
    if (suite_has(config.suite, "conditional")) {
      SoftmaxParams params = train_softmax(train, quick);
      auto stream = rng::stream_for(config.seed, rng::kGeneric, 0);
      ClassTree tree = sample_random_tree(stream, spec.num_classes);
      results.push_back(check_conditional_decomposition(eval, tree, SoftmaxScorer(params)));
    }
    if (suite_has(config.suite, "pinsker")) {
      OvaScorer ova(train_ova(train, quick));
      results.push_back(check_pinsker_zero_one(eval, ova));
    }
  }
  require(!results.empty(), ErrorKind::ConfigError, "no known checks in the requested suite");

  bool all_pass = true;
  log << "check                       trials  max_violation  max_slack    status\n";
  for (const TheoremCheckResult& result : results) {
    all_pass = all_pass && result.pass;
    char line[160];
    std::snprintf(line, sizeof line, "%-26s %7d  %13.3e  %10.3e   %s\n", result.name.c_str(),
                  result.trials, result.max_violation, result.max_slack,
                  result.pass ? "pass" : "FAIL");
    log << line;
  }
  if (!config.report_path.empty()) {
    json report = json::array();
    for (const TheoremCheckResult& result : results) report.push_back(result_to_json(result));
    std::ofstream out(config.report_path, std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::IoError,
            "cannot write '" + config.report_path + "'");
    out << report.dump(2) << "\n";
  }
  return all_pass ? kExitOk : kExitVerification;
}

int run_tree(const TreeCmdConfig& config, std::ostream& log) {
  ClassTree tree = resolve_tree(config.source, config.classes);
  log << "tree: " << serialize_tree(tree) << "\n";
  log << "classes: " << tree.num_classes() << ", internal nodes: " << tree.num_nodes()
      << ", depth: " << tree.depth() << "\n";
  log << "node  one_branch | zero_branch\n";
  for (int j = 0; j < tree.num_nodes(); ++j) {
    const InternalNode& node = tree.node(j);
    log << j << "     {";
    for (std::size_t i = 0; i < node.one_branch.size(); ++i) {
      log << (i ? "," : "") << node.one_branch[i];
    }
    log << "} | {";
    for (std::size_t i = 0; i < node.zero_branch.size(); ++i) {
      log << (i ? "," : "") << node.zero_branch[i];
    }
    log << "}\n";
  }
  log << "codewords:\n";
  for (int c = 0; c < tree.num_classes(); ++c) {
    log << "  " << c << " -> " << tree.codeword(c) << "\n";
  }
  return kExitOk;
}

}  // namespace mcc
