#include "mcc/train.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>

#include "mcc/parallel.hpp"

namespace mcc {

void validate(const TrainConfig& cfg) {
  require(cfg.learning_rate > 0.0, ErrorKind::InvalidArgument, "learning_rate must be positive");
  require(cfg.batch_size >= 1, ErrorKind::InvalidArgument, "batch_size must be >= 1");
  require(cfg.epochs >= 0, ErrorKind::InvalidArgument, "epochs must be >= 0");
}

namespace {

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// parallel_for_uneven that survives throwing bodies: the first exception wins
// and is rethrown on the calling thread.
template <typename Body>
void parallel_for_uneven_throwing(std::int64_t n, Body&& body) {
  std::exception_ptr error;
  std::mutex error_mutex;
  parallel_for_uneven(n, [&](std::int64_t i) {
    try {
      body(i);
    } catch (...) {
      std::scoped_lock lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  });
  if (error) std::rethrow_exception(error);
}

std::vector<std::int64_t> identity_positions(std::int64_t n) {
  std::vector<std::int64_t> positions(n);
  std::iota(positions.begin(), positions.end(), 0);
  return positions;
}

}  // namespace

NodeTrainSet make_node_trainset(const LabeledDataset& data, const ClassTree& tree, int node) {
  require(node >= 0 && node < tree.num_nodes(), ErrorKind::InvalidArgument, "node out of range");
  require(tree.num_classes() == data.num_classes, ErrorKind::AlignmentMismatch,
          "tree class count does not match dataset");
  const InternalNode& n = tree.node(node);
  std::vector<signed char> side(data.num_classes, -1);
  for (int c : n.zero_branch) side[c] = 0;
  for (int c : n.one_branch) side[c] = 1;

  NodeTrainSet set;
  set.features = &data.features;
  set.classes = n.subset;
  set.side_one.assign(n.subset.size(), 0);
  for (std::size_t i = 0; i < n.subset.size(); ++i) set.side_one[i] = side[n.subset[i]] == 1;
  for (std::int64_t i = 0; i < data.size(); ++i) {
    int label = data.labels[i];
    require(label >= 0 && label < data.num_classes, ErrorKind::LabelOutOfRange,
            "label out of range");
    if (side[label] < 0) continue;
    set.rows.push_back(static_cast<int>(i));
    set.labels01.push_back(side[label]);
  }
  require(!set.rows.empty(), ErrorKind::EmptyNodeSet,
          "no training sample has a label in the subset of node " + std::to_string(node));
  return set;
}

NodeTrainSet make_indicator_trainset(const LabeledDataset& data, int class_id) {
  require(class_id >= 0 && class_id < data.num_classes, ErrorKind::InvalidArgument,
          "class out of range");
  NodeTrainSet set;
  set.features = &data.features;
  set.rows.resize(data.size());
  std::iota(set.rows.begin(), set.rows.end(), 0);
  set.labels01.resize(data.size());
  for (std::int64_t i = 0; i < data.size(); ++i) set.labels01[i] = data.labels[i] == class_id;
  return set;
}

namespace {

// Mean binary log-loss of a weight vector over the node set; per-sample terms
// are filled in parallel and summed in index order.
double binary_mean_loss(const std::vector<double>& weights, const NodeTrainSet& data) {
  const std::int64_t n = data.size();
  std::vector<double> nll(n);
  parallel_for(n, [&](std::int64_t i) {
    double z = dot(weights, data.features->row(data.rows[i]));
    nll[i] = data.labels01[i] ? softplus(-z) : softplus(z);
  });
  double total = 0.0;
  for (double v : nll) total += v;
  return total / static_cast<double>(n);
}

}  // namespace

BinaryScorerPtr train_binary_logistic(const NodeTrainSet& data, const TrainConfig& cfg,
                                      rng::StreamTag tag, std::uint64_t stream_index) {
  validate(cfg);
  const std::int64_t n = data.size();
  std::int64_t ones = 0;
  for (int a : data.labels01) ones += a;
  if (ones == 0 || ones == n) {
    double freq = static_cast<double>(ones) / static_cast<double>(n);
    return std::make_shared<ConstantScorer>(std::clamp(freq, 1e-12, 1.0 - 1e-12));
  }

  const int dim = static_cast<int>(data.features->cols());
  std::vector<double> weights(dim, 0.0), grad(dim);
  std::vector<double> best = weights;
  double best_loss = cfg.keep_best ? binary_mean_loss(weights, data) : 0.0;

  auto stream = rng::stream_for(cfg.seed, tag, stream_index);
  std::vector<std::int64_t> order = identity_positions(n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng::shuffle(std::span<std::int64_t>(order), stream);
    for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
      std::int64_t stop = std::min<std::int64_t>(start + cfg.batch_size, n);
      std::ranges::fill(grad, 0.0);
      for (std::int64_t b = start; b < stop; ++b) {
        std::int64_t i = order[b];
        auto x = data.features->row(data.rows[i]);
        double coef = sigmoid(dot(weights, x)) - data.labels01[i];
        for (int j = 0; j < dim; ++j) grad[j] += coef * x[j];
      }
      double scale = cfg.learning_rate / static_cast<double>(stop - start);
      for (int j = 0; j < dim; ++j) weights[j] -= scale * grad[j];
    }
    if (cfg.keep_best) {
      double loss = binary_mean_loss(weights, data);
      if (loss < best_loss) {
        best_loss = loss;
        best = weights;
      }
    }
  }
  return std::make_shared<LogisticScorer>(cfg.keep_best ? std::move(best) : std::move(weights));
}

double softmax_loss_and_grads(const Matrix& betas, const Matrix& features,
                              const std::vector<int>& labels,
                              std::span<const std::int64_t> positions, Matrix* grads_out) {
  const int k = static_cast<int>(betas.rows());
  const int dim = static_cast<int>(betas.cols());
  std::vector<std::int64_t> all;
  if (positions.empty()) {
    all = identity_positions(features.rows());
    positions = all;
  }
  if (grads_out != nullptr) *grads_out = Matrix(k, dim);

  double loss = 0.0;
  std::vector<double> z(k);
  for (std::int64_t i : positions) {
    auto x = features.row(i);
    double max_z = -HUGE_VAL;
    for (int j = 0; j < k; ++j) {
      z[j] = dot(betas.row(j), x);
      max_z = std::max(max_z, z[j]);
    }
    double total = 0.0;
    for (int j = 0; j < k; ++j) total += std::exp(z[j] - max_z);
    loss += max_z + std::log(total) - z[labels[i]];
    if (grads_out != nullptr) {
      for (int j = 0; j < k; ++j) {
        double coef = std::exp(z[j] - max_z) / total - (labels[i] == j ? 1.0 : 0.0);
        auto row = grads_out->row(j);
        for (int m = 0; m < dim; ++m) row[m] += coef * x[m];
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(positions.size());
  if (grads_out != nullptr) {
    for (std::int64_t i = 0; i < grads_out->size(); ++i) grads_out->data()[i] *= inv_n;
  }
  return loss * inv_n;
}

namespace {

// Full-set mean softmax loss with a parallel per-sample pass.
double softmax_mean_loss(const Matrix& betas, const Matrix& features,
                         const std::vector<int>& labels) {
  const std::int64_t n = features.rows();
  const int k = static_cast<int>(betas.rows());
  std::vector<double> nll(n);
  parallel_for(n, [&](std::int64_t i) {
    auto x = features.row(i);
    double max_z = -HUGE_VAL;
    double zy = 0.0;
    std::vector<double> z(k);
    for (int j = 0; j < k; ++j) {
      z[j] = dot(betas.row(j), x);
      max_z = std::max(max_z, z[j]);
    }
    zy = z[labels[i]];
    double total = 0.0;
    for (int j = 0; j < k; ++j) total += std::exp(z[j] - max_z);
    nll[i] = max_z + std::log(total) - zy;
  });
  double total = 0.0;
  for (double v : nll) total += v;
  return total / static_cast<double>(n);
}

}  // namespace

SoftmaxParams train_softmax(const LabeledDataset& data, const TrainConfig& cfg) {
  validate(cfg);
  const int k = data.num_classes;
  require(k >= 2, ErrorKind::InvalidArgument, "softmax needs K >= 2");
  std::vector<char> present(k, 0);
  for (int label : data.labels) {
    require(label >= 0 && label < k, ErrorKind::LabelOutOfRange, "label out of range");
    present[label] = 1;
  }
  for (int c = 0; c < k; ++c) {
    require(present[c], ErrorKind::MissingClass,
            "class " + std::to_string(c) + " absent from the training set");
  }

  const std::int64_t n = data.size();
  const int dim = data.dim();
  SoftmaxParams params;
  params.betas = Matrix(k, dim);
  Matrix best = params.betas;
  double best_loss = cfg.keep_best ? softmax_mean_loss(params.betas, data.features, data.labels) : 0.0;

  auto stream = rng::stream_for(cfg.seed, rng::kSoftmaxTrain, 0);
  std::vector<std::int64_t> order = identity_positions(n);
  Matrix grads;
  std::vector<std::int64_t> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng::shuffle(std::span<std::int64_t>(order), stream);
    for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
      std::int64_t stop = std::min<std::int64_t>(start + cfg.batch_size, n);
      batch.assign(order.begin() + start, order.begin() + stop);
      softmax_loss_and_grads(params.betas, data.features, data.labels, batch, &grads);
      for (std::int64_t i = 0; i < params.betas.size(); ++i) {
        params.betas.data()[i] -= cfg.learning_rate * grads.data()[i];
      }
    }
    if (cfg.keep_best) {
      double loss = softmax_mean_loss(params.betas, data.features, data.labels);
      if (loss < best_loss) {
        best_loss = loss;
        best = params.betas;
      }
    }
  }
  if (cfg.keep_best) params.betas = std::move(best);
  return params;
}

namespace {

void check_node_params(const NodeParams& params, const NodeTrainSet& data) {
  require(params.classes == data.classes, ErrorKind::MissingClassParam,
          "params must cover exactly the node subset");
  require(data.features != nullptr && params.gammas.rows() ==
              static_cast<std::int64_t>(params.classes.size()) &&
              params.gammas.cols() == data.features->cols(),
          ErrorKind::ShapeMismatch, "gamma shape does not match the node");
}

}  // namespace

NodeLossGrads node_loss_and_grads(const NodeParams& params, const NodeTrainSet& data,
                                  std::span<const std::int64_t> positions) {
  check_node_params(params, data);
  const int width = static_cast<int>(params.classes.size());
  const int dim = static_cast<int>(params.gammas.cols());
  std::vector<std::int64_t> all;
  if (positions.empty()) {
    all = identity_positions(data.size());
    positions = all;
  }

  NodeLossGrads out;
  out.grads = Matrix(width, dim);
  std::vector<double> z(width), e(width);
  for (std::int64_t pos : positions) {
    auto x = data.features->row(data.rows[pos]);
    const bool side = data.labels01[pos] != 0;
    double max_z = -HUGE_VAL;
    for (int i = 0; i < width; ++i) {
      z[i] = dot(params.gammas.row(i), x);
      max_z = std::max(max_z, z[i]);
    }
    double total_all = 0.0, total_side = 0.0;
    for (int i = 0; i < width; ++i) {
      e[i] = std::exp(z[i] - max_z);
      total_all += e[i];
      if ((data.side_one[i] != 0) == side) total_side += e[i];
    }
    out.loss += std::log(total_all) - std::log(total_side);
    for (int i = 0; i < width; ++i) {
      double coef = e[i] / total_all;
      if ((data.side_one[i] != 0) == side) coef -= e[i] / total_side;
      if (coef == 0.0) continue;
      auto row = out.grads.row(i);
      for (int m = 0; m < dim; ++m) row[m] += coef * x[m];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(positions.size());
  out.loss *= inv_n;
  for (std::int64_t i = 0; i < out.grads.size(); ++i) out.grads.data()[i] *= inv_n;
  return out;
}

double node_loss(const NodeParams& params, const NodeTrainSet& data) {
  check_node_params(params, data);
  const int width = static_cast<int>(params.classes.size());
  const std::int64_t n = data.size();
  std::vector<double> nll(n);
  parallel_for(n, [&](std::int64_t pos) {
    auto x = data.features->row(data.rows[pos]);
    const bool side = data.labels01[pos] != 0;
    double max_z = -HUGE_VAL;
    std::vector<double> z(width);
    for (int i = 0; i < width; ++i) {
      z[i] = dot(params.gammas.row(i), x);
      max_z = std::max(max_z, z[i]);
    }
    double total_all = 0.0, total_side = 0.0;
    for (int i = 0; i < width; ++i) {
      double e = std::exp(z[i] - max_z);
      total_all += e;
      if ((data.side_one[i] != 0) == side) total_side += e;
    }
    nll[pos] = std::log(total_all) - std::log(total_side);
  });
  double total = 0.0;
  for (double v : nll) total += v;
  return total / static_cast<double>(n);
}

namespace {

void train_one_node(NodeParams& params, const NodeTrainSet& data, const TrainConfig& cfg,
                    std::uint64_t node_index) {
  const std::int64_t n = data.size();
  Matrix best = params.gammas;
  double best_loss = cfg.keep_best ? node_loss(params, data) : 0.0;

  auto stream = rng::stream_for(cfg.seed, rng::kLeveragedTrain, node_index);
  std::vector<std::int64_t> order = identity_positions(n);
  std::vector<std::int64_t> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng::shuffle(std::span<std::int64_t>(order), stream);
    for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
      std::int64_t stop = std::min<std::int64_t>(start + cfg.batch_size, n);
      batch.assign(order.begin() + start, order.begin() + stop);
      NodeLossGrads step = node_loss_and_grads(params, data, batch);
      for (std::int64_t i = 0; i < params.gammas.size(); ++i) {
        params.gammas.data()[i] -= cfg.learning_rate * step.grads.data()[i];
      }
    }
    if (cfg.keep_best) {
      double loss = node_loss(params, data);
      if (loss < best_loss) {
        best_loss = loss;
        best = params.gammas;
      }
    }
  }
  if (cfg.keep_best) params.gammas = std::move(best);
}

}  // namespace

LeveragedParams train_leveraged(const LabeledDataset& data, const ClassTree& tree,
                                LeveragedParams init, const TrainConfig& cfg) {
  validate(cfg);
  require(static_cast<int>(init.nodes.size()) == tree.num_nodes(), ErrorKind::AlignmentMismatch,
          "init does not cover the tree nodes");
  for (int j = 0; j < tree.num_nodes(); ++j) {
    require(init.nodes[j].classes == tree.node(j).subset, ErrorKind::MissingClassParam,
            "init params must cover node " + std::to_string(j));
  }
  LeveragedParams params = std::move(init);
  parallel_for_uneven_throwing(tree.num_nodes(), [&](std::int64_t j) {
    NodeTrainSet node_data;
    try {
      node_data = make_node_trainset(data, tree, static_cast<int>(j));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::EmptyNodeSet) return;  // node keeps its init
      throw;
    }
    train_one_node(params.nodes[j], node_data, cfg, static_cast<std::uint64_t>(j));
  });
  return params;
}

LeveragedParams train_leveraged(const LabeledDataset& data, const ClassTree& tree,
                                const SoftmaxParams& init, const TrainConfig& cfg) {
  return train_leveraged(data, tree, tie_to_softmax(init, tree), cfg);
}

std::vector<BinaryScorerPtr> train_ova(const LabeledDataset& data, const TrainConfig& cfg) {
  validate(cfg);
  std::vector<BinaryScorerPtr> scorers(data.num_classes);
  parallel_for_uneven_throwing(data.num_classes, [&](std::int64_t c) {
    NodeTrainSet set = make_indicator_trainset(data, static_cast<int>(c));
    scorers[c] = train_binary_logistic(set, cfg, rng::kOvaTrain, static_cast<std::uint64_t>(c));
  });
  return scorers;
}

std::vector<BinaryScorerPtr> train_hierarchical(const LabeledDataset& data, const ClassTree& tree,
                                                const TrainConfig& cfg) {
  validate(cfg);
  std::vector<BinaryScorerPtr> scorers(tree.num_nodes());
  parallel_for_uneven_throwing(tree.num_nodes(), [&](std::int64_t j) {
    NodeTrainSet set = make_node_trainset(data, tree, static_cast<int>(j));
    scorers[j] = train_binary_logistic(set, cfg, rng::kNodeTrain, static_cast<std::uint64_t>(j));
  });
  return scorers;
}

SoftmaxParams fit_softmax_to_posteriors(const Matrix& features, const Matrix& posteriors) {
  require(features.rows() == posteriors.rows(), ErrorKind::LengthMismatch,
          "row count mismatch between features and posteriors");
  require(features.rows() >= features.cols(), ErrorKind::InvalidArgument,
          "need at least d+1 samples for the least-squares fit");
  const std::int64_t n = features.rows();
  const int dim = static_cast<int>(features.cols());
  const int k = static_cast<int>(posteriors.cols());

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      features.data(), n, dim);
  Eigen::MatrixXd gram = x.transpose() * x;
  Eigen::LDLT<Eigen::MatrixXd> solver(gram);
  require(solver.info() == Eigen::Success, ErrorKind::InvalidArgument,
          "feature Gram matrix is not factorizable");

  // Log-odds against the last class are affine in x whenever the posterior
  // family is a softmax; the last weight vector stays zero.
  SoftmaxParams params;
  params.betas = Matrix(k, dim);
  Eigen::VectorXd target(n);
  for (int j = 0; j + 1 < k; ++j) {
    for (std::int64_t i = 0; i < n; ++i) {
      double pj = posteriors.at(i, j), pk = posteriors.at(i, k - 1);
      require(pj > 0.0 && pk > 0.0, ErrorKind::SupportMismatch,
              "posteriors must be strictly positive for the log-odds fit");
      target(i) = std::log(pj) - std::log(pk);
    }
    Eigen::VectorXd weights = solver.solve(x.transpose() * target);
    for (int m = 0; m < dim; ++m) params.betas.at(j, m) = weights(m);
  }
  return params;
}

GradCheckReport check_gradients(const GradCheckFactory& factory, int trials, double step,
                                double tol, std::uint64_t seed) {
  require(step > 0.0 && tol > 0.0, ErrorKind::InvalidArgument, "step and tol must be positive");
  GradCheckReport report;
  report.trials = trials;
  report.tol = tol;
  for (int t = 0; t < trials; ++t) {
    GradCheckInstance instance = factory(rng::mix(seed, static_cast<std::uint64_t>(t)));
    const int dim = static_cast<int>(instance.params.size());
    std::vector<double> analytic(dim), scratch(dim);
    instance.loss_and_grad(instance.params, analytic);
    std::vector<double> probe = instance.params;
    for (int c = 0; c < dim; ++c) {
      double original = probe[c];
      probe[c] = original + step;
      double up = instance.loss_and_grad(probe, scratch);
      probe[c] = original - step;
      double down = instance.loss_and_grad(probe, scratch);
      probe[c] = original;
      double numeric = (up - down) / (2.0 * step);
      double rel = std::abs(analytic[c] - numeric) /
                   std::max({std::abs(analytic[c]), std::abs(numeric), 1.0});
      report.max_rel_err = std::max(report.max_rel_err, rel);
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

namespace {

// Small random node problem: a random tree over 3..6 classes, a random
// internal node, and ~30 Gaussian samples restricted to its subset.
struct NodeInstanceState {
  NodeTrainSet set;
  Matrix features;
  NodeParams params;
};

}  // namespace

GradCheckInstance make_node_loss_instance(std::uint64_t seed) {
  auto stream = rng::Stream(seed);
  const int k = 3 + static_cast<int>(stream.below(4));
  const int dim = 2 + static_cast<int>(stream.below(4));
  ClassTree tree = sample_random_tree(stream, k);
  const int node = static_cast<int>(stream.below(static_cast<std::uint64_t>(tree.num_nodes())));
  const InternalNode& n = tree.node(node);

  auto state = std::make_shared<NodeInstanceState>();
  const std::int64_t samples = 30;
  state->features = Matrix(samples, dim);
  state->set.rows.resize(samples);
  state->set.labels01.resize(samples);
  state->set.classes = n.subset;
  state->set.side_one.assign(n.subset.size(), 0);
  std::vector<int> one_sorted = n.one_branch;
  for (std::size_t i = 0; i < n.subset.size(); ++i) {
    state->set.side_one[i] = std::ranges::binary_search(one_sorted, n.subset[i]);
  }
  for (std::int64_t i = 0; i < samples; ++i) {
    for (int m = 0; m < dim - 1; ++m) state->features.at(i, m) = stream.normal();
    state->features.at(i, dim - 1) = 1.0;
    state->set.rows[i] = static_cast<int>(i);
    state->set.labels01[i] = static_cast<int>(stream.next() & 1);
  }
  state->set.features = &state->features;
  state->params.classes = n.subset;
  state->params.gammas = Matrix(static_cast<std::int64_t>(n.subset.size()), dim);

  GradCheckInstance instance;
  instance.params.resize(state->params.gammas.size());
  for (double& v : instance.params) v = 0.5 * stream.normal();
  instance.loss_and_grad = [state](std::span<const double> flat, std::span<double> grad_out) {
    std::copy(flat.begin(), flat.end(), state->params.gammas.data());
    NodeLossGrads result = node_loss_and_grads(state->params, state->set);
    std::copy(result.grads.data(), result.grads.data() + result.grads.size(), grad_out.begin());
    return result.loss;
  };
  return instance;
}

GradCheckInstance make_softmax_loss_instance(std::uint64_t seed) {
  auto stream = rng::Stream(seed);
  const int k = 3 + static_cast<int>(stream.below(4));
  const int dim = 2 + static_cast<int>(stream.below(4));
  const std::int64_t samples = 30;

  struct State {
    Matrix features;
    std::vector<int> labels;
    Matrix betas;
  };
  auto state = std::make_shared<State>();
  state->features = Matrix(samples, dim);
  state->labels.resize(samples);
  state->betas = Matrix(k, dim);
  for (std::int64_t i = 0; i < samples; ++i) {
    for (int m = 0; m < dim - 1; ++m) state->features.at(i, m) = stream.normal();
    state->features.at(i, dim - 1) = 1.0;
    state->labels[i] = static_cast<int>(stream.below(static_cast<std::uint64_t>(k)));
  }

  GradCheckInstance instance;
  instance.params.resize(state->betas.size());
  for (double& v : instance.params) v = 0.5 * stream.normal();
  instance.loss_and_grad = [state](std::span<const double> flat, std::span<double> grad_out) {
    std::copy(flat.begin(), flat.end(), state->betas.data());
    Matrix grads;
    double loss = softmax_loss_and_grads(state->betas, state->features, state->labels, {}, &grads);
    std::copy(grads.data(), grads.data() + grads.size(), grad_out.begin());
    return loss;
  };
  return instance;
}

}  // namespace mcc
