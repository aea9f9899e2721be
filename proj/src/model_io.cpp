#include "mcc/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mcc {

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Softmax: return "softmax";
    case ModelKind::Ova: return "ova";
    case ModelKind::Hierarchical: return "hierarchical";
    case ModelKind::Leveraged: return "leveraged";
  }
  return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "softmax") return ModelKind::Softmax;
  if (name == "ova") return ModelKind::Ova;
  if (name == "hierarchical") return ModelKind::Hierarchical;
  if (name == "leveraged") return ModelKind::Leveraged;
  raise(ErrorKind::ConfigError, "unknown model kind '" + name + "'");
}

MulticlassScorerPtr Model::scorer() const {
  switch (kind) {
    case ModelKind::Softmax:
      return softmax_scorer(softmax);
    case ModelKind::Ova:
      return ova_compose(binaries);
    case ModelKind::Hierarchical:
      return hierarchical_compose(*tree, binaries);
    case ModelKind::Leveraged:
      return leveraged_scorer(*tree, leveraged);
  }
  raise(ErrorKind::InvalidArgument, "corrupt model kind");
}

Model make_softmax_model(SoftmaxParams params) {
  Model m;
  m.kind = ModelKind::Softmax;
  m.num_classes = params.num_classes();
  m.dim = params.dim();
  m.softmax = std::move(params);
  return m;
}

Model make_ova_model(std::vector<BinaryScorerPtr> binaries, int dim) {
  Model m;
  m.kind = ModelKind::Ova;
  m.num_classes = static_cast<int>(binaries.size());
  m.dim = dim;
  m.binaries = std::move(binaries);
  return m;
}

Model make_hierarchical_model(ClassTree tree, std::vector<BinaryScorerPtr> node_scorers, int dim) {
  Model m;
  m.kind = ModelKind::Hierarchical;
  m.num_classes = tree.num_classes();
  m.dim = dim;
  m.tree.emplace(std::move(tree));
  m.binaries = std::move(node_scorers);
  return m;
}

Model make_leveraged_model(ClassTree tree, LeveragedParams params) {
  Model m;
  m.kind = ModelKind::Leveraged;
  m.num_classes = tree.num_classes();
  m.dim = params.dim();
  m.tree.emplace(std::move(tree));
  m.leveraged = std::make_shared<const LeveragedParams>(std::move(params));
  return m;
}

namespace {

void append_doubles(std::vector<double>& blob, std::span<const double> values) {
  blob.insert(blob.end(), values.begin(), values.end());
}

void write_doubles_le(std::ostream& out, const std::vector<double>& values) {
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

std::vector<double> read_doubles_le(std::istream& in, std::size_t count) {
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    require(static_cast<bool>(in), ErrorKind::TruncatedFile, "blob shorter than the header claims");
    std::uint64_t bits = 0;
    for (int j = 0; j < 8; ++j) bits |= static_cast<std::uint64_t>(bytes[j]) << (8 * j);
    values[i] = std::bit_cast<double>(bits);
  }
  return values;
}

// Flattens the binary components: logistic scorers contribute their weight
// vector, constants a single value. Header lines record which is which.
void flatten_binaries(const std::vector<BinaryScorerPtr>& binaries, int dim, std::ostream& header,
                      std::vector<double>& blob) {
  for (std::size_t i = 0; i < binaries.size(); ++i) {
    if (const auto* logistic = dynamic_cast<const LogisticScorer*>(binaries[i].get())) {
      require(static_cast<int>(logistic->weights().size()) == dim, ErrorKind::ShapeMismatch,
              "logistic weight length does not match model dim");
      header << "scorer " << i << " logistic\n";
      append_doubles(blob, logistic->weights());
    } else if (const auto* constant = dynamic_cast<const ConstantScorer*>(binaries[i].get())) {
      header << "scorer " << i << " constant\n";
      blob.push_back(constant->value());
    } else {
      raise(ErrorKind::InvalidArgument, "only logistic/constant components can be persisted");
    }
  }
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
  std::ostringstream header;
  std::vector<double> blob;
  header << "MCCM1\n";
  header << "kind " << model_kind_name(model.kind) << "\n";
  header << "classes " << model.num_classes << "\n";
  header << "dim " << model.dim << "\n";
  switch (model.kind) {
    case ModelKind::Softmax:
      for (std::int64_t j = 0; j < model.softmax.betas.rows(); ++j) {
        append_doubles(blob, model.softmax.betas.row(j));
      }
      break;
    case ModelKind::Ova:
      flatten_binaries(model.binaries, model.dim, header, blob);
      break;
    case ModelKind::Hierarchical:
      header << "tree " << serialize_tree(*model.tree) << "\n";
      flatten_binaries(model.binaries, model.dim, header, blob);
      break;
    case ModelKind::Leveraged:
      header << "tree " << serialize_tree(*model.tree) << "\n";
      for (const NodeParams& np : model.leveraged->nodes) {
        for (std::int64_t i = 0; i < np.gammas.rows(); ++i) append_doubles(blob, np.gammas.row(i));
      }
      break;
  }
  header << "blob " << blob.size() << "\n";
  header << "end\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::IoError, "cannot open '" + path + "' for writing");
  out << header.str();
  write_doubles_le(out, blob);
  require(static_cast<bool>(out), ErrorKind::IoError, "short write to '" + path + "'");
}

namespace {

struct HeaderReader {
  std::istream& in;

  std::string next_line() {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::TruncatedFile,
            "model header ended early");
    return line;
  }

  // Expects "<key> <rest>" and returns rest.
  std::string expect(const std::string& key) {
    std::string line = next_line();
    require(line.rfind(key + " ", 0) == 0, ErrorKind::HeaderMismatch,
            "expected header line '" + key + " ...', got '" + line + "'");
    return line.substr(key.size() + 1);
  }
};

}  // namespace

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::IoError, "cannot open '" + path + "'");
  HeaderReader reader{in};
  require(reader.next_line() == "MCCM1", ErrorKind::BadMagic, "not a model file: " + path);

  Model model;
  model.kind = model_kind_from_name(reader.expect("kind"));
  model.num_classes = std::stoi(reader.expect("classes"));
  model.dim = std::stoi(reader.expect("dim"));
  require(model.num_classes >= 2 && model.dim >= 1, ErrorKind::HeaderMismatch,
          "implausible model shape");

  std::vector<std::pair<int, std::string>> scorer_kinds;
  std::string line = reader.next_line();
  if (line.rfind("tree ", 0) == 0) {
    model.tree.emplace(parse_tree(line.substr(5)));
    require(model.tree->num_classes() == model.num_classes, ErrorKind::HeaderMismatch,
            "tree class count disagrees with header");
    line = reader.next_line();
  }
  while (line.rfind("scorer ", 0) == 0) {
    std::istringstream fields(line.substr(7));
    int index = -1;
    std::string kind;
    fields >> index >> kind;
    require(index == static_cast<int>(scorer_kinds.size()) &&
                (kind == "logistic" || kind == "constant"),
            ErrorKind::HeaderMismatch, "bad scorer line '" + line + "'");
    scorer_kinds.emplace_back(index, kind);
    line = reader.next_line();
  }
  require(line.rfind("blob ", 0) == 0, ErrorKind::HeaderMismatch, "missing blob line");
  std::size_t blob_count = std::stoull(line.substr(5));
  require(reader.next_line() == "end", ErrorKind::HeaderMismatch, "missing end line");

  std::vector<double> blob = read_doubles_le(in, blob_count);
  std::size_t cursor = 0;
  auto take = [&](std::size_t count) {
    require(cursor + count <= blob.size(), ErrorKind::HeaderMismatch,
            "blob smaller than the model shape requires");
    std::vector<double> values(blob.begin() + cursor, blob.begin() + cursor + count);
    cursor += count;
    return values;
  };

  auto read_binaries = [&](int expected_count) {
    require(static_cast<int>(scorer_kinds.size()) == expected_count, ErrorKind::HeaderMismatch,
            "scorer count disagrees with model kind");
    for (const auto& [index, kind] : scorer_kinds) {
      if (kind == "logistic") {
        model.binaries.push_back(std::make_shared<LogisticScorer>(take(model.dim)));
      } else {
        model.binaries.push_back(std::make_shared<ConstantScorer>(take(1).front()));
      }
    }
  };

  switch (model.kind) {
    case ModelKind::Softmax: {
      model.softmax.betas = Matrix(model.num_classes, model.dim);
      for (int j = 0; j < model.num_classes; ++j) {
        auto row = take(model.dim);
        std::ranges::copy(row, model.softmax.betas.row(j).begin());
      }
      break;
    }
    case ModelKind::Ova:
      read_binaries(model.num_classes);
      break;
    case ModelKind::Hierarchical:
      require(model.tree.has_value(), ErrorKind::HeaderMismatch, "hierarchical model without tree");
      read_binaries(model.num_classes - 1);
      break;
    case ModelKind::Leveraged: {
      require(model.tree.has_value(), ErrorKind::HeaderMismatch, "leveraged model without tree");
      LeveragedParams params;
      params.num_classes = model.num_classes;
      params.nodes.resize(model.tree->num_nodes());
      for (int j = 0; j < model.tree->num_nodes(); ++j) {
        NodeParams& np = params.nodes[j];
        np.classes = model.tree->node(j).subset;
        np.gammas = Matrix(static_cast<std::int64_t>(np.classes.size()), model.dim);
        for (std::size_t i = 0; i < np.classes.size(); ++i) {
          auto row = take(model.dim);
          std::ranges::copy(row, np.gammas.row(i).begin());
        }
      }
      model.leveraged = std::make_shared<const LeveragedParams>(std::move(params));
      break;
    }
  }
  require(cursor == blob.size(), ErrorKind::HeaderMismatch, "blob larger than the model shape");
  return model;
}

}  // namespace mcc
