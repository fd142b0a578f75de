// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#include "robust_shift/synthdata.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "robust_shift/errors.hpp"

namespace robust_shift {
namespace {

using json = nlohmann::ordered_json;

constexpr std::uint64_t kStreamMeans = 1;
constexpr std::uint64_t kStreamTrain = 2;
constexpr std::uint64_t kStreamVal = 3;
constexpr std::uint64_t kStreamTest = 4;
constexpr const char* kFormat = "robust-shift-dataset";
constexpr int kVersion = 1;

double min_pairwise_distance(const std::vector<Vector>& points) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      best = std::min(best, (points[i] - points[j]).norm());
    }
  }
  return best;
}

Matrix random_orthogonal(int dim, Rng& rng) {
  Matrix g(dim, dim);
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < dim; ++c) g(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(dim, dim);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < dim; ++c) {
    if (r(c, c) < 0.0) q.col(c) = -q.col(c);
  }
  return q;
}

}  // namespace

void validate(const SynthConfig& config) {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (config.num_classes < 2) fail("num_classes must be >= 2");
  if (static_cast<int>(config.train_counts.size()) != config.num_classes) {
    fail("train_counts has " + std::to_string(config.train_counts.size()) +
         " entries for " + std::to_string(config.num_classes) + " classes");
  }
  for (int n : config.train_counts) {
    if (n < 0) fail("train counts must be >= 0");
  }
  if (config.val_count < 0 || config.test_count < 0) fail("split counts must be >= 0");
  if (config.d_inv < 1 || config.d_spu < 0) fail("d_inv must be >= 1 and d_spu >= 0");
  if (!(config.sigma >= 0.0)) fail("sigma must be >= 0");
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0)) fail("alpha must lie in [0, 1]");
  if (!(config.beta >= 0.0 && config.beta <= 1.0)) fail("beta must lie in [0, 1]");
  if (!(config.class_spacing > 0.0)) fail("class_spacing must be > 0");
  if (!(config.spurious_spacing >= 0.0)) fail("spurious_spacing must be >= 0");
  if (config.num_train_envs < 1) fail("num_train_envs must be >= 1");
  if (config.nodes_min < 1 || config.nodes_max < config.nodes_min) {
    fail("nodes range must satisfy 1 <= nodes_min <= nodes_max");
  }
  if (!(config.edge_prob >= 0.0 && config.edge_prob <= 1.0)) fail("edge_prob must lie in [0, 1]");
}

std::vector<Vector> gen_class_means(int num_classes, int dim, double spacing, Rng& rng,
                                    bool rotate) {
  if (num_classes < 1 || dim < 1) throw ConfigError("class means need C >= 1 and d >= 1");
  if (!(spacing >= 0.0)) throw ConfigError("spacing must be >= 0");
  std::vector<Vector> means;
  if (dim >= num_classes) {
    for (int c = 0; c < num_classes; ++c) means.push_back(spacing * Vector::Unit(dim, c));
    if (rotate) {
      const Matrix q = random_orthogonal(dim, rng);
      for (auto& m : means) m = q * m;
    }
    return means;
  }
  if (dim == 1 && num_classes > 1 && spacing > 0.0) {
    for (int c = 0; c < num_classes; ++c) means.push_back(Vector::Constant(1, spacing * c));
    return means;
  }
  // d < C: spread points at radius ~ spacing * C and reject crowded draws.
  const double radius = spacing * num_classes;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    means.clear();
    for (int c = 0; c < num_classes; ++c) {
      Vector v(dim);
      for (int k = 0; k < dim; ++k) v(k) = rng.normal(0.0, radius);
      means.push_back(std::move(v));
    }
    if (min_pairwise_distance(means) >= spacing) return means;
  }
  throw ConfigError("could not place " + std::to_string(num_classes) + " means in R^" +
                    std::to_string(dim) + " with spacing " + std::to_string(spacing));
}

SynthMeans make_means(const SynthConfig& config) {
  validate(config);
  Rng rng(child_seed(config.seed, kStreamMeans));
  SynthMeans means;
  means.class_means = gen_class_means(config.num_classes, config.d_inv,
                                      config.class_spacing, rng, config.rotate_means);
  for (int e = 0; e < config.num_envs(); ++e) {
    if (config.d_spu == 0) {
      means.spurious_means.emplace_back(config.num_classes, Vector(0));
      continue;
    }
    means.spurious_means.push_back(gen_class_means(
        config.num_classes, config.d_spu, config.spurious_spacing, rng, true));
  }
  return means;
}

GraphInstance sample_instance(int label, int env, const SynthConfig& config,
                              const SynthMeans& means, Rng& rng) {
  const int num_classes = config.num_classes;
  if (label < 0 || label >= num_classes) throw DomainError("class outside [0, C)");
  if (env < 0 || env >= static_cast<int>(means.spurious_means.size())) {
    throw DomainError("unknown environment " + std::to_string(env));
  }
  int spurious_class = label;
  if (!rng.bernoulli(config.beta)) {
    spurious_class = static_cast<int>(rng.below(num_classes - 1));
    if (spurious_class >= label) ++spurious_class;
  }
  const Vector& mu_inv = means.class_means[label];
  const Vector& mu_spu = means.spurious_means[env][spurious_class];

  const int n_nodes = config.nodes_min +
                      static_cast<int>(rng.below(config.nodes_max - config.nodes_min + 1));
  GraphInstance g;
  g.env = env;
  g.nodes.resize(n_nodes, config.feature_dim());
  for (int v = 0; v < n_nodes; ++v) {
    for (int k = 0; k < config.d_inv; ++k) g.nodes(v, k) = rng.normal(mu_inv(k), config.sigma);
    for (int k = 0; k < config.d_spu; ++k) {
      g.nodes(v, config.d_inv + k) = rng.normal(mu_spu(k), config.sigma);
    }
  }
  for (int u = 0; u < n_nodes; ++u) {
    for (int v = u + 1; v < n_nodes; ++v) {
      if (rng.bernoulli(config.edge_prob)) g.edges.emplace_back(u, v);
    }
  }
  g.label = label;
  if (rng.bernoulli(config.alpha)) {
    g.label = static_cast<int>(rng.below(num_classes));
    g.noisy = g.label != label;
  }
  return g;
}

std::vector<GraphInstance> Dataset::split(Split which) const {
  std::vector<GraphInstance> out;
  for (const auto& g : instances) {
    if (g.split == which) out.push_back(g);
  }
  return out;
}

std::vector<int> Dataset::label_counts(Split which) const {
  std::vector<int> counts(num_classes, 0);
  for (const auto& g : instances) {
    if (g.split == which) ++counts[g.label];
  }
  return counts;
}

Dataset generate_dataset(const SynthConfig& config) {
  validate(config);
  const SynthMeans means = make_means(config);
  SynthConfig clean = config;
  clean.alpha = 0.0;

  Dataset out;
  out.num_classes = config.num_classes;
  out.feature_dim = config.feature_dim();
  std::int64_t next_id = 0;

  auto emit = [&](Split split, std::uint64_t stream, const SynthConfig& cfg,
                  const std::vector<int>& counts) {
    std::uint64_t index = 0;
    for (int c = 0; c < config.num_classes; ++c) {
      for (int k = 0; k < counts[c]; ++k, ++index) {
        Rng rng(child_seed(config.seed, stream, index));
        const int env = split == Split::kTest
                            ? config.test_env()
                            : static_cast<int>(rng.below(config.num_train_envs));
        GraphInstance g = sample_instance(c, env, cfg, means, rng);
        g.id = next_id++;
        g.split = split;
        out.instances.push_back(std::move(g));
      }
    }
  };
  emit(Split::kTrain, kStreamTrain, config, config.train_counts);
  emit(Split::kVal, kStreamVal, clean, std::vector<int>(config.num_classes, config.val_count));
  emit(Split::kTest, kStreamTest, clean, std::vector<int>(config.num_classes, config.test_count));
  return out;
}

void write_dataset(const Dataset& dataset, std::ostream& out) {
  json header;
  header["format"] = kFormat;
  header["version"] = kVersion;
  header["num_classes"] = dataset.num_classes;
  header["feature_dim"] = dataset.feature_dim;
  out << header.dump() << '\n';
  for (const auto& g : dataset.instances) {
    json rec;
    rec["id"] = g.id;
    rec["split"] = split_name(g.split);
    rec["env"] = g.env;
    rec["label"] = g.label;
    rec["noisy"] = g.noisy;
    json nodes = json::array();
    for (Eigen::Index v = 0; v < g.nodes.rows(); ++v) {
      json row = json::array();
      for (Eigen::Index k = 0; k < g.nodes.cols(); ++k) row.push_back(g.nodes(v, k));
      nodes.push_back(std::move(row));
    }
    rec["nodes"] = std::move(nodes);
    json edges = json::array();
    for (const auto& [u, v] : g.edges) edges.push_back(json::array({u, v}));
    rec["edges"] = std::move(edges);
    out << rec.dump() << '\n';
  }
}

std::string serialize(const Dataset& dataset) {
  std::ostringstream os;
  write_dataset(dataset, os);
  return os.str();
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_dataset(dataset, out);
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

namespace {

template <typename T>
T field(const json& rec, const char* key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end()) throw ParseError(line, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(line, std::string("field '") + key + "': " + e.what());
  }
}

GraphInstance parse_record(const json& rec, const Dataset& ds, std::size_t line) {
  if (!rec.is_object()) throw ParseError(line, "record is not a JSON object");
  GraphInstance g;
  g.id = field<std::int64_t>(rec, "id", line);
  try {
    g.split = parse_split(field<std::string>(rec, "split", line));
  } catch (const InvalidInput& e) {
    throw ParseError(line, e.what());
  }
  g.env = field<int>(rec, "env", line);
  g.label = field<int>(rec, "label", line);
  g.noisy = field<bool>(rec, "noisy", line);
  const auto nodes = field<std::vector<std::vector<double>>>(rec, "nodes", line);
  if (nodes.empty()) throw ParseError(line, "graph has no nodes");
  g.nodes.resize(static_cast<Eigen::Index>(nodes.size()), ds.feature_dim);
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    if (static_cast<int>(nodes[v].size()) != ds.feature_dim) {
      throw ParseError(line, "node " + std::to_string(v) + " has " +
                                 std::to_string(nodes[v].size()) + " features, expected " +
                                 std::to_string(ds.feature_dim));
    }
    for (int k = 0; k < ds.feature_dim; ++k) {
      g.nodes(static_cast<Eigen::Index>(v), k) = nodes[v][k];
    }
  }
  for (const auto& e : field<std::vector<std::vector<int>>>(rec, "edges", line)) {
    if (e.size() != 2) throw ParseError(line, "edge must be a pair [u, v]");
    g.edges.emplace_back(e[0], e[1]);
  }
  try {
    validate(g, ds.num_classes);
  } catch (const std::exception& e) {
    throw ParseError(line, e.what());
  }
  return g;
}

}  // namespace

Dataset read_dataset(std::istream& in) {
  Dataset ds;
  std::string text;
  std::size_t line = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty()) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(line, std::string("invalid JSON: ") + e.what());
    }
    if (!have_header) {
      if (!rec.is_object() || rec.value("format", "") != kFormat) {
        throw ParseError(line, "expected dataset header with format '" + std::string(kFormat) + "'");
      }
      if (field<int>(rec, "version", line) != kVersion) throw ParseError(line, "unsupported version");
      ds.num_classes = field<int>(rec, "num_classes", line);
      ds.feature_dim = field<int>(rec, "feature_dim", line);
      if (ds.num_classes < 1 || ds.feature_dim < 0) throw ParseError(line, "invalid header dimensions");
      have_header = true;
      continue;
    }
    ds.instances.push_back(parse_record(rec, ds, line));
  }
  if (!have_header) throw ParseError(line == 0 ? 1 : line, "missing dataset header");
  return ds;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_dataset(in);
}

}  // namespace robust_shift
