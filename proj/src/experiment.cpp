// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#include "robust_shift/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "robust_shift/errors.hpp"

namespace robust_shift {
namespace {

Json vector_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Json matrix_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

Vector vector_from(const Json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Matrix matrix_from(const Json& j, Eigen::Index cols_if_empty) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const Eigen::Index cols =
      rows.empty() ? cols_if_empty : static_cast<Eigen::Index>(rows.front().size());
  Matrix m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != cols) throw ShapeError("ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), c) = rows[r][c];
  }
  return m;
}

Json layer_json(const Layer& layer) {
  Json out;
  out["weight"] = matrix_json(layer.weight);
  out["bias"] = vector_json(layer.bias);
  return out;
}

Layer layer_from(const Json& j) {
  Layer layer;
  layer.bias = vector_from(j.at("bias"));
  layer.weight = matrix_from(j.at("weight"), 0);
  return layer;
}

// NaN (absent class) is stored as null.
double number_or_nan(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

EvalResult eval_from(const Json& j) {
  EvalResult e;
  for (const auto& v : j.at("per_class_accuracy")) e.per_class_accuracy.push_back(number_or_nan(v));
  e.class_counts = j.at("class_counts").get<std::vector<int>>();
  e.overall_accuracy = j.at("overall_accuracy").get<double>();
  e.absent_classes = j.at("absent_classes").get<std::vector<int>>();
  return e;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::vector<RunRecord> load_runs(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw InvalidInput("'" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> runs;
  for (const auto& path : files) {
    std::ifstream in(path);
    Json doc;
    try {
      doc = Json::parse(in);
    } catch (const Json::parse_error&) {
      continue;  // not one of ours
    }
    if (doc.is_object() && doc.value("kind", "") == "run") runs.push_back(run_from_json(doc));
  }
  return runs;
}

int method_rank(const std::string& name) {
  const auto& methods = all_methods();
  for (std::size_t i = 0; i < methods.size(); ++i) {
    if (name == method_name(methods[i])) return static_cast<int>(i);
  }
  return static_cast<int>(methods.size());
}

struct CellKey {
  int rank;
  std::string method;
  double noise_rate;
  bool operator<(const CellKey& o) const {
    if (rank != o.rank) return rank < o.rank;
    if (method != o.method) return method < o.method;
    return noise_rate < o.noise_rate;
  }
};

std::map<CellKey, std::vector<RunRecord>> group_cells(const std::vector<RunRecord>& runs,
                                                      std::set<CellKey>& gaps) {
  std::map<CellKey, std::vector<RunRecord>> cells;
  std::set<std::pair<int, std::string>> methods;
  std::set<double> rates;
  for (const auto& r : runs) {
    cells[{method_rank(r.method), r.method, r.noise_rate}].push_back(r);
    methods.emplace(method_rank(r.method), r.method);
    rates.insert(r.noise_rate);
  }
  for (const auto& [rank, m] : methods) {
    for (double rate : rates) {
      CellKey key{rank, m, rate};
      if (!cells.count(key)) gaps.insert(key);
    }
  }
  return cells;
}

}  // namespace

int worker_count() {
  if (const char* env = std::getenv("ROBUST_SHIFT_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

RunRecord run_single(const TrainConfig& config, const Dataset& dataset, const TrainData& data,
                     std::uint64_t seed, TrainResult* keep) {
  RunRecord rec;
  rec.method = method_name(config.method);
  rec.noise_rate = config.data.alpha;
  rec.seed = seed;
  rec.config = config_entries(config);
  rec.minority_class = minority_class(data.train, data.num_classes);
  try {
    TrainResult result = train(config, data, seed);
    const auto test = prepare_all(dataset.split(Split::kTest));
    rec.test = evaluate(result.selected_model, test, data.num_classes);
    if (!data.val.empty()) rec.val = evaluate(result.selected_model, data.val, data.num_classes);
    rec.selected_epoch = result.selected_epoch;
    if (result.group_weights) {
      rec.q_final.assign(result.group_weights->data(),
                         result.group_weights->data() + result.group_weights->size());
    }
    for (const auto& q : result.q_trajectory) rec.q_trajectory.emplace_back(q.data(), q.data() + q.size());
    rec.trace = result.trace;
    if (result.nnr_weights) {
      const auto train_graphs = dataset.split(Split::kTrain);
      double noisy = 0.0, clean = 0.0;
      int n_noisy = 0, n_clean = 0;
      for (std::size_t i = 0; i < train_graphs.size(); ++i) {
        if (train_graphs[i].noisy) {
          noisy += (*result.nnr_weights)(static_cast<Eigen::Index>(i));
          ++n_noisy;
        } else {
          clean += (*result.nnr_weights)(static_cast<Eigen::Index>(i));
          ++n_clean;
        }
      }
      if (n_noisy > 0) rec.nnr_mean_weight_noisy = noisy / n_noisy;
      if (n_clean > 0) rec.nnr_mean_weight_clean = clean / n_clean;
    }
    if (keep) *keep = std::move(result);
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

ExperimentResult run_experiment(const TrainConfig& config, const Dataset& dataset,
                                bool keep_models) {
  validate(config);
  const TrainData data = make_train_data(dataset);
  const std::size_t n = config.seeds.size();
  ExperimentResult out;
  out.runs.resize(n);
  out.trained.resize(n);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      TrainResult kept;
      out.runs[i] = run_single(config, dataset, data, config.seeds[i], keep_models ? &kept : nullptr);
      if (keep_models && out.runs[i].ok) out.trained[i] = std::move(kept);
    }
  };
  const int threads = std::min<int>(worker_count(), static_cast<int>(n));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  out.summary = summarize(out.runs);
  return out;
}

ExperimentResult run_experiment(const TrainConfig& config) {
  validate(config);
  return run_experiment(config, generate_dataset(config.data));
}

MetricsSummary summarize(const std::vector<RunRecord>& runs) {
  MetricsSummary s;
  if (runs.empty()) return s;
  s.method = runs.front().method;
  s.noise_rate = runs.front().noise_rate;
  std::vector<double> minority, overall;
  for (const auto& r : runs) {
    if (!r.ok) {
      s.failed_seeds.push_back(r.seed);
      continue;
    }
    minority.push_back(r.minority_accuracy());
    overall.push_back(r.test.overall_accuracy);
  }
  s.runs_ok = static_cast<int>(minority.size());
  if (minority.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.minority_avg = s.minority_std = s.minority_max = s.overall_avg = s.overall_std = nan;
    return s;
  }
  s.minority_avg = mean_of(minority);
  s.minority_std = sample_std(minority);
  s.minority_max = *std::max_element(minority.begin(), minority.end());
  s.overall_avg = mean_of(overall);
  s.overall_std = sample_std(overall);
  return s;
}

Json to_json(const EvalResult& eval) {
  Json j;
  j["per_class_accuracy"] = eval.per_class_accuracy;
  j["class_counts"] = eval.class_counts;
  j["overall_accuracy"] = eval.overall_accuracy;
  j["absent_classes"] = eval.absent_classes;
  return j;
}

Json to_json(const RunRecord& run) {
  Json j;
  j["kind"] = "run";
  j["method"] = run.method;
  j["noise_rate"] = run.noise_rate;
  j["seed"] = run.seed;
  j["status"] = run.ok ? "ok" : "failed";
  if (!run.ok) j["error"] = run.error;
  j["minority_class"] = run.minority_class;
  j["selected_epoch"] = run.selected_epoch;
  if (run.ok) {
    j["minority_accuracy"] = run.minority_accuracy();
    j["overall_accuracy"] = run.test.overall_accuracy;
    j["test"] = to_json(run.test);
    j["val"] = to_json(run.val);
  }
  j["q_final"] = run.q_final;
  j["q_trajectory"] = run.q_trajectory;
  j["grad_norm_trace"] = run.trace.grad_norm;
  j["duality_gap_proxy_trace"] = run.trace.duality_gap_proxy;
  if (run.nnr_mean_weight_noisy) j["nnr_mean_weight_noisy"] = *run.nnr_mean_weight_noisy;
  if (run.nnr_mean_weight_clean) j["nnr_mean_weight_clean"] = *run.nnr_mean_weight_clean;
  Json protocol;
  protocol["model_selection"] = "best validation macro accuracy epoch";
  protocol["overall_accuracy"] = "macro average over classes";
  protocol["spread"] = "sample standard deviation over seeds";
  j["protocol"] = protocol;
  Json cfg = Json::object();
  for (const auto& [k, v] : run.config) cfg[k] = v;
  j["config"] = cfg;
  return j;
}

RunRecord run_from_json(const Json& doc) {
  RunRecord r;
  r.method = doc.at("method").get<std::string>();
  r.noise_rate = doc.at("noise_rate").get<double>();
  r.seed = doc.at("seed").get<std::uint64_t>();
  r.ok = doc.at("status").get<std::string>() == "ok";
  r.error = doc.value("error", "");
  r.minority_class = doc.at("minority_class").get<int>();
  r.selected_epoch = doc.at("selected_epoch").get<int>();
  if (r.ok) {
    r.test = eval_from(doc.at("test"));
    r.val = eval_from(doc.at("val"));
  }
  r.q_final = doc.value("q_final", std::vector<double>{});
  r.q_trajectory = doc.value("q_trajectory", std::vector<std::vector<double>>{});
  r.trace.grad_norm = doc.value("grad_norm_trace", std::vector<double>{});
  r.trace.duality_gap_proxy = doc.value("duality_gap_proxy_trace", std::vector<double>{});
  if (doc.contains("nnr_mean_weight_noisy")) r.nnr_mean_weight_noisy = doc["nnr_mean_weight_noisy"].get<double>();
  if (doc.contains("nnr_mean_weight_clean")) r.nnr_mean_weight_clean = doc["nnr_mean_weight_clean"].get<double>();
  if (doc.contains("config")) {
    for (const auto& [k, v] : doc["config"].items()) r.config.emplace_back(k, v.get<std::string>());
  }
  return r;
}

Json to_json(const MetricsSummary& s) {
  Json j;
  j["method"] = s.method;
  j["noise_rate"] = s.noise_rate;
  j["runs_ok"] = s.runs_ok;
  j["failed_seeds"] = s.failed_seeds;
  j["minority_avg"] = s.minority_avg;
  j["minority_std"] = s.minority_std;
  j["minority_max"] = s.minority_max;
  j["overall_avg"] = s.overall_avg;
  j["overall_std"] = s.overall_std;
  return j;
}

Json summary_json(const ExperimentResult& result) {
  Json j;
  j["kind"] = "summary";
  j["summary"] = to_json(result.summary);
  Json seeds = Json::array();
  for (const auto& r : result.runs) {
    Json s;
    s["seed"] = r.seed;
    s["status"] = r.ok ? "ok" : "failed";
    if (r.ok) {
      s["per_class_accuracy"] = r.test.per_class_accuracy;
      s["minority_accuracy"] = r.minority_accuracy();
      s["overall_accuracy"] = r.test.overall_accuracy;
    }
    s["q_final"] = r.q_final;
    seeds.push_back(std::move(s));
  }
  j["seeds"] = seeds;
  return j;
}

Json to_json(const BoundReport& report) {
  Json j;
  j["kind"] = "bound_report";
  j["gamma_emb"] = report.gamma_emb;
  Json margins = Json::array();
  for (const auto& m : report.margin_losses) {
    margins.push_back({{"gamma", m.gamma}, {"train", m.train}, {"test", m.test}});
  }
  j["margin_losses"] = margins;
  j["term1"] = report.term1;
  j["term2"] = report.term2;
  j["term3"] = report.term3;
  Json pairs = Json::array();
  for (const auto& p : report.per_pair_terms) {
    pairs.push_back({{"c", p.c}, {"c_prime", p.c_prime}, {"term1", p.term1},
                     {"term2", p.term2}, {"term3", p.term3}, {"pairs", p.count}});
  }
  j["per_pair_terms"] = pairs;
  Json skipped = Json::array();
  for (const auto& [c, cp] : report.skipped_pairs) skipped.push_back({c, cp});
  j["skipped_pairs"] = skipped;
  j["sigma_est"] = report.sigma_est;
  j["sigma_used"] = report.sigma_used;
  auto means_json = [](const ClassMeans& m) {
    Json out = Json::array();
    for (std::size_t c = 0; c < m.means.size(); ++c) {
      out.push_back({{"class", c}, {"count", m.counts[c]}, {"mean", vector_json(m.means[c])}});
    }
    return out;
  };
  j["class_means"] = {{"train", means_json(report.train_class_means)},
                      {"test", means_json(report.test_class_means)}};
  j["near_sets"] = {{"radius", report.gamma_emb},
                    {"min_size", report.near.min_size},
                    {"mean_size", report.near.mean_size},
                    {"max_size", report.near.max_size},
                    {"empty", report.near.empty_count},
                    {"covered_test", report.near.covered_test},
                    {"mean_multiplicity", report.near.mean_multiplicity}};
  j["mean_train_weight"] = report.mean_train_weight;
  j["mean_test_weight"] = report.mean_test_weight;
  return j;
}

Json model_to_json(const ModelFile& file) {
  Json j;
  j["kind"] = "model";
  j["seed"] = file.seed;
  j["selected_epoch"] = file.selected_epoch;
  Json cfg = Json::object();
  for (const auto& [k, v] : config_entries(file.config)) cfg[k] = v;
  j["config"] = cfg;
  j["input_dim"] = file.model.input_dim();
  Json layers = Json::array();
  for (const auto& l : file.model.layers) layers.push_back(layer_json(l));
  j["layers"] = layers;
  j["head"] = layer_json(file.model.head);
  return j;
}

ModelFile model_from_json(const Json& doc) {
  if (!doc.is_object() || doc.value("kind", "") != "model") {
    throw InvalidInput("document is not a model file");
  }
  ModelFile file;
  file.seed = doc.at("seed").get<std::uint64_t>();
  file.selected_epoch = doc.at("selected_epoch").get<int>();
  std::stringstream text;
  for (const auto& [k, v] : doc.at("config").items()) text << k << " = " << v.get<std::string>() << "\n";
  file.config = parse_config(text);
  for (const auto& l : doc.at("layers")) file.model.layers.push_back(layer_from(l));
  file.model.head = layer_from(doc.at("head"));
  check_shapes(file.model, doc.at("input_dim").get<int>());
  return file;
}

void write_json_file(const Json& doc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << doc.dump(2) << '\n';
}

void save_model(const ModelFile& file, const std::string& path) {
  write_json_file(model_to_json(file), path);
}

ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return model_from_json(Json::parse(in));
}

Grid parse_grid(std::istream& in) {
  Grid grid;
  for (auto& [key, value] : parse_key_values(in)) {
    std::vector<std::string> values;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto b = item.find_first_not_of(" \t");
      const auto e = item.find_last_not_of(" \t");
      if (b != std::string::npos) values.push_back(item.substr(b, e - b + 1));
    }
    if (values.empty()) throw ConfigError("grid key '" + key + "' has no values");
    TrainConfig probe;
    apply_setting(probe, key, values.front());  // rejects unknown keys early
    grid.emplace_back(key, std::move(values));
  }
  if (grid.empty()) throw ConfigError("grid is empty");
  return grid;
}

Grid load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open grid '" + path + "'");
  return parse_grid(in);
}

std::vector<SweepRow> sweep(const TrainConfig& config, const Grid& grid) {
  if (grid.empty()) throw ConfigError("grid is empty");
  std::vector<std::size_t> index(grid.size(), 0);
  std::vector<SweepRow> rows;
  std::map<std::string, Dataset> datasets;  // keyed by rendered data config
  while (true) {
    TrainConfig point = config;
    SweepRow row;
    for (std::size_t a = 0; a < grid.size(); ++a) {
      const auto& [key, values] = grid[a];
      apply_setting(point, key, values[index[a]]);
      row.settings.emplace_back(key, values[index[a]]);
    }
    if (uses_cmo(point.method)) point.cmo.k = cmo_order(point.method);
    validate(point);
    std::string data_key;
    for (const auto& [k, v] : config_entries(point)) {
      if (k.rfind("data.", 0) == 0) data_key += k + "=" + v + ";";
    }
    auto it = datasets.find(data_key);
    if (it == datasets.end()) it = datasets.emplace(data_key, generate_dataset(point.data)).first;
    row.summary = run_experiment(point, it->second).summary;
    rows.push_back(std::move(row));

    std::size_t axis = grid.size();
    while (axis-- > 0) {
      if (++index[axis] < grid[axis].second.size()) break;
      index[axis] = 0;
    }
    if (axis == static_cast<std::size_t>(-1)) break;
  }
  return rows;
}

std::string sweep_csv(const Grid& grid, const std::vector<SweepRow>& rows) {
  std::string out;
  for (const auto& [key, values] : grid) out += key + ",";
  out += std::string(kReportHeader) + "\n";
  for (const auto& row : rows) {
    for (const auto& [key, value] : row.settings) out += value + ",";
    const auto& s = row.summary;
    out += s.method + "," + format_double(s.noise_rate) + "," + fixed4(s.minority_avg) + "," +
           fixed4(s.minority_std) + "," + fixed4(s.minority_max) + "," + fixed4(s.overall_avg) +
           "," + fixed4(s.overall_std) + "\n";
  }
  return out;
}

std::string report_csv(const std::string& dir) {
  const auto runs = load_runs(dir);
  std::set<CellKey> gaps;
  auto cells = group_cells(runs, gaps);
  for (const auto& g : gaps) cells[g];  // empty cell marks a gap
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& [key, cell_runs] : cells) {
    out += key.method + "," + format_double(key.noise_rate) + ",";
    const MetricsSummary s = summarize(cell_runs);
    if (cell_runs.empty() || s.runs_ok == 0) {
      out += "NA,NA,NA,NA,NA\n";
      continue;
    }
    out += fixed4(s.minority_avg) + "," + fixed4(s.minority_std) + "," + fixed4(s.minority_max) +
           "," + fixed4(s.overall_avg) + "," + fixed4(s.overall_std) + "\n";
  }
  return out;
}

Json report_json(const std::string& dir) {
  const auto runs = load_runs(dir);
  std::set<CellKey> gaps;
  auto cells = group_cells(runs, gaps);
  Json rows = Json::array();
  for (const auto& [key, cell_runs] : cells) {
    Json row = to_json(summarize(cell_runs));
    Json seeds = Json::array();
    for (const auto& r : cell_runs) seeds.push_back(r.seed);
    row["seeds"] = seeds;
    rows.push_back(std::move(row));
  }
  Json missing = Json::array();
  for (const auto& g : gaps) missing.push_back({{"method", g.method}, {"noise_rate", g.noise_rate}});
  Json j;
  j["kind"] = "report";
  j["rows"] = rows;
  j["missing"] = missing;
  return j;
}

}  // namespace robust_shift
