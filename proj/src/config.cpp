// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#include "robust_shift/config.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "robust_shift/errors.hpp"

namespace robust_shift {
namespace {

constexpr std::array<std::pair<Method, const char*>, 14> kMethodNames = {{
    {Method::kErm, "erm"},
    {Method::kErmNnr, "erm_nnr"},
    {Method::kErmCmoKl, "erm_cmo_kl"},
    {Method::kErmCmoChi, "erm_cmo_chi"},
    {Method::kErmNnrCmoKl, "erm_nnr_cmo_kl"},
    {Method::kErmNnrCmoChi, "erm_nnr_cmo_chi"},
    {Method::kCvar, "cvar"},
    {Method::kChisq, "chisq"},
    {Method::kCvarDoro, "cvar_doro"},
    {Method::kChisqDoro, "chisq_doro"},
    {Method::kCvarGroup, "cvar_group"},
    {Method::kGroupDro, "group_dro"},
    {Method::kGradientDro, "gradient_dro"},
    {Method::kVariantDro, "variant_dro"},
}};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw ConfigError("key '" + key + "': cannot parse '" + value + "' as " + expected);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) bad_value(key, value, "a number");
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    bad_value(key, value, "a real number");
  }
  if (used != value.size()) bad_value(key, value, "a real number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "a boolean");
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += items[i];
  }
  return out;
}

template <typename T>
std::string join_numbers(const std::vector<T>& values) {
  std::vector<std::string> items;
  for (const auto& v : values) {
    if constexpr (std::is_floating_point_v<T>) {
      items.push_back(format_double(v));
    } else {
      items.push_back(std::to_string(v));
    }
  }
  return join(items);
}

struct Field {
  const char* key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define RS_INT(KEY, MEMBER)                                                      \
  Field {                                                                        \
    KEY, [](TrainConfig& c, const std::string& v) { c.MEMBER = parse_number<int>(KEY, v); }, \
        [](const TrainConfig& c) { return std::to_string(c.MEMBER); }            \
  }
#define RS_REAL(KEY, MEMBER)                                                     \
  Field {                                                                        \
    KEY, [](TrainConfig& c, const std::string& v) { c.MEMBER = parse_real(KEY, v); }, \
        [](const TrainConfig& c) { return format_double(c.MEMBER); }             \
  }
#define RS_BOOL(KEY, MEMBER)                                                     \
  Field {                                                                        \
    KEY, [](TrainConfig& c, const std::string& v) { c.MEMBER = parse_bool(KEY, v); }, \
        [](const TrainConfig& c) { return std::string(c.MEMBER ? "true" : "false"); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"train.method",
       [](TrainConfig& c, const std::string& v) { c.method = parse_method(v); },
       [](const TrainConfig& c) { return std::string(method_name(c.method)); }},
      RS_INT("train.batch_size", batch_size),
      RS_INT("train.epochs", epochs),
      RS_REAL("train.learning_rate", learning_rate),
      {"train.seeds",
       [](TrainConfig& c, const std::string& v) {
         c.seeds.clear();
         for (const auto& s : split_list(v)) {
           c.seeds.push_back(parse_number<std::uint64_t>("train.seeds", s));
         }
       },
       [](const TrainConfig& c) { return join_numbers(c.seeds); }},
      RS_INT("train.embedding_dim", embedding_dim),
      RS_INT("train.num_layers", num_layers),
      {"train.model_selection",
       [](TrainConfig& c, const std::string& v) {
         if (v == "best_val") {
           c.selection = ModelSelection::kBestValidation;
         } else if (v == "last") {
           c.selection = ModelSelection::kLastEpoch;
         } else {
           bad_value("train.model_selection", v, "best_val or last");
         }
       },
       [](const TrainConfig& c) {
         return std::string(c.selection == ModelSelection::kBestValidation ? "best_val"
                                                                           : "last");
       }},

      RS_INT("data.num_classes", data.num_classes),
      {"data.train_counts",
       [](TrainConfig& c, const std::string& v) {
         c.data.train_counts.clear();
         for (const auto& s : split_list(v)) {
           c.data.train_counts.push_back(parse_number<int>("data.train_counts", s));
         }
       },
       [](const TrainConfig& c) { return join_numbers(c.data.train_counts); }},
      RS_INT("data.val_count", data.val_count),
      RS_INT("data.test_count", data.test_count),
      RS_INT("data.d_inv", data.d_inv),
      RS_INT("data.d_spu", data.d_spu),
      RS_REAL("data.sigma", data.sigma),
      RS_REAL("data.alpha", data.alpha),
      RS_REAL("data.beta", data.beta),
      RS_REAL("data.class_spacing", data.class_spacing),
      RS_REAL("data.spurious_spacing", data.spurious_spacing),
      RS_BOOL("data.rotate_means", data.rotate_means),
      RS_INT("data.num_train_envs", data.num_train_envs),
      RS_INT("data.nodes_min", data.nodes_min),
      RS_INT("data.nodes_max", data.nodes_max),
      RS_REAL("data.edge_prob", data.edge_prob),
      {"data.seed",
       [](TrainConfig& c, const std::string& v) {
         c.data.seed = parse_number<std::uint64_t>("data.seed", v);
       },
       [](const TrainConfig& c) { return std::to_string(c.data.seed); }},

      RS_REAL("nnr.gamma", nnr.gamma),
      {"nnr.mode", [](TrainConfig& c, const std::string& v) { c.nnr.mode = parse_nnr_mode(v); },
       [](const TrainConfig& c) { return std::string(nnr_mode_name(c.nnr.mode)); }},
      RS_INT("nnr.refresh_every", nnr.refresh_every),
      RS_REAL("nnr.fallback_weight", nnr.fallback_weight),

      RS_REAL("cmo.k", cmo.k),
      RS_REAL("cmo.eta_q", cmo.eta_q),
      RS_REAL("cmo.lambda1", cmo.lambda1),
      RS_REAL("cmo.lambda2", cmo.lambda2),
      RS_REAL("cmo.rho1", cmo.rho1),
      RS_REAL("cmo.rho2", cmo.rho2),
      RS_BOOL("cmo.hard_ball", cmo.hard_ball),
      RS_REAL("cmo.ema_decay", cmo.ema_decay),

      {"baseline.method",
       [](TrainConfig& c, const std::string& v) {
         BaselineMethod b{};
         if (!parse_baseline(v, b)) bad_value("baseline.method", v, "a baseline method");
         c.method = parse_method(v);
       },
       [](const TrainConfig& c) {
         const auto b = as_baseline(c.method);
         return std::string(baseline_name(b ? *b : c.baseline.method));
       }},
      RS_REAL("baseline.alpha_cvar", baseline.alpha_cvar),
      RS_REAL("baseline.eps_doro", baseline.eps_doro),
      RS_REAL("baseline.rho_chisq", baseline.rho_chisq),
      RS_REAL("baseline.eta_group", baseline.eta_group),
      RS_REAL("baseline.lambda_var", baseline.lambda_var),

      {"diag.margins",
       [](TrainConfig& c, const std::string& v) {
         c.diag.margins.clear();
         for (const auto& s : split_list(v)) c.diag.margins.push_back(parse_real("diag.margins", s));
       },
       [](const TrainConfig& c) { return join_numbers(c.diag.margins); }},
      RS_REAL("diag.sigma", diag.sigma),
  };
  return table;
}

#undef RS_INT
#undef RS_REAL
#undef RS_BOOL

}  // namespace

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = [] {
    std::vector<Method> out;
    for (const auto& [m, name] : kMethodNames) out.push_back(m);
    return out;
  }();
  return methods;
}

const char* method_name(Method method) {
  for (const auto& [m, name] : kMethodNames) {
    if (m == method) return name;
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (const auto& [m, n] : kMethodNames) {
    if (name == n) return m;
  }
  throw ConfigError("unknown method '" + name + "'");
}

bool uses_nnr(Method method) {
  return method == Method::kErmNnr || method == Method::kErmNnrCmoKl ||
         method == Method::kErmNnrCmoChi;
}

bool uses_cmo(Method method) {
  return method == Method::kErmCmoKl || method == Method::kErmCmoChi ||
         method == Method::kErmNnrCmoKl || method == Method::kErmNnrCmoChi;
}

double cmo_order(Method method) {
  return method == Method::kErmCmoChi || method == Method::kErmNnrCmoChi ? 2.0 : 1.0;
}

std::optional<BaselineMethod> as_baseline(Method method) {
  BaselineMethod b{};
  if (parse_baseline(method_name(method), b)) return b;
  return std::nullopt;
}

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  for (int precision = 1; precision <= 17; ++precision) {
    char shorter[64];
    std::snprintf(shorter, sizeof shorter, "%.*g", precision, value);
    if (std::stod(shorter) == value) return shorter;
  }
  return buf;
}

void validate(const TrainConfig& config) {
  if (config.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (config.epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (!(config.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (config.seeds.empty()) throw ConfigError("train.seeds must not be empty");
  if (config.embedding_dim < 1) throw ConfigError("train.embedding_dim must be >= 1");
  if (config.num_layers < 0) throw ConfigError("train.num_layers must be >= 0");
  validate(config.data);
  validate(config.nnr);
  validate(config.cmo);
  validate(config.baseline);
  if (uses_cmo(config.method) && config.cmo.k != 1.0 && config.cmo.k != cmo_order(config.method)) {
    throw ConfigError(std::string("cmo.k = ") + format_double(config.cmo.k) +
                      " contradicts method " + method_name(config.method));
  }
  for (double m : config.diag.margins) {
    if (!(m >= 0.0)) throw ConfigError("diag.margins must be >= 0");
  }
}

TrainConfig paper_preset() { return TrainConfig{}; }

TrainConfig desk_preset() {
  TrainConfig config;
  config.data.train_counts = {300, 300, 30, 300, 300, 300};
  config.data.val_count = 300;
  config.data.test_count = 300;
  config.epochs = 50;
  return config;
}

void apply_setting(TrainConfig& config, const std::string& key, const std::string& value) {
  if (key == "run.preset") {
    if (value == "paper") {
      config = paper_preset();
    } else if (value == "desk") {
      config = desk_preset();
    } else {
      bad_value(key, value, "paper or desk");
    }
    return;
  }
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(number) + ": expected 'section.key = value'");
    }
    std::string key = trim(text.substr(0, eq));
    std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(number) + ": empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

TrainConfig parse_config(std::istream& in) {
  const auto entries = parse_key_values(in);
  TrainConfig config;
  for (const auto& [key, value] : entries) {
    if (key == "run.preset") apply_setting(config, key, value);
  }
  for (const auto& [key, value] : entries) {
    if (key != "run.preset") apply_setting(config, key, value);
  }
  validate(config);
  if (uses_cmo(config.method)) config.cmo.k = cmo_order(config.method);
  return config;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in);
}

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) {
    if (std::string(f.key) == "baseline.method") continue;  // alias of train.method
    out.emplace_back(f.key, f.get(config));
  }
  return out;
}

std::string render_config(const TrainConfig& config) {
  std::string out;
  for (const auto& [k, v] : config_entries(config)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace robust_shift
