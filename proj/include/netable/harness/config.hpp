#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/tasks/dialog_model.hpp"
#include "netable/tasks/reading_model.hpp"
#include "netable/tasks/structured_qa.hpp"

namespace netable::harness {

enum class TaskId { structured_qa, dialog1, dialog2, dialog4, reading };

inline std::string to_string(TaskId t) {
  switch (t) {
    case TaskId::structured_qa: return "structured-qa";
    case TaskId::dialog1: return "dialog-1";
    case TaskId::dialog2: return "dialog-2";
    case TaskId::dialog4: return "dialog-4";
    case TaskId::reading: return "reading";
  }
  return "?";
}

inline TaskId parse_task(const std::string& s) {
  for (TaskId t : {TaskId::structured_qa, TaskId::dialog1, TaskId::dialog2, TaskId::dialog4, TaskId::reading}) {
    if (s == to_string(t)) return t;
  }
  throw UsageError("unknown task '" + s + "' (expected structured-qa, dialog-1, dialog-2, dialog-4 or reading)");
}

inline bool is_dialog(TaskId t) { return t == TaskId::dialog1 || t == TaskId::dialog2 || t == TaskId::dialog4; }

inline int dialog_task_number(TaskId t) {
  switch (t) {
    case TaskId::dialog1: return 1;
    case TaskId::dialog2: return 2;
    case TaskId::dialog4: return 4;
    default: throw ContractError("not a dialog task: " + to_string(t));
  }
}

// Everything a run depends on. Defaults come from the per-task model configs;
// `overrides` lists the keys changed from those defaults, in order.
struct ExperimentConfig {
  TaskId task = TaskId::structured_qa;
  nn::NeMode mode = nn::NeMode::with_ne;
  reading::WindowEncoder encoder = reading::WindowEncoder::bow;  // reading only
  std::size_t hops = 1;
  std::size_t embedding_size = 20;
  std::size_t hidden_units = 20;
  std::size_t batch_size = 16;
  ad::OptimizerKind optimizer = ad::OptimizerKind::adam;
  double learning_rate = 0.01;
  double epsilon = 1e-8;
  std::size_t max_epochs = 200;
  std::size_t patience = 5;
  ne::NeAttention ne_attention = ne::NeAttention::softmax;
  // dialog only
  std::size_t max_memory = 32;
  double recurrence_gain = 0.9;
  double row_loss_weight = 0.1;
  // reading only
  std::size_t window = 5;
  std::vector<std::uint64_t> seeds{1};
  std::string data_dir;  // empty: <out>/data/<task>/seed-<seed>
  std::vector<std::string> overrides;
};

inline ExperimentConfig defaults_for(TaskId task) {
  ExperimentConfig c;
  c.task = task;
  auto take_opt = [&](const ad::OptimizerConfig& o) {
    c.optimizer = o.kind;
    c.learning_rate = o.learning_rate;
    c.epsilon = o.epsilon;
  };
  if (task == TaskId::structured_qa) {
    qa::QaConfig q;
    c.hops = 1;
    c.embedding_size = c.hidden_units = q.embedding_size;
    c.batch_size = q.batch_size;
    take_opt(q.optimizer);
    c.max_epochs = q.max_epochs;
    c.patience = q.perfect_streak;
  } else if (is_dialog(task)) {
    dialog::DialogConfig d;
    c.hops = d.hops;
    c.embedding_size = c.hidden_units = d.embedding_size;
    c.batch_size = d.batch_size;
    take_opt(d.optimizer);
    c.max_epochs = d.max_epochs;
    c.patience = d.patience;
    c.max_memory = d.max_memory;
    c.recurrence_gain = d.recurrence_gain;
    c.row_loss_weight = d.row_loss_weight;
  } else {
    reading::ReaderConfig r;
    c.hops = r.hops;
    c.embedding_size = c.hidden_units = r.embedding_size;
    c.batch_size = r.batch_size;
    take_opt(r.optimizer);
    c.max_epochs = r.max_epochs;
    c.patience = r.patience;
    c.window = r.window;
  }
  return c;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::size_t to_count(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw UsageError("'" + key + "' needs a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

inline double to_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw UsageError("'" + key + "' needs a number, got '" + v + "'");
  return x;
}

}  // namespace detail

// Keys each task accepts besides the common ones.
inline const std::set<std::string>& task_keys(TaskId t) {
  static const std::set<std::string> qa{}, dlg{"max_memory", "recurrence_gain", "row_loss_weight"},
      rd{"encoder", "window"};
  if (t == TaskId::structured_qa) return qa;
  if (is_dialog(t)) return dlg;
  return rd;
}

inline const std::set<std::string>& common_keys() {
  static const std::set<std::string> k{"task",     "mode",     "hops",          "embedding_size", "hidden_units",
                                       "batch_size", "optimizer", "learning_rate", "epsilon",        "max_epochs",
                                       "patience", "ne_attention", "seeds",      "data_dir"};
  return k;
}

// Applies one key=value override; the task must already be set.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
  if (!common_keys().contains(key) && !task_keys(c.task).contains(key)) {
    throw UsageError("unknown config key '" + key + "' for task " + to_string(c.task));
  }
  if (key == "task") {
    if (parse_task(value) != c.task) throw UsageError("config file task '" + value + "' differs from --task");
    return;
  }
  if (key == "mode") c.mode = nn::parse_ne_mode(value);
  else if (key == "encoder") c.encoder = reading::parse_window_encoder(value);
  else if (key == "hops") c.hops = detail::to_count(key, value);
  else if (key == "embedding_size") c.embedding_size = detail::to_count(key, value);
  else if (key == "hidden_units") c.hidden_units = detail::to_count(key, value);
  else if (key == "batch_size") c.batch_size = detail::to_count(key, value);
  else if (key == "optimizer") c.optimizer = ad::parse_optimizer_kind(value);
  else if (key == "learning_rate") c.learning_rate = detail::to_real(key, value);
  else if (key == "epsilon") c.epsilon = detail::to_real(key, value);
  else if (key == "max_epochs") c.max_epochs = detail::to_count(key, value);
  else if (key == "patience") c.patience = detail::to_count(key, value);
  else if (key == "ne_attention") c.ne_attention = ne::parse_ne_attention(value);
  else if (key == "max_memory") c.max_memory = detail::to_count(key, value);
  else if (key == "recurrence_gain") c.recurrence_gain = detail::to_real(key, value);
  else if (key == "row_loss_weight") c.row_loss_weight = detail::to_real(key, value);
  else if (key == "window") c.window = detail::to_count(key, value);
  else if (key == "data_dir") c.data_dir = value;
  else if (key == "seeds") {
    c.seeds.clear();
    std::stringstream ss(value);
    for (std::string s; std::getline(ss, s, ',');) c.seeds.push_back(detail::to_count(key, detail::trim(s)));
    if (c.seeds.empty()) throw UsageError("'seeds' needs at least one seed");
  }
  if (std::find(c.overrides.begin(), c.overrides.end(), key) == c.overrides.end()) c.overrides.push_back(key);
}

inline void validate(const ExperimentConfig& c) {
  if (c.embedding_size == 0) throw ConfigError("embedding_size must be positive");
  if (c.hidden_units != c.embedding_size) {
    throw ConfigError("hidden_units must equal embedding_size: memory hops add encoder states to embeddings");
  }
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (c.learning_rate <= 0) throw ConfigError("learning_rate must be positive");
  if (c.epsilon <= 0) throw ConfigError("epsilon must be positive");
  if (c.max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (c.task == TaskId::structured_qa && c.hops != 1) throw ConfigError("structured-qa has no memory: hops must be 1");
  if (c.task != TaskId::structured_qa && c.hops == 0) throw ConfigError("hops must be positive");
  if (c.task == TaskId::reading && c.window % 2 == 0) throw ConfigError("window must be odd");
  if (is_dialog(c.task) && c.max_memory == 0) throw ConfigError("max_memory must be positive");
  if (c.seeds.empty()) throw ConfigError("no seeds");
}

// Human-editable file: one key = value per line, '#' starts a comment.
inline void apply_file(ExperimentConfig& c, const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open config " + p.string());
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) {
    ++n;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(p.string() + ":" + std::to_string(n) + ": expected key = value");
    apply_setting(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

// Task named by the file's `task` line, or nullopt.
inline std::optional<TaskId> task_in_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open config " + p.string());
  for (std::string line; std::getline(in, line);) {
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    const auto eq = line.find('=');
    if (eq != std::string::npos && detail::trim(line.substr(0, eq)) == "task") {
      return parse_task(detail::trim(line.substr(eq + 1)));
    }
  }
  return std::nullopt;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j{{"task", to_string(c.task)},
                   {"mode", nn::to_string(c.mode)},
                   {"hops", c.hops},
                   {"embedding_size", c.embedding_size},
                   {"hidden_units", c.hidden_units},
                   {"batch_size", c.batch_size},
                   {"optimizer", ad::to_string(c.optimizer)},
                   {"learning_rate", c.learning_rate},
                   {"epsilon", c.epsilon},
                   {"max_epochs", c.max_epochs},
                   {"patience", c.patience},
                   {"ne_attention", ne::to_string(c.ne_attention)},
                   {"seeds", c.seeds},
                   {"data_dir", c.data_dir},
                   {"overrides", c.overrides}};
  if (is_dialog(c.task)) {
    j["max_memory"] = c.max_memory;
    j["recurrence_gain"] = c.recurrence_gain;
    j["row_loss_weight"] = c.row_loss_weight;
  }
  if (c.task == TaskId::reading) {
    j["encoder"] = reading::to_string(c.encoder);
    j["window"] = c.window;
  }
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  try {
    ExperimentConfig c = defaults_for(parse_task(j.at("task").get<std::string>()));
    auto set = [&](const char* key, const std::string& v) { apply_setting(c, key, v); };
    auto num = [](const nlohmann::json& v) {
      std::ostringstream os;
      os.precision(17);
      if (v.is_number_float()) os << v.get<double>();
      else os << v.get<std::uint64_t>();
      return os.str();
    };
    set("mode", j.at("mode").get<std::string>());
    for (const char* k : {"hops", "embedding_size", "hidden_units", "batch_size", "learning_rate", "epsilon",
                          "max_epochs", "patience"}) {
      set(k, num(j.at(k)));
    }
    set("optimizer", j.at("optimizer").get<std::string>());
    set("ne_attention", j.at("ne_attention").get<std::string>());
    if (is_dialog(c.task)) {
      for (const char* k : {"max_memory", "recurrence_gain", "row_loss_weight"}) set(k, num(j.at(k)));
    }
    if (c.task == TaskId::reading) {
      set("encoder", j.at("encoder").get<std::string>());
      set("window", num(j.at("window")));
    }
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.data_dir = j.at("data_dir").get<std::string>();
    c.overrides = j.at("overrides").get<std::vector<std::string>>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed experiment config: ") + e.what());
  }
}

// ---- per-task model configs -------------------------------------------------

inline ad::OptimizerConfig optimizer_config(const ExperimentConfig& c) {
  ad::OptimizerConfig o;
  o.kind = c.optimizer;
  o.learning_rate = c.learning_rate;
  o.epsilon = c.epsilon;
  return o;
}

inline qa::QaConfig to_qa_config(const ExperimentConfig& c) {
  qa::QaConfig q;
  q.mode = c.mode;
  q.embedding_size = c.embedding_size;
  q.optimizer = optimizer_config(c);
  q.batch_size = c.batch_size;
  q.max_epochs = c.max_epochs;
  q.perfect_streak = c.patience;
  q.ne_attention = c.ne_attention;
  return q;
}

inline dialog::DialogConfig to_dialog_config(const ExperimentConfig& c) {
  dialog::DialogConfig d;
  d.mode = c.mode;
  d.embedding_size = c.embedding_size;
  d.hops = c.hops;
  d.max_memory = c.max_memory;
  d.recurrence_gain = c.recurrence_gain;
  d.row_loss_weight = c.row_loss_weight;
  d.optimizer = optimizer_config(c);
  d.batch_size = c.batch_size;
  d.max_epochs = c.max_epochs;
  d.patience = c.patience;
  d.ne_attention = c.ne_attention;
  return d;
}

inline reading::ReaderConfig to_reader_config(const ExperimentConfig& c) {
  reading::ReaderConfig r;
  r.encoder = c.encoder;
  r.mode = c.mode;
  r.window = c.window;
  r.embedding_size = c.embedding_size;
  r.hops = c.hops;
  r.optimizer = optimizer_config(c);
  r.batch_size = c.batch_size;
  r.max_epochs = c.max_epochs;
  r.patience = c.patience;
  return r;
}

// Short label used for run directories and report rows.
inline std::string run_label(const ExperimentConfig& c) {
  std::string s = to_string(c.task) + "_" + nn::to_string(c.mode);
  if (c.task == TaskId::reading) s += "_" + reading::to_string(c.encoder);
  return s;
}

}  // namespace netable::harness
