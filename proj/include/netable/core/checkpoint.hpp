#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/core/optimizer.hpp"
#include "netable/core/parameters.hpp"

namespace netable::ad {

inline constexpr int checkpoint_version = 1;

inline nlohmann::json tensor_to_json(const Tensor& t) {
  return nlohmann::json{{"shape", t.shape()}, {"data", t.values()}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  try {
    return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed tensor: ") + e.what());
  } catch (const ShapeError& e) {
    throw CheckpointError(e.what());
  }
}

// Everything needed to resume or evaluate a run. `meta` carries task-level
// state such as the resolved config and the vocabulary.
struct CheckpointData {
  std::uint64_t seed = 0;
  nlohmann::json meta = nlohmann::json::object();
  nlohmann::json parameters = nlohmann::json::array();
  nlohmann::json optimizer = nlohmann::json::object();
};

inline CheckpointData make_checkpoint(const ParameterStore& params, const Optimizer* opt, std::uint64_t seed,
                                      nlohmann::json meta) {
  CheckpointData c;
  c.seed = seed;
  c.meta = std::move(meta);
  for (std::size_t i = 0; i < params.size(); ++i) {
    nlohmann::json p = tensor_to_json(params[i].value);
    p["name"] = params[i].name;
    c.parameters.push_back(std::move(p));
  }
  if (opt) {
    c.optimizer["kind"] = to_string(opt->config().kind);
    c.optimizer["step"] = opt->steps();
    nlohmann::json m = nlohmann::json::array(), v = nlohmann::json::array();
    for (const Tensor& t : opt->first_moments()) m.push_back(tensor_to_json(t));
    for (const Tensor& t : opt->second_moments()) v.push_back(tensor_to_json(t));
    c.optimizer["m"] = std::move(m);
    c.optimizer["v"] = std::move(v);
  }
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const CheckpointData& c) {
  nlohmann::json j{{"format", "netable-checkpoint"},
                   {"version", checkpoint_version},
                   {"seed", c.seed},
                   {"meta", c.meta},
                   {"parameters", c.parameters},
                   {"optimizer", c.optimizer}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out << j.dump();
  if (!out) throw CheckpointError("write failed for " + path.string());
}

inline CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "netable-checkpoint") {
    throw CheckpointError(path.string() + " is not a checkpoint");
  }
  if (j.value("version", 0) != checkpoint_version) {
    throw CheckpointError("unsupported checkpoint version in " + path.string());
  }
  CheckpointData c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.meta = j.at("meta");
    c.parameters = j.at("parameters");
    c.optimizer = j.at("optimizer");
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("incomplete checkpoint: ") + e.what());
  }
  return c;
}

// Copies stored values into `params`. Names and shapes must match exactly.
inline void apply_parameters(const CheckpointData& c, ParameterStore& params) {
  if (c.parameters.size() != params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(c.parameters.size()) + " parameters, model has " +
                          std::to_string(params.size()));
  }
  std::vector<Tensor> values;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = c.parameters[i];
    const std::string name = p.value("name", "");
    if (name != params[i].name) throw CheckpointError("parameter order mismatch: '" + name + "' vs '" + params[i].name + "'");
    Tensor t = tensor_from_json(p);
    if (!t.same_shape(params[i].value)) {
      throw CheckpointError("shape mismatch for '" + name + "': checkpoint " + ad::to_string(t.shape()) + ", model " +
                            ad::to_string(params[i].value.shape()));
    }
    values.push_back(std::move(t));
  }
  params.restore(values);
}

inline void apply_optimizer_state(const CheckpointData& c, Optimizer& opt) {
  if (c.optimizer.empty()) return;
  if (c.optimizer.value("kind", "") != to_string(opt.config().kind)) throw CheckpointError("optimizer kind mismatch");
  std::vector<Tensor> m, v;
  for (const auto& t : c.optimizer.at("m")) m.push_back(tensor_from_json(t));
  for (const auto& t : c.optimizer.at("v")) v.push_back(tensor_from_json(t));
  opt.restore_state(c.optimizer.at("step").get<std::uint64_t>(), std::move(m), std::move(v));
}

}  // namespace netable::ad
