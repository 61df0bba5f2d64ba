#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace netable {

enum class ErrorKind {
  usage,
  shape,
  contract,
  data,
  config,
  retrieval,
  generation,
  checkpoint,
  divergence,
  invariant,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::shape: return "shape";
    case ErrorKind::contract: return "contract";
    case ErrorKind::data: return "data";
    case ErrorKind::config: return "config";
    case ErrorKind::retrieval: return "retrieval";
    case ErrorKind::generation: return "generation";
    case ErrorKind::checkpoint: return "checkpoint";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::invariant: return "invariant";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define NETABLE_DEFINE_ERROR(Name, Kind)                                      \
  class Name : public Error {                                                 \
   public:                                                                    \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {}  \
  };

NETABLE_DEFINE_ERROR(UsageError, usage)
NETABLE_DEFINE_ERROR(ShapeError, shape)
NETABLE_DEFINE_ERROR(ContractError, contract)
NETABLE_DEFINE_ERROR(DataError, data)
NETABLE_DEFINE_ERROR(ConfigError, config)
NETABLE_DEFINE_ERROR(RetrievalError, retrieval)
NETABLE_DEFINE_ERROR(GenerationError, generation)
NETABLE_DEFINE_ERROR(CheckpointError, checkpoint)
NETABLE_DEFINE_ERROR(DivergenceError, divergence)
NETABLE_DEFINE_ERROR(InvariantError, invariant)

#undef NETABLE_DEFINE_ERROR

}  // namespace netable
