#pragma once

#include <stdexcept>
#include <string>

namespace fishcal {

struct OutOfArenaError : std::runtime_error {
  explicit OutOfArenaError(const std::string& what) : std::runtime_error(what) {}
};

struct BinMismatchError : std::runtime_error {
  explicit BinMismatchError(const std::string& what) : std::runtime_error(what) {}
};

struct NotNormalisedError : std::runtime_error {
  explicit NotNormalisedError(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyBatchError : std::runtime_error {
  explicit EmptyBatchError(const std::string& what) : std::runtime_error(what) {}
};

struct SingletonPopulationError : std::runtime_error {
  explicit SingletonPopulationError(const std::string& what) : std::runtime_error(what) {}
};

struct MalformedMessageError : std::runtime_error {
  explicit MalformedMessageError(const std::string& what) : std::runtime_error(what) {}
};

struct VersionMismatchError : std::runtime_error {
  explicit VersionMismatchError(const std::string& what) : std::runtime_error(what) {}
};

struct UnknownTopicError : std::runtime_error {
  explicit UnknownTopicError(const std::string& what) : std::runtime_error(what) {}
};

struct InsufficientDataError : std::runtime_error {
  explicit InsufficientDataError(const std::string& what) : std::runtime_error(what) {}
};

struct CorruptLogError : std::runtime_error {
  explicit CorruptLogError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct TransportError : std::runtime_error {
  explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fishcal
