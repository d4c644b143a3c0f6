#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace uwmmse {

// Operand shapes do not conform.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A factorization hit a pivot below tolerance. `node()` names the network
// node whose system failed when the caller knows it.
class SingularityError : public std::runtime_error {
 public:
  explicit SingularityError(const std::string& what,
                            std::optional<std::size_t> node = std::nullopt)
      : std::runtime_error(node ? what + " (node " + std::to_string(*node) + ")"
                                : what),
        node_(node) {}

  [[nodiscard]] std::optional<std::size_t> node() const { return node_; }

 private:
  std::optional<std::size_t> node_;
};

// Argument outside the domain of a function (e.g. logdet of a non-HPD matrix).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Iterative solver could not finish (e.g. bisection failed to bracket).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed dataset or checkpoint. `offset()` is the byte offset where
// parsing failed, when meaningful.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what,
                       std::optional<std::size_t> offset = std::nullopt)
      : std::runtime_error(offset ? what + " at byte offset " +
                                        std::to_string(*offset)
                                  : what),
        offset_(offset) {}

  [[nodiscard]] std::optional<std::size_t> offset() const { return offset_; }

 private:
  std::optional<std::size_t> offset_;
};

// Invalid user configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace uwmmse
