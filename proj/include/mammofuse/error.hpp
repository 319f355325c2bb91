#pragma once

#include <stdexcept>
#include <string>

namespace mammofuse {

/// Malformed or unsupported file content (images, manifests, embedding tables,
/// checkpoints, config files). The message always names the offending path.
class FormatError : public std::runtime_error {
public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Lookup of a sample id that an embedding table does not contain.
class MissingEmbedding : public std::runtime_error {
public:
  explicit MissingEmbedding(const std::string& id)
      : std::runtime_error("no embedding for sample id '" + id + "'"), id_(id) {}
  const std::string& id() const noexcept { return id_; }

private:
  std::string id_;
};

/// Training could not continue (non-finite loss or gradient, empty split).
class TrainingError : public std::runtime_error {
public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mammofuse
