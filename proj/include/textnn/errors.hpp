#pragma once

#include <stdexcept>
#include <string>

namespace textnn {

// Shape or extent disagreement between tensors/layers.
class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

// Violated precondition (bad hyperparameter, out-of-range label, ...).
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

// Token index outside the vocabulary.
class OovError : public std::runtime_error {
 public:
  explicit OovError(const std::string& what) : std::runtime_error(what) {}
};

// A convolution window does not fit: the output feature map would be empty.
class EmptyFeatureMapError : public std::runtime_error {
 public:
  explicit EmptyFeatureMapError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint/file-format problems (bad magic, truncation, version skew).
class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem / parsing problems on corpus, vocab, split and config files.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace textnn
