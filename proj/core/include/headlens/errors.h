#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace headlens {

// Root of every error the library throws. The CLI maps subclasses onto exit
// codes, so new error types should derive from the closest existing class.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem or network I/O that failed before any content was interpreted.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed tensor files or manifests.
class FormatError : public Error {
 public:
  enum class Kind {
    kBadMagic,
    kBadVersion,
    kUnsupportedDtype,
    kCorruptHeader,
    kTruncatedPayload,
    kBadShape,
    kBadManifest,
  };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// A loaded artifact violates a declared invariant (missing tensor, dimension
// mismatch, non-unit text embedding, reconstruction residual).
class InvariantError : public Error {
 public:
  using Error::Error;
};

class ReconstructionError : public InvariantError {
 public:
  ReconstructionError(std::string image_id, double residual, const std::string& what)
      : InvariantError(what), image_id_(std::move(image_id)), residual_(residual) {}

  const std::string& image_id() const { return image_id_; }
  double residual() const { return residual_; }

 private:
  std::string image_id_;
  double residual_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class TextSpanError : public Error {
 public:
  enum class Kind { kTooFewCandidates, kTooFewImages, kDegenerateInput, kExhausted, kShapeMismatch };

  TextSpanError(Kind kind, const std::string& what, std::size_t selected = 0)
      : Error(what), kind_(kind), selected_(selected) {}
  Kind kind() const { return kind_; }
  // Number of selections made before an early exhaustion.
  std::size_t selected() const { return selected_; }

 private:
  Kind kind_;
  std::size_t selected_;
};

class JudgeError : public Error {
 public:
  enum class Kind { kNetwork, kUnparseable, kAuth, kConfig };

  JudgeError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Domain errors in concept scoring, pruning and metrics (length mismatch,
// undefined statistic, empty pools).
class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace headlens
