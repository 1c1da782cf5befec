#pragma once

#include <stdexcept>
#include <string>

namespace ctalign {

// Every library error carries a kind so the CLI can map it to a distinct
// exit code.
enum class ErrorKind {
  kShape,
  kSimplex,
  kAllMasked,
  kDegenerateVector,
  kEvaluation,
  kEmptyLabelSet,
  kConfig,
  kGrid,
  kNumerical,
  kUndefinedMetric,
  kParse,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define CTALIGN_DEFINE_ERROR(Name, Kind)                        \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& what) : Error(Kind, what) {} \
  };

CTALIGN_DEFINE_ERROR(ShapeError, ErrorKind::kShape)
CTALIGN_DEFINE_ERROR(SimplexError, ErrorKind::kSimplex)
CTALIGN_DEFINE_ERROR(AllMaskedError, ErrorKind::kAllMasked)
CTALIGN_DEFINE_ERROR(DegenerateVectorError, ErrorKind::kDegenerateVector)
CTALIGN_DEFINE_ERROR(EvaluationError, ErrorKind::kEvaluation)
CTALIGN_DEFINE_ERROR(EmptyLabelSetError, ErrorKind::kEmptyLabelSet)
CTALIGN_DEFINE_ERROR(ConfigError, ErrorKind::kConfig)
CTALIGN_DEFINE_ERROR(GridError, ErrorKind::kGrid)
CTALIGN_DEFINE_ERROR(NumericalError, ErrorKind::kNumerical)
CTALIGN_DEFINE_ERROR(UndefinedMetricError, ErrorKind::kUndefinedMetric)

#undef CTALIGN_DEFINE_ERROR

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(ErrorKind::kParse,
              "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace ctalign
