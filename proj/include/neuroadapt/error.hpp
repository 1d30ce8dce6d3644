#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace neuroadapt {

enum class ErrorCode {
  InvalidArgument,
  DuplicateStream,
  DescriptorMismatch,
  UnknownStream,
  WindowUnderfull,
  FusionError,
  ModelContractError,
  DegenerateDataset,
  EmptyDataset,
  SchemaError,
  ParseError,
  TemplateError,
  BackendUnavailable,
  IntegrityError,
  UnknownSession,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; `code()` is what tests and the CLI
/// dispatch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace neuroadapt
