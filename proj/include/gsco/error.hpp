#pragma once

#include <stdexcept>
#include <string>

namespace gsco {

// Base of every error this library throws on purpose.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// -- vector index ------------------------------------------------------------
struct DimensionError : Error {
  using Error::Error;
};
struct DegenerateVectorError : Error {
  using Error::Error;
};
struct DuplicateIdError : Error {
  using Error::Error;
};
struct StorageError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};

// -- collaboration -----------------------------------------------------------
struct EmptyVoteError : Error {
  using Error::Error;
};
struct AllBackendsFailedError : Error {
  using Error::Error;
};
struct InferenceError : Error {
  using Error::Error;
};

// -- prompt engine -----------------------------------------------------------
struct MissingBindingError : Error {
  explicit MissingBindingError(const std::string& placeholder)
      : Error("missing binding for placeholder {" + placeholder + "}"), name(placeholder) {}
  std::string name;
};
struct UnknownTemplateError : Error {
  using Error::Error;
};

// -- backend gateway ---------------------------------------------------------
struct BackendError : Error {
  using Error::Error;
};
struct ProtocolError : Error {
  using Error::Error;
};

// -- metrics -----------------------------------------------------------------
struct ShapeError : Error {
  using Error::Error;
};
struct EmptyInputError : Error {
  using Error::Error;
};

// -- corpus / config ---------------------------------------------------------
struct ParseError : Error {
  ParseError(const std::string& what, std::size_t line_number)
      : Error(what + " (line " + std::to_string(line_number) + ")"), line(line_number) {}
  std::size_t line;
};
struct ValidationError : Error {
  using Error::Error;
};

}  // namespace gsco
