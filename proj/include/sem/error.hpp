#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sem {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A parameter or input outside its documented domain.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Mesh construction or numbering failure (inverted elements, unsupported topology).
class MeshError : public Error {
public:
  using Error::Error;
};

/// Halo message whose length or ordering does not match the receiver's plan.
class ProtocolError : public Error {
public:
  using Error::Error;
};

/// Bad configuration file or command-line value.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Non-physical or non-finite state detected during a right-hand-side evaluation.
class DivergedStateError : public Error {
public:
  DivergedStateError(const std::string& what, std::ptrdiff_t element)
      : Error(what + " (element " + std::to_string(element) + ")"), element_(element) {}

  std::ptrdiff_t element() const noexcept { return element_; }

private:
  std::ptrdiff_t element_;
};

}  // namespace sem
