#pragma once

#include <stdexcept>
#include <string>

namespace tawm {

// Base of every exception thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Vector/matrix width disagreement. The message names the offending layer or operand.
struct ShapeError : Error {
  using Error::Error;
};

// NaN or infinity showed up where a finite value is required.
struct NonFiniteError : Error {
  using Error::Error;
};

// Environment sub-step violates its CFL / diffusion / reaction stability bound.
struct StabilityError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace tawm
