#ifndef VSHUFFLE_ERROR_HPP
#define VSHUFFLE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace vshuffle {

// Shape or index precondition violated.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid operator, network, task or training configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or unreadable file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vshuffle

#endif  // VSHUFFLE_ERROR_HPP
