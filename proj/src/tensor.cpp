#include "vshuffle/tensor.hpp"

namespace vshuffle {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(t) + "," +
         std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

void check_shape(const Shape& s) {
  if (!s.valid()) throw ShapeError("all tensor dims must be >= 1, got " + s.str());
}

}  // namespace vshuffle
