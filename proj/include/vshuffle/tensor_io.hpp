#ifndef VSHUFFLE_TENSOR_IO_HPP
#define VSHUFFLE_TENSOR_IO_HPP

// VST1 binary tensor dump:
//   "VST1\n"
//   "N T C H W dtype\n"        dtype is f32 or f64
//   raw little-endian values in (N, T, C, H, W) order

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <variant>

#include "vshuffle/tensor.hpp"

namespace vshuffle {

using AnyTensor = std::variant<Tensor32, Tensor64>;

template <typename S>
void write_vst(std::ostream& os, const Tensor<S>& x);

AnyTensor read_vst(std::istream& is);

// Reads a tensor and converts it to the requested scalar width.
template <typename S>
Tensor<S> read_vst_as(std::istream& is);

// Writes through a temporary sibling file that is renamed into place only
// after `body` succeeds, so a failed write never leaves a partial file.
void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& body);

template <typename S>
void save_vst(const std::filesystem::path& path, const Tensor<S>& x) {
  write_file_atomic(path, [&](std::ostream& os) { write_vst(os, x); });
}

AnyTensor load_vst(const std::filesystem::path& path);

}  // namespace vshuffle

#endif  // VSHUFFLE_TENSOR_IO_HPP
