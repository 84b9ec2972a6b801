#ifndef VSHUFFLE_CHECKPOINT_HPP
#define VSHUFFLE_CHECKPOINT_HPP

// VSNCKPT1 checkpoint:
//   "VSNCKPT1\n"
//   "<entry count>\n"
//   per entry: "<name>\n" followed by one VST1 tensor
// Entries are the network's parameters followed by its buffers.

#include <filesystem>
#include <iosfwd>

#include "vshuffle/network.hpp"

namespace vshuffle {

template <typename S>
void write_checkpoint(std::ostream& os, Network<S>& net);

// Names, order and shapes must match the receiving network exactly.
template <typename S>
void read_checkpoint(std::istream& is, Network<S>& net);

template <typename S>
void save_checkpoint(const std::filesystem::path& path, Network<S>& net);

template <typename S>
void load_checkpoint(const std::filesystem::path& path, Network<S>& net);

}  // namespace vshuffle

#endif  // VSHUFFLE_CHECKPOINT_HPP
