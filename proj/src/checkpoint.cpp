#include "vshuffle/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "vshuffle/tensor_io.hpp"

namespace vshuffle {
namespace {

constexpr const char* kMagic = "VSNCKPT1";

template <typename S>
std::vector<std::pair<std::string, Tensor<S>*>> entries(Network<S>& net) {
  std::vector<std::pair<std::string, Tensor<S>*>> out;
  for (const auto& p : net.parameters()) out.emplace_back(p.name, p.value);
  for (const auto& b : net.buffers()) out.emplace_back(b.name, b.value);
  return out;
}

std::string read_line(std::istream& is, const char* what) {
  std::string line;
  if (!std::getline(is, line)) throw IoError(std::string("checkpoint truncated before ") + what);
  return line;
}

}  // namespace

template <typename S>
void write_checkpoint(std::ostream& os, Network<S>& net) {
  const auto items = entries(net);
  os << kMagic << '\n' << items.size() << '\n';
  for (const auto& [name, value] : items) {
    os << name << '\n';
    write_vst(os, *value);
  }
  if (!os) throw IoError("checkpoint write failed");
}

template <typename S>
void read_checkpoint(std::istream& is, Network<S>& net) {
  if (read_line(is, "magic") != kMagic) throw IoError("not a VSNCKPT1 checkpoint");
  const auto items = entries(net);
  const std::string count = read_line(is, "entry count");
  if (count != std::to_string(items.size())) {
    throw IoError("checkpoint holds " + count + " entries, network expects " +
                  std::to_string(items.size()));
  }
  // Stage everything first so a bad file leaves the network untouched.
  std::vector<Tensor<S>> staged;
  staged.reserve(items.size());
  for (const auto& [name, value] : items) {
    const std::string got = read_line(is, "entry name");
    if (got != name) throw IoError("checkpoint entry '" + got + "' where '" + name + "' expected");
    Tensor<S> t = read_vst_as<S>(is);
    if (t.shape() != value->shape()) {
      throw IoError("checkpoint shape " + t.shape().str() + " for " + name + ", expected " +
                    value->shape().str());
    }
    staged.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < items.size(); ++i) *items[i].second = std::move(staged[i]);
}

template <typename S>
void save_checkpoint(const std::filesystem::path& path, Network<S>& net) {
  write_file_atomic(path, [&](std::ostream& os) { write_checkpoint(os, net); });
}

template <typename S>
void load_checkpoint(const std::filesystem::path& path, Network<S>& net) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  read_checkpoint(is, net);
}

#define VSHUFFLE_INSTANTIATE(S)                                          \
  template void write_checkpoint(std::ostream&, Network<S>&);            \
  template void read_checkpoint(std::istream&, Network<S>&);             \
  template void save_checkpoint(const std::filesystem::path&, Network<S>&); \
  template void load_checkpoint(const std::filesystem::path&, Network<S>&);
VSHUFFLE_INSTANTIATE(float)
VSHUFFLE_INSTANTIATE(double)
#undef VSHUFFLE_INSTANTIATE

}  // namespace vshuffle
