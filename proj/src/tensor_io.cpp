#include "vshuffle/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace vshuffle {
namespace {

constexpr char kMagic[] = "VST1";

template <typename S>
constexpr const char* dtype_name() {
  return sizeof(S) == 4 ? "f32" : "f64";
}

template <typename S>
void byteswap_inplace(S* v, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    auto* b = reinterpret_cast<unsigned char*>(v + i);
    for (std::size_t k = 0; k < sizeof(S) / 2; ++k) {
      std::swap(b[k], b[sizeof(S) - 1 - k]);
    }
  }
}

template <typename S>
Tensor<S> read_payload(std::istream& is, const Shape& shape) {
  Tensor<S> out(shape);
  is.read(reinterpret_cast<char*>(out.data()),
          static_cast<std::streamsize>(out.size() * sizeof(S)));
  if (!is || static_cast<std::size_t>(is.gcount()) != out.size() * sizeof(S)) {
    throw IoError("VST1: truncated payload for shape " + shape.str());
  }
  if constexpr (std::endian::native == std::endian::big) {
    byteswap_inplace(out.data(), out.size());
  }
  return out;
}

}  // namespace

template <typename S>
void write_vst(std::ostream& os, const Tensor<S>& x) {
  const Shape& s = x.shape();
  os << kMagic << '\n'
     << s.n << ' ' << s.t << ' ' << s.c << ' ' << s.h << ' ' << s.w << ' '
     << dtype_name<S>() << '\n';
  if constexpr (std::endian::native == std::endian::big) {
    std::vector<S> tmp(x.values().begin(), x.values().end());
    byteswap_inplace(tmp.data(), tmp.size());
    os.write(reinterpret_cast<const char*>(tmp.data()),
             static_cast<std::streamsize>(tmp.size() * sizeof(S)));
  } else {
    os.write(reinterpret_cast<const char*>(x.data()),
             static_cast<std::streamsize>(x.size() * sizeof(S)));
  }
  if (!os) throw IoError("VST1: write failed");
}

AnyTensor read_vst(std::istream& is) {
  std::string magic;
  if (!std::getline(is, magic) || magic != kMagic) {
    throw IoError("VST1: bad magic");
  }
  std::string header;
  if (!std::getline(is, header)) throw IoError("VST1: missing header line");
  std::istringstream hs(header);
  Shape s;
  std::string dtype;
  if (!(hs >> s.n >> s.t >> s.c >> s.h >> s.w >> dtype)) {
    throw IoError("VST1: malformed header '" + header + "'");
  }
  std::string extra;
  if (hs >> extra) throw IoError("VST1: trailing header fields '" + header + "'");
  if (!s.valid()) throw IoError("VST1: non-positive dimension in " + s.str());
  if (dtype == "f32") return read_payload<float>(is, s);
  if (dtype == "f64") return read_payload<double>(is, s);
  throw IoError("VST1: unknown dtype '" + dtype + "'");
}

template <typename S>
Tensor<S> read_vst_as(std::istream& is) {
  return std::visit(
      [](auto&& t) -> Tensor<S> { return tensor_cast<S>(t); }, read_vst(is));
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& body) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    try {
      body(os);
      os.flush();
      if (!os) throw IoError("write to " + tmp.string() + " failed");
    } catch (...) {
      os.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw;
    }
  }
  std::filesystem::rename(tmp, path);
}

AnyTensor load_vst(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_vst(is);
}

template void write_vst<float>(std::ostream&, const Tensor<float>&);
template void write_vst<double>(std::ostream&, const Tensor<double>&);
template Tensor<float> read_vst_as<float>(std::istream&);
template Tensor<double> read_vst_as<double>(std::istream&);

}  // namespace vshuffle
