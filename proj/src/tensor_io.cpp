#include "pdnet/tensor_io.hpp"

#include <bit>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace pdnet::io {
namespace {

constexpr char kMagic[4] = {'P', 'D', 'T', '1'};
// Guards against absurd allocations from corrupt extents.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;

template <typename UInt>
void write_le(std::ostream& out, UInt v) {
  char buf[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, sizeof(UInt));
}

template <typename UInt>
UInt read_le(std::istream& in) {
  unsigned char buf[sizeof(UInt)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(UInt))) throw DataError("unexpected end of stream");
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u8(std::ostream& out, std::uint8_t v) { write_le(out, v); }
void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
std::uint8_t read_u8(std::istream& in) { return read_le<std::uint8_t>(in); }
std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }

void write_bytes(std::ostream& out, const std::string& bytes) {
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_bytes(std::istream& in, std::size_t count) {
  std::string s(count, '\0');
  if (count > 0 && !in.read(s.data(), static_cast<std::streamsize>(count))) {
    throw DataError("unexpected end of stream");
  }
  return s;
}

template <typename Real>
void write_tensor(std::ostream& out, const Tensor<Real>& tensor) {
  out.write(kMagic, 4);
  write_u32(out, 4);
  const Shape& s = tensor.shape();
  for (std::size_t e : {s.n, s.c, s.h, s.w}) {
    if (e > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("extent exceeds u32: " + s.str());
    write_u32(out, static_cast<std::uint32_t>(e));
  }
  write_u8(out, static_cast<std::uint8_t>(dtype_of<Real>()));
  for (Real v : tensor.data()) {
    if constexpr (std::is_same_v<Real, float>) {
      write_le(out, std::bit_cast<std::uint32_t>(v));
    } else {
      write_le(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  if (!out) throw DataError("failed writing tensor");
}

template <typename Real>
Tensor<Real> read_tensor(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) throw DataError("truncated tensor record");
  if (!std::equal(magic, magic + 4, kMagic)) throw DataError("bad tensor magic, expected PDT1");
  const std::uint32_t rank = read_u32(in);
  if (rank != 4) throw DataError("unsupported tensor rank " + std::to_string(rank));
  Shape s;
  s.n = read_u32(in);
  s.c = read_u32(in);
  s.h = read_u32(in);
  s.w = read_u32(in);
  if (static_cast<std::uint64_t>(s.n) * s.c * s.h * s.w > kMaxElements) {
    throw DataError("tensor extents too large: " + s.str());
  }
  const std::uint8_t tag = read_u8(in);
  std::vector<Real> data(s.numel());
  if (tag == static_cast<std::uint8_t>(DType::f32)) {
    for (Real& v : data) v = static_cast<Real>(std::bit_cast<float>(read_le<std::uint32_t>(in)));
  } else if (tag == static_cast<std::uint8_t>(DType::f64)) {
    for (Real& v : data) v = static_cast<Real>(std::bit_cast<double>(read_le<std::uint64_t>(in)));
  } else {
    throw DataError("unknown tensor dtype tag " + std::to_string(tag));
  }
  return Tensor<Real>::from_data(s, std::move(data));
}

template <typename Real>
void save_tensor(const std::filesystem::path& path, const Tensor<Real>& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_tensor(out, tensor);
}

template <typename Real>
Tensor<Real> load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_tensor<Real>(in);
}

template void write_tensor<float>(std::ostream&, const Tensor<float>&);
template void write_tensor<double>(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor<float>(std::istream&);
template Tensor<double> read_tensor<double>(std::istream&);
template void save_tensor<float>(const std::filesystem::path&, const Tensor<float>&);
template void save_tensor<double>(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> load_tensor<float>(const std::filesystem::path&);
template Tensor<double> load_tensor<double>(const std::filesystem::path&);

}  // namespace pdnet::io
