#include "pdnet/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "pdnet/error.hpp"
#include "pdnet/tensor_io.hpp"

namespace pdnet {
namespace {

constexpr char kMagic[4] = {'P', 'D', 'N', 'C'};
constexpr std::uint32_t kMaxStringBytes = 1u << 20;

void write_string(std::ostream& out, const std::string& s) {
  io::write_u32(out, static_cast<std::uint32_t>(s.size()));
  io::write_bytes(out, s);
}

std::string read_string(std::istream& in, const char* what) {
  const std::uint32_t n = io::read_u32(in);
  if (n > kMaxStringBytes) throw DataError(std::string("checkpoint: implausible ") + what + " length");
  return io::read_bytes(in, n);
}

}  // namespace

template <typename Real>
void write_checkpoint(std::ostream& out, const PDNetParams<Real>& params) {
  out.write(kMagic, 4);
  io::write_u32(out, kCheckpointVersion);
  write_string(out, to_key_values(params.master, params.subnet, params.fusion).format());
  io::write_u32(out, static_cast<std::uint32_t>(params.list().size()));
  for (const auto& p : params.list()) {
    write_string(out, p.name);
    io::write_tensor(out, p.value);
    io::write_u8(out, p.frozen ? 1 : 0);
  }
  if (!out) throw DataError("checkpoint: write failed");
}

template <typename Real>
PDNetParams<Real> read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) throw DataError("checkpoint: truncated header");
  if (!std::equal(magic, magic + 4, kMagic)) throw DataError("checkpoint: bad magic, expected PDNC");
  const std::uint32_t version = io::read_u32(in);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  const KeyValues kv = KeyValues::parse(read_string(in, "config"), "<checkpoint>");
  MasterConfig master;
  std::optional<SubNetConfig> subnet;
  FusionSpec fusion;
  from_key_values(kv, master, subnet, fusion);

  Rng rng(0);
  PDNetParams<Real> params = subnet ? build_pdnet<Real>(master, *subnet, fusion, rng) : build_master<Real>(master, rng);

  const std::uint32_t count = io::read_u32(in);
  if (count != params.list().size()) {
    throw DataError("checkpoint: " + std::to_string(count) + " records, architecture has " +
                    std::to_string(params.list().size()));
  }
  std::vector<bool> seen(count, false);
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::string name = read_string(in, "record name");
    Tensor<Real> value = io::read_tensor<Real>(in);
    const std::uint8_t frozen = io::read_u8(in);
    if (frozen > 1) throw DataError("checkpoint: bad frozen flag for '" + name + "'");
    Parameter<Real>* p = params.find(name);
    if (p == nullptr) throw DataError("checkpoint: unexpected record '" + name + "'");
    const std::size_t idx = static_cast<std::size_t>(p - params.list().data());
    if (seen[idx]) throw DataError("checkpoint: duplicate record '" + name + "'");
    seen[idx] = true;
    if (!(value.shape() == p->value.shape())) {
      throw DataError("checkpoint: '" + name + "' has shape " + value.shape().str() + ", expected " +
                      p->value.shape().str());
    }
    std::copy(value.data().begin(), value.data().end(), p->value.data().begin());
    p->frozen = frozen == 1;
    if (p->frozen && p->value.requires_grad()) p->value.set_requires_grad(false);
  }
  return params;
}

template <typename Real>
void save_checkpoint(const PDNetParams<Real>& params, const std::filesystem::path& path) {
  std::ostringstream buffer(std::ios::binary);
  write_checkpoint(buffer, params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  io::write_bytes(out, buffer.str());
  if (!out) throw DataError("write failed: " + path.string());
}

template <typename Real>
PDNetParams<Real> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  try {
    return read_checkpoint<Real>(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

template <typename Real>
void transfer_prior(const PDNetParams<Real>& prior, PDNetParams<Real>& target) {
  // Validate everything before copying so a mismatch leaves target untouched.
  std::vector<std::pair<const Parameter<Real>*, Parameter<Real>*>> pairs;
  for (auto& dst : target.list()) {
    if (dst.group != ParamGroup::master_encoder) continue;
    const Parameter<Real>* src = prior.find(dst.name);
    if (src == nullptr) throw ConfigError("prior has no tensor '" + dst.name + "'");
    if (!(src->value.shape() == dst.value.shape())) {
      throw ConfigError("prior tensor '" + dst.name + "' has shape " + src->value.shape().str() + ", expected " +
                        dst.value.shape().str());
    }
    pairs.emplace_back(src, &dst);
  }
  if (pairs.empty()) throw ConfigError("target has no master-encoder tensors");
  for (auto [src, dst] : pairs) std::copy(src->value.data().begin(), src->value.data().end(), dst->value.data().begin());
}

#define PDNET_INSTANTIATE_CHECKPOINT(Real)                                                   \
  template void write_checkpoint(std::ostream&, const PDNetParams<Real>&);                   \
  template PDNetParams<Real> read_checkpoint<Real>(std::istream&);                           \
  template void save_checkpoint(const PDNetParams<Real>&, const std::filesystem::path&);     \
  template PDNetParams<Real> load_checkpoint<Real>(const std::filesystem::path&);            \
  template void transfer_prior(const PDNetParams<Real>&, PDNetParams<Real>&);

PDNET_INSTANTIATE_CHECKPOINT(float)
PDNET_INSTANTIATE_CHECKPOINT(double)

#undef PDNET_INSTANTIATE_CHECKPOINT

}  // namespace pdnet
