#include "ruinscope/checkpoint.hpp"

#include "ruinscope/binary_io.hpp"
#include "ruinscope/error.hpp"

namespace ruinscope::nn {

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  io::Writer w;
  w.magic("RSNN");
  w.u16(kCheckpointVersion);
  w.str(ckpt.metadata_json);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : p.value.data()) w.f32(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.expect_magic("RSNN");
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw Error(Errc::ParseError, "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.metadata_json = r.str();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor p;
    p.name = r.str();
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u32();
    std::vector<float> data(numel(shape));
    for (auto& v : data) v = r.f32();
    p.value = Tensor<float>(std::move(shape), std::move(data));
    ckpt.params.push_back(std::move(p));
  }
  if (!r.at_end()) throw Error(Errc::ParseError, "trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace ruinscope::nn
