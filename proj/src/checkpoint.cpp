#include "polarloc/checkpoint.hpp"

#include <fstream>

#include "polarloc/binary_io.hpp"

namespace ploc {

void write_checkpoint(std::ostream& out, const NamedTensors& tensors) {
  out.write("PLOC", 4);
  binary::write_le(out, kCheckpointVersion);
  binary::write_le(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    binary::write_string(out, name);
    binary::write_le(out, static_cast<std::uint32_t>(t.rank()));
    for (auto extent : t.shape()) binary::write_le(out, static_cast<std::uint64_t>(extent));
    for (float v : t.data()) binary::write_f32(out, v);
  }
  if (!out) throw DataError("failed writing checkpoint");
}

NamedTensors read_checkpoint(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "PLOC") throw DataError("not a PLOC checkpoint");
  const auto version = binary::read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto count = binary::read_le<std::uint32_t>(in);
  NamedTensors tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = binary::read_string(in);
    const auto rank = binary::read_le<std::uint32_t>(in);
    if (rank == 0 || rank > 8) throw DataError("bad tensor rank in checkpoint entry " + name);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto extent = binary::read_le<std::uint64_t>(in);
      if (extent == 0 || extent > (1ull << 32)) throw DataError("bad extent in checkpoint entry " + name);
      shape.push_back(static_cast<std::size_t>(extent));
    }
    std::vector<float> data(numel(shape));
    for (auto& v : data) v = binary::read_f32(in);
    tensors.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  return tensors;
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(out, tensors);
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  return read_checkpoint(in);
}

}  // namespace ploc
