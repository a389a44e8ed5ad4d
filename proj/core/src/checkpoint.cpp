#include "fishdet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace fishdet {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

constexpr char kMagic[8] = {'F', 'D', 'E', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

std::string read_string(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

void write_layer(std::ostream& out, const LayerSpec& layer) {
  const std::uint8_t kind = static_cast<std::uint8_t>(layer.kind);
  out.write(reinterpret_cast<const char*>(&kind), 1);
  write_string(out, layer.name);
  write_u64(out, layer.out_channels);
  write_u64(out, layer.kernel);
  write_u64(out, layer.stride);
  write_u64(out, layer.pad);
  write_u64(out, layer.pool_size);
  write_u64(out, layer.pool_stride);
  write_u64(out, layer.out_features);
}

LayerSpec read_layer(std::istream& in) {
  LayerSpec layer;
  std::uint8_t kind = 0;
  in.read(reinterpret_cast<char*>(&kind), 1);
  if (kind > static_cast<std::uint8_t>(LayerKind::Softmax)) {
    throw std::runtime_error("checkpoint: unknown layer kind");
  }
  layer.kind = static_cast<LayerKind>(kind);
  layer.name = read_string(in);
  layer.out_channels = read_u64(in);
  layer.kernel = read_u64(in);
  layer.stride = read_u64(in);
  layer.pad = read_u64(in);
  layer.pool_size = read_u64(in);
  layer.pool_stride = read_u64(in);
  layer.out_features = read_u64(in);
  return layer;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  write_u64(out, t.rank());
  for (std::size_t d : t.shape()) write_u64(out, d);
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
}

Tensor read_tensor(std::istream& in) {
  const std::uint64_t rank = read_u64(in);
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) d = read_u64(in);
  Tensor t(shape);
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  return t;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  }
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  write_u64(out, ckpt.iteration);
  write_string(out, ckpt.meta);

  write_u64(out, ckpt.spec.input_shape.size());
  for (std::size_t d : ckpt.spec.input_shape) write_u64(out, d);

  write_u64(out, ckpt.spec.layers.size());
  for (const LayerSpec& layer : ckpt.spec.layers) write_layer(out, layer);

  write_u64(out, ckpt.spec.params.size());
  for (const auto& [name, tensor] : ckpt.spec.params) {
    write_string(out, name);
    write_tensor(out, tensor);
  }
  if (!out) {
    throw std::runtime_error("save_checkpoint: write failed for " +
                             path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  }
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("load_checkpoint: not a checkpoint file: " +
                             path.string());
  }
  const std::uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version " +
                             std::to_string(version));
  }

  Checkpoint ckpt;
  ckpt.iteration = read_u64(in);
  ckpt.meta = read_string(in);

  const std::uint64_t rank = read_u64(in);
  ckpt.spec.input_shape.resize(rank);
  for (auto& d : ckpt.spec.input_shape) d = read_u64(in);

  const std::uint64_t n_layers = read_u64(in);
  ckpt.spec.layers.reserve(n_layers);
  for (std::uint64_t i = 0; i < n_layers; ++i) {
    ckpt.spec.layers.push_back(read_layer(in));
  }

  const std::uint64_t n_params = read_u64(in);
  for (std::uint64_t i = 0; i < n_params; ++i) {
    std::string name = read_string(in);
    ckpt.spec.params[std::move(name)] = read_tensor(in);
  }
  if (!in) {
    throw std::runtime_error("load_checkpoint: truncated file: " +
                             path.string());
  }
  return ckpt;
}

}  // namespace fishdet
