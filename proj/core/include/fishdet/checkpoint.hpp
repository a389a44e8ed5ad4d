#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "fishdet/network.hpp"

namespace fishdet {

/// A trained (or training) network snapshot: the layer stack with its named
/// parameter tensors, a free-form metadata string (JSON by convention) and
/// the iteration counter. The binary container round-trips bit-exactly.
struct Checkpoint {
  NetworkSpec spec;
  std::string meta;
  std::uint64_t iteration = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fishdet
