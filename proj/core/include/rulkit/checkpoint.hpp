#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "rulkit/tensor.hpp"

namespace rulkit {

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a_bytes(const void* data, std::size_t n, std::uint64_t hash = kFnvOffset);
std::uint64_t fnv1a_file(const std::filesystem::path& path);

// A trained model snapshot: architecture tag, the seed it was trained with,
// and every named tensor needed to reproduce its forward pass bit for bit.
struct Checkpoint {
    std::string arch;
    std::uint64_t seed = 0;
    StateDict tensors;
};

bool is_known_arch(const std::string& arch);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rulkit
