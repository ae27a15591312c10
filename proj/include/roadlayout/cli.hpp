#pragma once

#include <cstdint>
#include <cstddef>

namespace roadlayout {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitDataError = 2;
inline constexpr int kExitInternal = 3;

// Seed of the index-th record produced by `sample --seed seed`.
std::uint64_t record_seed(std::uint64_t seed, std::size_t index);

// Entry point of the roadlayout tool. Never throws; returns an exit code.
int run(int argc, const char* const argv[]);

}  // namespace roadlayout
