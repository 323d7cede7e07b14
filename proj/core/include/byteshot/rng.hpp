#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace byteshot {

using Rng = std::mt19937_64;

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

std::uint64_t fnv1a64(std::string_view text) noexcept;

/// Derives an independent stream seed from a parent seed and a stream name.
/// Used to expand the single top-level seed into per-component RNG streams.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream) noexcept;

/// Uniform integer in [0, n). n must be positive.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Uniform real in [0, 1) with 53 random bits.
double uniform_unit(Rng& rng) noexcept;

}  // namespace byteshot
