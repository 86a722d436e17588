// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace supar {

/// Byte-level token stream with the last 5% held out for validation.
struct Corpus {
  std::vector<std::int64_t> tokens;
  std::size_t split = 0;

  std::span<const std::int64_t> train() const { return std::span(tokens).first(split); }
  std::span<const std::int64_t> validation() const { return std::span(tokens).subspan(split); }
};

/// Throws IoError when the file is missing, unreadable or empty.
Corpus load_corpus(const std::filesystem::path& path);
Corpus corpus_from_bytes(std::string_view bytes);

/// Token/target windows laid out [batch, len]; targets are shifted by one.
struct Batch {
  std::vector<std::int64_t> tokens;
  std::vector<std::int64_t> targets;
  std::size_t batch = 0;
  std::size_t len = 0;

  bool operator==(const Batch&) const = default;
};

/// Uniformly placed contiguous windows over one split.
class WindowSampler {
 public:
  WindowSampler(std::span<const std::int64_t> data, std::size_t batch, std::size_t len, std::uint64_t seed);
  Batch next();

 private:
  std::span<const std::int64_t> data_;
  std::size_t batch_, len_;
  std::mt19937_64 rng_;
};

/// Evenly spaced windows covering the split; deterministic, no RNG.
std::vector<Batch> evaluation_batches(std::span<const std::int64_t> data, std::size_t batch, std::size_t len,
                                      std::size_t max_batches);

}  // namespace supar
