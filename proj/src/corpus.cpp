// SPDX-License-Identifier: Apache-2.0
#include "supar/corpus.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "supar/errors.hpp"

namespace supar {

Corpus corpus_from_bytes(std::string_view bytes) {
  if (bytes.empty()) throw IoError("corpus is empty");
  Corpus c;
  c.tokens.reserve(bytes.size());
  for (const char ch : bytes) c.tokens.push_back(static_cast<unsigned char>(ch));
  const std::size_t held_out = bytes.size() / 20;
  c.split = bytes.size() - held_out;
  return c;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("cannot read corpus '" + path.string() + "'");
  if (bytes.empty()) throw IoError("corpus '" + path.string() + "' is empty");
  return corpus_from_bytes(bytes);
}

WindowSampler::WindowSampler(std::span<const std::int64_t> data, std::size_t batch, std::size_t len,
                             std::uint64_t seed)
    : data_(data), batch_(batch), len_(len), rng_(seed) {
  if (batch == 0 || len == 0) throw ContractViolation("WindowSampler: batch and len must be positive");
  if (data.size() < len + 1) {
    std::ostringstream msg;
    msg << "WindowSampler: " << data.size() << " tokens cannot hold a window of " << len + 1;
    throw ContractViolation(msg.str());
  }
}

namespace {

void append_window(Batch& b, std::span<const std::int64_t> data, std::size_t start, std::size_t len) {
  b.tokens.insert(b.tokens.end(), data.begin() + start, data.begin() + start + len);
  b.targets.insert(b.targets.end(), data.begin() + start + 1, data.begin() + start + len + 1);
}

}  // namespace

Batch WindowSampler::next() {
  Batch b{{}, {}, batch_, len_};
  b.tokens.reserve(batch_ * len_);
  b.targets.reserve(batch_ * len_);
  std::uniform_int_distribution<std::size_t> start(0, data_.size() - len_ - 1);
  for (std::size_t i = 0; i < batch_; ++i) append_window(b, data_, start(rng_), len_);
  return b;
}

std::vector<Batch> evaluation_batches(std::span<const std::int64_t> data, std::size_t batch, std::size_t len,
                                      std::size_t max_batches) {
  if (batch == 0 || len == 0 || max_batches == 0)
    throw ContractViolation("evaluation_batches: batch, len and max_batches must be positive");
  if (data.size() < len + 1) throw ContractViolation("evaluation_batches: split shorter than one window");
  const std::size_t windows = (data.size() - 1) / len;
  const std::size_t count = std::min(max_batches, std::max<std::size_t>(1, windows / batch));
  const std::size_t wanted = count * batch;
  const std::size_t last_start = data.size() - len - 1;
  std::vector<Batch> out;
  for (std::size_t i = 0; i < count; ++i) {
    Batch b{{}, {}, batch, len};
    for (std::size_t j = 0; j < batch; ++j) {
      const std::size_t w = i * batch + j;
      const std::size_t start = wanted > 1 ? w * last_start / (wanted - 1) : 0;
      append_window(b, data, start, len);
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace supar
