#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sharplab/model.hpp"

namespace sharplab {

/// Character-level corpus: sorted byte vocabulary, encoded stream, contiguous
/// train/validation split (train first).
class Dataset {
 public:
  Dataset(std::string text, double train_fraction);

  const std::string& text() const noexcept { return text_; }
  const std::vector<std::uint8_t>& vocabulary() const noexcept { return vocab_; }
  std::size_t vocab_size() const noexcept { return vocab_.size(); }
  const std::vector<std::int32_t>& tokens() const noexcept { return tokens_; }
  std::span<const std::int32_t> train() const;
  std::span<const std::int32_t> validation() const;

  std::vector<std::int32_t> encode(std::string_view s) const;
  std::string decode(std::span<const std::int32_t> ids) const;

 private:
  std::string text_;
  std::vector<std::uint8_t> vocab_;
  std::vector<std::int32_t> lookup_;  // byte -> id, -1 if absent
  std::vector<std::int32_t> tokens_;
  std::size_t train_end_ = 0;
};

/// Encodes `text` against an existing sorted vocabulary (e.g. one stored in a
/// checkpoint). Throws std::out_of_range on unknown bytes.
std::vector<std::int32_t> encode_with(std::span<const std::uint8_t> vocabulary,
                                      std::string_view text);

/// Reads a corpus file. Throws on unreadable or empty files.
Dataset load_corpus(const std::string& path, double train_fraction);

/// `batch` windows of seq+1 tokens at uniform random offsets; targets are inputs shifted
/// by one.
Batch sample_batch(std::span<const std::int32_t> stream, std::size_t batch, std::size_t seq,
                   std::mt19937_64& rng);

/// Evenly spaced, non-random windows covering the stream (for validation).
Batch fixed_windows(std::span<const std::int32_t> stream, std::size_t count, std::size_t seq);

}  // namespace sharplab
