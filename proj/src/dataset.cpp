#include "sharplab/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sharplab {

Dataset::Dataset(std::string text, double train_fraction) : text_(std::move(text)) {
  if (text_.empty()) throw std::invalid_argument("Dataset: empty corpus");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("Dataset: train_fraction must lie in (0, 1)");
  }
  std::vector<bool> seen(256, false);
  for (unsigned char c : text_) seen[c] = true;
  lookup_.assign(256, -1);
  for (std::size_t b = 0; b < 256; ++b) {
    if (seen[b]) {
      lookup_[b] = static_cast<std::int32_t>(vocab_.size());
      vocab_.push_back(static_cast<std::uint8_t>(b));
    }
  }
  tokens_ = encode(text_);
  train_end_ = static_cast<std::size_t>(train_fraction * static_cast<double>(tokens_.size()));
}

std::span<const std::int32_t> Dataset::train() const {
  return std::span(tokens_).subspan(0, train_end_);
}

std::span<const std::int32_t> Dataset::validation() const {
  return std::span(tokens_).subspan(train_end_);
}

std::vector<std::int32_t> Dataset::encode(std::string_view s) const {
  std::vector<std::int32_t> out;
  out.reserve(s.size());
  for (unsigned char c : s) {
    if (lookup_[c] < 0) throw std::out_of_range("Dataset::encode: byte outside vocabulary");
    out.push_back(lookup_[c]);
  }
  return out;
}

std::string Dataset::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  out.reserve(ids.size());
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
      throw std::out_of_range("Dataset::decode: id outside vocabulary");
    }
    out.push_back(static_cast<char>(vocab_[static_cast<std::size_t>(id)]));
  }
  return out;
}

std::vector<std::int32_t> encode_with(std::span<const std::uint8_t> vocabulary,
                                      std::string_view text) {
  std::vector<std::int32_t> lookup(256, -1);
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    lookup[vocabulary[i]] = static_cast<std::int32_t>(i);
  }
  std::vector<std::int32_t> out;
  out.reserve(text.size());
  for (unsigned char c : text) {
    if (lookup[c] < 0) {
      throw std::out_of_range("encode_with: byte " + std::to_string(c) + " outside vocabulary");
    }
    out.push_back(lookup[c]);
  }
  return out;
}

Dataset load_corpus(const std::string& path, double train_fraction) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_corpus: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  if (text.empty()) throw std::invalid_argument("load_corpus: " + path + " is empty");
  return Dataset(std::move(text), train_fraction);
}

Batch sample_batch(std::span<const std::int32_t> stream, std::size_t batch, std::size_t seq,
                   std::mt19937_64& rng) {
  if (stream.size() < seq + 1) throw std::invalid_argument("sample_batch: stream too short");
  Batch b{batch, seq, {}, {}};
  b.inputs.reserve(batch * seq);
  b.targets.reserve(batch * seq);
  const std::uint64_t span = stream.size() - seq;  // number of valid offsets
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t off = static_cast<std::size_t>(rng() % span);
    b.inputs.insert(b.inputs.end(), stream.begin() + off, stream.begin() + off + seq);
    b.targets.insert(b.targets.end(), stream.begin() + off + 1, stream.begin() + off + seq + 1);
  }
  return b;
}

Batch fixed_windows(std::span<const std::int32_t> stream, std::size_t count, std::size_t seq) {
  if (count == 0) throw std::invalid_argument("fixed_windows: count must be >= 1");
  if (stream.size() < seq + 1) throw std::invalid_argument("fixed_windows: stream too short");
  const std::size_t last = stream.size() - seq - 1;
  Batch b{count, seq, {}, {}};
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = count == 1 ? 0 : last * i / (count - 1);
    b.inputs.insert(b.inputs.end(), stream.begin() + off, stream.begin() + off + seq);
    b.targets.insert(b.targets.end(), stream.begin() + off + 1, stream.begin() + off + seq + 1);
  }
  return b;
}

}  // namespace sharplab
