#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "sharplab/dataset.hpp"

using namespace sharplab;

TEST(Dataset, SortedByteVocabulary) {
  const Dataset d("hello world", 0.5);
  EXPECT_EQ(d.vocabulary(), (std::vector<std::uint8_t>{' ', 'd', 'e', 'h', 'l', 'o', 'r', 'w'}));
  EXPECT_EQ(d.encode("hold"), (std::vector<std::int32_t>{3, 5, 4, 1}));
  EXPECT_EQ(d.decode(d.tokens()), "hello world");
  EXPECT_THROW(d.encode("x"), std::out_of_range);
}

TEST(Dataset, SmallExamples) {
  const Dataset d("abab", 0.5);
  EXPECT_EQ(d.vocab_size(), 2u);
  EXPECT_EQ(d.tokens(), (std::vector<std::int32_t>{0, 1, 0, 1}));
  std::string text;
  for (int i = 0; i < 1000; ++i) text += static_cast<char>('a' + i % 7);
  const Dataset big(text, 0.9);
  EXPECT_EQ(big.train().size(), 900u);
  EXPECT_EQ(big.validation().size(), 100u);
  EXPECT_EQ(big.decode(big.encode(text)), text);
}

TEST(Dataset, ContiguousSplit) {
  const Dataset d("abcdefghij", 0.8);
  ASSERT_EQ(d.train().size(), 8u);
  ASSERT_EQ(d.validation().size(), 2u);
  EXPECT_EQ(d.decode(d.train()), "abcdefgh");
  EXPECT_EQ(d.decode(d.validation()), "ij");
  EXPECT_THROW(Dataset("abc", 1.0), std::invalid_argument);
  EXPECT_THROW(Dataset("", 0.5), std::invalid_argument);
}

TEST(Dataset, EncodeWithStoredVocabulary) {
  const std::vector<std::uint8_t> vocab{'a', 'c', 'z'};
  EXPECT_EQ(encode_with(vocab, "zca"), (std::vector<std::int32_t>{2, 1, 0}));
  EXPECT_THROW(encode_with(vocab, "b"), std::out_of_range);
}

TEST(Batches, TargetsAreShiftedInputs) {
  std::vector<std::int32_t> stream(100);
  for (std::size_t i = 0; i < stream.size(); ++i) stream[i] = static_cast<std::int32_t>(i);
  std::mt19937_64 rng(3);
  const Batch b = sample_batch(stream, 5, 7, rng);
  ASSERT_EQ(b.inputs.size(), 35u);
  ASSERT_EQ(b.targets.size(), 35u);
  for (std::size_t s = 0; s < 5; ++s) {
    for (std::size_t t = 0; t < 7; ++t) {
      const std::int32_t x = b.inputs[s * 7 + t];
      EXPECT_EQ(b.targets[s * 7 + t], x + 1);
      if (t > 0) EXPECT_EQ(x, b.inputs[s * 7 + t - 1] + 1);
    }
    EXPECT_LE(b.targets[s * 7 + 6], 99);
  }
  std::mt19937_64 again(3);
  const Batch c = sample_batch(stream, 5, 7, again);
  EXPECT_EQ(b.inputs, c.inputs);
  EXPECT_THROW(sample_batch(std::vector<std::int32_t>(7), 1, 7, rng), std::invalid_argument);
}

TEST(Batches, FixedWindowsAreSpreadAndDeterministic) {
  std::vector<std::int32_t> stream(101);
  for (std::size_t i = 0; i < stream.size(); ++i) stream[i] = static_cast<std::int32_t>(i);
  const Batch b = fixed_windows(stream, 3, 10);
  ASSERT_EQ(b.batch, 3u);
  EXPECT_EQ(b.inputs[0], 0);
  EXPECT_EQ(b.targets.back(), 100);
  EXPECT_LT(b.inputs[10], b.inputs[20]);
  EXPECT_EQ(b.inputs, fixed_windows(stream, 3, 10).inputs);
}

TEST(Corpus, LoadsFileAndRejectsMissing) {
  const auto path = std::filesystem::temp_directory_path() / "sharplab_corpus_test.txt";
  {
    std::ofstream out(path, std::ios::binary);
    out << "to be or not to be";
  }
  const Dataset d = load_corpus(path.string(), 0.9);
  EXPECT_EQ(d.text(), "to be or not to be");
  EXPECT_EQ(d.vocab_size(), 7u);
  std::filesystem::remove(path);
  EXPECT_THROW(load_corpus(path.string(), 0.9), std::runtime_error);
}
