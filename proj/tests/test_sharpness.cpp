#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "oracles.hpp"
#include "sharplab/sharpness.hpp"

using namespace sharplab;

namespace {

Batch random_batch(const ModelConfig& c, std::size_t b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int32_t> tok(0, static_cast<std::int32_t>(c.vocab) - 1);
  Batch batch{b, c.context, {}, {}};
  for (std::size_t i = 0; i < b * c.context; ++i) {
    batch.inputs.push_back(tok(rng));
    batch.targets.push_back(tok(rng));
  }
  return batch;
}

Batch repeated(const Batch& b, std::size_t times) {
  Batch out{b.batch * times, b.seq, {}, {}};
  for (std::size_t i = 0; i < times; ++i) {
    out.inputs.insert(out.inputs.end(), b.inputs.begin(), b.inputs.end());
    out.targets.insert(out.targets.end(), b.targets.begin(), b.targets.end());
  }
  return out;
}

}  // namespace

TEST(SoftLabels, DominantLogitIsAlwaysDrawn) {
  Tensor logits({3, 5}, 0.0);
  logits.at(0, 2) = 30.0;
  logits.at(1, 0) = 30.0;
  logits.at(2, 4) = 30.0;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(sample_soft_labels(logits, rng), (std::vector<std::int32_t>{2, 0, 4}));
  }
}

TEST(SoftLabels, UniformLogitsAreBalanced) {
  const Tensor logits({100000, 2}, 0.0);
  std::mt19937_64 rng(7);
  const auto labels = sample_soft_labels(logits, rng);
  const double ones = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  EXPECT_NEAR(ones / 1e5, 0.5, 0.01);
}

TEST(SoftLabels, FrequenciesFollowSoftmax) {
  // softmax(0, ln 2, ln 5) = (1, 2, 5) / 8
  Tensor logits({200000, 3}, 0.0);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    logits.at(r, 1) = std::log(2.0);
    logits.at(r, 2) = std::log(5.0);
  }
  std::mt19937_64 rng(3);
  const auto labels = sample_soft_labels(logits, rng);
  std::array<double, 3> freq{};
  for (auto l : labels) freq[static_cast<std::size_t>(l)] += 1.0 / 200000.0;
  EXPECT_NEAR(freq[0], 0.125, 0.005);
  EXPECT_NEAR(freq[1], 0.250, 0.005);
  EXPECT_NEAR(freq[2], 0.625, 0.005);
}

TEST(SoftLabels, SeededDrawsRepeat) {
  std::mt19937_64 g(5);
  Tensor logits = oracle::random_tensor(g, {50, 7});
  std::mt19937_64 a(42), b(42);
  EXPECT_EQ(sample_soft_labels(logits, a), sample_soft_labels(logits, b));
}

TEST(Fisher, PinnedLabelsGiveBatchScaledSquaredGradient) {
  const ModelConfig c = oracle::tiny_config();
  const auto m = build_model(c, 4);
  const Batch b = random_batch(c, 3, 8);
  const GradMap h = fisher_diag_with_labels(m, b);
  const GradMap g = model_loss_and_grad(m, b).grads;
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t k = 0; k < g[i].size(); ++k) {
      EXPECT_EQ(h[i][k], 3.0 * g[i][k] * g[i][k]);
    }
  }
}

TEST(Fisher, RepeatingTheBatchScalesByItsLength) {
  const ModelConfig c = oracle::tiny_config();
  const auto m = build_model(c, 4);
  const Batch b = random_batch(c, 2, 8);
  const GradMap h1 = fisher_diag_with_labels(m, b);
  const GradMap h4 = fisher_diag_with_labels(m, repeated(b, 4));
  for (std::size_t i = 0; i < h1.size(); ++i) {
    for (std::size_t k = 0; k < h1[i].size(); ++k) {
      EXPECT_NEAR(h4[i][k], 4.0 * h1[i][k], 1e-12 * std::max(1e-30, 4.0 * h1[i][k]) + 1e-300);
    }
  }
}

TEST(Fisher, SampledVersionMatchesPinnedLabels) {
  const ModelConfig c = oracle::tiny_config();
  const auto m = build_model(c, 4);
  Batch b = random_batch(c, 2, 8);
  std::mt19937_64 r1(9), r2(9);
  const GradMap h = fisher_diag(m, b, r1);
  b.targets = sample_soft_labels(model_logits(m, b.inputs, b.batch, b.seq), r2);
  EXPECT_EQ(h, fisher_diag_with_labels(m, b));
}

TEST(Fisher, UnbiasedAgainstPerSampleEstimator) {
  const oracle::Unbiasedness u = oracle::fisher_unbiasedness(17, 10000);
  EXPECT_GT(u.coords, 100u);
  EXPECT_GE(u.fraction(), 0.97);
}

TEST(BlockSharpness, ConstantFieldHasExactStatistics) {
  const ModelConfig c = oracle::micro_config();
  const auto m = build_model(c, 0);
  const double b = 16.0, cst = 0.003;
  GradMap h = m.params().zeros_like();
  for (std::size_t i = 0; i < h.size(); ++i) {
    for (double& v : h[i].data()) v = b * cst * cst;
  }
  const SharpnessReport r = block_sharpness(h, m.specs(), Grouping::BlockType);
  ASSERT_EQ(r.groups.size(), 5u);
  for (const auto& g : r.groups) {
    EXPECT_DOUBLE_EQ(g.s_arith, b * cst * cst);
    EXPECT_NEAR(g.mean_log_h, std::log(b * cst * cst), 1e-13);
    for (double q : g.quantiles) EXPECT_DOUBLE_EQ(q, b * cst * cst);
  }
}

TEST(BlockSharpness, MatchesBruteForceGrouping) {
  const ModelConfig c = oracle::micro_config();
  const auto m = build_model(c, 0);
  std::mt19937_64 rng(12);
  std::exponential_distribution<double> expo(1e3);
  GradMap h = m.params().zeros_like();
  for (std::size_t i = 0; i < h.size(); ++i) {
    for (double& v : h[i].data()) v = expo(rng);
  }
  h.at("wpe")[0] = 0.0;

  for (Grouping grouping : {Grouping::BlockType, Grouping::Layer, Grouping::PerBlock}) {
    std::map<std::string, std::vector<double>> brute;
    for (std::size_t i = 0; i < h.size(); ++i) {
      const ParamSpec& s = m.specs()[i];
      std::string key = grouping == Grouping::BlockType ? std::string(to_string(s.block_type))
                        : grouping == Grouping::Layer   ? "layer" + std::to_string(s.layer)
                                                        : s.id;
      auto& vals = brute[key];
      vals.insert(vals.end(), h[i].data().begin(), h[i].data().end());
    }
    const SharpnessReport r = block_sharpness(h, m.specs(), grouping, 7);
    EXPECT_EQ(r.step, 7u);
    ASSERT_EQ(r.groups.size(), brute.size());
    for (auto& [key, vals] : brute) {
      const GroupStats& g = r.at(key);
      double sum = 0.0, logs = 0.0;
      for (double v : vals) {
        sum += v;
        logs += std::log(std::max(v, 1e-40));
      }
      EXPECT_EQ(g.count, vals.size());
      EXPECT_NEAR(g.s_arith, sum / double(vals.size()), 1e-12 * sum);
      EXPECT_NEAR(g.mean_log_h, logs / double(vals.size()), 1e-10);
      std::sort(vals.begin(), vals.end());
      EXPECT_DOUBLE_EQ(g.quantiles[2], vals.size() % 2
                                           ? vals[vals.size() / 2]
                                           : 0.5 * (vals[vals.size() / 2 - 1] + vals[vals.size() / 2]));
      EXPECT_EQ(g.quantiles[0] <= g.quantiles[1] && g.quantiles[1] <= g.quantiles[2] &&
                    g.quantiles[2] <= g.quantiles[3] && g.quantiles[3] <= g.quantiles[4],
                true);
    }
    EXPECT_EQ(r.total_count(), m.parameter_count());
  }
  const SharpnessReport bt = block_sharpness(h, m.specs(), Grouping::BlockType);
  EXPECT_EQ(bt.groups[0].group, "Emb");
  EXPECT_EQ(bt.groups[4].group, "Norm");
  EXPECT_NEAR(bt.at("Emb").mean_log_h,
              [&] {
                double s = 0.0;
                std::size_t n = 0;
                for (const char* id : {"wte", "wpe"}) {
                  for (double v : h.at(id).data()) {
                    s += std::log(std::max(v, 1e-40));
                    ++n;
                  }
                }
                return s / double(n);
              }(),
              1e-10);
}

TEST(BlockSharpness, GroupsDecomposeTheTrace) {
  const ModelConfig c = oracle::tiny_config();
  const auto m = build_model(c, 4);
  const Batch b = random_batch(c, 4, 1);
  const GradMap h = fisher_diag_with_labels(m, b);
  const double g2 = std::pow(global_norm(model_loss_and_grad(m, b).grads), 2);
  for (Grouping grouping : {Grouping::BlockType, Grouping::Layer, Grouping::PerBlock}) {
    const SharpnessReport r = block_sharpness(h, m.specs(), grouping);
    double total = 0.0;
    for (const auto& g : r.groups) total += g.s_arith * double(g.count);
    EXPECT_NEAR(total, 4.0 * g2, 1e-10 * 4.0 * g2);
    EXPECT_EQ(r.total_count(), m.parameter_count());
  }
}

TEST(BlockSharpness, RejectsMismatchedField) {
  const auto m = build_model(oracle::micro_config(), 0);
  GradMap h;
  h.insert("wte", Tensor({5, 4}));
  EXPECT_THROW(block_sharpness(h, m.specs(), Grouping::BlockType), std::invalid_argument);
}

TEST(Quantile, LinearInterpolation) {
  std::vector<double> v(20);
  for (std::size_t i = 0; i < 20; ++i) v[i] = double(i + 1);
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.05), 1.95);
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.25), 5.75);
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.50), 10.5);
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.75), 15.25);
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.95), 19.05);
  EXPECT_DOUBLE_EQ(sorted_quantile(std::vector<double>{3.0}, 0.5), 3.0);
  EXPECT_THROW(sorted_quantile(std::vector<double>{}, 0.5), std::invalid_argument);
}

TEST(ParamNorms, KnownTensors) {
  const ModelConfig c = oracle::micro_config();
  TransformerModel m = build_model(c, 0);
  m.params().at("h.0.attn.w_q") = identity(4);
  m.params().at("h.0.attn.w_k") = Tensor({4, 4}, 0.0);
  const ParamNorms n = block_param_norms(m);
  ASSERT_EQ(n.ids.size(), m.specs().size());
  for (std::size_t i = 0; i < n.ids.size(); ++i) {
    if (n.ids[i] == "h.0.attn.w_q") EXPECT_DOUBLE_EQ(n.per_tensor[i], 2.0);
    if (n.ids[i] == "h.0.attn.w_k") EXPECT_EQ(n.per_tensor[i], 0.0);
  }
  EXPECT_DOUBLE_EQ(n.by_type[static_cast<std::size_t>(BlockType::QK)], 1.0);
  EXPECT_DOUBLE_EQ(n.by_type[static_cast<std::size_t>(BlockType::Norm)], 2.0);
}

TEST(SharpnessCsv, Schema) {
  const auto m = build_model(oracle::micro_config(), 0);
  GradMap h = m.params().zeros_like();
  for (std::size_t i = 0; i < h.size(); ++i) {
    for (double& v : h[i].data()) v = 0.25;
  }
  std::ostringstream out;
  write_sharpness_csv_header(out);
  std::size_t groups = 0;
  for (Grouping g : {Grouping::BlockType, Grouping::Layer, Grouping::PerBlock}) {
    const SharpnessReport r = block_sharpness(h, m.specs(), g, 300);
    groups += r.groups.size();
    write_sharpness_csv(out, r);
  }
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,grouping,group,count,S_arith,mean_log_h,q05,q25,q50,q75,q95");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 10) << line;
    EXPECT_TRUE(line.starts_with("300,")) << line;
  }
  EXPECT_EQ(rows, groups);
  EXPECT_NE(out.str().find("300,block_type,Emb,"), std::string::npos);
  EXPECT_NE(out.str().find("300,layer,layer0,"), std::string::npos);
  EXPECT_NE(out.str().find("300,per_block,h.0.mlp.w_1,32,0.25,"), std::string::npos);
  EXPECT_EQ(parse_grouping("per_block"), Grouping::PerBlock);
  EXPECT_THROW(parse_grouping("rows"), std::invalid_argument);
}

TEST(Fisher, SingleSequenceIsSquaredGradient) {
  const ModelConfig c = oracle::tiny_config();
  const auto m = build_model(c, 4);
  const Batch b = random_batch(c, 1, 8);
  const GradMap h = fisher_diag_with_labels(m, b);
  const GradMap g = model_loss_and_grad(m, b).grads;
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(h[i], hadamard(g[i], g[i]));
}

TEST(Fisher, NonNegativeAndSeedStable) {
  const ModelConfig c = oracle::tiny_config();
  const auto m = build_model(c, 4);
  const Batch b = random_batch(c, 3, 8);
  std::mt19937_64 r1(77), r2(77);
  const GradMap h = fisher_diag(m, b, r1);
  EXPECT_EQ(h, fisher_diag(m, b, r2));
  for (std::size_t i = 0; i < h.size(); ++i) {
    for (double v : h[i].data()) EXPECT_GE(v, 0.0);
  }
}

TEST(BlockSharpness, TwentyParameterToyRegistry) {
  const std::vector<ParamSpec> specs{
      {"wte", {2, 2}, BlockType::Emb, 0},          {"h.0.attn.w_q", {2, 2}, BlockType::QK, 1},
      {"h.0.attn.w_v", {2, 2}, BlockType::VO, 1},  {"h.0.mlp.w_1", {2, 2}, BlockType::FFN, 1},
      {"h.0.ln_1.gamma", {2}, BlockType::Norm, 1}, {"ln_f.gamma", {2}, BlockType::Norm, 2}};
  GradMap h;
  double next = 1.0;
  for (const auto& s : specs) {
    Tensor t(s.shape);
    for (double& v : t.data()) v = next++;
    h.insert(s.id, t);
  }
  const SharpnessReport r = block_sharpness(h, specs, Grouping::BlockType);
  EXPECT_EQ(r.total_count(), 20u);
  // Emb 1..4, QK 5..8, VO 9..12, FFN 13..16, Norm 17..20
  const std::array<const char*, 5> names{"Emb", "QK", "VO", "FFN", "Norm"};
  for (std::size_t k = 0; k < 5; ++k) {
    const GroupStats& g = r.groups[k];
    EXPECT_EQ(g.group, names[k]);
    EXPECT_EQ(g.count, 4u);
    const double a = 4.0 * double(k) + 1.0;
    EXPECT_DOUBLE_EQ(g.s_arith, a + 1.5);
    EXPECT_NEAR(g.mean_log_h,
                (std::log(a) + std::log(a + 1) + std::log(a + 2) + std::log(a + 3)) / 4.0, 1e-15);
    EXPECT_DOUBLE_EQ(g.quantiles[2], a + 1.5);
  }
  const SharpnessReport layers = block_sharpness(h, specs, Grouping::Layer);
  ASSERT_EQ(layers.groups.size(), 3u);
  EXPECT_DOUBLE_EQ(layers.at("layer0").s_arith, 2.5);
  EXPECT_DOUBLE_EQ(layers.at("layer1").s_arith, 11.5);
  EXPECT_DOUBLE_EQ(layers.at("layer2").s_arith, 19.5);
}
