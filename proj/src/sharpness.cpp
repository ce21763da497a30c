#include "sharplab/sharpness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>

namespace sharplab {

void FisherConfig::validate() const {
  if (batch_sequences < 1) throw std::invalid_argument("FisherConfig: batch_sequences must be >= 1");
}

std::vector<std::int32_t> sample_soft_labels(const Tensor& logits, std::mt19937_64& rng) {
  logits.require_finite("sample_soft_labels logits");
  const std::size_t rows = logits.rows();
  const std::size_t cols = logits.cols();
  std::vector<std::int32_t> labels(rows);
  std::vector<double> p(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = logits.raw() + r * cols;
    const double mx = *std::max_element(z, z + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (p[c] = std::exp(z[c] - mx));
    // 53 uniform bits in [0, 1).
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * total;
    double acc = 0.0;
    std::size_t pick = cols;
    for (std::size_t c = 0; c < cols; ++c) {
      acc += p[c];
      if (u < acc) {
        pick = c;
        break;
      }
    }
    if (pick == cols) {
      pick = cols - 1;
      while (pick > 0 && p[pick] == 0.0) --pick;
    }
    labels[r] = static_cast<std::int32_t>(pick);
  }
  return labels;
}

GradMap fisher_diag_with_labels(const TransformerModel& model, const Batch& batch) {
  LossAndGrad lg = model_loss_and_grad(model, batch);
  const double b = static_cast<double>(batch.batch);
  GradMap h = std::move(lg.grads);
  for (std::size_t i = 0; i < h.size(); ++i) {
    for (double& x : h[i].data()) x = b * x * x;
  }
  return h;
}

GradMap fisher_diag(const TransformerModel& model, const Batch& batch, std::mt19937_64& rng) {
  Batch sampled = batch;
  const Tensor logits = model_logits(model, batch.inputs, batch.batch, batch.seq);
  sampled.targets = sample_soft_labels(logits, rng);
  return fisher_diag_with_labels(model, sampled);
}

std::string_view to_string(Grouping g) {
  switch (g) {
    case Grouping::BlockType: return "block_type";
    case Grouping::Layer: return "layer";
    case Grouping::PerBlock: return "per_block";
  }
  return "?";
}

Grouping parse_grouping(std::string_view s) {
  for (auto g : {Grouping::BlockType, Grouping::Layer, Grouping::PerBlock}) {
    if (to_string(g) == s) return g;
  }
  throw std::invalid_argument("unknown grouping: " + std::string(s));
}

const GroupStats& SharpnessReport::at(std::string_view group) const {
  for (const auto& g : groups) {
    if (g.group == group) return g;
  }
  throw std::out_of_range("SharpnessReport: no group " + std::string(group));
}

std::size_t SharpnessReport::total_count() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.count;
  return n;
}

double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("sorted_quantile: empty input");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

namespace {

GroupStats summarize(std::string name, std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("block_sharpness: empty group " + name);
  GroupStats s;
  s.group = std::move(name);
  s.count = values.size();
  double sum = 0.0;
  double log_sum = 0.0;
  for (double v : values) {
    sum += v;
    log_sum += std::log(std::max(v, kLogFloor));
  }
  const double n = static_cast<double>(values.size());
  s.s_arith = sum / n;
  s.mean_log_h = log_sum / n;
  std::sort(values.begin(), values.end());
  for (std::size_t i = 0; i < kQuantileLevels.size(); ++i) {
    s.quantiles[i] = sorted_quantile(values, kQuantileLevels[i]);
  }
  return s;
}

}  // namespace

SharpnessReport block_sharpness(const GradMap& h, std::span<const ParamSpec> specs,
                                Grouping grouping, std::size_t step) {
  if (h.size() != specs.size()) {
    throw std::invalid_argument("block_sharpness: h does not cover the registry");
  }
  SharpnessReport report;
  report.step = step;
  report.grouping = grouping;

  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> buckets;
  auto bucket_of = [&](const ParamSpec& s) -> std::string {
    switch (grouping) {
      case Grouping::BlockType: return std::string(to_string(s.block_type));
      case Grouping::Layer: return "layer" + std::to_string(s.layer);
      case Grouping::PerBlock: return s.id;
    }
    return {};
  };
  if (grouping == Grouping::BlockType) {
    for (BlockType t : kAllBlockTypes) {
      order.emplace_back(to_string(t));
      buckets[order.back()];
    }
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const ParamSpec& s = specs[i];
    if (h.name(i) != s.id || h[i].shape() != s.shape) {
      throw std::invalid_argument("block_sharpness: tensor " + h.name(i) +
                                  " does not match registry entry " + s.id);
    }
    const std::string key = bucket_of(s);
    auto [it, inserted] = buckets.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.insert(it->second.end(), h[i].data().begin(), h[i].data().end());
  }
  for (const auto& key : order) report.groups.push_back(summarize(key, buckets[key]));
  return report;
}

ParamNorms block_param_norms(const TransformerModel& model) {
  ParamNorms out;
  std::array<std::size_t, kBlockTypeCount> n{};
  for (const auto& s : model.specs()) {
    const double norm = model.params().at(s.id).frobenius_norm();
    out.ids.push_back(s.id);
    out.per_tensor.push_back(norm);
    const auto k = static_cast<std::size_t>(s.block_type);
    out.by_type[k] += norm;
    ++n[k];
  }
  for (std::size_t k = 0; k < kBlockTypeCount; ++k) {
    if (n[k] > 0) out.by_type[k] /= static_cast<double>(n[k]);
  }
  return out;
}

void write_sharpness_csv_header(std::ostream& out) {
  out << "step,grouping,group,count,S_arith,mean_log_h,q05,q25,q50,q75,q95\n";
}

void write_sharpness_csv(std::ostream& out, const SharpnessReport& report) {
  char buf[32];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& g : report.groups) {
    out << report.step << ',' << to_string(report.grouping) << ',' << g.group << ','
        << g.count << ',' << num(g.s_arith) << ',' << num(g.mean_log_h);
    for (double q : g.quantiles) out << ',' << num(q);
    out << '\n';
  }
}

}  // namespace sharplab
