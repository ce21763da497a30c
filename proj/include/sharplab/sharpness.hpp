#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sharplab/model.hpp"
#include "sharplab/tensor.hpp"

namespace sharplab {

struct FisherConfig {
  std::size_t batch_sequences = 64;
  /// Seed offset of the label-sampling stream.
  std::uint64_t stream = 0x5eed;

  void validate() const;
};

/// One categorical draw per row of `logits` from its softmax.
std::vector<std::int32_t> sample_soft_labels(const Tensor& logits, std::mt19937_64& rng);

/// B * g (.) g where g is the mini-batch gradient of the cross-entropy against
/// `batch.targets`, and B = batch.batch.
GradMap fisher_diag_with_labels(const TransformerModel& model, const Batch& batch);

/// Samples labels from the model's own predictive distribution, then evaluates
/// fisher_diag_with_labels. `batch.targets` is ignored.
GradMap fisher_diag(const TransformerModel& model, const Batch& batch, std::mt19937_64& rng);

enum class Grouping { BlockType, Layer, PerBlock };
enum class SharpnessMode { Arith, Log };

std::string_view to_string(Grouping g);
Grouping parse_grouping(std::string_view s);

inline constexpr double kLogFloor = 1e-40;
inline constexpr std::array<double, 5> kQuantileLevels = {0.05, 0.25, 0.50, 0.75, 0.95};

struct GroupStats {
  std::string group;
  std::size_t count = 0;
  double s_arith = 0.0;     // sum(h) / count
  double mean_log_h = 0.0;  // mean(log(max(h, kLogFloor)))
  std::array<double, 5> quantiles{};

  double value(SharpnessMode mode) const {
    return mode == SharpnessMode::Arith ? s_arith : mean_log_h;
  }
};

struct SharpnessReport {
  std::size_t step = 0;
  Grouping grouping = Grouping::BlockType;
  std::vector<GroupStats> groups;

  const GroupStats& at(std::string_view group) const;
  std::size_t total_count() const;
};

/// Linear-interpolation quantile of already sorted values.
double sorted_quantile(std::span<const double> sorted, double q);

/// Groups h by block type (Emb, QK, VO, FFN, Norm), by layer ("layer0".."layer{L+1}")
/// or by tensor id.
SharpnessReport block_sharpness(const GradMap& h, std::span<const ParamSpec> specs,
                                Grouping grouping, std::size_t step = 0);

struct ParamNorms {
  std::vector<std::string> ids;
  std::vector<double> per_tensor;
  /// Mean Frobenius norm over the tensors of each block type.
  std::array<double, kBlockTypeCount> by_type{};
};

ParamNorms block_param_norms(const TransformerModel& model);

/// step,grouping,group,count,S_arith,mean_log_h,q05,q25,q50,q75,q95
void write_sharpness_csv_header(std::ostream& out);
void write_sharpness_csv(std::ostream& out, const SharpnessReport& report);

}  // namespace sharplab
