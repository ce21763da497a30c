#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "sharplab/model.hpp"
#include "sharplab/optim.hpp"
#include "sharplab/sharpness.hpp"

namespace sharplab {

inline constexpr const char* kOutDirEnv = "SHARPLAB_OUT_DIR";

std::string_view to_string(kernels::NormKind k);
kernels::NormKind parse_norm_kind(std::string_view s);
std::string_view to_string(kernels::ActKind k);
kernels::ActKind parse_act_kind(std::string_view s);

/// Full description of one training run. See README.md for the file format.
struct TrainConfig {
  std::string name = "run";
  std::uint64_t seed = 0;
  std::string out_dir = "runs";
  std::string corpus = "data/corpus.txt";
  double train_fraction = 0.9;
  ModelConfig model;  // vocab is filled in from the corpus
  OptimizerKind optimizer = OptimizerKind::AdamW;
  OptHyper hyper;
  ScheduleConfig schedule;
  BlockwiseLrConfig blockwise;
  std::size_t batch_size = 16;
  std::size_t cadence = 100;
  FisherConfig fisher;
  std::size_t val_windows = 32;

  std::size_t total_steps() const { return schedule.total_steps; }
  /// Checks everything that does not depend on the corpus.
  void validate() const;
};

nlohmann::json model_config_to_json(const ModelConfig& c);
/// Keys not listed in model_config_to_json are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& c);
/// Parses a JSON config. Unknown keys anywhere are rejected with std::invalid_argument.
/// A relative corpus path is resolved against `base_dir`.
TrainConfig parse_train_config(std::string_view text, const std::string& base_dir = "");
/// Reads and parses a config file, then applies the SHARPLAB_OUT_DIR override.
TrainConfig load_train_config(const std::string& path);

}  // namespace sharplab
