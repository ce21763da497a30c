#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sharplab/config.hpp"
#include "sharplab/dataset.hpp"
#include "sharplab/model.hpp"
#include "sharplab/sharpness.hpp"

namespace sharplab {

inline constexpr int kRunLogSchemaVersion = 1;

struct TrainOptions {
  /// Progress lines go here when set.
  std::ostream* progress = nullptr;
  bool write_files = true;
  bool save_checkpoint = true;
};

struct RunResult {
  std::string name;
  /// train_loss[s - 1] is the batch loss evaluated just before update s.
  std::vector<double> train_loss;
  std::vector<double> grad_norm;  // pre-clip global norm per update
  std::vector<std::size_t> eval_steps;
  std::vector<double> val_loss;                    // aligned with eval_steps
  std::vector<SharpnessReport> sharpness;          // block-type grouping, aligned with eval_steps
  std::vector<SharpnessReport> layer_sharpness;    // layer grouping, aligned with eval_steps
  std::vector<std::array<double, kBlockTypeCount>> param_norms;  // aligned with eval_steps
  double terminal_train_loss = 0.0;
  double terminal_val_loss = 0.0;
  double wall_seconds = 0.0;
  std::string run_dir;
};

/// Mean of the last `window` training losses.
double tail_mean(const std::vector<double>& losses, std::size_t window);

/// Runs warmup, optional Blockwise switch and the schedule to total_steps. Every
/// `cadence` updates (and at 0) evaluates validation loss, diagonal-Fisher
/// sharpness on a fresh held-out batch and parameter norms. Writes run.jsonl,
/// sharpness.csv and checkpoint.bin under out_dir/name. Throws on a non-finite loss after
/// logging an error event.
RunResult train_run(const TrainConfig& cfg, const Dataset& data, const TrainOptions& opts = {});
RunResult train_run(const TrainConfig& cfg, const TrainOptions& opts = {});

struct Comparison {
  std::string name_a, name_b;
  double terminal_train_a = 0.0, terminal_train_b = 0.0;
  double terminal_val_a = 0.0, terminal_val_b = 0.0;
  /// loss_b - loss_a per update.
  std::vector<double> train_delta;
  /// First evaluation step from which B's validation loss stays below A's.
  std::optional<std::size_t> val_lead_step;
  /// First step from which B's smoothed training loss stays at or below A's terminal
  /// training loss.
  std::optional<std::size_t> catch_up_step;
  std::size_t total_steps = 0;

  friend bool operator==(const Comparison&, const Comparison&) = default;
};

/// Throws std::invalid_argument unless both configs share model, corpus, seed and length.
void check_comparable(const TrainConfig& a, const TrainConfig& b);
Comparison compare_results(const RunResult& a, const RunResult& b, std::size_t window);
Comparison compare_runs(const TrainConfig& a, const TrainConfig& b,
                        const TrainOptions& opts = {});

nlohmann::json comparison_to_json(const Comparison& c);
Comparison comparison_from_json(const nlohmann::json& j);

/// Parses a run log back into its records, checking the schema version of each line.
std::vector<nlohmann::json> read_run_log(const std::string& path);

}  // namespace sharplab
