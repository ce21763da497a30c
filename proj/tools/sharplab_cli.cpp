#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "sharplab/config.hpp"
#include "sharplab/dataset.hpp"
#include "sharplab/optim.hpp"
#include "sharplab/sharpness.hpp"
#include "sharplab/theory.hpp"
#include "sharplab/trainer.hpp"

namespace {

using namespace sharplab;

int cmd_train(const std::string& config_path) {
  const TrainConfig cfg = load_train_config(config_path);
  TrainOptions opts;
  opts.progress = &std::cerr;
  const RunResult r = train_run(cfg, opts);
  std::cout << "run " << r.name << " finished in " << r.wall_seconds << " s\n"
            << "terminal_train_loss " << r.terminal_train_loss << "\n"
            << "terminal_val_loss " << r.terminal_val_loss << "\n"
            << "outputs in " << r.run_dir << "\n";
  const SharpnessReport& last = r.sharpness.back();
  std::cout << "final mean log sharpness:";
  for (const auto& g : last.groups) std::cout << ' ' << g.group << '=' << g.mean_log_h;
  std::cout << '\n';
  return 0;
}

int cmd_compare(const std::string& a_path, const std::string& b_path) {
  const TrainConfig a = load_train_config(a_path);
  const TrainConfig b = load_train_config(b_path);
  TrainOptions opts;
  opts.progress = &std::cerr;
  const Comparison c = compare_runs(a, b, opts);
  nlohmann::json j = comparison_to_json(c);
  j.erase("train_delta");
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_sharpness(const std::string& checkpoint, const std::string& source,
                  std::size_t batch_sequences, std::uint64_t seed) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  std::ifstream in(source, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open batch source " + source);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::vector<std::int32_t> stream = encode_with(ck.vocabulary, buf.str());
  std::seed_seq seq{seed, std::uint64_t{0x5eed}};
  std::mt19937_64 rng(seq);
  const Batch batch = sample_batch(stream, batch_sequences, ck.model.config().context, rng);
  const GradMap h = fisher_diag(ck.model, batch, rng);
  write_sharpness_csv_header(std::cout);
  for (Grouping g : {Grouping::BlockType, Grouping::Layer, Grouping::PerBlock}) {
    write_sharpness_csv(std::cout, block_sharpness(h, ck.model.specs(), g));
  }
  return 0;
}

int cmd_verify_theory(std::uint64_t seed, std::size_t trials) {
  const theory::TheorySummary s = theory::theory_suite(seed, trials);
  std::cout << "theorem,trial,group,lhs,rhs,slack,deviation\n";
  std::size_t index = 0;
  for (const auto& r : s.reports) {
    const std::size_t trial = index++ % trials;
    for (const auto& c : r.checks) {
      std::printf("%s,%zu,%s,%.10e,%.10e,%.10e,%.3e\n", r.theorem.c_str(), trial,
                  c.group.c_str(), c.lhs, c.rhs, c.slack(), c.deviation);
    }
  }
  std::fflush(stdout);
  std::cerr << "passed " << s.passed[0] << "/" << trials << ", " << s.passed[1] << "/" << trials
            << ", " << s.passed[2] << "/" << trials << "; max deviation " << s.max_deviation
            << '\n';
  return 0;
}

int cmd_schedule_dump(const std::string& config_path) {
  const TrainConfig cfg = load_train_config(config_path);
  std::cout << "step,lr";
  for (BlockType t : kAllBlockTypes) std::cout << ",lr_" << to_string(t);
  std::cout << '\n';
  for (std::size_t s = 0; s <= cfg.total_steps(); ++s) {
    const double base = schedule_lr(cfg.schedule, s);
    std::printf("%zu,%.17g", s, base);
    for (double v : effective_lrs(base, cfg.blockwise, s)) std::printf(",%.17g", v);
    std::printf("\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blockwise sharpness laboratory for small transformers"};
  app.require_subcommand(1);

  std::string config, config_a, config_b, checkpoint, source;
  std::uint64_t seed = 0;
  std::size_t trials = 20;
  std::size_t batch_sequences = 64;

  auto* train = app.add_subcommand("train", "Train one model and log sharpness");
  train->add_option("--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);

  auto* compare = app.add_subcommand("compare", "Run two configs and compare losses");
  compare->add_option("--config-a", config_a, "Baseline config")->required()->check(CLI::ExistingFile);
  compare->add_option("--config-b", config_b, "Candidate config")->required()->check(CLI::ExistingFile);

  auto* sharp = app.add_subcommand("sharpness", "Blockwise Fisher sharpness of a checkpoint");
  sharp->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  sharp->add_option("--batch-source", source, "Text file to draw windows from")
      ->required()
      ->check(CLI::ExistingFile);
  sharp->add_option("--batch-sequences", batch_sequences, "Number of windows B");
  sharp->add_option("--seed", seed, "Sampling seed");

  auto* theory_cmd = app.add_subcommand("verify-theory", "Check gradient formulas and bounds");
  theory_cmd->add_option("--seed", seed, "Instance seed");
  theory_cmd->add_option("--trials", trials, "Instances per theorem");

  auto* dump = app.add_subcommand("schedule-dump", "Print the learning-rate schedule as CSV");
  dump->add_option("--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config);
    if (*compare) return cmd_compare(config_a, config_b);
    if (*sharp) return cmd_sharpness(checkpoint, source, batch_sequences, seed);
    if (*theory_cmd) return cmd_verify_theory(seed, trials);
    if (*dump) return cmd_schedule_dump(config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
