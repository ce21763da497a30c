#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sharplab/config.hpp"
#include "sharplab/optim.hpp"
#include "sharplab/sharpness.hpp"
#include "sharplab/theory.hpp"
#include "sharplab/trainer.hpp"

using namespace sharplab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome gradient_correctness() {
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : oracle::primitive_grad_checks(101, 50)) {
    if (c.max_rel_error > worst) {
      worst = c.max_rel_error;
      worst_name = c.name;
    }
  }
  const oracle::GradCheck model = oracle::model_grad_check(102, 50);
  const bool pass = worst <= 1e-6 && model.max_rel_error <= 1e-6 && model.draws >= 50;
  return {pass, "primitives max rel err " + fmt("%.2e", worst) + " (" + worst_name +
                    "), tiny model " + fmt("%.2e", model.max_rel_error) + " over 50 draws"};
}

Outcome theorem_suite() {
  const theory::TheorySummary s = theory::theory_suite(2024, 20);
  double worst_identity = 0.0, min_slack = INFINITY;
  for (const auto& r : s.reports) {
    worst_identity = std::max(worst_identity, r.identity_residual);
    min_slack = std::min(min_slack, r.min_slack());
  }
  const bool pass = s.passed[0] == 20 && s.passed[1] == 20 && s.passed[2] == 20 &&
                    s.max_deviation <= 1e-8 && min_slack >= 0.0 && worst_identity <= 1e-8;
  return {pass, std::to_string(s.passed[0]) + "/20, " + std::to_string(s.passed[1]) + "/20, " +
                    std::to_string(s.passed[2]) + "/20; max deviation " +
                    fmt("%.2e", s.max_deviation) + ", min slack " + fmt("%.3e", min_slack) +
                    ", identity residual " + fmt("%.1e", worst_identity)};
}

Outcome estimator_contract() {
  const ModelConfig cfg = oracle::tiny_config();
  const TransformerModel model = build_model(cfg, 5);
  std::mt19937_64 rng(6);
  Batch batch{4, cfg.context, {}, {}};
  for (std::size_t i = 0; i < 4 * cfg.context; ++i) {
    batch.inputs.push_back(static_cast<std::int32_t>(rng() % cfg.vocab));
    batch.targets.push_back(static_cast<std::int32_t>(rng() % cfg.vocab));
  }
  const GradMap h = fisher_diag_with_labels(model, batch);
  const GradMap g = model_loss_and_grad(model, batch).grads;
  bool bitwise = true;
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t k = 0; k < g[i].size(); ++k) bitwise &= h[i][k] == 4.0 * g[i][k] * g[i][k];
  }
  double decomposition = 0.0;
  const double trace = 4.0 * std::pow(global_norm(g), 2);
  for (Grouping grouping : {Grouping::BlockType, Grouping::Layer, Grouping::PerBlock}) {
    double total = 0.0;
    for (const auto& s : block_sharpness(h, model.specs(), grouping).groups) {
      total += s.s_arith * double(s.count);
    }
    decomposition = std::max(decomposition, std::abs(total - trace) / trace);
  }
  const oracle::Unbiasedness u = oracle::fisher_unbiasedness(7, 10000);
  const bool pass = bitwise && decomposition <= 1e-10 && u.fraction() >= 0.95;
  return {pass, std::string("pinned labels bitwise ") + (bitwise ? "equal" : "DIFFERENT") +
                    "; unbiasedness " + std::to_string(u.within) + "/" + std::to_string(u.coords) +
                    " coords within 3 SE (" + fmt("%.4f", u.fraction()) +
                    "); decomposition rel err " + fmt("%.1e", decomposition)};
}

Outcome optimizer_oracles() {
  std::vector<std::string> failures;
  auto check = [&](const char* what, double got, double want) {
    if (!(std::abs(got - want) <= 1e-12)) failures.push_back(what);
  };
  OptHyper h;
  {
    Tensor theta({1}, 1.0), g({1}, 0.1), m({1}), v({1});
    adamw_update(theta, g, m, v, 1, 1e-3, 0.1, h);
    check("adamw", theta[0], 1.0 - 1e-3 * (0.1 / (0.1 + 1e-8) + 0.1));
  }
  {
    Tensor theta({2}, 1.0), g({2}, std::vector<double>{0.1, 0.3}), m({2});
    double v = 0.0;
    adam_mini_update(theta, g, m, v, 1, 1e-3, 0.0, h);
    check("adam_mini v", v / (1.0 - h.beta2), 0.05);
    Tensor t2({3}, 0.0), g2({3}, 0.05), m2({3});
    double v2 = 0.0;
    adam_mini_update(t2, g2, m2, v2, 1, 1e-3, 0.0, h);
    check("adam_mini uniform v", v2 / (1.0 - h.beta2), 0.0025);
  }
  {
    const OptHyper lh = default_hyper(OptimizerKind::Lion);
    Tensor theta({1}, 1.0), g({1}, -0.2), m({1}, 0.5);
    lion_update(theta, g, m, 1e-4, 0.5, lh);
    check("lion", theta[0], 0.99985);
  }
  const TransformerModel model = build_model(oracle::tiny_config(), 0);
  std::size_t expected = 0;
  for (const auto& s : model.specs()) expected += s.block_type == BlockType::Emb ? s.size() : 1;
  const std::size_t count =
      Optimizer(OptimizerKind::AdamMini, h, model.specs()).second_moment_count();
  if (count != expected) failures.push_back("adam_mini count");

  GradMap grads = model.params();
  for (std::size_t i = 0; i < grads.size(); ++i) grads[i] *= 50.0;
  const GradMap before = grads;
  const double pre = clip_global_norm(grads, 1.0);
  bool clip_ok = std::abs(global_norm(grads) - 1.0) <= 1e-12 && pre > 1.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    clip_ok &= relative_error(grads[i], before[i] * (1.0 / pre)) <= 1e-15;
  }
  GradMap small = before;
  for (std::size_t i = 0; i < small.size(); ++i) small[i] *= 0.5 / pre;
  const GradMap kept = small;
  clip_global_norm(small, 1.0);
  clip_ok &= small == kept;
  if (!clip_ok) failures.push_back("clip");

  std::string detail = "adamw, adam_mini, lion hand values; Adam-mini scalars " +
                       std::to_string(count) + " = " + std::to_string(expected) + "; clip";
  for (const auto& f : failures) detail += "; failed " + f;
  return {failures.empty(), detail};
}

Outcome schedule_contract() {
  std::vector<std::string> failures;
  ScheduleConfig cos;
  if (schedule_lr(cos, cos.warmup_steps) != cos.lr_max) failures.push_back("cosine peak");
  if (std::abs(schedule_lr(cos, cos.total_steps) - cos.lr_max / 20.0) > 1e-18) {
    failures.push_back("cosine floor");
  }
  ScheduleConfig wsd;
  wsd.kind = ScheduleKind::Wsd;
  for (std::size_t s = wsd.warmup_steps; s <= wsd.stable_end(); ++s) {
    if (schedule_lr(wsd, s) != wsd.lr_max) {
      failures.push_back("wsd plateau");
      break;
    }
  }
  if (schedule_lr(wsd, wsd.total_steps) != 0.0) failures.push_back("wsd terminal");
  BlockwiseLrConfig b;
  b.enabled = true;
  const BlockRatios want{10.0, 8.0, 4.0, 6.0, 1.0};
  for (const ScheduleConfig* sc : {&cos, &wsd}) {
    for (std::size_t s = 0; s <= sc->total_steps; ++s) {
      const double base = schedule_lr(*sc, s);
      const auto lrs = effective_lrs(base, b, s);
      for (std::size_t t = 0; t < kBlockTypeCount; ++t) {
        const double r = s < b.switch_step ? 1.0 : want[t];
        if (lrs[t] != base * r) {
          failures.push_back("multiplier at step " + std::to_string(s));
          break;
        }
      }
      if (lrs[static_cast<std::size_t>(BlockType::Norm)] != base) failures.push_back("Norm lr");
    }
  }
  std::string detail = "cosine " + fmt("%.3g", schedule_lr(cos, cos.warmup_steps)) + " -> " +
                       fmt("%.3g", schedule_lr(cos, cos.total_steps)) + ", wsd plateau to step " +
                       std::to_string(wsd.stable_end()) + " then 0, ratios 10/8/4/6/1 from step " +
                       std::to_string(b.switch_step);
  for (const auto& f : failures) detail += "; failed " + f;
  return {failures.empty(), detail};
}

struct DeskRuns {
  bool ran = false;
  std::string error;
  RunResult a, b;
  TrainConfig cfg_a, cfg_b;
};

DeskRuns run_desk(const fs::path& configs, const fs::path& work) {
  DeskRuns d;
  try {
    d.cfg_a = load_train_config((configs / "desk_adamw.json").string());
    d.cfg_b = load_train_config((configs / "desk_blockwise.json").string());
    d.cfg_a.out_dir = d.cfg_b.out_dir = (work / "desk").string();
    check_comparable(d.cfg_a, d.cfg_b);
    const Dataset data = load_corpus(d.cfg_a.corpus, d.cfg_a.train_fraction);
    TrainOptions opts;
    opts.progress = &std::cerr;
    d.a = train_run(d.cfg_a, data, opts);
    d.b = train_run(d.cfg_b, data, opts);
    d.ran = true;
  } catch (const std::exception& e) {
    d.error = e.what();
  }
  return d;
}

Outcome desk_disparity(const DeskRuns& d) {
  if (!d.ran) return {false, "desk runs failed: " + d.error};
  const SharpnessReport& r = d.a.sharpness.back();
  std::vector<std::pair<double, std::string>> order;
  for (const auto& g : r.groups) order.emplace_back(g.mean_log_h, g.group);
  std::sort(order.begin(), order.end(), std::greater<>());
  std::string detail = "seed " + std::to_string(d.cfg_a.seed) + ", step " +
                       std::to_string(r.step) + ", mean log h:";
  for (const auto& [v, name] : order) detail += " " + name + "=" + fmt("%.3f", v);
  const bool pass = order.front().second == "Norm" && order.back().second == "Emb";
  return {pass, detail};
}

Outcome desk_ab(const DeskRuns& d) {
  if (!d.ran) return {false, "desk runs failed: " + d.error};
  const Comparison c = compare_results(d.a, d.b, d.cfg_a.cadence);
  std::string detail = "seed " + std::to_string(d.cfg_a.seed) + ", terminal train loss AdamW " +
                       fmt("%.4f", c.terminal_train_a) + " vs Blockwise " +
                       fmt("%.4f", c.terminal_train_b) + ", val " + fmt("%.4f", c.terminal_val_a) +
                       " vs " + fmt("%.4f", c.terminal_val_b) + ", Blockwise sustains baseline loss from step ";
  detail += c.catch_up_step ? std::to_string(*c.catch_up_step) + " of " + std::to_string(c.total_steps)
                            : std::string("never");
  return {c.terminal_train_b <= c.terminal_train_a, detail};
}

Outcome determinism(const fs::path& configs, const fs::path& work) {
  TrainConfig cfg = load_train_config((configs / "determinism.json").string());
  cfg.out_dir = (work / "determinism_1").string();
  const RunResult a = train_run(cfg, {});
  cfg.out_dir = (work / "determinism_2").string();
  const RunResult b = train_run(cfg, {});
  double worst = 0.0;
  bool same_len = a.train_loss.size() == b.train_loss.size();
  for (std::size_t i = 0; same_len && i < a.train_loss.size(); ++i) {
    worst = std::max(worst, std::abs(a.train_loss[i] - b.train_loss[i]));
  }
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  const bool csv_same =
      slurp(a.run_dir + "/sharpness.csv") == slurp(b.run_dir + "/sharpness.csv");
  return {same_len && worst <= 1e-12 && csv_same,
          std::to_string(a.train_loss.size()) + " steps, max loss difference " +
              fmt("%.1e", worst) + ", sharpness CSV " + (csv_same ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path configs = "configs", work = "acceptance_runs";
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string key = argv[i];
    if (key == "--configs") configs = argv[i + 1];
    else if (key == "--work-dir") work = argv[i + 1];
    else {
      std::cerr << "usage: sharplab_acceptance [--configs DIR] [--work-dir DIR]\n";
      return 2;
    }
  }
  fs::create_directories(work);

  int failed = 0;
  auto report = [&failed](const char* name, double limit_s, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0.0 && secs > limit_s) {
      o.pass = false;
      o.detail += "; runtime over " + fmt("%.0f", limit_s) + " s";
    }
    if (!o.pass) ++failed;
    std::printf("%s %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  report("gradient-correctness", 60.0, gradient_correctness);
  report("theorem-suite", 60.0, theorem_suite);
  report("estimator-contract", 0.0, estimator_contract);
  report("optimizer-oracles", 0.0, optimizer_oracles);
  report("schedule-blockwise-contract", 0.0, schedule_contract);
  const auto t0 = std::chrono::steady_clock::now();
  const DeskRuns desk = run_desk(configs, work);
  const double desk_secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("desk runs took %.1f s (two runs)\n", desk_secs);
  report("desk-disparity", 0.0, [&] { return desk_disparity(desk); });
  report("desk-ab", 0.0, [&] { return desk_ab(desk); });
  report("determinism", 0.0, [&] { return determinism(configs, work); });
  return failed == 0 ? 0 : 1;
}
