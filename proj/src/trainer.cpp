#include "sharplab/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include "sharplab/optim.hpp"

namespace sharplab {

using nlohmann::json;

double tail_mean(const std::vector<double>& losses, std::size_t window) {
  if (losses.empty()) throw std::invalid_argument("tail_mean: no losses");
  const std::size_t n = std::min(window == 0 ? 1 : window, losses.size());
  double s = 0.0;
  for (std::size_t i = losses.size() - n; i < losses.size(); ++i) s += losses[i];
  return s / static_cast<double>(n);
}

namespace {

json by_type(const std::array<double, kBlockTypeCount>& v) {
  json j = json::object();
  for (BlockType t : kAllBlockTypes) j[std::string(to_string(t))] = v[static_cast<std::size_t>(t)];
  return j;
}

json report_json(const SharpnessReport& r, SharpnessMode mode) {
  json j = json::object();
  for (const auto& g : r.groups) j[g.group] = g.value(mode);
  return j;
}

class RunLog {
 public:
  RunLog() = default;
  explicit RunLog(const std::string& path) : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open run log " + path);
  }
  void write(json record) {
    if (!out_.is_open()) return;
    record["schema_version"] = kRunLogSchemaVersion;
    out_ << record.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace

RunResult train_run(const TrainConfig& cfg, const Dataset& data, const TrainOptions& opts) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  ModelConfig mc = cfg.model;
  mc.vocab = data.vocab_size();
  TransformerModel model = build_model(mc, cfg.seed);
  Optimizer opt(cfg.optimizer, cfg.hyper, model.specs());

  std::seed_seq batch_seed{cfg.seed, std::uint64_t{1}};
  std::seed_seq fisher_seed{cfg.seed, cfg.fisher.stream};
  std::mt19937_64 batch_rng(batch_seed);
  std::mt19937_64 fisher_rng(fisher_seed);
  const std::size_t seq = mc.context;
  const Batch val = fixed_windows(data.validation(), cfg.val_windows, seq);
  const std::size_t total = cfg.total_steps();

  RunResult res;
  res.name = cfg.name;
  RunLog log;
  std::ofstream csv;
  if (opts.write_files) {
    res.run_dir = (std::filesystem::path(cfg.out_dir) / cfg.name).string();
    std::filesystem::create_directories(res.run_dir);
    log = RunLog(res.run_dir + "/run.jsonl");
    csv.open(res.run_dir + "/sharpness.csv", std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot open sharpness CSV in " + res.run_dir);
    write_sharpness_csv_header(csv);
    log.write({{"event", "run_start"}, {"config", train_config_to_json(cfg)},
               {"vocab", mc.vocab}, {"parameter_count", model.parameter_count()}});
  }

  auto measure = [&](std::size_t step, json& rec) {
    const double vl = model_loss(model, val).value;
    const Batch probe = sample_batch(data.validation(), cfg.fisher.batch_sequences, seq, fisher_rng);
    const GradMap h = fisher_diag(model, probe, fisher_rng);
    const SharpnessReport by_block = block_sharpness(h, model.specs(), Grouping::BlockType, step);
    const SharpnessReport by_layer = block_sharpness(h, model.specs(), Grouping::Layer, step);
    const SharpnessReport by_tensor = block_sharpness(h, model.specs(), Grouping::PerBlock, step);
    const ParamNorms norms = block_param_norms(model);
    if (csv.is_open()) {
      write_sharpness_csv(csv, by_block);
      write_sharpness_csv(csv, by_layer);
      write_sharpness_csv(csv, by_tensor);
      csv.flush();
    }
    rec["val_loss"] = vl;
    rec["sharpness"] = {{"arith", report_json(by_block, SharpnessMode::Arith)},
                        {"mean_log", report_json(by_block, SharpnessMode::Log)},
                        {"layer_mean_log", report_json(by_layer, SharpnessMode::Log)}};
    rec["param_norms"] = by_type(norms.by_type);
    res.eval_steps.push_back(step);
    res.val_loss.push_back(vl);
    res.sharpness.push_back(by_block);
    res.layer_sharpness.push_back(by_layer);
    res.param_norms.push_back(norms.by_type);
    if (opts.progress) {
      *opts.progress << cfg.name << " step " << step << "/" << total << " val_loss " << vl;
      if (!res.train_loss.empty()) *opts.progress << " train_loss " << res.train_loss.back();
      *opts.progress << " (" << elapsed() << " s)\n";
    }
  };

  {
    json rec{{"event", "metrics"}, {"step", 0},
             {"lr", by_type(effective_lrs(schedule_lr(cfg.schedule, 0), cfg.blockwise, 0))}};
    measure(0, rec);
    rec["wall_clock_s"] = elapsed();
    log.write(std::move(rec));
  }

  for (std::size_t s = 1; s <= total; ++s) {
    const Batch batch = sample_batch(data.train(), cfg.batch_size, seq, batch_rng);
    LossAndGrad lg = model_loss_and_grad(model, batch);
    const double gnorm = std::isfinite(lg.loss) ? clip_global_norm(lg.grads, cfg.hyper.clip)
                                                : std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(lg.loss) || !std::isfinite(gnorm)) {
      log.write({{"event", "error"}, {"step", s},
                 {"message", "non-finite loss or gradient"},
                 {"train_loss", std::isfinite(lg.loss) ? json(lg.loss) : json("nan")},
                 {"wall_clock_s", elapsed()}});
      throw std::runtime_error("train_run: non-finite loss at step " + std::to_string(s));
    }
    const auto lrs = effective_lrs(schedule_lr(cfg.schedule, s), cfg.blockwise, s);
    opt.step(model.params(), lg.grads, lrs);
    res.train_loss.push_back(lg.loss);
    res.grad_norm.push_back(gnorm);

    json rec{{"event", "metrics"}, {"step", s}, {"train_loss", lg.loss},
             {"grad_norm", gnorm}, {"lr", by_type(lrs)}};
    if (s % cfg.cadence == 0) measure(s, rec);
    rec["wall_clock_s"] = elapsed();
    log.write(std::move(rec));
  }

  res.terminal_train_loss = tail_mean(res.train_loss, cfg.cadence);
  res.terminal_val_loss = res.val_loss.back();
  res.wall_seconds = elapsed();
  if (opts.write_files) {
    log.write({{"event", "run_end"},
               {"terminal_train_loss", res.terminal_train_loss},
               {"terminal_val_loss", res.terminal_val_loss},
               {"wall_clock_s", res.wall_seconds}});
    if (opts.save_checkpoint) {
      save_checkpoint(res.run_dir + "/checkpoint.bin", model, data.vocabulary());
    }
  }
  return res;
}

RunResult train_run(const TrainConfig& cfg, const TrainOptions& opts) {
  const Dataset data = load_corpus(cfg.corpus, cfg.train_fraction);
  return train_run(cfg, data, opts);
}

void check_comparable(const TrainConfig& a, const TrainConfig& b) {
  if (!(a.model == b.model)) throw std::invalid_argument("compare: model configs differ");
  if (a.corpus != b.corpus || a.train_fraction != b.train_fraction) {
    throw std::invalid_argument("compare: data configs differ");
  }
  if (a.seed != b.seed) throw std::invalid_argument("compare: seeds differ");
  if (a.total_steps() != b.total_steps()) throw std::invalid_argument("compare: lengths differ");
}

Comparison compare_results(const RunResult& a, const RunResult& b, std::size_t window) {
  if (a.train_loss.size() != b.train_loss.size() || a.eval_steps != b.eval_steps) {
    throw std::invalid_argument("compare_results: runs have different lengths");
  }
  Comparison c;
  c.name_a = a.name;
  c.name_b = b.name;
  c.total_steps = a.train_loss.size();
  c.terminal_train_a = a.terminal_train_loss;
  c.terminal_train_b = b.terminal_train_loss;
  c.terminal_val_a = a.terminal_val_loss;
  c.terminal_val_b = b.terminal_val_loss;
  for (std::size_t i = 0; i < a.train_loss.size(); ++i) {
    c.train_delta.push_back(b.train_loss[i] - a.train_loss[i]);
  }
  for (std::size_t i = a.val_loss.size(); i-- > 0;) {
    if (!(b.val_loss[i] < a.val_loss[i])) break;
    c.val_lead_step = a.eval_steps[i];
  }
  // Trailing moving average of B's training loss, step s = index + 1.
  const std::size_t w = std::max<std::size_t>(window, 1);
  std::vector<double> smooth(b.train_loss.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < b.train_loss.size(); ++i) {
    acc += b.train_loss[i];
    if (i >= w) acc -= b.train_loss[i - w];
    smooth[i] = acc / static_cast<double>(std::min(i + 1, w));
  }
  for (std::size_t i = smooth.size(); i-- > 0;) {
    if (!(smooth[i] <= a.terminal_train_loss)) break;
    c.catch_up_step = i + 1;
  }
  return c;
}

Comparison compare_runs(const TrainConfig& a, const TrainConfig& b, const TrainOptions& opts) {
  check_comparable(a, b);
  const Dataset data = load_corpus(a.corpus, a.train_fraction);
  const RunResult ra = train_run(a, data, opts);
  const RunResult rb = train_run(b, data, opts);
  Comparison c = compare_results(ra, rb, a.cadence);
  if (opts.write_files) {
    const auto path = std::filesystem::path(a.out_dir) / ("compare_" + a.name + "_vs_" + b.name + ".json");
    std::ofstream out(path, std::ios::trunc);
    out << comparison_to_json(c).dump(2) << '\n';
  }
  return c;
}

json comparison_to_json(const Comparison& c) {
  auto opt = [](const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); };
  return json{{"name_a", c.name_a},
              {"name_b", c.name_b},
              {"total_steps", c.total_steps},
              {"terminal_train_a", c.terminal_train_a},
              {"terminal_train_b", c.terminal_train_b},
              {"terminal_val_a", c.terminal_val_a},
              {"terminal_val_b", c.terminal_val_b},
              {"val_lead_step", opt(c.val_lead_step)},
              {"catch_up_step", opt(c.catch_up_step)},
              {"train_delta", c.train_delta}};
}

Comparison comparison_from_json(const json& j) {
  auto opt = [&j](const char* key) -> std::optional<std::size_t> {
    const json& v = j.at(key);
    if (v.is_null()) return std::nullopt;
    return v.get<std::size_t>();
  };
  Comparison c;
  c.name_a = j.at("name_a").get<std::string>();
  c.name_b = j.at("name_b").get<std::string>();
  c.total_steps = j.at("total_steps").get<std::size_t>();
  c.terminal_train_a = j.at("terminal_train_a").get<double>();
  c.terminal_train_b = j.at("terminal_train_b").get<double>();
  c.terminal_val_a = j.at("terminal_val_a").get<double>();
  c.terminal_val_b = j.at("terminal_val_b").get<double>();
  c.val_lead_step = opt("val_lead_step");
  c.catch_up_step = opt("catch_up_step");
  c.train_delta = j.at("train_delta").get<std::vector<double>>();
  return c;
}

std::vector<json> read_run_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run log " + path);
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    if (rec.value("schema_version", -1) != kRunLogSchemaVersion) {
      throw std::runtime_error("run log " + path + ": unsupported schema version");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace sharplab
