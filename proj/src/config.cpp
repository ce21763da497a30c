#include "sharplab/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace sharplab {

using nlohmann::json;

std::string_view to_string(kernels::NormKind k) {
  return k == kernels::NormKind::LayerNorm ? "layernorm" : "rmsnorm";
}

kernels::NormKind parse_norm_kind(std::string_view s) {
  if (s == "layernorm") return kernels::NormKind::LayerNorm;
  if (s == "rmsnorm") return kernels::NormKind::RMSNorm;
  throw std::invalid_argument("unknown norm kind: " + std::string(s));
}

std::string_view to_string(kernels::ActKind k) {
  switch (k) {
    case kernels::ActKind::ReLU: return "relu";
    case kernels::ActKind::LeakyReLU: return "leaky_relu";
    case kernels::ActKind::GELU: return "gelu";
  }
  return "?";
}

kernels::ActKind parse_act_kind(std::string_view s) {
  for (auto k : {kernels::ActKind::ReLU, kernels::ActKind::LeakyReLU, kernels::ActKind::GELU}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown activation: " + std::string(s));
}

namespace {

/// Reads keys from one JSON object and rejects the ones nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw std::invalid_argument("config: " + where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument("config: bad value for " + where() + key + ": " + e.what());
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  Reader child(const char* key) {
    seen_.insert(key);
    return Reader(j_.contains(key) ? j_.at(key) : empty(), path_ + key + ".");
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw std::invalid_argument("config: unknown key '" + path_ + k + "'");
    }
  }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  std::string where() const { return path_.empty() ? "<root>." : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_model(Reader r, ModelConfig& c, bool with_identity) {
  r.get("n_layer", c.n_layer);
  r.get("d_model", c.d_model);
  r.get("n_head", c.n_head);
  r.get("d_ff", c.d_ff);
  r.get("context", c.context);
  std::string norm(to_string(c.norm));
  r.get("norm", norm);
  c.norm = parse_norm_kind(norm);
  std::string act(to_string(c.activation.kind));
  r.get("activation", act);
  c.activation.kind = parse_act_kind(act);
  r.get("leaky_alpha", c.activation.alpha);
  r.get("norm_eps", c.norm_eps);
  r.get("tie_head", c.tie_head);
  if (with_identity) {
    r.get("vocab", c.vocab);
    r.get("seed", c.seed);
  }
  r.finish();
}

}  // namespace

json model_config_to_json(const ModelConfig& c) {
  return json{{"n_layer", c.n_layer},
              {"d_model", c.d_model},
              {"n_head", c.n_head},
              {"d_ff", c.d_ff},
              {"context", c.context},
              {"norm", to_string(c.norm)},
              {"activation", to_string(c.activation.kind)},
              {"leaky_alpha", c.activation.alpha},
              {"norm_eps", c.norm_eps},
              {"tie_head", c.tie_head},
              {"vocab", c.vocab},
              {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  read_model(Reader(j, "model."), c, true);
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  ModelConfig m = model;
  m.vocab = std::max<std::size_t>(m.vocab, 2);
  m.validate();
  hyper.validate();
  schedule.validate();
  blockwise.validate();
  fisher.validate();
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (cadence < 1) throw std::invalid_argument("config: cadence must be >= 1");
  if (schedule.total_steps % cadence != 0) {
    throw std::invalid_argument("config: cadence must divide total_steps");
  }
  if (val_windows < 1) throw std::invalid_argument("config: val_windows must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("config: train_fraction must lie in (0, 1)");
  }
  if (blockwise.switch_step > schedule.total_steps) {
    throw std::invalid_argument("config: blockwise.switch_step beyond total_steps");
  }
}

json train_config_to_json(const TrainConfig& c) {
  json model = model_config_to_json(c.model);
  model.erase("vocab");
  model.erase("seed");
  json ratios = json::object();
  for (BlockType t : kAllBlockTypes) ratios[std::string(to_string(t))] = c.blockwise.ratio(t);
  return json{
      {"name", c.name},
      {"seed", c.seed},
      {"out_dir", c.out_dir},
      {"corpus", c.corpus},
      {"train_fraction", c.train_fraction},
      {"model", model},
      {"optimizer",
       {{"kind", to_string(c.optimizer)},
        {"beta1", c.hyper.beta1},
        {"beta2", c.hyper.beta2},
        {"weight_decay", c.hyper.weight_decay},
        {"eps", c.hyper.eps},
        {"clip", c.hyper.clip}}},
      {"schedule",
       {{"kind", to_string(c.schedule.kind)},
        {"warmup_steps", c.schedule.warmup_steps},
        {"total_steps", c.schedule.total_steps},
        {"lr_max", c.schedule.lr_max},
        {"lr_min", c.schedule.floor_lr()},
        {"wsd_stable_frac", c.schedule.wsd_stable_frac}}},
      {"blockwise",
       {{"enabled", c.blockwise.enabled},
        {"ratios", ratios},
        {"switch_step", c.blockwise.switch_step}}},
      {"batch_size", c.batch_size},
      {"cadence", c.cadence},
      {"fisher", {{"batch_sequences", c.fisher.batch_sequences}, {"stream", c.fisher.stream}}},
      {"val_windows", c.val_windows}};
}

TrainConfig parse_train_config(std::string_view text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
  }
  TrainConfig c;
  Reader root(j, "");
  root.get("name", c.name);
  root.get("seed", c.seed);
  root.get("out_dir", c.out_dir);
  root.get("corpus", c.corpus);
  root.get("train_fraction", c.train_fraction);
  read_model(root.child("model"), c.model, false);

  Reader opt = root.child("optimizer");
  std::string kind(to_string(c.optimizer));
  opt.get("kind", kind);
  c.optimizer = parse_optimizer_kind(kind);
  c.hyper = default_hyper(c.optimizer);
  opt.get("beta1", c.hyper.beta1);
  opt.get("beta2", c.hyper.beta2);
  opt.get("weight_decay", c.hyper.weight_decay);
  opt.get("eps", c.hyper.eps);
  opt.get("clip", c.hyper.clip);
  opt.finish();

  Reader sch = root.child("schedule");
  std::string skind(to_string(c.schedule.kind));
  sch.get("kind", skind);
  c.schedule.kind = parse_schedule_kind(skind);
  sch.get("warmup_steps", c.schedule.warmup_steps);
  sch.get("total_steps", c.schedule.total_steps);
  sch.get("lr_max", c.schedule.lr_max);
  sch.get("lr_min", c.schedule.lr_min);
  sch.get("wsd_stable_frac", c.schedule.wsd_stable_frac);
  sch.finish();

  Reader bw = root.child("blockwise");
  bw.get("enabled", c.blockwise.enabled);
  c.blockwise.ratios =
      c.optimizer == OptimizerKind::AdamMini ? adam_mini_ratios() : default_ratios();
  Reader ratios = bw.child("ratios");
  for (BlockType t : kAllBlockTypes) {
    const std::string key(to_string(t));
    ratios.get(key.c_str(), c.blockwise.ratios[static_cast<std::size_t>(t)]);
  }
  ratios.finish();
  c.blockwise.switch_step = c.schedule.warmup_steps;
  bw.get("switch_step", c.blockwise.switch_step);
  bw.finish();

  root.get("batch_size", c.batch_size);
  root.get("cadence", c.cadence);
  Reader fisher = root.child("fisher");
  fisher.get("batch_sequences", c.fisher.batch_sequences);
  fisher.get("stream", c.fisher.stream);
  fisher.finish();
  root.get("val_windows", c.val_windows);
  root.finish();

  if (!base_dir.empty() && !c.corpus.empty() && std::filesystem::path(c.corpus).is_relative()) {
    c.corpus = (std::filesystem::path(base_dir) / c.corpus).lexically_normal().string();
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string dir = std::filesystem::path(path).parent_path().string();
  TrainConfig c = parse_train_config(buf.str(), dir.empty() ? "." : dir);
  if (const char* out = std::getenv(kOutDirEnv); out && *out) c.out_dir = out;
  return c;
}

}  // namespace sharplab
