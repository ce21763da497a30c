#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "sharplab/config.hpp"
#include "sharplab/model.hpp"

namespace sharplab {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'L', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw std::runtime_error("load_checkpoint: truncated file " + path);
  }
  return v;
}

std::string take_string(std::istream& in, std::size_t n, const std::string& path) {
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw std::runtime_error("load_checkpoint: truncated file " + path);
  }
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const TransformerModel& model,
                     std::span<const std::uint8_t> vocabulary) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  nlohmann::json header{{"model", model_config_to_json(model.config())},
                        {"vocabulary", std::vector<std::uint8_t>(vocabulary.begin(),
                                                                 vocabulary.end())}};
  const std::string meta = header.dump();
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  const NamedTensors& p = model.params();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::string& name = p.name(i);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p[i].rank()));
    for (std::size_t d : p[i].shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(p[i].raw()),
              static_cast<std::streamsize>(p[i].size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("load_checkpoint: " + path + " is not a checkpoint");
  }
  const auto version = take<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));
  }
  const auto meta_len = take<std::uint32_t>(in, path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(take_string(in, meta_len, path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_checkpoint: bad header in " + path + ": " + e.what());
  }
  ModelConfig config = model_config_from_json(header.at("model"));
  std::vector<std::uint8_t> vocab = header.at("vocabulary").get<std::vector<std::uint8_t>>();

  const auto count = take<std::uint32_t>(in, path);
  NamedTensors params;
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name = take_string(in, take<std::uint32_t>(in, path), path);
    const auto rank = take<std::uint32_t>(in, path);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(take<std::uint64_t>(in, path));
    Tensor value(shape);
    if (!in.read(reinterpret_cast<char*>(value.raw()),
                 static_cast<std::streamsize>(value.size() * sizeof(double)))) {
      throw std::runtime_error("load_checkpoint: truncated tensor " + name + " in " + path);
    }
    params.insert(std::move(name), std::move(value));
  }
  std::vector<ParamSpec> specs = make_param_specs(config);
  return Checkpoint{TransformerModel(std::move(config), std::move(specs), std::move(params)),
                    std::move(vocab)};
}

}  // namespace sharplab
