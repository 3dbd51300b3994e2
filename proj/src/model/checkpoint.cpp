#include "arithlab/model/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace arithlab::model {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'A', 'L', 'A', 'B', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kFormatVersion = 1;
}  // namespace

nlohmann::json config_to_json(const ModelConfig& cfg) {
  return {{"n_digits", cfg.n_digits}, {"n_layers", cfg.n_layers}, {"n_heads", cfg.n_heads},
          {"d_head", cfg.d_head},     {"seed", cfg.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.n_digits = j.at("n_digits").get<int>();
  cfg.n_layers = j.at("n_layers").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.d_head = j.at("d_head").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.validate();
  return cfg;
}

void save_checkpoint(const std::string& path, const ModelWeights& weights,
                     const nlohmann::json& metadata) {
  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["config"] = config_to_json(weights.cfg);
  header["metadata"] = metadata;
  auto manifest = nlohmann::json::array();
  const auto params = weights.named_params_const();
  for (const auto& [name, t] : params) {
    manifest.push_back({{"name", name}, {"shape", t->shape()}});
  }
  header["tensors"] = manifest;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  const auto hlen = static_cast<std::uint32_t>(header_str.size());
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, t] : params) {
    (void)name;
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not an arithlab checkpoint: " + path);
  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header_str(hlen, '\0');
  in.read(header_str.data(), hlen);
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
  const auto header = nlohmann::json::parse(header_str);
  if (header.at("format_version").get<std::uint32_t>() != kFormatVersion)
    throw std::runtime_error("unsupported checkpoint format version");

  LoadedCheckpoint result;
  result.weights = ModelWeights::init(config_from_json(header.at("config")));
  result.metadata = header.value("metadata", nlohmann::json::object());

  auto params = result.weights.named_params();
  const auto& manifest = header.at("tensors");
  if (manifest.size() != params.size())
    throw std::runtime_error("checkpoint tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, tensor] = params[i];
    const auto& entry = manifest[i];
    if (entry.at("name").get<std::string>() != name)
      throw std::runtime_error("checkpoint tensor order mismatch at " + name);
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != tensor.shape())
      throw std::runtime_error("checkpoint shape mismatch at " + name);
    in.read(reinterpret_cast<char*>(tensor.data()),
            static_cast<std::streamsize>(tensor.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated checkpoint payload at " + name);
  }
  return result;
}

}  // namespace arithlab::model
