#include "plaus/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "plaus/errors.hpp"

namespace plaus {

namespace {

constexpr char kMagic[8] = {'P', 'L', 'A', 'U', 'S', 'C', 'K', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes little-endian");

nlohmann::json config_json(const TransformerConfig& c) {
  return {{"n_layers", c.n_layers}, {"d_model", c.d_model},       {"n_heads", c.n_heads},
          {"d_mlp", c.d_mlp},       {"vocab_size", c.vocab_size}, {"max_seq", c.max_seq},
          {"pre_norm", c.pre_norm}};
}

TransformerConfig config_from(const nlohmann::json& j) {
  TransformerConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_mlp = j.at("d_mlp").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_seq = j.at("max_seq").get<int>();
  c.pre_norm = j.at("pre_norm").get<bool>();
  return c;
}

}  // namespace

std::string checkpoint_bytes(const Transformer& model, const std::vector<std::string>& vocab) {
  nlohmann::json header;
  header["config"] = config_json(model.config());
  header["vocab"] = vocab;
  auto params = model.named_parameters();
  std::size_t offset = 0;
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [name, t] : params) {
    table.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  }
  header["tensors"] = table;
  const std::string h = header.dump();

  std::string out;
  out.append(kMagic, sizeof(kMagic));
  const std::uint64_t hlen = h.size();
  out.append(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out += h;
  for (const auto& [name, t] : params) {
    const auto d = t.data();
    out.append(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Transformer& model,
                     const std::vector<std::string>& vocab) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  const std::string bytes = checkpoint_bytes(model, vocab);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(path.string() + ": not a checkpoint (bad magic)");
  }
  std::uint64_t hlen = 0;
  std::memcpy(&hlen, bytes.data() + sizeof(kMagic), sizeof(hlen));
  const std::size_t hstart = sizeof(kMagic) + sizeof(hlen);
  if (bytes.size() < hstart + hlen) throw ParseError(path.string() + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(hstart, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": bad header: " + e.what());
  }

  Checkpoint ck;
  ck.vocab = header.at("vocab").get<std::vector<std::string>>();
  ck.model = Transformer::zeros(config_from(header.at("config")));
  const std::size_t payload = hstart + hlen;
  auto params = ck.model.named_parameters();
  const auto& table = header.at("tensors");
  if (table.size() != params.size()) {
    throw ParseError(path.string() + ": tensor table has " + std::to_string(table.size()) +
                     " entries, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, t] = params[i];
    const auto& e = table[i];
    if (e.at("name").get<std::string>() != name || e.at("shape").get<Shape>() != t.shape()) {
      throw ParseError(path.string() + ": tensor " + std::to_string(i) + " does not match " + name +
                       " " + shape_str(t.shape()));
    }
    const std::size_t off = payload + e.at("offset").get<std::size_t>() * sizeof(double);
    if (bytes.size() < off + t.size() * sizeof(double)) {
      throw ParseError(path.string() + ": truncated payload at " + name);
    }
    std::memcpy(t.mutable_data().data(), bytes.data() + off, t.size() * sizeof(double));
  }
  return ck;
}

}  // namespace plaus
