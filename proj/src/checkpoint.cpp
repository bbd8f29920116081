#include "tlerc/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace tlerc {

using nlohmann::json;

namespace {

constexpr char kMagic[] = "TLERC1";
constexpr std::size_t kMagicLen = 6;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace

std::string Checkpoint::to_bytes() const {
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : params) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size() * sizeof(float);
  }
  const json header = {
      {"version", version}, {"kind", kind}, {"config", config}, {"tensors", tensors}};
  const std::string text = header.dump();

  std::string out(kMagic, kMagicLen);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& [name, t] : params)
    for (double v : t.data()) {
      const float f = static_cast<float>(v);
      char buf[sizeof(float)];
      std::memcpy(buf, &f, sizeof(float));
      out.append(buf, sizeof(float));
    }
  return out;
}

Checkpoint Checkpoint::from_bytes(const std::string& bytes) {
  if (bytes.size() < kMagicLen + 8 || bytes.compare(0, kMagicLen, kMagic) != 0)
    throw FormatError("not a checkpoint: bad magic");
  const std::uint64_t header_len = get_u64(bytes, kMagicLen);
  const std::size_t body = kMagicLen + 8;
  if (header_len > bytes.size() - body) throw FormatError("checkpoint header truncated");
  json header;
  try {
    header = json::parse(bytes.substr(body, header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.version = header.at("version").get<int>();
    if (ckpt.version != kVersion)
      throw FormatError("unsupported checkpoint version " + std::to_string(ckpt.version));
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.config = header.at("config");
    const std::size_t payload = body + header_len;
    std::uint64_t expected_offset = 0;
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      if (offset != expected_offset)
        throw FormatError("checkpoint tensor " + name + " has a non-contiguous offset");
      std::size_t n = 1;
      for (auto e : shape) n *= e;
      if (payload + offset + n * sizeof(float) > bytes.size())
        throw FormatError("checkpoint payload truncated at tensor " + name);
      std::vector<double> values(n);
      for (std::size_t i = 0; i < n; ++i) {
        float f;
        std::memcpy(&f, bytes.data() + payload + offset + i * sizeof(float), sizeof(float));
        values[i] = f;
      }
      ckpt.params.add(name, Tensor(shape, std::move(values)));
      expected_offset = offset + n * sizeof(float);
    }
    if (payload + expected_offset != bytes.size())
      throw FormatError("checkpoint has trailing bytes after the last tensor");
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header malformed: ") + e.what());
  }
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  const auto bytes = to_bytes();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_bytes(bytes);
}

ParameterSet round_to_float(const ParameterSet& params) {
  ParameterSet out = params;
  for (auto& [name, t] : out)
    for (double& v : t.data()) v = static_cast<float>(v);
  return out;
}

json to_json(const HredConfig& c) {
  return {{"vocab_size", c.vocab_size},         {"embed_dim", c.embed_dim},
          {"encoder_hidden", c.encoder_hidden}, {"context_hidden", c.context_hidden},
          {"decoder_hidden", c.decoder_hidden}, {"latent_dim", c.latent_dim},
          {"share_embedding", c.share_embedding}, {"max_tokens", c.max_tokens},
          {"max_turns", c.max_turns}};
}

HredConfig hred_config_from_json(const json& j) {
  try {
    HredConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.encoder_hidden = j.at("encoder_hidden").get<std::size_t>();
    c.context_hidden = j.at("context_hidden").get<std::size_t>();
    c.decoder_hidden = j.at("decoder_hidden").get<std::size_t>();
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.share_embedding = j.at("share_embedding").get<bool>();
    c.max_tokens = j.at("max_tokens").get<std::size_t>();
    c.max_turns = j.at("max_turns").get<std::size_t>();
    return c;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("HRED config: ") + e.what());
  }
}

json to_json(const ErcConfig& c) {
  return {{"encoder", c.encoder_kind == SentenceEncoderKind::trainable ? "trainable" : "external"},
          {"vocab_size", c.vocab_size},
          {"embed_dim", c.embed_dim},
          {"encoder_hidden", c.encoder_hidden},
          {"external_dim", c.external_dim},
          {"context_hidden", c.context_hidden},
          {"latent_dim", c.latent_dim},
          {"task", c.task == ErcTask::classification ? "classification" : "regression"},
          {"labels", c.labels},
          {"dims", c.dims},
          {"dropout", c.dropout}};
}

ErcConfig erc_config_from_json(const json& j) {
  try {
    ErcConfig c;
    const auto enc = j.at("encoder").get<std::string>();
    if (enc != "trainable" && enc != "external") throw SchemaError("unknown encoder kind " + enc);
    c.encoder_kind =
        enc == "trainable" ? SentenceEncoderKind::trainable : SentenceEncoderKind::external;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.encoder_hidden = j.at("encoder_hidden").get<std::size_t>();
    c.external_dim = j.at("external_dim").get<std::size_t>();
    c.context_hidden = j.at("context_hidden").get<std::size_t>();
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    const auto task = j.at("task").get<std::string>();
    if (task != "classification" && task != "regression")
      throw SchemaError("unknown task " + task);
    c.task = task == "classification" ? ErcTask::classification : ErcTask::regression;
    c.labels = j.at("labels").get<std::vector<std::string>>();
    c.dims = j.at("dims").get<std::vector<std::string>>();
    c.dropout = j.at("dropout").get<double>();
    return c;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("ERC config: ") + e.what());
  }
}

Checkpoint make_checkpoint(const HredModel& model, const Vocabulary& vocab) {
  Checkpoint ckpt;
  ckpt.kind = model.config().vhred() ? "vhred" : "hred";
  ckpt.config = to_json(model.config());
  ckpt.config["vocab"] = vocab.tokens();
  ckpt.params = model.params();
  return ckpt;
}

HredModel hred_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "hred" && ckpt.kind != "vhred")
    throw SchemaError("checkpoint kind '" + ckpt.kind + "' is not a generative source model");
  return HredModel(hred_config_from_json(ckpt.config), ckpt.params);
}

Vocabulary vocab_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.config.contains("vocab")) throw SchemaError("checkpoint carries no vocabulary");
  return Vocabulary(ckpt.config.at("vocab").get<std::vector<std::string>>());
}

Checkpoint make_checkpoint(const ErcModel& model, const Vocabulary* vocab) {
  Checkpoint ckpt;
  ckpt.kind = "erc";
  ckpt.config = to_json(model.config());
  if (vocab) ckpt.config["vocab"] = vocab->tokens();
  ckpt.params = model.params();
  return ckpt;
}

ErcModel erc_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "erc") throw SchemaError("checkpoint kind '" + ckpt.kind + "' is not erc");
  return ErcModel(erc_config_from_json(ckpt.config), ckpt.params);
}

}  // namespace tlerc
