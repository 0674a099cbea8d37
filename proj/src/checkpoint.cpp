#include "charparse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace charparse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void append_f32(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

float read_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed: " + path.string());
}

std::string read_file(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(std::string("missing ") + what + " file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string parameter_bytes(const ParameterStore<float>& params, const std::function<bool(const std::string&)>& select) {
  std::string out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (select && !select(params[i].name)) continue;
    for (float v : params[i].value.values()) append_f32(out, v);
  }
  return out;
}

void save_checkpoint(const Model& model, const fs::path& dir, const Config& extra) {
  fs::create_directories(dir);
  const auto& params = model.params();
  json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["pipeline"] = std::string(embedding_source_name(model.source()));
  json entries = json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    entries.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}});
    offset += p.value.size() * 4;
  }
  manifest["parameters"] = std::move(entries);
  manifest["blob_bytes"] = offset;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  write_file(dir / "params.bin", parameter_bytes(params));

  Config cfg;
  cfg.set("checkpoint.version", std::to_string(kCheckpointVersion));
  cfg.set("checkpoint.task", model.has_task() ? "true" : "false");
  model.config().to_config(cfg);
  for (const auto& [k, v] : extra.entries()) {
    if (!cfg.has(k)) cfg.add(k, v);
  }
  write_file(dir / "config.toml", cfg.to_string());

  if (model.source() == EmbeddingSource::character) {
    write_file(dir / "char_vocab.txt", model.char_vocab().to_text());
  } else {
    write_file(dir / "subword_vocab.txt", model.subword_vocab().to_text());
  }
  write_file(dir / "mlm_vocab.txt", model.mlm_vocab().to_text());
  if (model.has_task()) write_file(dir / "treebank_vocab.txt", model.treebank_vocab().to_text());
}

Model load_checkpoint(const fs::path& dir, std::optional<EmbeddingSource> expected, Config* config_out) {
  if (!fs::is_directory(dir)) throw CheckpointError("checkpoint directory not found: " + dir.string());
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json", "manifest"));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed manifest: ") + e.what());
  }
  const int version = manifest.value("format_version", -1);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  Config cfg = Config::parse(read_file(dir / "config.toml", "config"));
  if (cfg.get("checkpoint.version") != std::to_string(kCheckpointVersion)) {
    throw CheckpointError("config.toml version disagrees with manifest");
  }
  Config resolved = cfg;
  const ModelConfig mc = ModelConfig::from_config(resolved);
  const std::string pipeline = manifest.value("pipeline", "");
  if (pipeline != embedding_source_name(mc.encoder.source)) {
    throw CheckpointError("manifest pipeline '" + pipeline + "' disagrees with config");
  }
  if (expected && *expected != mc.encoder.source) {
    throw CheckpointError("config mismatch: checkpoint holds a " + pipeline + " model, " +
                          std::string(embedding_source_name(*expected)) + " pipeline requested");
  }
  CharVocab chars;
  SubwordVocab subwords;
  if (mc.encoder.source == EmbeddingSource::character) {
    chars = CharVocab::from_text(read_file(dir / "char_vocab.txt", "vocabulary"));
  } else {
    subwords = SubwordVocab::from_text(read_file(dir / "subword_vocab.txt", "vocabulary"));
  }
  Model model(mc, std::move(chars), std::move(subwords), MlmVocab::from_text(read_file(dir / "mlm_vocab.txt", "vocabulary")),
              0);
  if (parse_bool(cfg.get("checkpoint.task"), "checkpoint.task")) {
    model.attach_task(TreebankVocab::from_text(read_file(dir / "treebank_vocab.txt", "vocabulary")), 0);
  }

  const std::string blob = read_file(dir / "params.bin", "parameter blob");
  const std::size_t declared = manifest.value("blob_bytes", std::size_t{0});
  if (blob.size() != declared) {
    throw CheckpointError("integrity error: params.bin holds " + std::to_string(blob.size()) + " bytes, manifest declares " +
                          std::to_string(declared));
  }
  auto& params = model.params();
  const auto& entries = manifest.at("parameters");
  if (entries.size() != params.size()) {
    throw CheckpointError("integrity error: manifest lists " + std::to_string(entries.size()) + " parameters, model has " +
                          std::to_string(params.size()));
  }
  std::vector<bool> filled(params.size(), false);
  for (const auto& e : entries) {
    const std::string name = e.at("name");
    Parameter<float>* p = params.find(name);
    if (!p) throw CheckpointError("integrity error: unknown parameter " + name);
    const Shape shape = e.at("shape").get<Shape>();
    if (shape != p->value.shape()) {
      throw CheckpointError("integrity error: parameter " + name + " has shape " + shape_string(shape) + ", expected " +
                            shape_string(p->value.shape()));
    }
    const std::size_t offset = e.at("offset");
    if (offset + p->value.size() * 4 > blob.size()) throw CheckpointError("integrity error: parameter " + name + " overruns blob");
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = read_f32(blob.data() + offset + 4 * i);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (&params[i] == p) {
        if (filled[i]) throw CheckpointError("integrity error: parameter " + name + " listed twice");
        filled[i] = true;
      }
    }
  }
  if (config_out) *config_out = cfg;
  return model;
}

}  // namespace charparse
