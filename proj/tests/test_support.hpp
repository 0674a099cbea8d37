#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "charparse/config.hpp"
#include "charparse/corpus.hpp"
#include "charparse/model.hpp"
#include "charparse/synthetic.hpp"

namespace charparse::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("charparse_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// A model small enough for unit tests.
inline ModelConfig tiny_model_config(EmbeddingSource source = EmbeddingSource::character) {
  Config cfg;
  cfg.set("encoder.layers", "2");
  cfg.set("encoder.heads", "2");
  cfg.set("encoder.d_model", "16");
  cfg.set("encoder.d_ff", "32");
  cfg.set("encoder.max_seq_len", "32");
  cfg.set("encoder.source", std::string(embedding_source_name(source)));
  cfg.set("char.emb_dim", "4");
  cfg.set("char.kernels", "1:4,2:4,3:4");
  cfg.set("char.highway", "1");
  cfg.set("char.max_word_len", "20");
  cfg.set("subword.size", "80");
  cfg.set("mlm.top_k", "50");
  cfg.set("parser.word_dim", "8");
  cfg.set("parser.tag_dim", "4");
  cfg.set("parser.tagger_hidden", "16");
  cfg.set("parser.arc_dim", "16");
  cfg.set("parser.label_dim", "8");
  return ModelConfig::from_config(cfg);
}

inline std::vector<Sentence> toy_treebank(std::size_t n, std::uint64_t seed = 2) {
  return ToyGrammar().treebank(n, seed);
}

inline RawCorpus toy_corpus(std::size_t n, std::uint64_t seed = 1) { return ToyGrammar().raw_corpus(n, seed); }

}  // namespace charparse::testing
