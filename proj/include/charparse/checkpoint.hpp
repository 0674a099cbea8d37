#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include "charparse/config.hpp"
#include "charparse/model.hpp"

namespace charparse {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Directory layout: manifest.json (name, shape, byte offset per
/// parameter), params.bin (little-endian float32), config.toml (flat
/// key = value) and the vocabulary text files. `extra` entries (e.g. the
/// training configuration) are stored in config.toml next to the model's.
void save_checkpoint(const Model& model, const std::filesystem::path& dir, const Config& extra = {});

/// Rebuilds the model. When `expected` is set, a checkpoint of the other
/// pipeline is rejected. `config_out` receives the stored configuration.
Model load_checkpoint(const std::filesystem::path& dir, std::optional<EmbeddingSource> expected = std::nullopt,
                      Config* config_out = nullptr);

/// Little-endian float32 bytes of the parameters accepted by `select`, in
/// registration order.
std::string parameter_bytes(const ParameterStore<float>& params,
                            const std::function<bool(const std::string&)>& select = {});

}  // namespace charparse
