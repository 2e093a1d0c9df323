#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "degm/data/stream.hpp"
#include "degm/graph/sequence.hpp"
#include "degm/replay/diagnose.hpp"
#include "degm/replay/trainer.hpp"
#include "degm/vae/vae.hpp"

namespace degm::cli {

/// Invalid, missing or unknown configuration; the message names the field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Method { elbo_gr, iwelbo_gr, degm_elbo, degm_iwelbo, degm2 };

std::string to_string(Method m);
/// Throws ConfigError naming `method` on an unknown name.
Method method_from_string(const std::string& name);
[[nodiscard]] bool is_degm(Method m);

struct DiagnosticsConfig {
  bool enabled = false;
  std::size_t snapshot_every = 1;
  std::size_t pool_size = 5;
  /// K' of the importance-weighted NLL in the diagnose summary.
  std::size_t eval_k_prime = 200;
};

struct RunConfig {
  Method method = Method::elbo_gr;
  /// Synthetic names ("bars", "rings-inv") or IDX domains.
  std::vector<data::DomainSpec> stream;
  std::size_t train_size = 2000;
  std::size_t test_size = 500;
  data::BinarizeMode binarize = data::BinarizeMode::threshold;
  std::size_t k_prime = 5;
  std::optional<double> tau;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double replay_ratio = 1.0;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "runs/out";
  std::size_t eval_k_prime = 200;
  std::size_t eval_batch = 100;
  std::size_t latent_dim = 16;
  std::vector<std::size_t> encoder_hidden{128};
  std::vector<std::size_t> decoder_hidden{128};
  vae::ObservationModel observation;
  DiagnosticsConfig diagnostics;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;

  [[nodiscard]] data::StreamGeometry geometry() const;
  /// Architecture for data of width `data_dim`.
  [[nodiscard]] vae::VaeArch arch(std::size_t data_dim) const;
  [[nodiscard]] replay::TrainConfig train_config() const;
  [[nodiscard]] replay::GrRunOptions gr_options(std::size_t data_dim) const;
  [[nodiscard]] graph::DegmConfig degm_config(std::size_t data_dim) const;
  [[nodiscard]] replay::DiagnoseOptions diagnose_options() const;
  /// "<method>-s<seed>".
  [[nodiscard]] std::string run_id() const;
};

/// Command-line values that take precedence over the file.
struct ConfigOverrides {
  std::optional<std::string> method;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> k_prime;
  std::optional<double> tau;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<double> replay_ratio;
  std::optional<std::string> output_dir;
  std::optional<bool> diagnostics;
};

/// JSON text -> validated config. Unknown keys, type errors and missing
/// required fields (method, stream) raise ConfigError naming the field.
RunConfig parse_config(const std::string& json_text, const ConfigOverrides& overrides = {});
/// Reads the file first; an unreadable file is a ConfigError naming the path.
RunConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

/// Canonical JSON text of a config; parse_config(to_json(c)) == c.
std::string to_json(const RunConfig& config);

/// Stream of the config's domains under its seed.
data::TaskStream build_stream(const RunConfig& config);

}  // namespace degm::cli
