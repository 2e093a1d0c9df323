#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "degm/graph/graph.hpp"
#include "degm/vae/vae.hpp"

namespace degm::graph {

/// Malformed, truncated or incompatible checkpoint.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointKind : std::uint8_t { graph = 0, single_model = 1 };

/// Little-endian binary container:
///   "DEGM", u32 version, u8 kind,
///   arch {u64 data_dim, u64 latent_dim, u32 n + u64[n] encoder_hidden,
///         u32 n + u64[n] decoder_hidden, u8 likelihood, u8 normalize, f64 pixel_scale},
///   u32 node count, per node {u8 node kind, i32 task_id,
///         basic: f64 best_elbo | specific: u32 n + f64[n] pi,
///         u64 n + f64[n] parameters in the node's parameter order},
///   f64[t * t] adjacency, row-major,
///   u32 records, per record {i32 task_id, u8 decision, u32 n + f64[n] ks, f64 tau}.
/// A single model is stored as a graph with one Basic node.
void write_graph(std::ostream& out, const GraphState& graph, CheckpointKind kind = CheckpointKind::graph);
/// Throws CheckpointError on bad magic, an unknown version, truncation or an
/// adjacency that disagrees with the nodes.
GraphState read_graph(std::istream& in, CheckpointKind* kind = nullptr);

void save_graph(const std::filesystem::path& path, const GraphState& graph);
GraphState load_graph(const std::filesystem::path& path, CheckpointKind* kind = nullptr);

void save_model(const std::filesystem::path& path, const vae::VaeModel& model, int task_id = 0);
/// Throws CheckpointError unless the file holds a single model.
vae::VaeModel load_model(const std::filesystem::path& path);

/// Lowercase hex SHA-256 over the little-endian parameters of every Basic node in id order.
std::string basic_parameter_hash(const GraphState& graph);

}  // namespace degm::graph
