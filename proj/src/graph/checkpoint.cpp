#include "degm/graph/checkpoint.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <fstream>
#include <memory>

namespace degm::graph {

using nn::Tensor;

namespace {

constexpr std::array<char, 4> kMagic{'D', 'E', 'G', 'M'};
// Bounds on counts read from disk, to fail fast on corrupt lengths.
constexpr std::uint64_t kMaxWidths = 64;
constexpr std::uint64_t kMaxEntries = std::uint64_t{1} << 32;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void i32(std::int32_t v) { le(static_cast<std::uint32_t>(v)); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }

 private:
  template <class U>
  void le(U v) {
    std::array<unsigned char, sizeof(U)> b{};
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b.data(), b.size());
  }
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw CheckpointError("checkpoint: truncated");
  }
  std::uint8_t u8() {
    std::uint8_t v = 0;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(le<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }

 private:
  template <class U>
  U le() {
    std::array<unsigned char, sizeof(U)> b{};
    bytes(b.data(), b.size());
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
  }
  std::istream& in_;
};

void write_params(Writer& w, const std::vector<Tensor>& params) {
  std::uint64_t n = 0;
  for (const auto& p : params) n += p.numel();
  w.u64(n);
  for (const auto& p : params) {
    for (double v : p.data()) w.f64(v);
  }
}

void read_params(Reader& r, const std::vector<Tensor>& params) {
  std::uint64_t expected = 0;
  for (const auto& p : params) expected += p.numel();
  const std::uint64_t n = r.u64();
  if (n != expected) {
    throw CheckpointError("checkpoint: node holds " + std::to_string(n) + " parameters, architecture needs " +
                          std::to_string(expected));
  }
  for (Tensor p : params) {
    for (double& v : p.mutable_data()) v = r.f64();
  }
}

void write_doubles(Writer& w, const std::vector<double>& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (double x : v) w.f64(x);
}

std::vector<double> read_doubles(Reader& r) {
  const std::uint32_t n = r.u32();
  if (n > kMaxWidths * 1024) throw CheckpointError("checkpoint: implausible vector length");
  std::vector<double> v(n);
  for (double& x : v) x = r.f64();
  return v;
}

void write_widths(Writer& w, const std::vector<std::size_t>& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (std::size_t x : v) w.u64(x);
}

std::vector<std::size_t> read_widths(Reader& r) {
  const std::uint32_t n = r.u32();
  if (n > kMaxWidths) throw CheckpointError("checkpoint: implausible layer count");
  std::vector<std::size_t> v(n);
  for (auto& x : v) x = static_cast<std::size_t>(r.u64());
  return v;
}

void write_arch(Writer& w, const vae::VaeArch& a) {
  w.u64(a.data_dim);
  w.u64(a.latent_dim);
  write_widths(w, a.encoder_hidden);
  write_widths(w, a.decoder_hidden);
  w.u8(static_cast<std::uint8_t>(a.observation.likelihood));
  w.u8(a.observation.normalize ? 1 : 0);
  w.f64(a.observation.pixel_scale);
}

vae::VaeArch read_arch(Reader& r) {
  vae::VaeArch a;
  a.data_dim = static_cast<std::size_t>(r.u64());
  a.latent_dim = static_cast<std::size_t>(r.u64());
  a.encoder_hidden = read_widths(r);
  a.decoder_hidden = read_widths(r);
  const std::uint8_t lik = r.u8();
  if (lik > static_cast<std::uint8_t>(vae::Likelihood::gaussian_identity)) {
    throw CheckpointError("checkpoint: unknown likelihood code " + std::to_string(lik));
  }
  a.observation.likelihood = static_cast<vae::Likelihood>(lik);
  a.observation.normalize = r.u8() != 0;
  a.observation.pixel_scale = r.f64();
  try {
    a.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: invalid architecture: ") + e.what());
  }
  return a;
}

SpecificNode blank_specific(const vae::VaeArch& a, int task_id, std::vector<double> pi) {
  const auto ident = nn::Activation::identity;
  return {0,
          task_id,
          nn::build_mlp(vae::stack_spec({a.trunk_width(), a.latent_dim}, ident, 0)),
          nn::build_mlp(vae::stack_spec({a.trunk_width(), a.latent_dim}, ident, 0)),
          nn::build_mlp(vae::stack_spec({a.decoder_width(), a.data_dim}, vae::output_activation(a.observation.likelihood), 0)),
          std::move(pi)};
}

}  // namespace

void write_graph(std::ostream& out, const GraphState& graph, CheckpointKind kind) {
  Writer w(out);
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(kind));
  write_arch(w, graph.arch());
  w.u32(static_cast<std::uint32_t>(graph.node_count()));
  for (std::size_t id = 0; id < graph.node_count(); ++id) {
    const NodeKind k = graph.kind(id);
    w.u8(static_cast<std::uint8_t>(k));
    if (k == NodeKind::basic) {
      const BasicNode& b = graph.basic(id);
      w.i32(b.task_id);
      w.f64(b.best_elbo);
      write_params(w, b.model.parameters());
    } else {
      const SpecificNode& s = graph.specific(id);
      w.i32(s.task_id);
      write_doubles(w, s.pi);
      write_params(w, s.parameters());
    }
  }
  for (double v : graph.adjacency()) w.f64(v);
  w.u32(static_cast<std::uint32_t>(graph.expansion_log().size()));
  for (const auto& rec : graph.expansion_log()) {
    w.i32(rec.task_id);
    w.u8(static_cast<std::uint8_t>(rec.decision));
    write_doubles(w, rec.ks);
    w.f64(rec.tau);
  }
  if (!out) throw CheckpointError("checkpoint: write failed");
}

GraphState read_graph(std::istream& in, CheckpointKind* kind_out) {
  Reader r(in);
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw CheckpointError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const std::uint8_t kind = r.u8();
  if (kind > static_cast<std::uint8_t>(CheckpointKind::single_model)) {
    throw CheckpointError("checkpoint: unknown content kind " + std::to_string(kind));
  }
  if (kind_out) *kind_out = static_cast<CheckpointKind>(kind);
  GraphState g(read_arch(r));
  const std::uint32_t nodes = r.u32();
  if (nodes > kMaxEntries / 2) throw CheckpointError("checkpoint: implausible node count");
  for (std::uint32_t id = 0; id < nodes; ++id) {
    const std::uint8_t nk = r.u8();
    const int task_id = r.i32();
    if (nk == static_cast<std::uint8_t>(NodeKind::basic)) {
      BasicNode b;
      b.task_id = task_id;
      b.best_elbo = r.f64();
      b.model = vae::build_vae(g.arch(), 0, "checkpoint");
      read_params(r, b.model.parameters());
      b.model.set_trainable(false);
      g.add_basic(std::move(b));
    } else if (nk == static_cast<std::uint8_t>(NodeKind::specific)) {
      std::vector<double> pi = read_doubles(r);
      if (pi.empty() || pi.size() > g.basic_nodes().size()) {
        throw CheckpointError("checkpoint: specific node " + std::to_string(id) + " has " +
                              std::to_string(pi.size()) + " weights for " + std::to_string(g.basic_nodes().size()) +
                              " basic nodes");
      }
      SpecificNode s = blank_specific(g.arch(), task_id, std::move(pi));
      read_params(r, s.parameters());
      s.set_trainable(false);
      g.add_specific(std::move(s));
    } else {
      throw CheckpointError("checkpoint: unknown node kind " + std::to_string(nk));
    }
  }
  const std::vector<double> expected = g.adjacency();
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (r.f64() != expected[i]) throw CheckpointError("checkpoint: adjacency disagrees with the nodes");
  }
  const std::uint32_t records = r.u32();
  if (records > nodes) throw CheckpointError("checkpoint: more expansion records than nodes");
  for (std::uint32_t i = 0; i < records; ++i) {
    ExpansionRecord rec;
    rec.task_id = r.i32();
    const std::uint8_t d = r.u8();
    if (d > 1) throw CheckpointError("checkpoint: unknown decision code " + std::to_string(d));
    rec.decision = static_cast<Decision>(d);
    rec.ks = read_doubles(r);
    rec.tau = r.f64();
    g.record(std::move(rec));
  }
  return g;
}

void save_graph(const std::filesystem::path& path, const GraphState& graph) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot open " + path.string() + " for writing");
  write_graph(out, graph);
}

GraphState load_graph(const std::filesystem::path& path, CheckpointKind* kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  try {
    return read_graph(in, kind);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

void save_model(const std::filesystem::path& path, const vae::VaeModel& model, int task_id) {
  GraphState g(model.arch());
  g.add_basic(BasicNode{0, task_id, model, 0.0});
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot open " + path.string() + " for writing");
  write_graph(out, g, CheckpointKind::single_model);
}

vae::VaeModel load_model(const std::filesystem::path& path) {
  CheckpointKind kind{};
  GraphState g = load_graph(path, &kind);
  if (kind != CheckpointKind::single_model || g.node_count() != 1) {
    throw CheckpointError(path.string() + ": not a single-model checkpoint");
  }
  vae::VaeModel m = g.basic(0).model;
  m.set_trainable(true);
  return m;
}

std::string basic_parameter_hash(const GraphState& graph) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: digest initialization failed");
  }
  for (const auto& b : graph.basic_nodes()) {
    for (const auto& p : b.model.parameters()) {
      for (double v : p.data()) {
        const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        std::array<unsigned char, 8> le{};
        for (std::size_t i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>(bits >> (8 * i));
        EVP_DigestUpdate(ctx.get(), le.data(), le.size());
      }
    }
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) throw std::runtime_error("sha256: digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

}  // namespace degm::graph
