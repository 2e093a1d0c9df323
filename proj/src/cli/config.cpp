#include "degm/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "degm/nn/errors.hpp"
#include "json.hpp"

namespace degm::cli {

using nlohmann::json;

namespace {

const std::set<std::string> kTopKeys{
    "method",       "stream",         "train_size",  "test_size",  "binarize",      "k_prime",
    "tau",          "epochs",         "batch_size",  "learning_rate", "replay_ratio", "seed",
    "output_dir",   "eval_k_prime",   "eval_batch",  "latent_dim", "encoder_hidden", "decoder_hidden",
    "likelihood",   "normalize",      "pixel_scale", "diagnostics"};
const std::set<std::string> kDiagnosticsKeys{"enabled", "snapshot_every", "pool_size", "eval_k_prime"};
const std::set<std::string> kDomainKeys{"train_images", "train_labels", "test_images", "test_labels", "labels",
                                        "inverse"};

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.contains(key)) throw ConfigError("unknown key '" + where + key + "'");
  }
}

std::size_t positive_size(const json& v, const std::string& field) {
  if (!v.is_number_integer() || v.get<long long>() <= 0) {
    throw ConfigError("field '" + field + "': expected a positive integer");
  }
  return v.get<std::size_t>();
}

double positive_number(const json& v, const std::string& field) {
  if (!v.is_number() || !(v.get<double>() > 0.0) || !std::isfinite(v.get<double>())) {
    throw ConfigError("field '" + field + "': expected a positive number");
  }
  return v.get<double>();
}

bool boolean(const json& v, const std::string& field) {
  if (!v.is_boolean()) throw ConfigError("field '" + field + "': expected true or false");
  return v.get<bool>();
}

std::string string(const json& v, const std::string& field) {
  if (!v.is_string()) throw ConfigError("field '" + field + "': expected a string");
  return v.get<std::string>();
}

std::vector<std::size_t> widths(const json& v, const std::string& field) {
  if (!v.is_array() || v.empty()) throw ConfigError("field '" + field + "': expected a non-empty array of widths");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(positive_size(v[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

data::DomainSpec parse_domain(const json& v, std::size_t index) {
  const std::string field = "stream[" + std::to_string(index) + "]";
  if (v.is_string()) {
    try {
      return data::DomainSpec::parse(v.get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError("field '" + field + "': " + e.what());
    }
  }
  if (!v.is_object()) throw ConfigError("field '" + field + "': expected a domain name or an IDX object");
  reject_unknown(v, kDomainKeys, field + ".");
  data::DomainSpec d;
  for (const char* key : {"train_images", "test_images"}) {
    if (!v.contains(key)) throw ConfigError("missing field '" + field + "." + key + "'");
  }
  d.idx_train_images = string(v["train_images"], field + ".train_images");
  d.idx_test_images = string(v["test_images"], field + ".test_images");
  if (v.contains("train_labels")) d.idx_train_labels = string(v["train_labels"], field + ".train_labels");
  if (v.contains("test_labels")) d.idx_test_labels = string(v["test_labels"], field + ".test_labels");
  if (v.contains("labels")) {
    const json& l = v["labels"];
    if (!l.is_array() || l.empty()) throw ConfigError("field '" + field + ".labels': expected a non-empty array");
    std::set<int> labels;
    for (const auto& x : l) {
      if (!x.is_number_integer()) throw ConfigError("field '" + field + ".labels': expected integers");
      labels.insert(x.get<int>());
    }
    d.label_filter = labels;
  }
  if (v.contains("inverse")) d.inverse = boolean(v["inverse"], field + ".inverse");
  return d;
}

json domain_json(const data::DomainSpec& d) {
  if (d.family) return d.name();
  json o = {{"train_images", d.idx_train_images}, {"test_images", d.idx_test_images}, {"inverse", d.inverse}};
  if (!d.idx_train_labels.empty()) o["train_labels"] = d.idx_train_labels;
  if (!d.idx_test_labels.empty()) o["test_labels"] = d.idx_test_labels;
  if (d.label_filter) o["labels"] = std::vector<int>(d.label_filter->begin(), d.label_filter->end());
  return o;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::elbo_gr: return "elbo_gr";
    case Method::iwelbo_gr: return "iwelbo_gr";
    case Method::degm_elbo: return "degm_elbo";
    case Method::degm_iwelbo: return "degm_iwelbo";
    case Method::degm2: return "degm2";
  }
  return "elbo_gr";
}

Method method_from_string(const std::string& name) {
  for (Method m : {Method::elbo_gr, Method::iwelbo_gr, Method::degm_elbo, Method::degm_iwelbo, Method::degm2}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("field 'method': unknown method '" + name +
                    "' (expected elbo_gr, iwelbo_gr, degm_elbo, degm_iwelbo or degm2)");
}

bool is_degm(Method m) { return m == Method::degm_elbo || m == Method::degm_iwelbo || m == Method::degm2; }

void RunConfig::validate() const {
  if (stream.size() < 2) throw ConfigError("field 'stream': expected at least two domains");
  const std::pair<const char*, std::size_t> sizes[] = {
      {"train_size", train_size}, {"test_size", test_size},       {"k_prime", k_prime},
      {"epochs", epochs},         {"batch_size", batch_size},     {"eval_k_prime", eval_k_prime},
      {"eval_batch", eval_batch}, {"latent_dim", latent_dim},     {"diagnostics.snapshot_every", diagnostics.snapshot_every},
      {"diagnostics.pool_size", diagnostics.pool_size}, {"diagnostics.eval_k_prime", diagnostics.eval_k_prime}};
  for (const auto& [name, v] : sizes) {
    if (v == 0) throw ConfigError(std::string("field '") + name + "': expected a positive integer");
  }
  const std::pair<const char*, double> reals[] = {
      {"learning_rate", learning_rate}, {"replay_ratio", replay_ratio}, {"pixel_scale", observation.pixel_scale}};
  for (const auto& [name, v] : reals) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("field '") + name + "': expected a positive number");
  }
  if ((method == Method::degm_elbo || method == Method::degm_iwelbo) && !tau) {
    throw ConfigError("field 'tau': required for method " + to_string(method));
  }
  if (tau && !(*tau > 0.0)) throw ConfigError("field 'tau': expected a positive number");
  if (diagnostics.enabled && is_degm(method)) {
    throw ConfigError("field 'diagnostics.enabled': bound diagnostics need a replay method (elbo_gr or iwelbo_gr)");
  }
  for (const auto& w : {encoder_hidden, decoder_hidden}) {
    for (std::size_t v : w) {
      if (v == 0) throw ConfigError("field 'encoder_hidden/decoder_hidden': widths must be positive");
    }
  }
  if (encoder_hidden.empty() || decoder_hidden.empty()) {
    throw ConfigError("field 'encoder_hidden/decoder_hidden': expected non-empty arrays");
  }
  if (encoder_hidden.back() <= latent_dim) {
    throw ConfigError("field 'encoder_hidden': last width must exceed latent_dim");
  }
}

data::StreamGeometry RunConfig::geometry() const {
  data::StreamGeometry g;
  g.train_size = train_size;
  g.test_size = test_size;
  g.binarize = binarize;
  return g;
}

vae::VaeArch RunConfig::arch(std::size_t data_dim) const {
  vae::VaeArch a;
  a.data_dim = data_dim;
  a.encoder_hidden = encoder_hidden;
  a.latent_dim = latent_dim;
  a.decoder_hidden = decoder_hidden;
  a.observation = observation;
  try {
    a.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("architecture: ") + e.what());
  }
  return a;
}

replay::TrainConfig RunConfig::train_config() const {
  replay::TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.learning_rate = learning_rate;
  t.replay_ratio = replay_ratio;
  const bool iw = method == Method::iwelbo_gr || method == Method::degm_iwelbo;
  t.objective = iw ? replay::Objective::iwelbo : replay::Objective::elbo;
  t.k_prime = iw ? k_prime : 1;
  return t;
}

replay::GrRunOptions RunConfig::gr_options(std::size_t data_dim) const {
  replay::GrRunOptions o;
  o.train = train_config();
  o.arch = arch(data_dim);
  o.seed = seed;
  o.eval_k_prime = eval_k_prime;
  o.snapshot_every = diagnostics.enabled ? diagnostics.snapshot_every : 0;
  return o;
}

graph::DegmConfig RunConfig::degm_config(std::size_t data_dim) const {
  graph::DegmConfig d;
  d.train = train_config();
  d.arch = arch(data_dim);
  d.seed = seed;
  if (tau) d.tau = *tau;
  d.override_rule = method == Method::degm2 ? graph::Override::force_basic : graph::Override::none;
  d.eval_k_prime = eval_k_prime;
  d.eval_batch = eval_batch;
  return d;
}

replay::DiagnoseOptions RunConfig::diagnose_options() const {
  replay::DiagnoseOptions o;
  o.pool_size = diagnostics.pool_size;
  return o;
}

std::string RunConfig::run_id() const { return to_string(method) + "-s" + std::to_string(seed); }

RunConfig parse_config(const std::string& json_text, const ConfigOverrides& ov) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  reject_unknown(j, kTopKeys, "");
  RunConfig c;
  if (ov.method) {
    c.method = method_from_string(*ov.method);
  } else {
    if (!j.contains("method")) throw ConfigError("missing field 'method'");
    c.method = method_from_string(string(j["method"], "method"));
  }
  if (!j.contains("stream")) throw ConfigError("missing field 'stream'");
  if (!j["stream"].is_array()) throw ConfigError("field 'stream': expected an array of domains");
  for (std::size_t i = 0; i < j["stream"].size(); ++i) c.stream.push_back(parse_domain(j["stream"][i], i));

  auto size_field = [&](const char* key, std::size_t& dst) {
    if (j.contains(key)) dst = positive_size(j[key], key);
  };
  auto real_field = [&](const char* key, double& dst) {
    if (j.contains(key)) dst = positive_number(j[key], key);
  };
  size_field("train_size", c.train_size);
  size_field("test_size", c.test_size);
  size_field("k_prime", c.k_prime);
  size_field("epochs", c.epochs);
  size_field("batch_size", c.batch_size);
  size_field("eval_k_prime", c.eval_k_prime);
  size_field("eval_batch", c.eval_batch);
  size_field("latent_dim", c.latent_dim);
  real_field("learning_rate", c.learning_rate);
  real_field("replay_ratio", c.replay_ratio);
  real_field("pixel_scale", c.observation.pixel_scale);
  if (j.contains("tau")) c.tau = positive_number(j["tau"], "tau");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("field 'seed': expected a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("output_dir")) c.output_dir = string(j["output_dir"], "output_dir");
  if (j.contains("binarize")) {
    const std::string b = string(j["binarize"], "binarize");
    if (b == "threshold") {
      c.binarize = data::BinarizeMode::threshold;
    } else if (b == "stochastic") {
      c.binarize = data::BinarizeMode::stochastic;
    } else {
      throw ConfigError("field 'binarize': expected threshold or stochastic");
    }
  }
  if (j.contains("encoder_hidden")) c.encoder_hidden = widths(j["encoder_hidden"], "encoder_hidden");
  if (j.contains("decoder_hidden")) c.decoder_hidden = widths(j["decoder_hidden"], "decoder_hidden");
  if (j.contains("likelihood")) {
    try {
      c.observation.likelihood = vae::likelihood_from_string(string(j["likelihood"], "likelihood"));
    } catch (const InvalidSpecError& e) {
      throw ConfigError(std::string("field 'likelihood': ") + e.what());
    }
  }
  if (j.contains("normalize")) c.observation.normalize = boolean(j["normalize"], "normalize");
  if (j.contains("diagnostics")) {
    const json& d = j["diagnostics"];
    if (!d.is_object()) throw ConfigError("field 'diagnostics': expected an object");
    reject_unknown(d, kDiagnosticsKeys, "diagnostics.");
    if (d.contains("enabled")) c.diagnostics.enabled = boolean(d["enabled"], "diagnostics.enabled");
    if (d.contains("snapshot_every")) c.diagnostics.snapshot_every = positive_size(d["snapshot_every"], "diagnostics.snapshot_every");
    if (d.contains("pool_size")) c.diagnostics.pool_size = positive_size(d["pool_size"], "diagnostics.pool_size");
    if (d.contains("eval_k_prime")) c.diagnostics.eval_k_prime = positive_size(d["eval_k_prime"], "diagnostics.eval_k_prime");
  }

  if (ov.seed) c.seed = *ov.seed;
  if (ov.k_prime) c.k_prime = *ov.k_prime;
  if (ov.tau) c.tau = *ov.tau;
  if (ov.epochs) c.epochs = *ov.epochs;
  if (ov.batch_size) c.batch_size = *ov.batch_size;
  if (ov.learning_rate) c.learning_rate = *ov.learning_rate;
  if (ov.replay_ratio) c.replay_ratio = *ov.replay_ratio;
  if (ov.output_dir) c.output_dir = *ov.output_dir;
  if (ov.diagnostics) c.diagnostics.enabled = *ov.diagnostics;
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file '" + path.string() + "' cannot be read");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str(), overrides);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_json(const RunConfig& c) {
  json stream = json::array();
  for (const auto& d : c.stream) stream.push_back(domain_json(d));
  json j = {{"method", to_string(c.method)},
            {"stream", stream},
            {"train_size", c.train_size},
            {"test_size", c.test_size},
            {"binarize", c.binarize == data::BinarizeMode::threshold ? "threshold" : "stochastic"},
            {"k_prime", c.k_prime},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"replay_ratio", c.replay_ratio},
            {"seed", c.seed},
            {"output_dir", c.output_dir.string()},
            {"eval_k_prime", c.eval_k_prime},
            {"eval_batch", c.eval_batch},
            {"latent_dim", c.latent_dim},
            {"encoder_hidden", c.encoder_hidden},
            {"decoder_hidden", c.decoder_hidden},
            {"likelihood", vae::to_string(c.observation.likelihood)},
            {"normalize", c.observation.normalize},
            {"pixel_scale", c.observation.pixel_scale},
            {"diagnostics",
             {{"enabled", c.diagnostics.enabled},
              {"snapshot_every", c.diagnostics.snapshot_every},
              {"pool_size", c.diagnostics.pool_size},
              {"eval_k_prime", c.diagnostics.eval_k_prime}}}};
  if (c.tau) j["tau"] = *c.tau;
  return j.dump(2);
}

data::TaskStream build_stream(const RunConfig& config) {
  return data::make_cross_domain_stream(config.stream, config.geometry(), config.seed);
}

}  // namespace degm::cli
