#include "rawnet/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <type_traits>

#include "rawnet/errors.hpp"

namespace rawnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown fields.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(label() + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  template <typename T>
  void get(const std::string& key, T& out) {
    used_.insert(key);
    if (!has(key)) return;
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) type_error(key, "a boolean");
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        type_error(key, "a non-negative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) type_error(key, "an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) type_error(key, "a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) type_error(key, "a string");
    }
    out = v.get<T>();
  }

  void get_path(const std::string& key, fs::path& out, const fs::path& base) {
    std::string s;
    get(key, s);
    if (has(key)) out = resolve(s, base);
  }

  void get_opt_path(const std::string& key, std::optional<fs::path>& out, const fs::path& base) {
    used_.insert(key);
    if (j_.contains(key) && j_.at(key).is_null()) {
      out.reset();
      return;
    }
    if (!has(key)) return;
    std::string s;
    get(key, s);
    out = resolve(s, base);
  }

  const json* sub(const std::string& key) {
    used_.insert(key);
    return has(key) ? &j_.at(key) : nullptr;
  }

  bool explicitly_null(const std::string& key) const { return j_.contains(key) && j_.at(key).is_null(); }

  std::string child(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError("unknown config field '" + child(k) + "'");
  }

  static fs::path resolve(const std::string& s, const fs::path& base) {
    fs::path p(s);
    return p.is_relative() ? (base / p).lexically_normal() : p;
  }

 private:
  [[noreturn]] void type_error(const std::string& key, const char* what) const {
    throw ConfigError("config field '" + child(key) + "' must be " + what);
  }
  std::string label() const { return where_.empty() ? "config" : "config field '" + where_ + "'"; }

  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

augment::Range read_range(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError("config field '" + where + "' must be a [low, high] pair");
  return {v[0].get<double>(), v[1].get<double>()};
}

RawNetLiteConfig read_model(const json& j) {
  Reader r(j, "model");
  RawNetLiteConfig m;
  r.get("channels", m.channels);
  r.get("kernel", m.kernel);
  r.get("n_res_blocks", m.n_res_blocks);
  r.get("pool_len", m.pool_len);
  r.get("gru_hidden", m.gru_hidden);
  r.get("fc_hidden", m.fc_hidden);
  r.get("input_len", m.input_len);
  r.finish();
  return m;
}

LossConfig read_loss(const json& j) {
  Reader r(j, "train.loss");
  LossConfig l;
  std::string kind = to_string(l.kind), mode = to_string(l.alpha_mode);
  r.get("kind", kind);
  r.get("gamma", l.gamma);
  r.get("alpha", l.alpha);
  r.get("alpha_mode", mode);
  r.finish();
  l.kind = loss_kind_from_string(kind);
  l.alpha_mode = alpha_mode_from_string(mode);
  return l;
}

augment::AugmentConfig read_augment(const json& j) {
  Reader r(j, "augment");
  augment::AugmentConfig a;
  r.get("p_apply", a.p_apply);
  if (const json* v = r.sub("pitch_semitones")) a.pitch_semitones = read_range(*v, "augment.pitch_semitones");
  if (const json* v = r.sub("stretch_rate")) a.stretch_rate = read_range(*v, "augment.stretch_rate");
  if (const json* v = r.sub("noise_amplitude")) a.noise_amplitude = read_range(*v, "augment.noise_amplitude");
  r.finish();
  a.validate();
  return a;
}

void read_train(const json& j, TrainConfig& t) {
  Reader r(j, "train");
  if (const json* v = r.sub("loss")) t.loss = read_loss(*v);
  r.get("lr", t.lr);
  r.get("batch_size", t.batch_size);
  r.get("max_epochs", t.max_epochs);
  r.get("patience", t.patience);
  r.get("max_steps", t.max_steps);
  r.get("track_train_accuracy", t.track_train_accuracy);
  r.get("strict", t.strict);
  if (const json* v = r.sub("seeds")) {
    Reader s(*v, "train.seeds");
    s.get("init", t.seeds.init);
    s.get("shuffle", t.seeds.shuffle);
    s.get("augment", t.seeds.augment);
    s.finish();
  }
  r.finish();
}

data::MixSpec read_mix(const json& j) {
  Reader r(j, "mix");
  data::MixSpec m;
  r.get("seed", m.seed);
  if (const json* caps = r.sub("caps")) {
    if (!caps->is_array()) throw ConfigError("config field 'mix.caps' must be an array");
    for (std::size_t i = 0; i < caps->size(); ++i) {
      Reader c((*caps)[i], "mix.caps[" + std::to_string(i) + "]");
      data::DomainCap cap;
      std::string role = "train";
      c.get("domain", cap.domain);
      c.get("n_real", cap.n_real);
      c.get("n_fake", cap.n_fake);
      c.get("role", role);
      c.finish();
      if (cap.domain.empty()) throw ConfigError("config field 'mix.caps[" + std::to_string(i) + "].domain' is required");
      try {
        cap.role = data::role_from_string(role);
      } catch (const ParseError& e) {
        throw ConfigError("mix.caps[" + std::to_string(i) + "].role: " + e.what());
      }
      m.caps.push_back(cap);
    }
  }
  r.finish();
  return m;
}

}  // namespace

RunConfig run_config_from_json(const json& doc, const fs::path& base_dir) {
  Reader r(doc, "");
  RunConfig cfg;
  if (!r.has("version")) throw ConfigError("config field 'version' is mandatory");
  r.get("version", cfg.version);
  if (cfg.version != kRunConfigVersion)
    throw ConfigError("unsupported config version " + std::to_string(cfg.version) + " (expected " +
                      std::to_string(kRunConfigVersion) + ")");
  std::string protocol = to_string(cfg.protocol);
  r.get("protocol", protocol);
  cfg.protocol = protocol_from_string(protocol);
  r.get("scale", cfg.scale);
  if (!(cfg.scale > 0.0)) throw ConfigError("config field 'scale' must be > 0");
  if (const json* m = r.sub("manifests")) {
    if (!m->is_array()) throw ConfigError("config field 'manifests' must be an array of paths");
    for (const auto& p : *m) {
      if (!p.is_string()) throw ConfigError("config field 'manifests' must be an array of paths");
      cfg.manifests.push_back(Reader::resolve(p.get<std::string>(), base_dir));
    }
  }
  r.get_path("output_dir", cfg.output_dir, base_dir);
  cfg.output_dir = Reader::resolve(cfg.output_dir.string(), base_dir);
  r.get_opt_path("cache_dir", cfg.cache_dir, base_dir);
  if (const json* v = r.sub("model")) cfg.train.model = read_model(*v);
  if (const json* v = r.sub("train")) read_train(*v, cfg.train);
  if (const json* v = r.sub("augment")) cfg.train.augment = read_augment(*v);
  if (const json* v = r.sub("mix")) cfg.mix = read_mix(*v);
  if (const json* v = r.sub("sanity")) {
    Reader s(*v, "sanity");
    s.get("n_per_class", cfg.sanity.n_per_class);
    s.get("seed", cfg.sanity.seed);
    s.get("permute_labels", cfg.sanity.permute_labels);
    s.get_opt_path("data_dir", cfg.sanity.data_dir, base_dir);
    s.finish();
  }
  r.finish();
  cfg.train.validate();
  if (cfg.protocol == Protocol::custom && cfg.mix.caps.empty())
    throw ConfigError("protocol 'custom' requires mix.caps");
  return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
  const auto& t = cfg.train;
  const auto& m = t.model;
  json caps = json::array();
  for (const auto& c : cfg.mix.caps)
    caps.push_back({{"domain", c.domain}, {"n_real", c.n_real}, {"n_fake", c.n_fake}, {"role", data::to_string(c.role)}});
  json manifests = json::array();
  for (const auto& p : cfg.manifests) manifests.push_back(p.string());
  json aug = nullptr;
  if (t.augment) {
    const auto& a = *t.augment;
    aug = {{"p_apply", a.p_apply},
           {"pitch_semitones", {a.pitch_semitones.lo, a.pitch_semitones.hi}},
           {"stretch_rate", {a.stretch_rate.lo, a.stretch_rate.hi}},
           {"noise_amplitude", {a.noise_amplitude.lo, a.noise_amplitude.hi}}};
  }
  return {
      {"version", cfg.version},
      {"protocol", to_string(cfg.protocol)},
      {"scale", cfg.scale},
      {"manifests", manifests},
      {"output_dir", cfg.output_dir.string()},
      {"cache_dir", cfg.cache_dir ? json(cfg.cache_dir->string()) : json(nullptr)},
      {"model",
       {{"channels", m.channels},
        {"kernel", m.kernel},
        {"n_res_blocks", m.n_res_blocks},
        {"pool_len", m.pool_len},
        {"gru_hidden", m.gru_hidden},
        {"fc_hidden", m.fc_hidden},
        {"input_len", m.input_len}}},
      {"train",
       {{"loss",
         {{"kind", to_string(t.loss.kind)},
          {"gamma", t.loss.gamma},
          {"alpha", t.loss.alpha},
          {"alpha_mode", to_string(t.loss.alpha_mode)}}},
        {"lr", t.lr},
        {"batch_size", t.batch_size},
        {"max_epochs", t.max_epochs},
        {"patience", t.patience},
        {"max_steps", t.max_steps},
        {"track_train_accuracy", t.track_train_accuracy},
        {"strict", t.strict},
        {"seeds", {{"init", t.seeds.init}, {"shuffle", t.seeds.shuffle}, {"augment", t.seeds.augment}}}}},
      {"augment", aug},
      {"mix", {{"seed", cfg.mix.seed}, {"caps", caps}}},
      {"sanity",
       {{"n_per_class", cfg.sanity.n_per_class},
        {"seed", cfg.sanity.seed},
        {"permute_labels", cfg.sanity.permute_labels},
        {"data_dir", cfg.sanity.data_dir ? json(cfg.sanity.data_dir->string()) : json(nullptr)}}},
  };
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  for (const auto& o : overrides) apply_override(doc, o);
  RunConfig cfg = run_config_from_json(doc, fs::absolute(path).parent_path());
  if (const char* env = std::getenv("RAWNET_CACHE_DIR"); env && *env) cfg.cache_dir = fs::absolute(env);
  return cfg;
}

}  // namespace rawnet
