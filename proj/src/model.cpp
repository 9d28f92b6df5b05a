#include "rawnet/model.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rawnet/errors.hpp"
#include "rawnet/nn/fault.hpp"

namespace rawnet {

using nlohmann::json;
using nn::Mode;
using nn::Tensor;

void RawNetLiteConfig::validate() const {
  if (channels == 0) throw ConfigError("model.channels must be > 0");
  if (kernel != 3) throw ConfigError("model.kernel: only kernel size 3 is supported");
  if (pool_len == 0) throw ConfigError("model.pool_len must be > 0");
  if (gru_hidden == 0) throw ConfigError("model.gru_hidden must be > 0");
  if (fc_hidden == 0) throw ConfigError("model.fc_hidden must be > 0");
  if (input_len == 0) throw ConfigError("model.input_len must be > 0");
  if (pool_len > input_len) throw ConfigError("model.pool_len must not exceed input_len");
}

template <typename T>
RawNetLite<T>::RawNetLite(const RawNetLiteConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      stem_conv_("stem.conv", 1, cfg.channels),
      stem_bn_("stem.bn", cfg.channels),
      gru_("gru", cfg.channels, cfg.gru_hidden),
      fc1_("fc1", 2 * cfg.gru_hidden, cfg.fc_hidden),
      fc2_("fc2", cfg.fc_hidden, 1) {
  for (std::size_t k = 0; k < cfg.n_res_blocks; ++k)
    blocks_.emplace_back("blocks." + std::to_string(k), cfg.channels);
  stem_conv_.init(cfg.seed);
  for (auto& b : blocks_) b.init(cfg.seed);
  gru_.init(cfg.seed);
  fc1_.init(cfg.seed);
  fc2_.init(cfg.seed);
}

namespace {

template <typename T>
void to_sequence(const Tensor<T>& x, Tensor<T>& seq) {
  // [B, C, P] -> [B, P, C]
  const std::size_t B = x.dim(0), C = x.dim(1), P = x.dim(2);
  seq = Tensor<T>({B, P, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) seq[(b * P + p) * C + c] = x[(b * C + c) * P + p];
}

template <typename T>
void from_sequence(const Tensor<T>& seq, Tensor<T>& x) {
  const std::size_t B = seq.dim(0), P = seq.dim(1), C = seq.dim(2);
  x = Tensor<T>({B, C, P});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) x[(b * C + c) * P + p] = seq[(b * P + p) * C + c];
}

}  // namespace

template <typename T>
std::vector<T> RawNetLite<T>::forward(const Tensor<T>& batch, Mode mode) {
  if (batch.shape.size() != 3 || batch.dim(1) != 1 || batch.dim(2) != cfg_.input_len) {
    throw ShapeError("model input: expected [batch, 1, " + std::to_string(cfg_.input_len) + "], got " +
                     nn::shape_string(batch.shape));
  }
  const bool train = mode == Mode::train;
  const std::size_t B = batch.dim(0);
  Cache local;
  Cache& c = train ? cache_ : local;
  c.valid = false;
  if (train) c.input = batch;

  // eval mode only needs two activation buffers
  const std::size_t n_acts = train ? blocks_.size() + 1 : std::min<std::size_t>(2, blocks_.size() + 1);
  c.acts.resize(n_acts);
  c.blocks.resize(train ? blocks_.size() : 0);

  stem_conv_.forward(batch, c.acts[0]);
  stem_bn_.forward(c.acts[0], c.acts[0], mode, train ? &c.stem_bn : nullptr);
  nn::relu_inplace(c.acts[0]);
  std::size_t cur = 0;
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const std::size_t next = train ? k + 1 : 1 - cur;
    blocks_[k].forward(c.acts[cur], c.acts[next], mode, train ? &c.blocks[k] : nullptr);
    cur = next;
  }

  Tensor<T> pooled, seq;
  nn::adaptive_avg_pool(c.acts[cur], cfg_.pool_len, pooled);
  to_sequence(pooled, seq);
  gru_.forward(seq, c.gru_out, c.gru);
  fc1_.forward(c.gru_out, c.hidden);
  nn::relu_inplace(c.hidden);
  Tensor<T> logits;
  fc2_.forward(c.hidden, logits);
  c.prob.resize(B);
  for (std::size_t b = 0; b < B; ++b) c.prob[b] = nn::sigmoid(logits[b]);
  c.valid = train;
  return c.prob;
}

template <typename T>
void RawNetLite<T>::backward(std::span<const T> dloss_dprob) {
  Cache& c = cache_;
  if (!c.valid) throw ArgumentError("backward called without a preceding train-mode forward");
  const std::size_t B = c.prob.size();
  if (dloss_dprob.size() != B) throw ShapeError("backward: gradient length does not match the batch");

  const bool bad_slope = nn::fault_is(nn::BackwardFault::sigmoid_slope);
  Tensor<T> dlogit({B, 1});
  for (std::size_t b = 0; b < B; ++b) {
    const T p = c.prob[b];
    dlogit[b] = dloss_dprob[b] * (bad_slope ? p : p * (T{1} - p));
  }
  Tensor<T> dhidden, dgru, dseq, dpooled, dact, dprev;
  fc2_.backward(c.hidden, dlogit, &dhidden);
  nn::relu_grad_inplace(c.hidden, dhidden);
  fc1_.backward(c.gru_out, dhidden, &dgru);
  gru_.backward(c.gru, dgru, &dseq);
  from_sequence(dseq, dpooled);
  nn::adaptive_avg_pool_grad(dpooled, cfg_.input_len, dact);
  for (std::size_t k = blocks_.size(); k-- > 0;) {
    blocks_[k].backward(c.acts[k], c.acts[k + 1], c.blocks[k], dact, dprev);
    std::swap(dact, dprev);
  }
  nn::relu_grad_inplace(c.acts[0], dact);
  stem_bn_.backward(dact, c.stem_bn, &dact);
  stem_conv_.backward(c.input, dact, nullptr);
}

template <typename T>
std::vector<nn::ParamTensor<T>*> RawNetLite<T>::parameters() {
  std::vector<nn::ParamTensor<T>*> out{&stem_conv_.weight, &stem_conv_.bias, &stem_bn_.gamma, &stem_bn_.beta};
  for (auto& b : blocks_) {
    for (auto* p : {&b.conv1.weight, &b.conv1.bias, &b.bn1.gamma, &b.bn1.beta, &b.conv2.weight,
                    &b.conv2.bias, &b.bn2.gamma, &b.bn2.beta})
      out.push_back(p);
  }
  for (auto* dir : {&gru_.fwd, &gru_.bwd})
    for (auto* p : {&dir->w_ih, &dir->w_hh, &dir->b_ih, &dir->b_hh}) out.push_back(p);
  for (auto* p : {&fc1_.weight, &fc1_.bias, &fc2_.weight, &fc2_.bias}) out.push_back(p);
  return out;
}

template <typename T>
std::vector<const nn::ParamTensor<T>*> RawNetLite<T>::parameters() const {
  auto mut = const_cast<RawNetLite<T>*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename T>
std::vector<nn::BatchNorm1d<T>*> RawNetLite<T>::batchnorms() {
  std::vector<nn::BatchNorm1d<T>*> out{&stem_bn_};
  for (auto& b : blocks_) {
    out.push_back(&b.bn1);
    out.push_back(&b.bn2);
  }
  return out;
}

template <typename T>
std::vector<const nn::BatchNorm1d<T>*> RawNetLite<T>::batchnorms() const {
  auto mut = const_cast<RawNetLite<T>*>(this)->batchnorms();
  return {mut.begin(), mut.end()};
}

template <typename T>
std::size_t RawNetLite<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

template <typename T>
void RawNetLite<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template class RawNetLite<float>;
template class RawNetLite<double>;

template <typename To, typename From>
void copy_weights(const RawNetLite<From>& src, RawNetLite<To>& dst) {
  if (!(src.config() == dst.config())) throw ArgumentError("copy_weights: configs differ");
  auto sp = src.parameters();
  auto dp = dst.parameters();
  for (std::size_t k = 0; k < sp.size(); ++k)
    std::transform(sp[k]->values.begin(), sp[k]->values.end(), dp[k]->values.begin(),
                   [](From v) { return static_cast<To>(v); });
  auto sb = src.batchnorms();
  auto db = dst.batchnorms();
  for (std::size_t k = 0; k < sb.size(); ++k) db[k]->state = sb[k]->state;
}

template void copy_weights<double, float>(const RawNetLite<float>&, RawNetLite<double>&);
template void copy_weights<float, double>(const RawNetLite<double>&, RawNetLite<float>&);
template void copy_weights<float, float>(const RawNetLite<float>&, RawNetLite<float>&);

// ---- checkpoint -----------------------------------------------------------

namespace {

constexpr const char* kMagic = "RAWNETLITE-CHECKPOINT";
constexpr int kVersion = 1;

std::uint64_t fnv1a64(const std::uint8_t* p, std::size_t n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) h = (h ^ p[i]) * 1099511628211ULL;
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

json config_to_json(const RawNetLiteConfig& c) {
  return json{{"channels", c.channels},     {"kernel", c.kernel},       {"n_res_blocks", c.n_res_blocks},
              {"pool_len", c.pool_len},     {"gru_hidden", c.gru_hidden}, {"fc_hidden", c.fc_hidden},
              {"input_len", c.input_len},   {"seed", c.seed}};
}

RawNetLiteConfig config_from_json(const json& j) {
  static const std::set<std::string> fields{"channels", "kernel",    "n_res_blocks", "pool_len",
                                            "gru_hidden", "fc_hidden", "input_len",    "seed"};
  if (!j.is_object()) throw CheckpointFormatError("checkpoint config is not an object");
  for (const auto& [k, v] : j.items())
    if (!fields.count(k)) throw CheckpointFormatError("checkpoint config has unknown field '" + k + "'");
  for (const auto& f : fields)
    if (!j.contains(f)) throw CheckpointFormatError("checkpoint config is missing field '" + f + "'");
  RawNetLiteConfig c;
  c.channels = j.at("channels").get<std::size_t>();
  c.kernel = j.at("kernel").get<std::size_t>();
  c.n_res_blocks = j.at("n_res_blocks").get<std::size_t>();
  c.pool_len = j.at("pool_len").get<std::size_t>();
  c.gru_hidden = j.at("gru_hidden").get<std::size_t>();
  c.fc_hidden = j.at("fc_hidden").get<std::size_t>();
  c.input_len = j.at("input_len").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const CheckpointMeta& meta) {
  json tensors = json::array();
  std::vector<std::uint8_t> payload;
  for (const auto* p : model.parameters()) {
    tensors.push_back({{"name", p->name}, {"shape", p->shape}, {"dtype", "f32"}, {"offset", payload.size()}});
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(p->values.data());
    payload.insert(payload.end(), bytes, bytes + p->size() * sizeof(float));
  }
  json bn = json::object();
  for (const auto* layer : model.batchnorms()) {
    bn[layer->name] = {{"running_mean", layer->state.running_mean},
                       {"running_var", layer->state.running_var},
                       {"momentum", layer->state.momentum},
                       {"eps", layer->state.eps},
                       {"initialized", layer->state.initialized}};
  }
  json header{{"config", config_to_json(model.config())},
              {"tensors", tensors},
              {"batchnorm", bn},
              {"training", {{"epoch", meta.epoch}, {"best_val_f1", meta.best_val_f1}}},
              {"payload_bytes", payload.size()},
              {"checksum", "fnv1a64:" + hex64(fnv1a64(payload.data(), payload.size()))}};
  const std::string body = header.dump(1);
  std::ostringstream head;
  head << kMagic << "\nversion: " << kVersion << "\nheader_bytes: " << body.size() << "\n" << body << "\n";
  const std::string h = head.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Model deserialize_checkpoint(std::span<const std::uint8_t> bytes, CheckpointMeta* meta) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const auto* begin = bytes.data() + pos;
    const auto* end = bytes.data() + bytes.size();
    const auto* nl = std::find(begin, end, static_cast<std::uint8_t>('\n'));
    if (nl == end) throw CheckpointFormatError("checkpoint header truncated");
    std::string line(begin, nl);
    pos += line.size() + 1;
    return line;
  };
  if (next_line() != kMagic) throw CheckpointFormatError("not a RawNetLite checkpoint (bad magic)");
  const std::string version = next_line();
  if (version != "version: " + std::to_string(kVersion))
    throw CheckpointFormatError("unsupported checkpoint version line '" + version + "'");
  const std::string hb = next_line();
  const std::string prefix = "header_bytes: ";
  if (hb.rfind(prefix, 0) != 0) throw CheckpointFormatError("missing header_bytes line");
  std::size_t header_len = 0;
  try {
    header_len = std::stoull(hb.substr(prefix.size()));
  } catch (const std::exception&) {
    throw CheckpointFormatError("bad header_bytes value");
  }
  if (pos + header_len + 1 > bytes.size()) throw CheckpointFormatError("checkpoint header truncated");
  json header;
  try {
    header = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                         bytes.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
  } catch (const json::exception& e) {
    throw CheckpointFormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  pos += header_len;
  if (bytes[pos] != '\n') throw CheckpointFormatError("checkpoint header length mismatch");
  ++pos;
  const std::span<const std::uint8_t> payload = bytes.subspan(pos);

  for (const char* key : {"config", "tensors", "batchnorm", "training", "payload_bytes", "checksum"})
    if (!header.contains(key)) throw CheckpointFormatError(std::string("checkpoint header is missing '") + key + "'");

  try {
    const std::size_t declared = header.at("payload_bytes").get<std::size_t>();
    if (payload.size() < declared)
      throw IntegrityError("checkpoint payload truncated: " + std::to_string(payload.size()) + " of " +
                           std::to_string(declared) + " bytes present");
    if (payload.size() > declared) throw IntegrityError("checkpoint payload has trailing bytes");
    const std::string sum = "fnv1a64:" + hex64(fnv1a64(payload.data(), payload.size()));
    if (sum != header.at("checksum").get<std::string>())
      throw IntegrityError("checkpoint payload checksum mismatch (" + sum + " vs " +
                           header.at("checksum").get<std::string>() + ")");

    Model model(config_from_json(header.at("config")));

    std::map<std::string, const json*> table;
    for (const auto& t : header.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      if (!table.emplace(name, &t).second) throw CheckpointFormatError("tensor '" + name + "' listed twice");
    }
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (auto* p : model.parameters()) {
      auto it = table.find(p->name);
      if (it == table.end()) throw CheckpointFormatError("tensor '" + p->name + "' missing from checkpoint");
      const json& t = *it->second;
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      if (shape != p->shape)
        throw CheckpointFormatError("tensor '" + p->name + "' has shape " + nn::shape_string(shape) +
                                    ", model expects " + nn::shape_string(p->shape));
      if (t.at("dtype").get<std::string>() != "f32")
        throw CheckpointFormatError("tensor '" + p->name + "' has unsupported dtype");
      const std::size_t off = t.at("offset").get<std::size_t>();
      const std::size_t len = p->size() * sizeof(float);
      if (off + len > payload.size())
        throw CheckpointFormatError("tensor '" + p->name + "' extends past the payload");
      std::memcpy(p->values.data(), payload.data() + off, len);
      spans.emplace_back(off, len);
      table.erase(it);
    }
    if (!table.empty()) throw CheckpointFormatError("unexpected tensor '" + table.begin()->first + "' in checkpoint");
    std::sort(spans.begin(), spans.end());
    std::size_t expect = 0;
    for (const auto& [off, len] : spans) {
      if (off != expect) throw CheckpointFormatError("tensor offsets overlap or leave gaps");
      expect = off + len;
    }
    if (expect != payload.size()) throw CheckpointFormatError("payload size differs from the tensor directory");

    const json& bn = header.at("batchnorm");
    for (auto* layer : model.batchnorms()) {
      if (!bn.contains(layer->name))
        throw CheckpointFormatError("batch-norm statistics for '" + layer->name + "' missing");
      const json& s = bn.at(layer->name);
      auto mean = s.at("running_mean").get<std::vector<double>>();
      auto var = s.at("running_var").get<std::vector<double>>();
      if (mean.size() != layer->gamma.size() || var.size() != layer->gamma.size())
        throw CheckpointFormatError("batch-norm statistics for '" + layer->name + "' have the wrong length");
      layer->state.running_mean = std::move(mean);
      layer->state.running_var = std::move(var);
      layer->state.momentum = s.at("momentum").get<double>();
      layer->state.eps = s.at("eps").get<double>();
      layer->state.initialized = s.at("initialized").get<bool>();
    }
    if (meta) {
      meta->epoch = header.at("training").at("epoch").get<std::int64_t>();
      meta->best_val_f1 = header.at("training").at("best_val_f1").get<double>();
    }
    return model;
  } catch (const json::exception& e) {
    throw CheckpointFormatError(std::string("malformed checkpoint header: ") + e.what());
  }
}

void save_checkpoint(const Model& model, const CheckpointMeta& meta, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(model, meta);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Model load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointFormatError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
  return deserialize_checkpoint(bytes, meta);
}

}  // namespace rawnet
