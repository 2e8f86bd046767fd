// SPDX-License-Identifier: Apache-2.0

#include "bilcnet/model.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace bilcnet {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

// ---- config -------------------------------------------------------------------

void BiLCNetConfig::validate() const {
  bilstm.validate();
  conformer.validate();
  if (conformer.model_dim != 2 * bilstm.hidden_dim) {
    fail(ErrorCode::InvalidConfig, "conformer.model_dim must equal 2 * bilstm.hidden_dim");
  }
  if (num_classes != kNumClasses) fail(ErrorCode::InvalidConfig, "num_classes must be 4");
  if (classifier_hidden == 0) fail(ErrorCode::InvalidConfig, "classifier_hidden must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorCode::InvalidProbability, "classifier dropout");
}

BiLCNetConfig BiLCNetConfig::with_input_dim(std::size_t input_dim) {
  BiLCNetConfig c;
  c.bilstm.input_dim = input_dim;
  c.conformer.model_dim = 2 * c.bilstm.hidden_dim;
  return c;
}

json to_json(const BiLCNetConfig& c) {
  return json{
      {"bilstm",
       {{"input_dim", c.bilstm.input_dim},
        {"hidden_dim", c.bilstm.hidden_dim},
        {"num_layers", c.bilstm.num_layers},
        {"dropout", c.bilstm.dropout}}},
      {"conformer",
       {{"model_dim", c.conformer.model_dim},
        {"num_blocks", c.conformer.num_blocks},
        {"num_heads", c.conformer.num_heads},
        {"ffn_expansion", c.conformer.ffn_expansion},
        {"conv_kernel", c.conformer.conv_kernel},
        {"dropout", c.conformer.dropout},
        {"order", c.conformer.order == BlockOrder::ConvFirst ? "conv_first" : "attention_first"}}},
      {"classifier_hidden", c.classifier_hidden},
      {"num_classes", c.num_classes},
      {"dropout", c.dropout},
  };
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; })) {
      fail(ErrorCode::InvalidConfig, "unknown key " + where + "." + it.key());
    }
  }
}

template <typename V>
void read_if(const json& j, const char* key, V& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<V>();
    } catch (const json::exception& e) {
      fail(ErrorCode::InvalidConfig, std::string(key) + ": " + e.what());
    }
  }
}

}  // namespace

BiLCNetConfig config_from_json(const json& j) {
  BiLCNetConfig c;
  reject_unknown(j, {"bilstm", "conformer", "classifier_hidden", "num_classes", "dropout"}, "model");
  bool model_dim_given = false;
  if (auto it = j.find("bilstm"); it != j.end()) {
    reject_unknown(*it, {"input_dim", "hidden_dim", "num_layers", "dropout"}, "model.bilstm");
    read_if(*it, "input_dim", c.bilstm.input_dim);
    read_if(*it, "hidden_dim", c.bilstm.hidden_dim);
    read_if(*it, "num_layers", c.bilstm.num_layers);
    read_if(*it, "dropout", c.bilstm.dropout);
  }
  if (auto it = j.find("conformer"); it != j.end()) {
    reject_unknown(*it, {"model_dim", "num_blocks", "num_heads", "ffn_expansion", "conv_kernel",
                         "dropout", "order"},
                   "model.conformer");
    model_dim_given = it->contains("model_dim");
    read_if(*it, "model_dim", c.conformer.model_dim);
    read_if(*it, "num_blocks", c.conformer.num_blocks);
    read_if(*it, "num_heads", c.conformer.num_heads);
    read_if(*it, "ffn_expansion", c.conformer.ffn_expansion);
    read_if(*it, "conv_kernel", c.conformer.conv_kernel);
    read_if(*it, "dropout", c.conformer.dropout);
    std::string order = "conv_first";
    read_if(*it, "order", order);
    if (order == "conv_first") {
      c.conformer.order = BlockOrder::ConvFirst;
    } else if (order == "attention_first") {
      c.conformer.order = BlockOrder::AttentionFirst;
    } else {
      fail(ErrorCode::InvalidConfig, "conformer.order must be conv_first or attention_first");
    }
  }
  if (!model_dim_given) c.conformer.model_dim = 2 * c.bilstm.hidden_dim;
  read_if(j, "classifier_hidden", c.classifier_hidden);
  read_if(j, "num_classes", c.num_classes);
  read_if(j, "dropout", c.dropout);
  c.validate();
  return c;
}

// ---- attention pooling --------------------------------------------------------

template <typename T>
AttentionPool<T>::AttentionPool(const std::string& name, std::size_t dim) : score(name + ".score", dim, 1) {}

template <typename T>
void AttentionPool<T>::init(Rng& rng) {
  score.init(rng);
}

template <typename T>
Tensor<T> AttentionPool<T>::forward(const Tensor<T>& h, Cache* cache) const {
  if (h.rank() != 3 || h.dim(2) != score.in_features()) {
    fail(ErrorCode::ShapeMismatch, "attention pool input " + shape_string(h.shape()));
  }
  const std::size_t n = h.dim(0), steps = h.dim(1), d = h.dim(2);
  Tensor<T> logits = score.forward(h).reshaped({n, steps});
  Tensor<T> w = ops::softmax(logits, 1);
  Tensor<T> out({n, d});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t t = 0; t < steps; ++t) {
      const T wt = w.at(b, t);
      const T* row = h.data() + (b * steps + t) * d;
      T* o = out.data() + b * d;
      for (std::size_t j = 0; j < d; ++j) o[j] += wt * row[j];
    }
  if (cache) {
    cache->input = h;
    cache->weights = std::move(w);
  }
  return out;
}

template <typename T>
Tensor<T> AttentionPool<T>::backward(const Tensor<T>& gy, const Cache& cache) {
  const Tensor<T>& h = cache.input;
  const std::size_t n = h.dim(0), steps = h.dim(1), d = h.dim(2);
  require_shape(gy, {n, d}, "attention pool grad");
  Tensor<T> gh(h.shape());
  Tensor<T> gw({n, steps});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t t = 0; t < steps; ++t) {
      const T wt = cache.weights.at(b, t);
      const T* row = h.data() + (b * steps + t) * d;
      const T* g = gy.data() + b * d;
      T* out = gh.data() + (b * steps + t) * d;
      T dot = 0;
      for (std::size_t j = 0; j < d; ++j) {
        out[j] = wt * g[j];
        dot += row[j] * g[j];
      }
      gw.at(b, t) = dot;
    }
  Tensor<T> gscore = ops::softmax_backward(cache.weights, gw, 1).reshaped({n, steps, 1});
  ops::add_inplace(gh, score.backward(h, gscore));
  return gh;
}

template <typename T>
void AttentionPool<T>::collect(ParamList<T>& out) {
  score.collect(out);
}

// ---- classifier head ------------------------------------------------------------

template <typename T>
ClassifierHead<T>::ClassifierHead(const std::string& name, std::size_t in, std::size_t hidden,
                                  std::size_t classes, double dropout)
    : fc1(name + ".fc1", in, hidden),
      bn(name + ".bn", hidden),
      fc2(name + ".fc2", hidden, classes),
      dropout_(dropout) {}

template <typename T>
void ClassifierHead<T>::init(Rng& rng) {
  fc1.init(rng);
  fc2.init(rng);
}

template <typename T>
Tensor<T> ClassifierHead<T>::forward(const Tensor<T>& x, Mode mode, Rng& rng, Cache* cache) {
  Tensor<T> hidden = fc1.forward(x);
  Tensor<T> bn_out = bn.forward(hidden, mode, cache ? &cache->bn : nullptr);
  Tensor<T> activated = ops::gelu(bn_out);
  Tensor<T> dropped = ops::dropout(activated, dropout_, mode, rng, cache ? &cache->drop : nullptr);
  Tensor<T> logits = fc2.forward(dropped);
  if (cache) {
    cache->input = x;
    cache->hidden = std::move(hidden);
    cache->bn_out = std::move(bn_out);
    cache->activated = std::move(activated);
    cache->dropped = std::move(dropped);
  }
  return logits;
}

template <typename T>
Tensor<T> ClassifierHead<T>::backward(const Tensor<T>& gy, const Cache& cache) {
  Tensor<T> g = fc2.backward(cache.dropped, gy);
  g = ops::dropout_backward(g, cache.drop);
  g = ops::gelu_backward(cache.bn_out, g);
  g = bn.backward(g, cache.bn);
  return fc1.backward(cache.input, g);
}

template <typename T>
void ClassifierHead<T>::collect(ParamList<T>& out) {
  fc1.collect(out);
  bn.collect(out);
  fc2.collect(out);
}

template <typename T>
void ClassifierHead<T>::collect_buffers(BufferList<T>& out) {
  bn.collect_buffers(out);
}

// ---- BiLCNet ----------------------------------------------------------------------

template <typename T>
BiLCNet<T>::BiLCNet(const BiLCNetConfig& config)
    : bilstm("bilstm", config.bilstm),
      projection("bilstm.proj", 2 * config.bilstm.hidden_dim, 2 * config.bilstm.hidden_dim),
      conformer("conformer", config.conformer),
      pool("pool", 2 * config.bilstm.hidden_dim),
      head("head", 2 * config.bilstm.hidden_dim, config.classifier_hidden, config.num_classes,
           config.dropout),
      config_(config) {
  config_.validate();
  std::set<std::string> names;
  for (auto* p : parameters()) {
    if (!names.insert(p->name).second) fail(ErrorCode::InvalidConfig, "duplicate parameter " + p->name);
  }
  for (auto* b : buffers()) {
    if (!names.insert(b->name).second) fail(ErrorCode::InvalidConfig, "duplicate buffer " + b->name);
  }
}

template <typename T>
void BiLCNet<T>::init(Rng& rng) {
  bilstm.init(rng);
  projection.init(rng);
  conformer.init(rng);
  pool.init(rng);
  head.init(rng);
}

template <typename T>
Tensor<T> BiLCNet<T>::forward(const Tensor<T>& x, Mode mode, Rng& rng, Cache* cache) {
  Tensor<T> r = bilstm.forward(x, mode, rng, cache ? &cache->bilstm : nullptr);
  Tensor<T> p = projection.forward(r);
  Tensor<T> c = conformer.forward(p, mode, rng, cache ? &cache->conformer : nullptr);
  Tensor<T> pooled = pool.forward(c, cache ? &cache->pool : nullptr);
  Tensor<T> logits = head.forward(pooled, mode, rng, cache ? &cache->head : nullptr);
  if (cache) {
    cache->recurrent = std::move(r);
    cache->projected = std::move(p);
  }
  return logits;
}

template <typename T>
Tensor<T> BiLCNet<T>::infer(const Tensor<T>& x) {
  Rng unused(0);
  return forward(x, Mode::Eval, unused, nullptr);
}

template <typename T>
Tensor<T> BiLCNet<T>::backward(const Tensor<T>& glogits, const Cache& cache) {
  Tensor<T> g = head.backward(glogits, cache.head);
  g = pool.backward(g, cache.pool);
  g = conformer.backward(g, cache.conformer);
  g = projection.backward(cache.recurrent, g);
  return bilstm.backward(g, cache.bilstm);
}

template <typename T>
ParamList<T> BiLCNet<T>::parameters() {
  ParamList<T> out;
  bilstm.collect(out);
  projection.collect(out);
  conformer.collect(out);
  pool.collect(out);
  head.collect(out);
  return out;
}

template <typename T>
BufferList<T> BiLCNet<T>::buffers() {
  BufferList<T> out;
  conformer.collect_buffers(out);
  head.collect_buffers(out);
  return out;
}

template <typename T>
std::size_t BiLCNet<T>::parameter_count() {
  std::size_t total = 0;
  for (auto* p : parameters()) total += p->value.size();
  return total;
}

template <typename T>
void BiLCNet<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template class AttentionPool<float>;
template class AttentionPool<double>;
template class ClassifierHead<float>;
template class ClassifierHead<double>;
template class BiLCNet<float>;
template class BiLCNet<double>;

// ---- prediction -------------------------------------------------------------------

Prediction prediction_from_logits(std::span<const float> logits) {
  if (logits.size() != kNumClasses) fail(ErrorCode::ShapeMismatch, "prediction needs 4 logits");
  Prediction p{};
  double mx = logits[0];
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumClasses; ++c) {
    if (logits[c] > logits[best]) best = c;
    mx = std::max(mx, static_cast<double>(logits[c]));
  }
  double sum = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    p.probs[c] = std::exp(static_cast<double>(logits[c]) - mx);
    sum += p.probs[c];
  }
  for (auto& v : p.probs) v /= sum;
  p.label = static_cast<TrafficLabel>(best);
  return p;
}

std::vector<Prediction> predict(BiLCNet<float>& net, const Tensor<float>& x) {
  const Tensor<float> logits = net.infer(x);
  std::vector<Prediction> out;
  out.reserve(logits.dim(0));
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    out.push_back(prediction_from_logits(logits.span().subspan(i * kNumClasses, kNumClasses)));
  }
  return out;
}

// ---- model file -----------------------------------------------------------------

namespace {

constexpr char kModelMagic[4] = {'B', 'L', 'C', 'M'};
constexpr std::uint8_t kDtypeF32 = 0;

template <typename V>
void put(std::string& out, V v) {
  char buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  out.append(buf, sizeof(V));
}

class Reader {
 public:
  Reader(const std::string& data, std::size_t pos, std::size_t end) : data_(data), pos_(pos), end_(end) {}

  template <typename V>
  V get() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, data_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) fail(ErrorCode::ChecksumMismatch, "model file truncated");
  }
  const std::string& data_;
  std::size_t pos_;
  std::size_t end_;
};

std::uint32_t crc(const char* data, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(crc32(c, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

}  // namespace

void save_model(const std::string& path, BiLCNet<float>& net, const std::vector<Buffer<float>>& extras,
                const json& meta) {
  std::map<std::string, const Tensor<float>*> records;
  auto add = [&](const std::string& name, const Tensor<float>& t) {
    if (!records.emplace(name, &t).second) fail(ErrorCode::InvalidConfig, "duplicate record " + name);
  };
  for (auto* p : net.parameters()) add(p->name, p->value);
  for (auto* b : net.buffers()) add(b->name, b->value);
  for (const auto& e : extras) add(e.name, e.value);

  std::string body;
  put<std::uint32_t>(body, kModelFormatVersion);
  const std::string config = json{{"model", to_json(net.config())}, {"meta", meta}}.dump();
  put<std::uint32_t>(body, static_cast<std::uint32_t>(config.size()));
  body += config;
  for (const auto& [name, t] : records) {
    put<std::uint16_t>(body, static_cast<std::uint16_t>(name.size()));
    body += name;
    put<std::uint8_t>(body, kDtypeF32);
    put<std::uint8_t>(body, static_cast<std::uint8_t>(t->rank()));
    for (auto d : t->shape()) put<std::uint32_t>(body, static_cast<std::uint32_t>(d));
    body.append(reinterpret_cast<const char*>(t->data()), t->size() * sizeof(float));
  }
  const std::uint32_t sum = crc(body.data(), body.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot write " + path);
  out.write(kModelMagic, 4);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  out.write(reinterpret_cast<const char*>(&sum), sizeof sum);
  if (!out) fail(ErrorCode::IoFailure, "write failed for " + path);
}

LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoFailure, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string data = buf.str();
  if (data.size() < 4 || std::memcmp(data.data(), kModelMagic, 4) != 0) {
    fail(ErrorCode::BadMagic, path + " is not a BLCM model file");
  }
  if (data.size() < 4 + 4 + 4 + 4) fail(ErrorCode::ChecksumMismatch, path + " truncated");
  std::uint32_t stored;
  std::memcpy(&stored, data.data() + data.size() - 4, 4);
  if (crc(data.data() + 4, data.size() - 8) != stored) {
    fail(ErrorCode::ChecksumMismatch, path + " failed CRC32 check");
  }
  Reader r(data, 4, data.size() - 4);
  const auto version = r.get<std::uint32_t>();
  if (version != kModelFormatVersion) {
    fail(ErrorCode::VersionMismatch, "model format version " + std::to_string(version));
  }
  const auto config_len = r.get<std::uint32_t>();
  json blob;
  try {
    blob = json::parse(r.bytes(config_len));
  } catch (const json::exception& e) {
    fail(ErrorCode::VersionMismatch, std::string("unreadable model config: ") + e.what());
  }
  LoadedModel m{BiLCNet<float>(config_from_json(blob.at("model"))), {}, blob.value("meta", json::object())};

  std::map<std::string, Tensor<float>*> targets;
  for (auto* p : m.net.parameters()) targets[p->name] = &p->value;
  for (auto* b : m.net.buffers()) targets[b->name] = &b->value;
  std::set<std::string> seen;
  while (!r.done()) {
    const auto name_len = r.get<std::uint16_t>();
    std::string name = r.bytes(name_len);
    if (r.get<std::uint8_t>() != kDtypeF32) fail(ErrorCode::VersionMismatch, "unsupported dtype for " + name);
    const auto rank = r.get<std::uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>();
    const std::size_t count = shape_size(shape);
    std::vector<float> values(count);
    const std::string raw = r.bytes(count * sizeof(float));
    std::memcpy(values.data(), raw.data(), raw.size());
    Tensor<float> t(shape, std::move(values));
    if (auto it = targets.find(name); it != targets.end()) {
      require_shape(t, it->second->shape(), name.c_str());
      *it->second = std::move(t);
      seen.insert(name);
    } else {
      m.extras.push_back({name, std::move(t)});
    }
  }
  for (const auto& [name, _] : targets) {
    if (!seen.count(name)) fail(ErrorCode::VersionMismatch, "model file lacks " + name);
  }
  return m;
}

}  // namespace bilcnet
