#include "crossvae/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace crossvae {

namespace {

constexpr char kMagic[8] = {'C', 'V', 'A', 'E', 'C', 'K', 'P', 'T'};
constexpr const char* kOptimizerPrefix = "rmsprop/";

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, const Tensor<float>& t) {
    str(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (Index d : t.shape) u32(static_cast<std::uint32_t>(d));
    for (Index i = 0; i < t.size(); ++i) f32(t[i]);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) {
      throw CheckpointError(std::string("corrupt checkpoint: truncated while reading ") + what,
                            pos_);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::pair<std::string, Tensor<float>> tensor() {
    const std::size_t start = pos_;
    std::string name = str("tensor name");
    const std::uint32_t rank = u32("tensor rank");
    if (rank > 8) throw CheckpointError("corrupt checkpoint: implausible tensor rank", start);
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(u32("tensor shape"));
    const Index n = shape_size(shape);
    need(static_cast<std::size_t>(n) * 4, "tensor values");
    Tensor<float> t(shape);
    for (Index i = 0; i < n; ++i) t[i] = f32("tensor values");
    return {std::move(name), std::move(t)};
  }
  void skip(std::size_t n) { pos_ += n; }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

nlohmann::json model_json(const ModelConfig& m) {
  return {{"latent_dim", m.latent_dim},
          {"seq_len", m.seq_len},
          {"seq_encoder", to_string(m.seq_encoder)},
          {"image_size", m.image_size},
          {"image_channels", m.image_channels},
          {"image_hidden", m.image_hidden},
          {"seq_channels", m.seq_channels},
          {"seq_kernel", m.seq_kernel},
          {"seq_hidden", m.seq_hidden},
          {"lstm_hidden", m.lstm_hidden},
          {"output_clip", m.output_clip},
          {"image_unpool", to_string(m.image_unpool)}};
}

ModelConfig model_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.latent_dim = j.at("latent_dim").get<int>();
  m.seq_len = j.at("seq_len").get<int>();
  m.seq_encoder = parse_seq_encoder(j.at("seq_encoder").get<std::string>());
  m.image_size = j.at("image_size").get<int>();
  m.image_channels = j.at("image_channels").get<std::vector<int>>();
  m.image_hidden = j.at("image_hidden").get<int>();
  m.seq_channels = j.at("seq_channels").get<std::vector<int>>();
  m.seq_kernel = j.at("seq_kernel").get<int>();
  m.seq_hidden = j.at("seq_hidden").get<int>();
  m.lstm_hidden = j.at("lstm_hidden").get<int>();
  m.output_clip = j.at("output_clip").get<double>();
  m.image_unpool = parse_image_unpool(j.at("image_unpool").get<std::string>());
  m.validate();
  return m;
}

nlohmann::json train_json(const TrainConfig& t) {
  const auto& w = t.weights;
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"seed", t.seed},
          {"weights",
           {{"alpha", w.alpha},
            {"beta", w.beta},
            {"gamma_tt", w.gamma_tt},
            {"gamma_bb", w.gamma_bb},
            {"gamma_tb", w.gamma_tb},
            {"gamma_bt", w.gamma_bt},
            {"delta", w.delta}}},
          {"rmsprop",
           {{"learning_rate", t.rmsprop.learning_rate},
            {"rho", t.rmsprop.rho},
            {"epsilon", t.rmsprop.epsilon}}}};
}

TrainConfig train_from_json(const nlohmann::json& j) {
  TrainConfig t;
  t.epochs = j.at("epochs").get<int>();
  t.batch_size = j.at("batch_size").get<int>();
  t.seed = j.at("seed").get<std::uint64_t>();
  const auto& w = j.at("weights");
  t.weights = {w.at("alpha").get<double>(),    w.at("beta").get<double>(),
               w.at("gamma_tt").get<double>(), w.at("gamma_bb").get<double>(),
               w.at("gamma_tb").get<double>(), w.at("gamma_bt").get<double>(),
               w.at("delta").get<double>()};
  const auto& r = j.at("rmsprop");
  t.rmsprop = {r.at("learning_rate").get<double>(), r.at("rho").get<double>(),
               r.at("epsilon").get<double>()};
  return t;
}

}  // namespace

std::string model_config_json(const ModelConfig& cfg) { return model_json(cfg).dump(); }

ModelConfig model_config_from_json(const std::string& json) {
  return model_from_json(nlohmann::json::parse(json));
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  if (c.optimizer.accumulators.size() != c.params.size()) {
    throw std::invalid_argument("checkpoint: optimizer state does not mirror parameters");
  }
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(Checkpoint::kVersion);
  const nlohmann::json meta = {{"format", "crossvae-checkpoint"},
                               {"model", model_json(c.model)},
                               {"train", train_json(c.train)},
                               {"epoch", c.epoch}};
  w.str(meta.dump());
  w.u32(static_cast<std::uint32_t>(2 * c.params.size()));
  for (const auto& e : c.params) w.tensor(e.name, e.value);
  for (std::size_t s = 0; s < c.params.size(); ++s) {
    w.tensor(kOptimizerPrefix + c.optimizer.names[s], c.optimizer.accumulators[s]);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.need(sizeof kMagic, "magic");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)", 0);
  }
  r.skip(sizeof kMagic);
  const std::size_t version_at = r.pos();
  const std::uint32_t version = r.u32("version");
  if (version != Checkpoint::kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                              " (expected " + std::to_string(Checkpoint::kVersion) + ")",
                          version_at);
  }
  const std::size_t meta_at = r.pos();
  const std::string meta_text = r.str("metadata");

  Checkpoint c;
  try {
    const auto meta = nlohmann::json::parse(meta_text);
    c.model = model_from_json(meta.at("model"));
    c.train = train_from_json(meta.at("train"));
    c.epoch = meta.at("epoch").get<int>();
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint metadata: ") + e.what(), meta_at);
  }

  const std::size_t count_at = r.pos();
  const std::uint32_t count = r.u32("tensor count");
  if (count % 2 != 0) throw CheckpointError("corrupt checkpoint: odd tensor count", count_at);
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  for (std::uint32_t i = 0; i < count; ++i) tensors.push_back(r.tensor());
  if (!r.done()) throw CheckpointError("corrupt checkpoint: trailing bytes", r.pos());

  const std::size_t n = count / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = c.params.add(tensors[i].first, tensors[i].second.shape);
    c.params.entry(s).value = std::move(tensors[i].second);
  }
  c.optimizer.config = c.train.rmsprop;
  for (std::size_t i = n; i < count; ++i) {
    auto& [name, t] = tensors[i];
    if (!name.starts_with(kOptimizerPrefix)) {
      throw CheckpointError("corrupt checkpoint: expected optimizer tensor, got '" + name + "'",
                            count_at);
    }
    c.optimizer.names.push_back(name.substr(std::strlen(kOptimizerPrefix)));
    c.optimizer.accumulators.push_back(std::move(t));
  }

  // The stored parameters must be exactly what this model config registers.
  const auto expected = CrossVae<float>(c.model).make_params();
  if (expected.size() != c.params.size()) {
    throw CheckpointError("checkpoint parameters do not match model config", count_at);
  }
  for (std::size_t s = 0; s < n; ++s) {
    const auto& e = expected.entry(s);
    const auto& g = c.params.entry(s);
    if (e.name != g.name || e.value.shape != g.value.shape || c.optimizer.names[s] != g.name ||
        c.optimizer.accumulators[s].shape != g.value.shape) {
      throw CheckpointError("checkpoint tensor '" + g.name + "' does not match model config",
                            count_at);
    }
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace crossvae
