#include "rdb/checkpoint.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstring>
#include <fstream>

#include "rdb/config_json.hpp"
#include "rdb/error.hpp"

namespace rdb {

using nlohmann::json;

// --- Config JSON -----------------------------------------------------------

void to_json(json& j, const EncoderConfig& c) {
  j = json{{"channels", c.channels}, {"latent_dim", c.latent_dim}};
}
void from_json(const json& j, EncoderConfig& c) {
  read_key(j, "channels", c.channels);
  read_key(j, "latent_dim", c.latent_dim);
}

void to_json(json& j, const MmdConfig& c) {
  j = json{{"bandwidth", c.bandwidth_mode == BandwidthMode::kFixed ? json(c.bandwidth)
                                                                  : json("median")},
           {"weight", c.weight},
           {"prior_samples", c.prior_samples}};
}
void from_json(const json& j, MmdConfig& c) {
  if (j.contains("bandwidth")) {
    const json& bw = j.at("bandwidth");
    if (bw.is_string()) {
      require(bw.get<std::string>() == "median", ErrorCode::kConfig,
              "bandwidth must be \"median\" or a positive number");
      c.bandwidth_mode = BandwidthMode::kMedianHeuristic;
    } else if (bw.is_number()) {
      c.bandwidth_mode = BandwidthMode::kFixed;
      c.bandwidth = bw.get<double>();
    } else {
      fail(ErrorCode::kConfig, "bandwidth must be \"median\" or a positive number");
    }
  }
  read_key(j, "weight", c.weight);
  read_key(j, "prior_samples", c.prior_samples);
}

void to_json(json& j, const DynamicsConfig& c) {
  j = json{{"latent_dim", c.latent_dim},
           {"n_max", c.n_max},
           {"hidden", c.hidden},
           {"components", c.components},
           {"conditioning", to_string(c.conditioning)}};
}
void from_json(const json& j, DynamicsConfig& c) {
  read_key(j, "latent_dim", c.latent_dim);
  read_key(j, "n_max", c.n_max);
  read_key(j, "hidden", c.hidden);
  read_key(j, "components", c.components);
  std::string mode = to_string(c.conditioning);
  read_key(j, "conditioning", mode);
  c.conditioning = parse_conditioning_mode(mode);
}

void to_json(json& j, const PredictorConfig& c) {
  j = json{{"inputs", to_string(c.inputs)},
           {"latent_dim", c.latent_dim},
           {"summary_dim", c.summary_dim},
           {"hidden", c.hidden}};
}
void from_json(const json& j, PredictorConfig& c) {
  std::string inputs = to_string(c.inputs);
  read_key(j, "inputs", inputs);
  c.inputs = parse_input_config(inputs);
  read_key(j, "latent_dim", c.latent_dim);
  read_key(j, "summary_dim", c.summary_dim);
  read_key(j, "hidden", c.hidden);
}

void to_json(json& j, const WindowConfig& c) {
  j = json{{"obs_len", c.obs_len},
           {"pred_len", c.pred_len},
           {"frame_period", c.frame_period},
           {"train_len", c.train_len}};
}
void from_json(const json& j, WindowConfig& c) {
  read_key(j, "obs_len", c.obs_len);
  read_key(j, "pred_len", c.pred_len);
  read_key(j, "frame_period", c.frame_period);
  read_key(j, "train_len", c.train_len);
}

void to_json(json& j, const PreprocessConfig& c) {
  j = json{{"clahe_tiles", c.clahe_tiles}, {"clahe_clip", c.clahe_clip}};
}
void from_json(const json& j, PreprocessConfig& c) {
  read_key(j, "clahe_tiles", c.clahe_tiles);
  read_key(j, "clahe_clip", c.clahe_clip);
}

namespace nn {
void to_json(json& j, const AdamConfig& c) {
  j = json{{"learning_rate", c.learning_rate},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"epsilon", c.epsilon},
           {"clip_norm", c.clip_norm},
           {"final_lr_fraction", c.final_lr_fraction}};
}
void from_json(const json& j, AdamConfig& c) {
  read_key(j, "learning_rate", c.learning_rate);
  read_key(j, "beta1", c.beta1);
  read_key(j, "beta2", c.beta2);
  read_key(j, "epsilon", c.epsilon);
  read_key(j, "clip_norm", c.clip_norm);
  read_key(j, "final_lr_fraction", c.final_lr_fraction);
}
}  // namespace nn

// --- Binary container ------------------------------------------------------

std::string to_string(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::kEncoder: return "encoder";
    case ModuleKind::kDynamics: return "dynamics";
    case ModuleKind::kPredictor: return "predictor";
  }
  return "unknown";
}

namespace {

constexpr char kMagic[8] = {'R', 'D', 'B', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, const std::string& source)
      : bytes_(bytes), source_(source) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(ErrorCode::kParse, source_ + ": truncated checkpoint");
  }
  std::span<const std::uint8_t> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.kind));
  put<std::uint64_t>(out, ckpt.seed);
  const std::string header = json{{"config", ckpt.config}, {"metadata", ckpt.metadata}}.dump();
  put<std::uint64_t>(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  put<std::uint64_t>(out, ckpt.params.size());
  const std::size_t at = out.size();
  out.resize(at + ckpt.params.size() * sizeof(double));
  if (!ckpt.params.empty()) {
    std::memcpy(out.data() + at, ckpt.params.data(), ckpt.params.size() * sizeof(double));
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes,
                                  const std::string& source) {
  Reader r(bytes, source);
  const auto magic = r.take(8);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) {
    fail(ErrorCode::kParse, source + ": not a checkpoint file");
  }
  const auto version = r.get<std::uint32_t>();
  require(version == kCheckpointVersion, ErrorCode::kCompatibility,
          source + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto kind = r.get<std::uint32_t>();
  require(kind >= 1 && kind <= 3, ErrorCode::kParse, source + ": unknown module kind");
  ckpt.kind = static_cast<ModuleKind>(kind);
  ckpt.seed = r.get<std::uint64_t>();
  const auto header_len = r.get<std::uint64_t>();
  const auto header_bytes = r.take(header_len);
  json header;
  try {
    header = json::parse(header_bytes.begin(), header_bytes.end());
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, source + ": bad checkpoint header: " + e.what());
  }
  ckpt.config = header.value("config", json::object());
  ckpt.metadata = header.value("metadata", json::object());
  const auto count = r.get<std::uint64_t>();
  require(count <= bytes.size() / sizeof(double), ErrorCode::kParse,
          source + ": truncated checkpoint");
  const auto data = r.take(count * sizeof(double));
  ckpt.params.resize(count);
  if (count > 0) std::memcpy(ckpt.params.data(), data.data(), data.size());
  require(r.done(), ErrorCode::kParse, source + ": trailing bytes in checkpoint");
  return ckpt;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::kIo, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                    text.size()));
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  write_file_atomic(path, bytes);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorCode::kDependency,
          "missing checkpoint " + path.string());
  const auto bytes = read_file_bytes(path);
  return deserialize_checkpoint(bytes, path.string());
}

Checkpoint make_checkpoint(const SpatialEncoder& model, std::uint64_t seed) {
  Checkpoint c;
  c.kind = ModuleKind::kEncoder;
  c.config = model.config();
  c.seed = seed;
  c.params.assign(model.parameters().begin(), model.parameters().end());
  return c;
}

Checkpoint make_checkpoint(const GlobalDynamics& model, std::uint64_t seed) {
  Checkpoint c;
  c.kind = ModuleKind::kDynamics;
  c.config = model.config();
  c.seed = seed;
  c.params.assign(model.parameters().begin(), model.parameters().end());
  return c;
}

Checkpoint make_checkpoint(const LocalPredictor& model, std::uint64_t seed) {
  Checkpoint c;
  c.kind = ModuleKind::kPredictor;
  c.config = model.config();
  c.seed = seed;
  c.params.assign(model.parameters().begin(), model.parameters().end());
  return c;
}

namespace {

void expect_kind(const Checkpoint& ckpt, ModuleKind kind) {
  require(ckpt.kind == kind, ErrorCode::kCompatibility,
          "checkpoint holds a " + to_string(ckpt.kind) + ", expected a " + to_string(kind));
}

}  // namespace

SpatialEncoder load_encoder(const Checkpoint& ckpt) {
  expect_kind(ckpt, ModuleKind::kEncoder);
  return SpatialEncoder(ckpt.config.get<EncoderConfig>(), ckpt.params);
}

GlobalDynamics load_dynamics(const Checkpoint& ckpt) {
  expect_kind(ckpt, ModuleKind::kDynamics);
  return GlobalDynamics(ckpt.config.get<DynamicsConfig>(), ckpt.params);
}

LocalPredictor load_predictor(const Checkpoint& ckpt) {
  expect_kind(ckpt, ModuleKind::kPredictor);
  return LocalPredictor(ckpt.config.get<PredictorConfig>(), ckpt.params);
}

// --- Hashing ---------------------------------------------------------------

namespace {

std::string digest(const std::vector<std::span<const std::uint8_t>>& parts) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) fail(ErrorCode::kInternal, "cannot allocate digest context");
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  for (const auto& p : parts) EVP_DigestUpdate(ctx, p.data(), p.size());
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) { return digest({bytes}); }

std::string sha256_hex(const std::string& text) { return digest({as_bytes(text)}); }

std::string file_sha256(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return sha256_hex(bytes);
}

std::string content_hash(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  require(fs::exists(path), ErrorCode::kIo, "cannot hash missing path " + path.string());
  if (fs::is_directory(path)) {
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(path)) {
      names.push_back(entry.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    std::string body;
    for (const auto& n : names) body += n + " " + content_hash(path / n) + "\n";
    std::string head = "tree " + std::to_string(body.size());
    head.push_back('\0');
    return digest({as_bytes(head), as_bytes(body)});
  }
  const auto bytes = read_file_bytes(path);
  std::string head = "blob " + std::to_string(bytes.size());
  head.push_back('\0');
  return digest({as_bytes(head), bytes});
}

}  // namespace rdb
