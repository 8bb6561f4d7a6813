#include "ipnmt/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ipnmt/errors.hpp"

namespace ipnmt::model {

namespace {

constexpr char kMagic[6] = {'I', 'P', 'N', 'M', 'T', '\0'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    out_.append(static_cast<const char*>(data), n);
  }
  template <class U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
    }
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void str32(std::string_view s) {
    uint(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::string take() { return std::move(out_); }
  std::size_t size() const { return out_.size(); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::string_view bytes(std::size_t n) {
    if (n > in_.size() - pos_) throw FormatError("checkpoint truncated");
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <class U>
  U uint() {
    auto b = bytes(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    }
    return static_cast<U>(v);
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str32(std::size_t limit) {
    const auto n = uint<std::uint32_t>();
    if (n > limit) throw FormatError("checkpoint string length out of range");
    return std::string(bytes(n));
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

void write_vocab(Writer& w, const Vocabulary& v) {
  w.uint(static_cast<std::uint32_t>(v.size()));
  for (TokenId i = 0; i < v.size(); ++i) w.str32(v.token(i));
}

Vocabulary read_vocab(Reader& r) {
  const auto count = r.uint<std::uint32_t>();
  if (count < Vocabulary::kNumSpecials || count > r.remaining()) {
    throw FormatError("checkpoint vocabulary count out of range");
  }
  std::vector<std::string> tokens;
  for (std::uint32_t i = 0; i < count; ++i) tokens.push_back(r.str32(r.remaining()));
  const Vocabulary specials;
  for (TokenId i = 0; i < Vocabulary::kNumSpecials; ++i) {
    if (tokens[i] != specials.token(i)) throw FormatError("checkpoint vocabulary specials mismatch");
  }
  try {
    return Vocabulary(std::span<const std::string>(tokens).subspan(Vocabulary::kNumSpecials));
  } catch (const VocabularyError& e) {
    throw FormatError(std::string("checkpoint vocabulary: ") + e.what());
  }
}

}  // namespace

std::string serialize_checkpoint(const ModelBundle& bundle) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.uint(kCheckpointVersion);
  w.str32(nlohmann::json(bundle.network.config()).dump());
  write_vocab(w, bundle.source_vocab);
  write_vocab(w, bundle.target_vocab);

  const auto params = bundle.network.params().all();
  w.uint(static_cast<std::uint32_t>(params.size()));
  std::uint64_t offset = 0;
  for (const nn::Parameter* p : params) {
    w.uint(static_cast<std::uint16_t>(p->name.size()));
    w.bytes(p->name.data(), p->name.size());
    w.uint(static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) w.uint(static_cast<std::uint64_t>(d));
    w.uint(offset);
    offset += p->value.size() * sizeof(double);
  }
  w.uint(offset);
  for (const nn::Parameter* p : params) {
    for (double v : p->value.values()) w.f64(v);
  }
  return w.take();
}

ModelBundle deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (std::memcmp(r.bytes(sizeof kMagic).data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  const auto version = r.uint<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig config;
  try {
    config = nlohmann::json::parse(r.str32(r.remaining())).get<ModelConfig>();
    config.validate();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  Vocabulary source_vocab = read_vocab(r);
  Vocabulary target_vocab = read_vocab(r);
  if (source_vocab.size() != config.source_vocab_size ||
      target_vocab.size() != config.target_vocab_size) {
    throw FormatError("checkpoint vocabulary sizes disagree with config");
  }

  Seq2Seq network = Seq2Seq::zeros(config);
  auto params = network.params().all();
  const auto count = r.uint<std::uint32_t>();
  if (count != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                      std::to_string(params.size()));
  }
  std::vector<std::uint64_t> offsets;
  for (nn::Parameter* p : params) {
    const auto name_len = r.uint<std::uint16_t>();
    const std::string name(r.bytes(name_len));
    if (name != p->name) throw FormatError("checkpoint tensor '" + name + "', expected '" + p->name + "'");
    const auto rank = r.uint<std::uint32_t>();
    if (rank > 8) throw FormatError("checkpoint tensor rank out of range");
    nn::Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.uint<std::uint64_t>());
    if (shape != p->value.shape()) {
      throw FormatError("checkpoint tensor '" + name + "' has shape " + nn::shape_to_string(shape) +
                        ", config implies " + nn::shape_to_string(p->value.shape()));
    }
    offsets.push_back(r.uint<std::uint64_t>());
  }
  const auto payload_bytes = r.uint<std::uint64_t>();
  if (payload_bytes != r.remaining()) {
    throw FormatError("checkpoint payload is " + std::to_string(r.remaining()) +
                      " bytes, header says " + std::to_string(payload_bytes));
  }
  std::uint64_t expected = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (offsets[i] != expected) throw FormatError("checkpoint tensor offsets are inconsistent");
    for (double& v : params[i]->value.values()) v = r.f64();
    expected += params[i]->value.size() * sizeof(double);
  }
  return ModelBundle{std::move(source_vocab), std::move(target_vocab), std::move(network)};
}

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(bundle);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing checkpoint " + path.string());
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace ipnmt::model
