#include "diffmatte/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "diffmatte/config.hpp"
#include "diffmatte/errors.hpp"

namespace diffmatte {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_bytes(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Kind::Truncated, std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string text(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  const std::uint8_t* take(std::size_t n, const char* what) {
    need(n, what);
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const MattingModel& model) {
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  KeyValues kv;
  write_model_config(model.config(), kv);
  put_bytes(out, kv.str());

  std::uint32_t count = 0;
  model.visit([&](const std::string&, const Tensor<float>&, const Tensor<float>&) { ++count; });
  put_u32(out, count);
  model.visit([&](const std::string& name, const Tensor<float>& v, const Tensor<float>&) {
    put_bytes(out, name);
    put_u32(out, 4);
    for (int e : {v.n(), v.c(), v.h(), v.w()}) put_u32(out, static_cast<std::uint32_t>(e));
    for (float f : v.values()) put_u32(out, std::bit_cast<std::uint32_t>(f));
  });
  return out;
}

MattingModel deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  using Kind = CheckpointError::Kind;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointError(Kind::BadMagic, "not a checkpoint: bad magic");
  }
  Reader in(bytes);
  in.take(4, "magic");
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::BadVersion, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::string config_text = in.text("config");
  ModelConfig cfg;
  try {
    const auto kv = KeyValues::parse(config_text);
    cfg = read_model_config(kv);
    kv.require_all_consumed();
  } catch (const std::exception& e) {
    throw CheckpointError(Kind::BadConfig, std::string("invalid checkpoint config: ") + e.what());
  }

  Rng rng(0);
  MattingModel model(cfg, rng);
  std::map<std::string, Tensor<float>*> slots;
  model.visit([&](const std::string& name, Tensor<float>& v, Tensor<float>& g) {
    slots[name] = &v;
    g.zero();
  });

  const std::uint32_t count = in.u32("entry count");
  std::size_t filled = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = in.text("entry name");
    const std::uint32_t rank = in.u32("rank");
    if (rank != 4) throw CheckpointError(Kind::ShapeMismatch, name + ": expected rank 4, got " + std::to_string(rank));
    Shape shape;
    shape.n = static_cast<int>(in.u32("extent"));
    shape.c = static_cast<int>(in.u32("extent"));
    shape.h = static_cast<int>(in.u32("extent"));
    shape.w = static_cast<int>(in.u32("extent"));
    const auto it = slots.find(name);
    if (it == slots.end()) throw CheckpointError(Kind::UnknownParameter, "unknown parameter '" + name + "'");
    Tensor<float>& dst = *it->second;
    if (!(dst.shape() == shape)) {
      throw CheckpointError(Kind::ShapeMismatch,
                            name + ": stored shape " + shape.str() + " but config implies " + dst.shape().str());
    }
    const auto* payload = in.take(dst.size() * 4, "payload");
    for (std::size_t k = 0; k < dst.size(); ++k) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[4 * k + b]) << (8 * b);
      dst[k] = std::bit_cast<float>(bits);
    }
    slots.erase(it);
    ++filled;
  }
  if (!slots.empty()) {
    throw CheckpointError(Kind::MissingParameter, "checkpoint lacks parameter '" + slots.begin()->first + "'");
  }
  if (!in.done()) throw CheckpointError(Kind::TrailingBytes, "unexpected bytes after the last entry");
  return model;
}

void save_checkpoint(const MattingModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(model);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

MattingModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace diffmatte
