#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "flowplace/nn/velocity_model.hpp"

// Checkpoint layout (all integers unsigned 32-bit little-endian unless noted):
//
//   magic        4 bytes  "FPVM"
//   version      u32      = 1
//   hidden       u32
//   heads        u32
//   blocks       u32
//   time_dim     u32
//   omega_max    f64 (IEEE-754 binary64, little-endian)
//   tensor_count u32
//   tensor_count times:
//     name_len   u32
//     name       name_len bytes, ASCII
//     rows       u32
//     cols       u32
//     values     rows*cols f32 (binary32, little-endian), row-major
//
// Tensors appear in model registration order and must match the names and
// shapes a model built from the header would have.

namespace flowplace::nn {

inline constexpr char kCheckpointMagic[4] = {'F', 'P', 'V', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}
  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* field) {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string raw(std::size_t n, const char* field) {
    need(n, field);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t offset() const { return pos_; }

 private:
  void need(std::size_t n, const char* field) const {
    if (pos_ + n > bytes_.size())
      throw ParseError("checkpoint offset " + std::to_string(pos_), std::string("truncated while reading ") + field);
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const VelocityModel<float>& model) {
  std::string out(kCheckpointMagic, 4);
  const ModelConfig& c = model.config();
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(c.hidden));
  detail::put_u32(out, static_cast<std::uint32_t>(c.heads));
  detail::put_u32(out, static_cast<std::uint32_t>(c.blocks));
  detail::put_u32(out, static_cast<std::uint32_t>(c.time_dim));
  detail::put_u64(out, std::bit_cast<std::uint64_t>(c.omega_max));
  detail::put_u32(out, static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    detail::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    detail::put_u32(out, static_cast<std::uint32_t>(p.value.rows));
    detail::put_u32(out, static_cast<std::uint32_t>(p.value.cols));
    for (float v : p.value.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline VelocityModel<float> deserialize_checkpoint(const std::string& bytes) {
  detail::ByteReader in(bytes);
  if (in.raw(4, "magic") != std::string(kCheckpointMagic, 4)) throw ParseError("checkpoint", "bad magic");
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint", "unsupported version " + std::to_string(version));
  ModelConfig cfg;
  cfg.hidden = static_cast<int>(in.u32("hidden"));
  cfg.heads = static_cast<int>(in.u32("heads"));
  cfg.blocks = static_cast<int>(in.u32("blocks"));
  cfg.time_dim = static_cast<int>(in.u32("time_dim"));
  cfg.omega_max = std::bit_cast<double>(in.u64("omega_max"));
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ParseError("checkpoint header", e.what());
  }
  VelocityModel<float> model(cfg, 0);
  auto& params = model.parameters();
  const std::uint32_t count = in.u32("tensor_count");
  if (count != params.size())
    throw ParseError("checkpoint", "expected " + std::to_string(params.size()) + " tensors, found " +
                                       std::to_string(count));
  for (auto& p : params) {
    const std::uint32_t len = in.u32("name length");
    const std::string name = in.raw(len, "name");
    if (name != p.name) throw ParseError("checkpoint tensor " + name, "expected tensor " + p.name);
    const std::uint32_t rows = in.u32("rows");
    const std::uint32_t cols = in.u32("cols");
    if (rows != p.value.rows || cols != p.value.cols)
      throw ParseError("checkpoint tensor " + name, "shape mismatch");
    for (auto& v : p.value.data) v = std::bit_cast<float>(in.u32("values"));
  }
  if (!in.done()) throw ParseError("checkpoint offset " + std::to_string(in.offset()), "trailing bytes");
  return model;
}

inline void save_checkpoint(const VelocityModel<float>& model, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write checkpoint " + path);
  const std::string bytes = serialize_checkpoint(model);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ConfigError("failed writing checkpoint " + path);
}

inline VelocityModel<float> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace flowplace::nn
