#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "viewx/error.hpp"
#include "viewx/image_io.hpp"
#include "viewx/tensor.hpp"

namespace viewx::bridge {

// Frame layout (little-endian):
//   magic "VXDN" | version u8 = 1 | kind u8 | body length u64 | body
// Tensor envelope:
//   dtype u8 (0 = float32) | ndim u8 | dims u32 x ndim | payload
inline constexpr std::array<std::uint8_t, 4> kMagic{'V', 'X', 'D', 'N'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 14;
inline constexpr std::uint8_t kDtypeFloat32 = 0;

enum class Kind : std::uint8_t {
  init = 1,
  predict = 2,
  predict_ok = 3,
  error = 4,
  shutdown = 5,
};

inline const char* kind_name(Kind k) {
  switch (k) {
    case Kind::init: return "INIT";
    case Kind::predict: return "PREDICT";
    case Kind::predict_ok: return "PREDICT_OK";
    case Kind::error: return "ERROR";
    case Kind::shutdown: return "SHUTDOWN";
  }
  return "?";
}

inline bool is_valid_kind(std::uint8_t k) { return k >= 1 && k <= 5; }

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

struct Message {
  Kind kind = Kind::error;
  Bytes body;
  friend bool operator==(const Message&, const Message&) = default;
};

struct TensorEnvelope {
  std::uint8_t dtype = kDtypeFloat32;
  Shape dims;
  Bytes payload;
};

namespace detail {

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}
inline std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

[[noreturn]] inline void fail(std::size_t pos, const std::string& msg) {
  throw Error(Errc::protocol, msg, pos);
}

}  // namespace detail

// ---- tensor envelope -------------------------------------------------------

inline TensorEnvelope encode_tensor(const Tensor& t) {
  if (t.rank() > 255) throw Error(Errc::protocol, "tensor rank exceeds 255");
  if (element_count(t.shape()) >= (std::uint64_t{1} << 32))
    throw Error(Errc::protocol, "tensor has 2^32 or more elements");
  TensorEnvelope env;
  env.dims = t.shape();
  env.payload.resize(t.size() * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(t[i]);
    for (int b = 0; b < 4; ++b) env.payload[i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return env;
}

inline Tensor decode_tensor(const TensorEnvelope& env) {
  if (env.dtype != kDtypeFloat32)
    throw Error(Errc::protocol, "unknown dtype " + std::to_string(env.dtype));
  const std::size_t n = element_count(env.dims);
  if (env.payload.size() != n * 4)
    throw Error(Errc::protocol, "payload length " + std::to_string(env.payload.size()) +
                                    " does not match dims " + shape_string(env.dims));
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i)
    data[i] = std::bit_cast<float>(detail::get_u32(env.payload.data() + i * 4));
  return Tensor(env.dims, std::move(data));
}

inline void append_envelope(Bytes& out, const TensorEnvelope& env) {
  out.push_back(env.dtype);
  out.push_back(static_cast<std::uint8_t>(env.dims.size()));
  for (auto d : env.dims) detail::put_u32(out, d);
  out.insert(out.end(), env.payload.begin(), env.payload.end());
}

/// Parses one envelope from the front of `bytes`; `base` is the absolute
/// offset of `bytes[0]` for error positions. Returns the bytes consumed.
inline std::size_t parse_envelope(ByteView bytes, std::size_t base, TensorEnvelope& env) {
  if (bytes.size() < 2) detail::fail(base + bytes.size(), "truncated tensor header");
  env.dtype = bytes[0];
  if (env.dtype != kDtypeFloat32) detail::fail(base, "unknown dtype " + std::to_string(env.dtype));
  const std::size_t ndim = bytes[1];
  std::size_t pos = 2;
  if (bytes.size() < pos + 4 * ndim) detail::fail(base + bytes.size(), "truncated tensor dims");
  env.dims.resize(ndim);
  std::uint64_t count = 1;
  bool empty = false;
  for (std::size_t i = 0; i < ndim; ++i) {
    env.dims[i] = detail::get_u32(bytes.data() + pos);
    if (env.dims[i] == 0) empty = true;
    if (!empty) {
      count *= env.dims[i];
      if (count >= (std::uint64_t{1} << 32)) detail::fail(base + pos, "tensor has 2^32 or more elements");
    }
    pos += 4;
  }
  if (empty) count = 0;
  const std::uint64_t payload = count * 4;
  if (bytes.size() - pos < payload)
    detail::fail(base + bytes.size(), "truncated tensor payload: need " + std::to_string(payload) +
                                          " bytes, have " + std::to_string(bytes.size() - pos));
  env.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                     bytes.begin() + static_cast<std::ptrdiff_t>(pos + payload));
  return pos + static_cast<std::size_t>(payload);
}

// ---- framing ---------------------------------------------------------------

inline Bytes encode_message(Kind kind, ByteView body) {
  Bytes out(kMagic.begin(), kMagic.end());
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(kind));
  detail::put_u64(out, body.size());
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

inline Bytes encode_message(const Message& m) { return encode_message(m.kind, m.body); }

struct Header {
  Kind kind;
  std::uint64_t length;
};

/// Validates a 14-byte frame header found at absolute offset `base`.
inline Header parse_header(ByteView bytes, std::size_t base) {
  if (bytes.size() < kHeaderSize) detail::fail(base + bytes.size(), "truncated frame header");
  for (std::size_t i = 0; i < 4; ++i)
    if (bytes[i] != kMagic[i]) detail::fail(base + i, "bad magic");
  if (bytes[4] != kVersion) detail::fail(base + 4, "unsupported version " + std::to_string(bytes[4]));
  if (!is_valid_kind(bytes[5])) detail::fail(base + 5, "unknown message kind " + std::to_string(bytes[5]));
  return {static_cast<Kind>(bytes[5]), detail::get_u64(bytes.data() + 6)};
}

/// Splits a byte stream into messages. Every failure is an Errc::protocol
/// error positioned at the absolute byte offset where parsing stopped.
inline std::vector<Message> parse_messages(ByteView bytes) {
  std::vector<Message> out;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const Header h = parse_header(bytes.subspan(pos), pos);
    const std::size_t avail = bytes.size() - pos - kHeaderSize;
    if (h.length > avail)
      detail::fail(bytes.size(), "truncated body: header declares " + std::to_string(h.length) +
                                     " bytes, " + std::to_string(avail) + " available");
    const auto body = bytes.subspan(pos + kHeaderSize, static_cast<std::size_t>(h.length));
    out.push_back({h.kind, Bytes(body.begin(), body.end())});
    pos += kHeaderSize + static_cast<std::size_t>(h.length);
  }
  return out;
}

// ---- message bodies ----------------------------------------------------------

/// INIT: u32 meta length | JSON meta | opaque condition bytes.
struct InitBody {
  nlohmann::json meta = nlohmann::json::object();
  Bytes condition;
};

struct PredictBody {
  float sigma = 0.0f;
  Tensor x;
};

inline Bytes encode_init(const InitBody& init) {
  const std::string meta = init.meta.dump();
  Bytes out;
  detail::put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  out.insert(out.end(), init.condition.begin(), init.condition.end());
  return out;
}

inline InitBody decode_init(ByteView body, std::size_t base = 0) {
  if (body.size() < 4) detail::fail(base + body.size(), "truncated INIT meta length");
  const std::uint32_t len = detail::get_u32(body.data());
  if (body.size() - 4 < len) detail::fail(base + body.size(), "truncated INIT meta");
  InitBody init;
  init.meta = nlohmann::json::parse(body.begin() + 4, body.begin() + 4 + len, nullptr, false);
  if (init.meta.is_discarded() || !init.meta.is_object())
    detail::fail(base + 4, "INIT meta is not a JSON object");
  init.condition.assign(body.begin() + 4 + len, body.end());
  return init;
}

inline Bytes encode_predict(float sigma, const Tensor& x) {
  Bytes out;
  detail::put_u32(out, std::bit_cast<std::uint32_t>(sigma));
  append_envelope(out, encode_tensor(x));
  return out;
}

inline PredictBody decode_predict(ByteView body, std::size_t base = 0) {
  if (body.size() < 4) detail::fail(base + body.size(), "truncated PREDICT sigma");
  PredictBody p;
  p.sigma = std::bit_cast<float>(detail::get_u32(body.data()));
  TensorEnvelope env;
  const std::size_t used = parse_envelope(body.subspan(4), base + 4, env);
  if (4 + used != body.size()) detail::fail(base + 4 + used, "trailing bytes after PREDICT tensor");
  p.x = decode_tensor(env);
  return p;
}

inline Bytes encode_predict_ok(const Tensor& x) {
  Bytes out;
  append_envelope(out, encode_tensor(x));
  return out;
}

inline Tensor decode_predict_ok(ByteView body, std::size_t base = 0) {
  TensorEnvelope env;
  const std::size_t used = parse_envelope(body, base, env);
  if (used != body.size()) detail::fail(base + used, "trailing bytes after tensor");
  return decode_tensor(env);
}

inline Bytes encode_error(const std::string& message) { return Bytes(message.begin(), message.end()); }
inline std::string decode_error(ByteView body) { return std::string(body.begin(), body.end()); }

/// Parses a stream and decodes every body according to its kind.
inline void validate_stream(ByteView bytes) {
  std::size_t pos = 0;
  for (const auto& m : parse_messages(bytes)) {
    const std::size_t body_at = pos + kHeaderSize;
    const ByteView body = m.body;
    switch (m.kind) {
      case Kind::init: decode_init(body, body_at); break;
      case Kind::predict: decode_predict(body, body_at); break;
      case Kind::predict_ok: decode_predict_ok(body, body_at); break;
      case Kind::shutdown:
        if (!body.empty()) detail::fail(body_at, "SHUTDOWN carries a body");
        break;
      case Kind::error: break;
    }
    pos = body_at + m.body.size();
  }
}

// ---- .vxt tensor container -----------------------------------------------------

/// A .vxt file is a single PREDICT_OK frame holding one tensor envelope.
inline Bytes encode_vxt(const Tensor& t) { return encode_message(Kind::predict_ok, encode_predict_ok(t)); }

inline Tensor decode_vxt(ByteView bytes) {
  const Header h = parse_header(bytes, 0);
  if (h.kind != Kind::predict_ok) detail::fail(5, "tensor container must be a PREDICT_OK frame");
  if (h.length != bytes.size() - kHeaderSize)
    detail::fail(bytes.size(), "tensor container length does not match file size");
  return decode_predict_ok(bytes.subspan(kHeaderSize), kHeaderSize);
}

inline void write_vxt(const std::filesystem::path& path, const Tensor& t) {
  const Bytes b = encode_vxt(t);
  write_file(path, b.data(), b.size());
}

inline Tensor read_vxt(const std::filesystem::path& path) {
  const Bytes b = read_file(path);
  try {
    return decode_vxt(b);
  } catch (const Error& e) {
    throw e.with_context(path.string());
  }
}

}  // namespace viewx::bridge
