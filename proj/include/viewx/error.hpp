#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace viewx {

enum class Errc {
  config,
  domain,
  shape,
  parse,
  unsupported_model,
  degenerate,
  protocol,
  transport,
  backend,
  divergence,
  io,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::config: return "configuration error";
    case Errc::domain: return "domain error";
    case Errc::shape: return "shape mismatch";
    case Errc::parse: return "parse error";
    case Errc::unsupported_model: return "unsupported camera model";
    case Errc::degenerate: return "degenerate training set";
    case Errc::protocol: return "protocol error";
    case Errc::transport: return "transport error";
    case Errc::backend: return "backend error";
    case Errc::divergence: return "numerical divergence";
    case Errc::io: return "I/O error";
  }
  return "error";
}

/// Single exception type for the library. `position` is a line number for
/// text parsers and a byte offset for the binary protocol.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, std::optional<std::size_t> position = std::nullopt)
      : std::runtime_error(format(code, message, position)),
        code_(code),
        message_(message),
        position_(position) {}

  Errc code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }
  std::optional<std::size_t> position() const noexcept { return position_; }

  /// Same error with extra context prepended to the message.
  Error with_context(const std::string& context) const {
    return Error(code_, context + ": " + message_, position_);
  }

 private:
  static std::string format(Errc code, const std::string& message,
                            std::optional<std::size_t> position) {
    std::string out = to_string(code);
    if (position) {
      out += code == Errc::protocol ? " at byte " : " at line ";
      out += std::to_string(*position);
    }
    out += ": ";
    out += message;
    return out;
  }

  Errc code_;
  std::string message_;
  std::optional<std::size_t> position_;
};

/// Process exit code for an error class: 1 I/O, 2 bad input, 3 transport,
/// 4 numerical divergence.
inline int exit_code(Errc code) {
  switch (code) {
    case Errc::io: return 1;
    case Errc::protocol:
    case Errc::transport:
    case Errc::backend: return 3;
    case Errc::divergence: return 4;
    default: return 2;
  }
}

}  // namespace viewx
