#pragma once

#include <cstdint>
#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lyricemb {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by binary readers; carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

// A result that may be degenerate, e.g. a zero vector for a document with no
// in-vocabulary tokens. `flagged` is set in that case.
template <class T>
struct Flagged {
  T value{};
  bool flagged = false;
};

using WarningSink = std::function<void(std::string_view)>;

inline WarningSink& warning_sink() {
  static WarningSink sink = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(std::string_view msg) {
  if (auto& sink = warning_sink()) sink(msg);
}

// Collects warnings emitted while alive instead of printing them.
class WarningCapture {
 public:
  WarningCapture() : previous_(std::move(warning_sink())) {
    warning_sink() = [this](std::string_view msg) {
      messages_.emplace_back(msg);
    };
  }
  ~WarningCapture() { warning_sink() = std::move(previous_); }
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }
  bool empty() const { return messages_.empty(); }

 private:
  WarningSink previous_;
  std::vector<std::string> messages_;
};

}  // namespace lyricemb
