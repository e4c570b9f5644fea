#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "lyricemb/corpus_io.hpp"

namespace lyricemb::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("lyricemb-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::string> words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

inline TokenizedDocument doc(const std::string& id, const std::string& text, const std::string& artist = "a",
                             std::optional<std::string> album = std::nullopt) {
  return {id, artist, std::move(album), words(text)};
}

// |a - b| relative to the larger magnitude, with an absolute floor so that
// two values that are both numerically zero compare equal.
inline double relative_error(double a, double b, double floor = 1e-7) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline std::string fixture(const std::string& name) { return std::string(LYRICEMB_FIXTURE_DIR) + "/" + name; }

}  // namespace lyricemb::testing
