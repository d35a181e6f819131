#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "indukt/corpus.hpp"

namespace indukt::test {

inline std::filesystem::path data_dir() { return INDUKT_DATA_DIR; }

inline std::filesystem::path mini_corpus_path() { return data_dir() / "mini_corpus.json"; }

inline const corpus::Corpus& mini_corpus() {
  static const corpus::Corpus c = corpus::load_corpus(mini_corpus_path());
  return c;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("indukt_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

}  // namespace indukt::test
