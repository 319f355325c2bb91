#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mammofuse/image.hpp"
#include "mammofuse/rng.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    auto rng = mammofuse::derive_rng({std::hash<std::string>{}(tag),
                                      static_cast<std::uint64_t>(std::filesystem::file_time_type::clock::now()
                                                                     .time_since_epoch()
                                                                     .count())});
    path_ = std::filesystem::temp_directory_path() / ("mammofuse_" + tag + "_" + std::to_string(rng() % 1000000007));
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
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
  std::filesystem::path path_;
};

inline mammofuse::GrayImage random_image(int w, int h, mammofuse::Rng& rng) {
  std::vector<double> d(static_cast<std::size_t>(w) * h);
  for (double& v : d) v = mammofuse::uniform01(rng);
  return mammofuse::GrayImage(w, h, std::move(d));
}

inline mammofuse::GrayImage image_of(int w, int h, std::vector<double> d) {
  return mammofuse::GrayImage(w, h, std::move(d));
}

}  // namespace testing
