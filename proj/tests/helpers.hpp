#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "carmic/pipeline.hpp"

namespace testutil {

// Fresh scratch directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("carmic-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
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

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Short in-memory sweep input: a few sentences, default cars and noise levels.
inline carmic::pipeline::Sources small_sources(int sentences, std::vector<carmic::pipeline::MicProfile> mics,
                                               std::size_t car_count = 3) {
  using namespace carmic;
  pipeline::Sources s;
  s.layout.sentence_count = sentences;
  s.stimulus = fixtures::synth_stimulus(s.layout, 1);
  const auto cars = fixtures::default_cars();
  for (std::size_t c = 0; c < car_count; ++c) {
    pipeline::CarSource car;
    car.id = cars[c].id;
    car.ir = fixtures::synth_impulse_response(cars[c], 0.3, 100 + c);
    for (auto nc : fixtures::kAllNoiseClasses) {
      car.noises.emplace(nc, fixtures::synth_noise(nc, 5.0, 200 + 10 * c + static_cast<int>(nc)));
    }
    s.cars.push_back(std::move(car));
  }
  s.noise_classes.assign(std::begin(fixtures::kAllNoiseClasses), std::end(fixtures::kAllNoiseClasses));
  s.mics = std::move(mics);
  s.references = metrics::default_reference_sentences();
  return s;
}

}  // namespace testutil
