#pragma once

#include <random>
#include <string>
#include <vector>

#include "dsaqc/classifier.hpp"
#include "dsaqc/image.hpp"

namespace fixtures {

/// Noisy images whose class (0/1) is a dark central square.
inline std::vector<dsaqc::MinIPImage> square_images(int n, int side, std::uint64_t seed, std::vector<int>& classes) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 0.3);
  std::vector<dsaqc::MinIPImage> out;
  classes.clear();
  for (int i = 0; i < n; ++i) {
    const int cls = i % 2;
    dsaqc::MinIPImage m{"img" + std::to_string(i), "p" + std::to_string(i / 2), dsaqc::Image2D(side, side)};
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        const bool inside = cls == 1 && std::abs(r - side / 2) < side / 4 && std::abs(c - side / 2) < side / 4;
        m.image.at(r, c) = inside ? u(rng) : 0.7 + u(rng);
      }
    }
    out.push_back(std::move(m));
    classes.push_back(cls);
  }
  return out;
}

inline std::vector<dsaqc::LabeledImage> labeled(const std::vector<dsaqc::MinIPImage>& images,
                                                const std::vector<int>& classes, std::size_t first, std::size_t last) {
  std::vector<dsaqc::LabeledImage> out;
  for (std::size_t i = first; i < last; ++i) out.push_back({&images[i], classes[i]});
  return out;
}

inline dsaqc::TrainConfig tiny_config() {
  dsaqc::TrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  c.input_side = 32;
  c.calibration_images = 8;
  c.learning_rate = 1e-3;
  c.seed = 3;
  return c;
}

}  // namespace fixtures
