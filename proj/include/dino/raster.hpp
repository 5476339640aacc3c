#pragma once

#include <array>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "dino/env.hpp"

namespace dino::raster {

inline constexpr int kFrameWidth = 80;
inline constexpr int kFrameHeight = 80;
inline constexpr int kFramePixels = kFrameWidth * kFrameHeight;
inline constexpr int kStackDepth = 4;

inline constexpr float kSky = 0.0f;
inline constexpr float kGround = 0.3f;
inline constexpr float kDino = 0.6f;
inline constexpr float kObstacle = 1.0f;

// 80x80 grayscale image, row-major, row 0 at the top of the canvas.
struct Frame {
  std::vector<float> pixels = std::vector<float>(kFramePixels, 0.0f);

  float at(int row, int col) const { return pixels[static_cast<std::size_t>(row * kFrameWidth + col)]; }

  friend bool operator==(const Frame&, const Frame&) = default;
};

// Last four frames, oldest first. Frames are immutable and shared between
// consecutive observations, so copies are cheap.
class Observation {
 public:
  Observation();
  explicit Observation(std::array<std::shared_ptr<const Frame>, kStackDepth> frames);

  const Frame& frame(int i) const { return *frames_[static_cast<std::size_t>(i)]; }
  const Frame& newest() const { return *frames_.back(); }
  const std::array<std::shared_ptr<const Frame>, kStackDepth>& frames() const { return frames_; }

  // Channel-last copy (80x80x4) into out, which must hold kFramePixels*4 values.
  template <class T>
  void write_hwc(T* out) const {
    for (int p = 0; p < kFramePixels; ++p) {
      for (int c = 0; c < kStackDepth; ++c) {
        out[p * kStackDepth + c] = static_cast<T>(frames_[static_cast<std::size_t>(c)]->pixels[static_cast<std::size_t>(p)]);
      }
    }
  }

  friend bool operator==(const Observation& a, const Observation& b);

 private:
  std::array<std::shared_ptr<const Frame>, kStackDepth> frames_;
};

struct RenderOptions {
  bool draw_dino = true;
};

// Native-canvas column/row sampled by each destination column/row
// (nearest neighbour at destination pixel centres).
struct SampleMap {
  std::array<int, kFrameWidth> column;
  std::array<int, kFrameHeight> row;
};

SampleMap sample_map(int canvas_width, int canvas_height);

Frame render_frame(const sim::GameState& state, const sim::EnvConfig& config, const RenderOptions& options = {});

Observation init_stack(const Frame& f);
Observation init_stack(std::shared_ptr<const Frame> f);
Observation push_frame(const Observation& obs, const Frame& f);
Observation push_frame(const Observation& obs, std::shared_ptr<const Frame> f);

// Binary PGM (P5, maxval 255), intensity*255 rounded half up.
void write_pgm(std::ostream& out, const Frame& f);
void write_pgm(const std::string& path, const Frame& f);

}  // namespace dino::raster
