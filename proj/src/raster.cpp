#include "dino/raster.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace dino::raster {

namespace {

// Native pixels spanned by [lo, lo+extent) after truncating lo toward -inf.
struct Span {
  long first;
  long last;  // exclusive
};

Span span(double lo, double extent) {
  const auto first = static_cast<long>(std::floor(lo));
  return Span{first, first + static_cast<long>(extent)};
}

bool inside(long v, Span s) { return v >= s.first && v < s.last; }

}  // namespace

Observation::Observation() {
  auto blank = std::make_shared<const Frame>();
  frames_.fill(blank);
}

Observation::Observation(std::array<std::shared_ptr<const Frame>, kStackDepth> frames) : frames_(std::move(frames)) {}

bool operator==(const Observation& a, const Observation& b) {
  for (int i = 0; i < kStackDepth; ++i) {
    if (!(a.frame(i) == b.frame(i))) return false;
  }
  return true;
}

SampleMap sample_map(int canvas_width, int canvas_height) {
  SampleMap m{};
  const double sx = static_cast<double>(canvas_width) / kFrameWidth;
  const double sy = static_cast<double>(canvas_height) / kFrameHeight;
  for (int i = 0; i < kFrameWidth; ++i) m.column[i] = static_cast<int>(std::floor((i + 0.5) * sx));
  for (int j = 0; j < kFrameHeight; ++j) m.row[j] = static_cast<int>(std::floor((j + 0.5) * sy));
  return m;
}

Frame render_frame(const sim::GameState& state, const sim::EnvConfig& config, const RenderOptions& options) {
  const SampleMap map = sample_map(config.canvas_width, config.canvas_height);
  const long ground_row = config.canvas_height - 1;

  struct Box {
    Span cols, heights;
    float value;
  };
  std::vector<Box> boxes;
  boxes.reserve(state.obstacles.size() + 1);
  for (const auto& o : state.obstacles) boxes.push_back({span(o.x, o.w), span(o.y_bottom, o.h), kObstacle});
  if (options.draw_dino) {
    boxes.push_back({span(config.dino_x, config.dino_w), span(state.dino_y, config.dino_h), kDino});
  }

  Frame f;
  for (int j = 0; j < kFrameHeight; ++j) {
    const long row = map.row[j];
    const long height = ground_row - row;
    for (int i = 0; i < kFrameWidth; ++i) {
      const long col = map.column[i];
      float v = row == ground_row ? kGround : kSky;
      // Later boxes overwrite earlier ones; the dino is last.
      for (const auto& b : boxes) {
        if (inside(col, b.cols) && inside(height, b.heights)) v = b.value;
      }
      f.pixels[static_cast<std::size_t>(j * kFrameWidth + i)] = v;
    }
  }
  return f;
}

Observation init_stack(std::shared_ptr<const Frame> f) {
  return Observation({f, f, f, f});
}

Observation init_stack(const Frame& f) { return init_stack(std::make_shared<const Frame>(f)); }

Observation push_frame(const Observation& obs, std::shared_ptr<const Frame> f) {
  const auto& old = obs.frames();
  return Observation({old[1], old[2], old[3], std::move(f)});
}

Observation push_frame(const Observation& obs, const Frame& f) {
  return push_frame(obs, std::make_shared<const Frame>(f));
}

void write_pgm(std::ostream& out, const Frame& f) {
  out << "P5\n" << kFrameWidth << ' ' << kFrameHeight << "\n255\n";
  for (float v : f.pixels) {
    const double scaled = std::floor(static_cast<double>(v) * 255.0 + 0.5);
    out.put(static_cast<char>(static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0))));
  }
}

void write_pgm(const std::string& path, const Frame& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_pgm(out, f);
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace dino::raster
