#include "dino/env.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <variant>

#include "dino/errors.hpp"
#include "dino/kv.hpp"

namespace dino::sim {

namespace {

struct KindGeometry {
  double w, h, y_bottom;
};

constexpr std::array<KindGeometry, 4> kGeometry{{
    {15, 30, 0},   // SmallCactus
    {25, 35, 0},   // LargeCactus
    {20, 15, 20},  // BirdLow
    {20, 15, 70},  // BirdHigh
}};

using FieldPtr = std::variant<int EnvConfig::*, double EnvConfig::*>;

struct FieldDesc {
  const char* name;
  FieldPtr ptr;
};

const std::array<FieldDesc, 16> kFields{{
    {"canvas_width", &EnvConfig::canvas_width},
    {"canvas_height", &EnvConfig::canvas_height},
    {"dino_x", &EnvConfig::dino_x},
    {"dino_w", &EnvConfig::dino_w},
    {"dino_h", &EnvConfig::dino_h},
    {"jump_v0", &EnvConfig::jump_v0},
    {"gravity", &EnvConfig::gravity},
    {"base_speed", &EnvConfig::base_speed},
    {"speed_step", &EnvConfig::speed_step},
    {"speed_interval", &EnvConfig::speed_interval},
    {"speed_cap", &EnvConfig::speed_cap},
    {"gap_min_base", &EnvConfig::gap_min_base},
    {"gap_per_speed", &EnvConfig::gap_per_speed},
    {"gap_max_extra", &EnvConfig::gap_max_extra},
    {"reward_alive", &EnvConfig::reward_alive},
    {"reward_death", &EnvConfig::reward_death},
}};

void require(bool ok, const char* invariant) {
  if (!ok) throw ConfigError(std::string("invalid EnvConfig: ") + invariant);
}

}  // namespace

void EnvConfig::validate() const {
  require(canvas_width > 0 && canvas_height > 0, "canvas extents must be positive");
  require(dino_x >= 0 && dino_w > 0 && dino_h > 0, "dino extents must be positive");
  require(dino_x + dino_w < canvas_width, "dino_x + dino_w < canvas_width");
  require(dino_h < canvas_height, "dino_h < canvas_height");
  require(jump_v0 > 0 && gravity > 0, "jump_v0 and gravity must be positive");
  require(base_speed > 0 && speed_step >= 0 && speed_interval > 0, "speed schedule must be positive");
  require(base_speed <= speed_cap, "base_speed <= speed_cap");
  require(gap_min_base > 0 && gap_per_speed >= 0 && gap_max_extra > 0, "spawn gap parameters must be positive");
  double tallest = 0;
  for (const auto& g : kGeometry) {
    // BirdHigh is dodged by staying grounded, the rest must be jumped.
    if (&g != &kGeometry[3]) tallest = std::max(tallest, g.y_bottom + g.h);
  }
  require(jump_v0 * (jump_v0 + 1) / 2 > tallest, "jump apex must exceed the tallest jump-mandatory obstacle");
  require(std::isfinite(reward_alive) && std::isfinite(reward_death), "rewards must be finite");
}

const char* to_string(ObstacleKind kind) {
  switch (kind) {
    case ObstacleKind::SmallCactus: return "SMALL_CACTUS";
    case ObstacleKind::LargeCactus: return "LARGE_CACTUS";
    case ObstacleKind::BirdLow: return "BIRD_LOW";
    case ObstacleKind::BirdHigh: return "BIRD_HIGH";
  }
  return "?";
}

Obstacle Obstacle::make(ObstacleKind kind, double x) {
  const auto& g = kGeometry[static_cast<std::size_t>(kind)];
  return Obstacle{kind, x, g.w, g.h, g.y_bottom};
}

GameState new_env(std::uint64_t seed, const EnvConfig& config) {
  config.validate();
  GameState s;
  s.speed = config.base_speed;
  s.prng = seed;
  return s;
}

GameState reset(const GameState& previous, const EnvConfig& config) {
  return new_env(previous.prng, config);
}

bool aabb_overlap(const Rect& a, const Rect& b) {
  const bool horizontal = a.x < b.x + b.w && b.x < a.x + a.w;
  const bool vertical = a.y_bottom < b.y_bottom + b.h && b.y_bottom < a.y_bottom + a.h;
  return horizontal && vertical;
}

Rect dino_box(const GameState& state, const EnvConfig& config) {
  return Rect{config.dino_x, state.dino_y, config.dino_w, config.dino_h};
}

double speed_for_score(std::int64_t score, const EnvConfig& config) {
  const auto steps = static_cast<double>(score / config.speed_interval);
  return std::min(config.speed_cap, config.base_speed + steps * config.speed_step);
}

StepResult step_inplace(GameState& s, Action action, const EnvConfig& c) {
  if (!s.alive) throw UsageError("step called on a terminated game; reset it first");

  if (action == Action::Jump && !s.airborne) {
    s.dino_vy = c.jump_v0;
    s.airborne = true;
  }
  if (s.airborne) {
    s.dino_y = std::max(0.0, s.dino_y + s.dino_vy);
    s.dino_vy -= c.gravity;
    if (s.dino_y == 0.0) {
      s.airborne = false;
      s.dino_vy = 0;
    }
  }

  for (auto& o : s.obstacles) o.x -= s.speed;
  std::erase_if(s.obstacles, [](const Obstacle& o) { return o.right() < 0; });

  const double width = c.canvas_width;
  bool spawn = s.obstacles.empty();
  if (!spawn) {
    const double gap = c.gap_min_base + c.gap_per_speed * s.speed + static_cast<double>(s.pending_gap_extra);
    spawn = s.obstacles.back().right() < width - gap;
  }
  if (spawn) {
    Prng rng(s.prng);
    s.pending_gap_extra = static_cast<std::int64_t>(rng.next() % static_cast<std::uint64_t>(c.gap_max_extra));
    const auto kind = static_cast<ObstacleKind>(rng.next() % 4);
    s.prng = rng.state();
    s.obstacles.push_back(Obstacle::make(kind, width));
  }

  ++s.tick;
  const Rect dino = dino_box(s, c);
  for (const auto& o : s.obstacles) {
    if (aabb_overlap(dino, Rect{o.x, o.y_bottom, o.w, o.h})) {
      s.alive = false;
      return StepResult{c.reward_death, true, s.score};
    }
  }
  ++s.score;
  s.speed = speed_for_score(s.score, c);
  return StepResult{c.reward_alive, false, s.score};
}

std::pair<GameState, StepResult> step(const GameState& state, Action action, const EnvConfig& config) {
  GameState next = state;
  StepResult r = step_inplace(next, action, config);
  return {std::move(next), r};
}

Action scripted_action(const GameState& state, const EnvConfig& config, int lead_ticks) {
  const double front = config.dino_x + config.dino_w;
  for (const auto& o : state.obstacles) {
    if (!o.jump_mandatory() || o.right() <= config.dino_x) continue;
    const double distance = o.x - front;
    return distance <= lead_ticks * state.speed ? Action::Jump : Action::Noop;
  }
  return Action::Noop;
}

std::int64_t scripted_clear(std::uint64_t seed, int lead_ticks, const EnvConfig& config, std::int64_t max_ticks) {
  GameState s = new_env(seed, config);
  while (s.alive && s.tick < max_ticks) step_inplace(s, scripted_action(s, config, lead_ticks), config);
  return s.score;
}

std::int64_t random_policy_survival(std::uint64_t seed, std::uint64_t policy_seed, const EnvConfig& config,
                                    double p_jump, std::int64_t max_ticks) {
  GameState s = new_env(seed, config);
  Prng policy(policy_seed);
  while (s.alive && s.tick < max_ticks) {
    step_inplace(s, policy.uniform() < p_jump ? Action::Jump : Action::Noop, config);
  }
  return s.score;
}

std::string to_key_value(const EnvConfig& config) {
  std::ostringstream out;
  for (const auto& f : kFields) {
    out << f.name << '=';
    std::visit([&](auto ptr) { out << kv::format_number(config.*ptr); }, f.ptr);
    out << '\n';
  }
  return out.str();
}

bool set_field(EnvConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : kFields) {
    if (key != f.name) continue;
    std::visit(
        [&](auto ptr) {
          using V = std::remove_reference_t<decltype(config.*ptr)>;
          config.*ptr = kv::parse_number<V>(key, value);
        },
        f.ptr);
    return true;
  }
  return false;
}

}  // namespace dino::sim
