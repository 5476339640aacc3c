#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dino/prng.hpp"

namespace dino::sim {

// Geometry and dynamics of the runner game. Distances are native canvas
// pixels, times are ticks. Heights are measured upward from the ground line.
struct EnvConfig {
  int canvas_width = 600;
  int canvas_height = 150;
  double dino_x = 50;
  double dino_w = 20;
  double dino_h = 40;
  double jump_v0 = 10;
  double gravity = 1;
  double base_speed = 6;
  double speed_step = 0.5;
  int speed_interval = 100;
  double speed_cap = 13;
  double gap_min_base = 60;
  double gap_per_speed = 10;
  int gap_max_extra = 200;
  double reward_alive = 0.1;
  double reward_death = -1.0;

  // Throws ConfigError naming the first violated invariant.
  void validate() const;

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

enum class ObstacleKind : std::uint8_t { SmallCactus = 0, LargeCactus = 1, BirdLow = 2, BirdHigh = 3 };

const char* to_string(ObstacleKind kind);

struct Obstacle {
  ObstacleKind kind;
  double x;  // left edge
  double w;
  double h;
  double y_bottom;

  static Obstacle make(ObstacleKind kind, double x);

  // Whether a grounded runner has to jump to survive it.
  bool jump_mandatory() const { return kind != ObstacleKind::BirdHigh; }
  double right() const { return x + w; }

  friend bool operator==(const Obstacle&, const Obstacle&) = default;
};

enum class Action : std::uint8_t { Noop = 0, Jump = 1 };

inline constexpr int kNumActions = 2;

inline constexpr int index_of(Action a) { return static_cast<int>(a); }
inline constexpr Action action_from_index(int i) { return i == 0 ? Action::Noop : Action::Jump; }

struct GameState {
  double dino_y = 0;
  double dino_vy = 0;
  bool airborne = false;
  std::vector<Obstacle> obstacles;  // spawn order, leftmost first
  double speed = 0;
  std::int64_t score = 0;
  std::int64_t tick = 0;
  std::uint64_t prng = 0;
  // Random part of the gap that the next spawn must respect, drawn at the
  // previous spawn.
  std::int64_t pending_gap_extra = 0;
  bool alive = true;

  friend bool operator==(const GameState&, const GameState&) = default;
};

struct StepResult {
  double reward = 0;
  bool terminal = false;
  std::int64_t score = 0;
};

struct Rect {
  double x;
  double y_bottom;
  double w;
  double h;
};

GameState new_env(std::uint64_t seed, const EnvConfig& config);

// Fresh episode that keeps consuming the PRNG stream of `previous`.
GameState reset(const GameState& previous, const EnvConfig& config);

// Open-interval overlap on both axes; touching edges do not collide.
bool aabb_overlap(const Rect& a, const Rect& b);

Rect dino_box(const GameState& state, const EnvConfig& config);

// Speed implied by a score under the step schedule.
double speed_for_score(std::int64_t score, const EnvConfig& config);

std::pair<GameState, StepResult> step(const GameState& state, Action action, const EnvConfig& config);

// In-place variant used by the training loop.
StepResult step_inplace(GameState& state, Action action, const EnvConfig& config);

// Hand-written policy: jump when the nearest jump-mandatory obstacle ahead is
// within lead_ticks * speed pixels of the runner's front edge.
Action scripted_action(const GameState& state, const EnvConfig& config, int lead_ticks);

// Ticks survived by the scripted policy from new_env(seed), capped at max_ticks.
std::int64_t scripted_clear(std::uint64_t seed, int lead_ticks, const EnvConfig& config = {},
                            std::int64_t max_ticks = 100000);

// Ticks survived by a policy that jumps with probability p_jump each tick.
// The policy draws from its own stream seeded by policy_seed.
std::int64_t random_policy_survival(std::uint64_t seed, std::uint64_t policy_seed, const EnvConfig& config = {},
                                    double p_jump = 0.5, std::int64_t max_ticks = 100000);

// Flat key=value text, one field per line, keys exactly as the field names.
std::string to_key_value(const EnvConfig& config);

// Applies one key=value override. Returns false if the key is not an
// EnvConfig field; throws ConfigError if the value does not parse.
bool set_field(EnvConfig& config, const std::string& key, const std::string& value);

}  // namespace dino::sim
