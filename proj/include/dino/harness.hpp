#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dino/agents.hpp"
#include "dino/env.hpp"
#include "dino/nn/network.hpp"
#include "dino/raster.hpp"
#include "dino/replay.hpp"

namespace dino::harness {

struct StepRow {
  std::int64_t t = 0;
  std::int64_t episode = 0;
  double epsilon = 0;
  std::optional<double> loss;
  std::int64_t score = 0;
  bool death = false;

  friend bool operator==(const StepRow&, const StepRow&) = default;
};

struct EpisodeRow {
  std::int64_t episode = 0;
  std::int64_t score = 0;
  std::int64_t length = 0;  // timesteps, including the fatal one
  std::int64_t end_t = 0;   // global timestep count when the episode ended

  friend bool operator==(const EpisodeRow&, const EpisodeRow&) = default;
};

struct EpochRow {
  std::int64_t epoch = 0;
  double mean_score = 0;
  int count = 0;
  bool partial = false;
};

inline constexpr int kEpisodesPerEpoch = 10;

struct MetricsLog {
  std::int64_t start_t = 0;  // first timestep covered (non-zero after a resume)
  std::vector<StepRow> steps;
  std::vector<EpisodeRow> episodes;

  std::int64_t total_timesteps() const { return static_cast<std::int64_t>(steps.size()); }
  // Timesteps spent in the episode that has not ended yet.
  std::int64_t partial_episode_length() const;
  std::vector<std::int64_t> episode_scores() const;

  friend bool operator==(const MetricsLog&, const MetricsLog&) = default;
};

// Non-overlapping windows of 10 episodes; a trailing short window is kept
// and flagged partial.
std::vector<EpochRow> epoch_averages(std::span<const std::int64_t> episode_scores);

// ---- metrics file: t,episode,epsilon,loss,score,event ----

inline constexpr const char* kMetricsHeader = "t,episode,epsilon,loss,score,event";

std::string format_step_row(const StepRow& row);
void write_metrics_csv(std::ostream& out, const MetricsLog& log);
// Rebuilds steps and episodes from a metrics file.
MetricsLog parse_metrics_csv(std::istream& in);
MetricsLog read_metrics_file(const std::string& path);
void write_epochs_csv(std::ostream& out, std::span<const EpochRow> epochs);

// ---- run summaries ----

struct SummaryRow {
  std::string run;
  std::optional<std::int64_t> max_score;
  std::int64_t timestep = 0;  // when the max-score episode ended
  std::int64_t episodes = 0;
  double avg_episode_length = 0;
  std::int64_t total_timesteps = 0;
  // max_score / timestep: score gained per timestep of training until the
  // best episode, the timestep-normalised bar of the comparison chart.
  double score_per_timestep = 0;
};

SummaryRow summarize(const std::string& run, const MetricsLog& log);

struct NamedLog {
  std::string run;
  const MetricsLog* log;
};

std::vector<SummaryRow> compare_runs(std::span<const NamedLog> logs);

inline constexpr const char* kSummaryHeader =
    "run,timestep,max_score,episodes,avg_episode_length,total_timesteps,score_per_timestep";

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows);
std::vector<SummaryRow> parse_summary_csv(std::istream& in);
// Fixed-width text table: timestep, max score, episodes, average length.
std::string render_summary_table(std::span<const SummaryRow> rows);

// ---- checkpoints ----

struct Checkpoint {
  agents::AgentKind kind = agents::AgentKind::Dqn;
  std::uint64_t seed = 0;
  agents::TrainConfig train;
  sim::EnvConfig env;
  agents::Agent agent;
  std::int64_t t = 0;
  std::int64_t episodes = 0;
  std::uint64_t env_prng = 0;
  std::uint64_t agent_prng = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// Container layout (little-endian):
//   "DINOC1", version 0x01, u8 agent kind, u64 seed,
//   string TrainConfig key=value, string EnvConfig key=value,
//   u64 t, u64 episodes, u64 train_steps, u64 env PRNG, u64 agent PRNG,
//   u64 length + online weight blob, u8 has_target [+ u64 length + blob],
//   u64 adam step, f64 beta1, f64 beta2, f64 eps,
//   per layer: m.weight, m.bias, v.weight, v.bias as u64 count + f32 values.
// Strings are u64 length + bytes.
inline constexpr char kCheckpointMagic[6] = {'D', 'I', 'N', 'O', 'C', '1'};
inline constexpr std::uint8_t kCheckpointVersion = 0x01;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void checkpoint_save(const std::string& path, const Checkpoint& ckpt);
Checkpoint checkpoint_load(const std::string& path);

// ---- training ----

// Streams of one run, all derived from the run seed.
struct RunSeeds {
  std::uint64_t env;
  std::uint64_t agent;
  std::uint64_t init;
  static RunSeeds from(std::uint64_t seed);
};

// Sequential training loop. Each call to step() advances one timestep:
// render, stack, act, step the game, store the transition, and train once
// the observe phase is over.
class Trainer {
 public:
  Trainer(agents::AgentKind kind, std::uint64_t seed, agents::TrainConfig cfg, sim::EnvConfig env_cfg = {});

  // Resumes from a checkpoint: new episode, empty replay, and a fresh
  // observe phase of cfg.observe_steps random-action timesteps.
  explicit Trainer(const Checkpoint& ckpt);

  const StepRow& step();

  // Steps until timestep() == until or stop is raised. Each row is written
  // to metrics_out (if given) as it is produced.
  void run(std::int64_t until, std::ostream* metrics_out = nullptr, const std::atomic<bool>* stop = nullptr);

  std::int64_t timestep() const { return t_; }
  std::int64_t training_starts_at() const { return observe_until_; }
  double current_epsilon() const;
  const MetricsLog& log() const { return log_; }
  const agents::Agent& agent() const { return agent_; }
  const replay::ReplayBuffer& replay() const { return replay_; }
  const sim::GameState& game() const { return game_; }
  std::uint64_t batches_trained() const { return batches_; }
  Checkpoint checkpoint() const;

 private:
  agents::AgentKind kind_;
  std::uint64_t seed_;
  agents::TrainConfig cfg_;
  sim::EnvConfig env_cfg_;
  agents::Agent agent_;
  replay::ReplayBuffer replay_;
  sim::GameState game_;
  Prng agent_prng_;
  raster::Observation obs_;
  bool episode_start_ = true;
  std::int64_t t_ = 0;
  std::int64_t episode_ = 0;
  std::int64_t episode_begin_t_ = 0;
  std::int64_t observe_until_ = 0;
  std::uint64_t batches_ = 0;
  MetricsLog log_;
};

MetricsLog run_training(agents::AgentKind kind, std::uint64_t seed, const agents::TrainConfig& cfg,
                        std::int64_t max_timesteps, const sim::EnvConfig& env_cfg = {},
                        std::ostream* metrics_out = nullptr);

// Any state -> action rule, e.g. a greedy network or a random baseline.
using Policy = std::function<sim::Action(const sim::GameState&, const raster::Observation&)>;

// Plays `episodes` episodes on one environment stream seeded with `seed`
// (each reset continues the stream); the first action of every episode is
// NOOP. Episodes are cut at max_episode_ticks.
std::vector<std::int64_t> evaluate_policy(const Policy& policy, std::uint64_t seed, int episodes,
                                          const sim::EnvConfig& env_cfg = {},
                                          std::int64_t max_episode_ticks = 100000);

// eps = 0, no training, no replay writes.
std::vector<std::int64_t> evaluate_greedy(const nn::QNetwork<float>& weights, std::uint64_t seed, int episodes,
                                          const sim::EnvConfig& env_cfg = {},
                                          std::int64_t max_episode_ticks = 100000);

// Jumps with probability p_jump each tick, drawing from policy_seed.
std::vector<std::int64_t> evaluate_random(std::uint64_t seed, std::uint64_t policy_seed, int episodes,
                                          const sim::EnvConfig& env_cfg = {}, double p_jump = 0.5,
                                          std::int64_t max_episode_ticks = 100000);

}  // namespace dino::harness
