#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "dino/env.hpp"
#include "dino/nn/network.hpp"
#include "dino/prng.hpp"
#include "dino/raster.hpp"
#include "dino/replay.hpp"

namespace dino::agents {

enum class AgentKind : std::uint8_t { Dqn = 0, Ddqn = 1, ESarsa = 2 };

const char* to_string(AgentKind kind);
std::optional<AgentKind> parse_agent_kind(const std::string& name);

// How Expected SARSA weights the next-state action values.
enum class Expectation : std::uint8_t {
  EpsGreedy = 0,  // pi = epsilon-greedy behaviour policy
  Uniform = 1,    // plain mean over actions
};

struct TrainConfig {
  double gamma = 0.99;
  double lr = 1e-4;
  int batch_size = 16;
  int replay_capacity = 50000;
  std::int64_t observe_steps = 1000;
  std::int64_t explore_until = 100000;
  double eps_initial = 0.1;
  double eps_final = 0.0001;
  std::int64_t target_sync_period = 1000;  // training steps, DDQN only
  Expectation esarsa_expectation = Expectation::EpsGreedy;
  // Q-network widths; kernels and strides are fixed at 8/4, 4/2, 3/1.
  int conv1_filters = 32;
  int conv2_filters = 64;
  int conv3_filters = 64;
  int dense_units = 512;

  // Throws ConfigError naming the violated invariant.
  void validate() const;
  nn::NetworkSpec network_spec() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

std::string to_key_value(const TrainConfig& config);
// Returns false if key is not a TrainConfig field; throws ConfigError on a
// malformed value.
bool set_field(TrainConfig& config, const std::string& key, const std::string& value);

using QValues = std::array<double, sim::kNumActions>;

// Lowest index wins ties.
int argmax(const QValues& q);

// 1.0 while observing, then linear from eps_initial to eps_final until
// explore_until, then eps_final.
double epsilon_at(std::int64_t t, const TrainConfig& cfg);

// Explores with probability eps (u = draw / 2^64 < eps, then a second draw
// mod 2 picks the action); otherwise greedy.
sim::Action select_action(const QValues& q, double eps, Prng& prng);

double dqn_target(double r, bool terminal, const QValues& q_next, double gamma);
double esarsa_target(double r, bool terminal, const QValues& q_next, double eps, double gamma, Expectation mode);
double ddqn_target(double r, bool terminal, const QValues& q_next_online, const QValues& q_next_target, double gamma);

struct Agent {
  AgentKind kind = AgentKind::Dqn;
  nn::QNetwork<float> online;
  std::optional<nn::QNetwork<float>> target;  // DDQN only
  nn::AdamState<float> adam;
  std::uint64_t train_steps = 0;

  static Agent create(AgentKind kind, const TrainConfig& cfg, std::uint64_t init_seed);
  friend bool operator==(const Agent&, const Agent&) = default;
};

// Stacks observations into a [B, 80, 80, 4] batch.
nn::Tensor<float> make_batch(std::span<const raster::Observation* const> observations);

QValues q_values(const nn::QNetwork<float>& net, const raster::Observation& obs);

// Samples a minibatch, builds the agent's TD targets, takes one Adam step on
// the online network and (DDQN) refreshes the target network every
// target_sync_period training steps. behavior_eps is the epsilon the
// Expected SARSA expectation uses. Returns the pre-update loss.
double agent_train_batch(Agent& agent, const replay::ReplayBuffer& buf, const TrainConfig& cfg, Prng& prng,
                         double behavior_eps);

}  // namespace dino::agents
