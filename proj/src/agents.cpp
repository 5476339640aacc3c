#include "dino/agents.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <variant>

#include "dino/errors.hpp"
#include "dino/kv.hpp"

namespace dino::agents {

namespace {

using FieldPtr = std::variant<double TrainConfig::*, int TrainConfig::*, std::int64_t TrainConfig::*,
                              Expectation TrainConfig::*>;

struct FieldDesc {
  const char* name;
  FieldPtr ptr;
};

const std::array<FieldDesc, 14> kFields{{
    {"gamma", &TrainConfig::gamma},
    {"lr", &TrainConfig::lr},
    {"batch_size", &TrainConfig::batch_size},
    {"replay_capacity", &TrainConfig::replay_capacity},
    {"observe_steps", &TrainConfig::observe_steps},
    {"explore_until", &TrainConfig::explore_until},
    {"eps_initial", &TrainConfig::eps_initial},
    {"eps_final", &TrainConfig::eps_final},
    {"target_sync_period", &TrainConfig::target_sync_period},
    {"esarsa_expectation", &TrainConfig::esarsa_expectation},
    {"conv1_filters", &TrainConfig::conv1_filters},
    {"conv2_filters", &TrainConfig::conv2_filters},
    {"conv3_filters", &TrainConfig::conv3_filters},
    {"dense_units", &TrainConfig::dense_units},
}};

std::string format_field(Expectation e) { return e == Expectation::EpsGreedy ? "eps_greedy" : "uniform"; }
template <class V>
std::string format_field(V v) {
  return kv::format_number(v);
}

void parse_field(Expectation& out, const std::string& key, const std::string& value) {
  if (value == "eps_greedy" || value == "EPS_GREEDY") {
    out = Expectation::EpsGreedy;
  } else if (value == "uniform" || value == "UNIFORM") {
    out = Expectation::Uniform;
  } else {
    throw ConfigError("value for key '" + key + "' must be eps_greedy or uniform, got '" + value + "'");
  }
}
template <class V>
void parse_field(V& out, const std::string& key, const std::string& value) {
  out = kv::parse_number<V>(key, value);
}

void require(bool ok, const char* invariant) {
  if (!ok) throw ConfigError(std::string("invalid TrainConfig: ") + invariant);
}

// Sum over actions of pi(a) q(a), pi epsilon-greedy around the argmax.
// Written as q* + (eps/2)(q_other - q*) so the result stays inside
// [min q, max q] under rounding and is exactly q* at eps = 0.
double eps_greedy_expectation(const QValues& q, double eps) {
  const int best = argmax(q);
  const double q_best = q[static_cast<std::size_t>(best)];
  double s = q_best;
  for (int a = 0; a < sim::kNumActions; ++a) {
    if (a == best) continue;
    s += (eps / sim::kNumActions) * (q[static_cast<std::size_t>(a)] - q_best);
  }
  const auto [lo, hi] = std::minmax_element(q.begin(), q.end());
  return std::clamp(s, *lo, *hi);
}

}  // namespace

const char* to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::Dqn: return "dqn";
    case AgentKind::Ddqn: return "ddqn";
    case AgentKind::ESarsa: return "esarsa";
  }
  return "?";
}

std::optional<AgentKind> parse_agent_kind(const std::string& name) {
  if (name == "dqn") return AgentKind::Dqn;
  if (name == "ddqn") return AgentKind::Ddqn;
  if (name == "esarsa") return AgentKind::ESarsa;
  return std::nullopt;
}

void TrainConfig::validate() const {
  require(gamma > 0 && gamma <= 1, "0 < gamma <= 1");
  require(lr > 0 && std::isfinite(lr), "lr must be positive");
  require(batch_size >= 1, "batch_size >= 1");
  require(replay_capacity >= batch_size, "replay_capacity >= batch_size");
  require(0 <= eps_final && eps_final <= eps_initial && eps_initial <= 1, "0 <= eps_final <= eps_initial <= 1");
  require(observe_steps < explore_until, "observe_steps < explore_until");
  require(observe_steps >= batch_size, "observe_steps >= batch_size (replay must hold a batch before training)");
  require(target_sync_period >= 1, "target_sync_period >= 1");
  require(conv1_filters >= 1 && conv2_filters >= 1 && conv3_filters >= 1 && dense_units >= 1,
          "network widths must be positive");
}

nn::NetworkSpec TrainConfig::network_spec() const {
  return nn::NetworkSpec::dqn(conv1_filters, conv2_filters, conv3_filters, dense_units);
}

std::string to_key_value(const TrainConfig& config) {
  std::ostringstream out;
  for (const auto& f : kFields) {
    out << f.name << '=';
    std::visit([&](auto ptr) { out << format_field(config.*ptr); }, f.ptr);
    out << '\n';
  }
  return out.str();
}

bool set_field(TrainConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : kFields) {
    if (key != f.name) continue;
    std::visit([&](auto ptr) { parse_field(config.*ptr, key, value); }, f.ptr);
    return true;
  }
  return false;
}

int argmax(const QValues& q) {
  int best = 0;
  for (int a = 1; a < sim::kNumActions; ++a) {
    if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)]) best = a;
  }
  return best;
}

double epsilon_at(std::int64_t t, const TrainConfig& cfg) {
  if (t < cfg.observe_steps) return 1.0;
  if (t >= cfg.explore_until) return cfg.eps_final;
  const double frac =
      static_cast<double>(t - cfg.observe_steps) / static_cast<double>(cfg.explore_until - cfg.observe_steps);
  return cfg.eps_initial + frac * (cfg.eps_final - cfg.eps_initial);
}

sim::Action select_action(const QValues& q, double eps, Prng& prng) {
  if (prng.uniform() < eps) return sim::action_from_index(static_cast<int>(prng.next() % sim::kNumActions));
  return sim::action_from_index(argmax(q));
}

double dqn_target(double r, bool terminal, const QValues& q_next, double gamma) {
  if (terminal) return r;
  return r + gamma * q_next[static_cast<std::size_t>(argmax(q_next))];
}

double esarsa_target(double r, bool terminal, const QValues& q_next, double eps, double gamma, Expectation mode) {
  if (terminal) return r;
  const double expected = mode == Expectation::EpsGreedy ? eps_greedy_expectation(q_next, eps)
                                                         : (q_next[0] + q_next[1]) / sim::kNumActions;
  return r + gamma * expected;
}

double ddqn_target(double r, bool terminal, const QValues& q_next_online, const QValues& q_next_target,
                   double gamma) {
  if (terminal) return r;
  return r + gamma * q_next_target[static_cast<std::size_t>(argmax(q_next_online))];
}

Agent Agent::create(AgentKind kind, const TrainConfig& cfg, std::uint64_t init_seed) {
  Agent a{kind, nn::QNetwork<float>::initialized(cfg.network_spec(), init_seed), std::nullopt, {}, 0};
  a.adam = nn::AdamState<float>::for_network(a.online);
  if (kind == AgentKind::Ddqn) a.target = nn::clone_weights(a.online);
  return a;
}

nn::Tensor<float> make_batch(std::span<const raster::Observation* const> observations) {
  constexpr int per = raster::kFramePixels * raster::kStackDepth;
  nn::Tensor<float> batch(
      {static_cast<int>(observations.size()), raster::kFrameHeight, raster::kFrameWidth, raster::kStackDepth});
  for (std::size_t b = 0; b < observations.size(); ++b) observations[b]->write_hwc(batch.data() + b * per);
  return batch;
}

QValues q_values(const nn::QNetwork<float>& net, const raster::Observation& obs) {
  const raster::Observation* one[] = {&obs};
  const auto q = net.forward(make_batch(one));
  return {q[0], q[1]};
}

double agent_train_batch(Agent& agent, const replay::ReplayBuffer& buf, const TrainConfig& cfg, Prng& prng,
                         double behavior_eps) {
  const auto idx = buf.sample_indices(static_cast<std::size_t>(cfg.batch_size), prng);
  std::vector<const replay::Transition*> batch;
  std::vector<const raster::Observation*> states, next_states;
  for (auto i : idx) {
    const auto& t = buf.at(i);
    batch.push_back(&t);
    states.push_back(&t.obs);
    next_states.push_back(&t.next_obs);
  }
  const auto next = make_batch(next_states);
  const auto q_online = agent.online.forward(next);
  nn::Tensor<float> q_target;
  if (agent.kind == AgentKind::Ddqn) q_target = agent.target->forward(next);

  std::vector<float> targets(batch.size());
  std::vector<int> actions(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& t = *batch[b];
    const QValues qn{q_online.at(b, 0), q_online.at(b, 1)};
    double y = 0;
    switch (agent.kind) {
      case AgentKind::Dqn:
        y = dqn_target(t.reward, t.terminal, qn, cfg.gamma);
        break;
      case AgentKind::Ddqn:
        y = ddqn_target(t.reward, t.terminal, qn, QValues{q_target.at(b, 0), q_target.at(b, 1)}, cfg.gamma);
        break;
      case AgentKind::ESarsa:
        y = esarsa_target(t.reward, t.terminal, qn, behavior_eps, cfg.gamma, cfg.esarsa_expectation);
        break;
    }
    targets[b] = static_cast<float>(y);
    actions[b] = sim::index_of(t.action);
  }

  const double loss =
      nn::train_step<float>(agent.online, agent.adam, make_batch(states), targets, actions, cfg.lr);
  ++agent.train_steps;
  if (agent.kind == AgentKind::Ddqn &&
      agent.train_steps % static_cast<std::uint64_t>(cfg.target_sync_period) == 0) {
    agent.target = nn::clone_weights(agent.online);
  }
  return loss;
}

}  // namespace dino::agents
