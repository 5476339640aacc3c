#include <ostream>

#include "dino/harness.hpp"

namespace dino::harness {

namespace {

constexpr std::int64_t kFlushEvery = 1000;

}  // namespace

RunSeeds RunSeeds::from(std::uint64_t seed) {
  Prng root(seed);
  RunSeeds s{};
  s.env = root.next();
  s.agent = root.next();
  s.init = root.next();
  return s;
}

Trainer::Trainer(agents::AgentKind kind, std::uint64_t seed, agents::TrainConfig cfg, sim::EnvConfig env_cfg)
    : kind_(kind),
      seed_(seed),
      cfg_(std::move(cfg)),
      env_cfg_(std::move(env_cfg)),
      replay_(static_cast<std::size_t>(cfg_.replay_capacity)) {
  cfg_.validate();
  const auto seeds = RunSeeds::from(seed);
  agent_ = agents::Agent::create(kind, cfg_, seeds.init);
  game_ = sim::new_env(seeds.env, env_cfg_);
  agent_prng_ = Prng(seeds.agent);
  observe_until_ = cfg_.observe_steps;
}

Trainer::Trainer(const Checkpoint& c)
    : kind_(c.kind),
      seed_(c.seed),
      cfg_(c.train),
      env_cfg_(c.env),
      agent_(c.agent),
      replay_(static_cast<std::size_t>(c.train.replay_capacity)) {
  cfg_.validate();
  game_ = sim::new_env(c.env_prng, env_cfg_);
  agent_prng_ = Prng(c.agent_prng);
  t_ = c.t;
  episode_ = c.episodes;
  episode_begin_t_ = c.t;
  observe_until_ = c.t + cfg_.observe_steps;
  log_.start_t = c.t;
}

double Trainer::current_epsilon() const {
  return t_ < observe_until_ ? 1.0 : agents::epsilon_at(t_, cfg_);
}

const StepRow& Trainer::step() {
  if (episode_start_) obs_ = raster::init_stack(raster::render_frame(game_, env_cfg_));

  const double eps = current_epsilon();
  sim::Action action = sim::Action::Noop;
  if (!episode_start_) action = agents::select_action(agents::q_values(agent_.online, obs_), eps, agent_prng_);
  episode_start_ = false;

  const auto result = sim::step_inplace(game_, action, env_cfg_);
  auto next_obs = raster::push_frame(obs_, raster::render_frame(game_, env_cfg_));
  std::optional<sim::Action> next_action;
  if (!result.terminal) next_action = sim::action_from_index(agents::argmax(agents::q_values(agent_.online, next_obs)));
  replay_.push(replay::Transition{obs_, action, static_cast<float>(result.reward), next_obs, result.terminal,
                                  next_action});

  StepRow row{t_, episode_, eps, std::nullopt, result.score, result.terminal};
  if (t_ >= observe_until_) {
    row.loss = agents::agent_train_batch(agent_, replay_, cfg_, agent_prng_, eps);
    ++batches_;
  }

  ++t_;
  if (result.terminal) {
    log_.episodes.push_back({episode_, result.score, t_ - episode_begin_t_, t_});
    ++episode_;
    episode_begin_t_ = t_;
    game_ = sim::reset(game_, env_cfg_);
    episode_start_ = true;
  } else {
    obs_ = std::move(next_obs);
  }
  log_.steps.push_back(row);
  return log_.steps.back();
}

void Trainer::run(std::int64_t until, std::ostream* metrics_out, const std::atomic<bool>* stop) {
  while (t_ < until) {
    if (stop && stop->load()) break;
    const auto& row = step();
    if (metrics_out) {
      *metrics_out << format_step_row(row) << '\n';
      if (row.t % kFlushEvery == 0) metrics_out->flush();
    }
  }
  if (metrics_out) metrics_out->flush();
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.kind = kind_;
  c.seed = seed_;
  c.train = cfg_;
  c.env = env_cfg_;
  c.agent = agent_;
  c.t = t_;
  c.episodes = episode_;
  c.env_prng = game_.prng;
  c.agent_prng = agent_prng_.state();
  return c;
}

MetricsLog run_training(agents::AgentKind kind, std::uint64_t seed, const agents::TrainConfig& cfg,
                        std::int64_t max_timesteps, const sim::EnvConfig& env_cfg, std::ostream* metrics_out) {
  Trainer trainer(kind, seed, cfg, env_cfg);
  if (metrics_out) *metrics_out << kMetricsHeader << '\n';
  trainer.run(max_timesteps, metrics_out);
  return trainer.log();
}

std::vector<std::int64_t> evaluate_policy(const Policy& policy, std::uint64_t seed, int episodes,
                                          const sim::EnvConfig& env_cfg, std::int64_t max_episode_ticks) {
  std::vector<std::int64_t> scores;
  sim::GameState game = sim::new_env(seed, env_cfg);
  for (int e = 0; e < episodes; ++e) {
    if (e > 0) game = sim::reset(game, env_cfg);
    auto obs = raster::init_stack(raster::render_frame(game, env_cfg));
    bool first = true;
    while (game.alive && game.tick < max_episode_ticks) {
      const auto action = first ? sim::Action::Noop : policy(game, obs);
      first = false;
      sim::step_inplace(game, action, env_cfg);
      obs = raster::push_frame(obs, raster::render_frame(game, env_cfg));
    }
    scores.push_back(game.score);
  }
  return scores;
}

std::vector<std::int64_t> evaluate_greedy(const nn::QNetwork<float>& weights, std::uint64_t seed, int episodes,
                                          const sim::EnvConfig& env_cfg, std::int64_t max_episode_ticks) {
  const Policy greedy = [&](const sim::GameState&, const raster::Observation& obs) {
    return sim::action_from_index(agents::argmax(agents::q_values(weights, obs)));
  };
  return evaluate_policy(greedy, seed, episodes, env_cfg, max_episode_ticks);
}

std::vector<std::int64_t> evaluate_random(std::uint64_t seed, std::uint64_t policy_seed, int episodes,
                                          const sim::EnvConfig& env_cfg, double p_jump,
                                          std::int64_t max_episode_ticks) {
  Prng rng(policy_seed);
  const Policy random = [&](const sim::GameState&, const raster::Observation&) {
    return rng.uniform() < p_jump ? sim::Action::Jump : sim::Action::Noop;
  };
  return evaluate_policy(random, seed, episodes, env_cfg, max_episode_ticks);
}

}  // namespace dino::harness
