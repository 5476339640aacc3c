#include "dino/cli.hpp"

#include <CLI11.hpp>
#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dino/binio.hpp"
#include "dino/errors.hpp"
#include "dino/harness.hpp"
#include "dino/nn/serialize.hpp"
#include "dino/raster.hpp"

namespace dino::cli {

namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_interrupt(int) { g_interrupted.store(true); }

struct TrainArgs {
  std::string agent;
  std::uint64_t seed = 0;
  std::int64_t timesteps = 0;
  std::string out_dir;
  std::string config_path;
  std::int64_t checkpoint_every = 10000;
};

struct EvalArgs {
  std::string weights;
  std::uint64_t seed = 0;
  int episodes = 0;
  std::string out;
  std::string config_path;
};

struct CompareArgs {
  std::vector<std::string> run_dirs;
  std::string out;
};

struct RenderArgs {
  std::string weights;
  std::uint64_t seed = 0;
  std::int64_t ticks = 0;
  std::string out_dir;
  std::string config_path;
};

RunConfig config_or_default(const std::string& path) { return path.empty() ? RunConfig{} : load_config(path); }

// A weights file, or a checkpoint whose online network is used.
nn::QNetwork<float> load_policy_weights(const std::string& path) {
  const auto bytes = binio::read_file(path);
  const bool is_checkpoint =
      bytes.size() >= sizeof harness::kCheckpointMagic &&
      std::equal(std::begin(harness::kCheckpointMagic), std::end(harness::kCheckpointMagic), bytes.begin());
  if (is_checkpoint) return harness::decode_checkpoint(bytes).agent.online;
  return nn::decode_weights(bytes);
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string render_summary_csv(std::span<const harness::SummaryRow> rows) {
  std::ostringstream s;
  harness::write_summary_csv(s, rows);
  return s.str();
}

int do_train(const TrainArgs& a, std::ostream& out) {
  const auto kind = *agents::parse_agent_kind(a.agent);
  const auto cfg = config_or_default(a.config_path);
  if (a.timesteps <= cfg.train.observe_steps) {
    throw UsageError("--timesteps must exceed observe_steps (" + std::to_string(cfg.train.observe_steps) + ")");
  }

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  write_text_file(dir / "config.txt", agents::to_key_value(cfg.train) + sim::to_key_value(cfg.env));
  std::ofstream metrics(dir / "metrics.csv", std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot open " + (dir / "metrics.csv").string());
  metrics << harness::kMetricsHeader << '\n';

  harness::Trainer trainer(kind, a.seed, cfg.train, cfg.env);
  const auto ckpt_path = (dir / "checkpoint.bin").string();
  auto finish = [&] {
    metrics.flush();
    harness::checkpoint_save(ckpt_path, trainer.checkpoint());
    nn::save_weights(trainer.agent().online, (dir / "weights.bin").string());
    const auto summary = harness::summarize(dir.filename().string(), trainer.log());
    write_text_file(dir / "summary.csv", render_summary_csv(std::span(&summary, 1)));
    std::ostringstream epochs;
    const auto scores = trainer.log().episode_scores();
    harness::write_epochs_csv(epochs, harness::epoch_averages(scores));
    write_text_file(dir / "epochs.csv", epochs.str());
    return summary;
  };

  g_interrupted.store(false);
  auto previous = std::signal(SIGINT, on_interrupt);
  try {
    while (trainer.timestep() < a.timesteps && !g_interrupted.load()) {
      const auto next_stop = a.checkpoint_every > 0
                                 ? std::min(a.timesteps, (trainer.timestep() / a.checkpoint_every + 1) * a.checkpoint_every)
                                 : a.timesteps;
      trainer.run(next_stop, &metrics, &g_interrupted);
      if (trainer.timestep() < a.timesteps && !g_interrupted.load()) {
        harness::checkpoint_save(ckpt_path, trainer.checkpoint());
      }
    }
  } catch (...) {
    metrics.flush();
    std::signal(SIGINT, previous);
    throw;
  }
  std::signal(SIGINT, previous);

  const auto summary = finish();
  const std::span<const harness::SummaryRow> rows(&summary, 1);
  out << harness::render_summary_table(rows);
  if (g_interrupted.load()) out << "interrupted at timestep " << trainer.timestep() << '\n';
  return kExitOk;
}

int do_eval(const EvalArgs& a, std::ostream& out) {
  const auto cfg = config_or_default(a.config_path);
  const auto weights = load_policy_weights(a.weights);
  const auto scores = harness::evaluate_greedy(weights, a.seed, a.episodes, cfg.env);
  std::ostringstream text;
  text << "episode,score\n";
  double sum = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    text << i << ',' << scores[i] << '\n';
    sum += static_cast<double>(scores[i]);
  }
  write_text_file(a.out, text.str());
  out << "mean score " << sum / static_cast<double>(scores.size()) << " over " << scores.size() << " episodes\n";
  return kExitOk;
}

int do_compare(const CompareArgs& a, std::ostream& out) {
  std::vector<harness::MetricsLog> logs;
  std::vector<harness::NamedLog> named;
  logs.reserve(a.run_dirs.size());
  for (const auto& d : a.run_dirs) {
    logs.push_back(harness::read_metrics_file((fs::path(d) / "metrics.csv").string()));
  }
  for (std::size_t i = 0; i < logs.size(); ++i) {
    auto name = fs::path(a.run_dirs[i]).lexically_normal().filename().string();
    if (name.empty()) name = fs::path(a.run_dirs[i]).lexically_normal().parent_path().filename().string();
    named.push_back({name, &logs[i]});
  }
  const auto rows = harness::compare_runs(named);
  out << harness::render_summary_table(rows);
  if (!a.out.empty()) write_text_file(a.out, render_summary_csv(rows));
  return kExitOk;
}

int do_render(const RenderArgs& a, std::ostream& out) {
  const auto cfg = config_or_default(a.config_path);
  const auto weights = load_policy_weights(a.weights);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);

  auto game = sim::new_env(a.seed, cfg.env);
  auto frame = raster::render_frame(game, cfg.env);
  auto obs = raster::init_stack(frame);
  bool first = true;
  for (std::int64_t tick = 0; tick < a.ticks; ++tick) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06lld.pgm", static_cast<long long>(tick));
    raster::write_pgm((dir / name).string(), frame);
    const auto action =
        first ? sim::Action::Noop : sim::action_from_index(agents::argmax(agents::q_values(weights, obs)));
    first = false;
    sim::step_inplace(game, action, cfg.env);
    if (!game.alive) {
      out << "episode ended with score " << game.score << " at frame " << tick << '\n';
      game = sim::reset(game, cfg.env);
      first = true;
      frame = raster::render_frame(game, cfg.env);
      obs = raster::init_stack(frame);
    } else {
      frame = raster::render_frame(game, cfg.env);
      obs = raster::push_frame(obs, frame);
    }
  }
  out << "wrote " << a.ticks << " frames to " << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dino Run simulator and deep TD-learning agents", "dino"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train an agent; writes metrics, checkpoint and summary");
  train_cmd->add_option("--agent", train.agent, "dqn, ddqn or esarsa")
      ->required()
      ->check(CLI::IsMember({"dqn", "ddqn", "esarsa"}));
  train_cmd->add_option("--seed", train.seed, "Run seed")->required();
  train_cmd->add_option("--timesteps", train.timesteps, "Total environment timesteps")
      ->required()
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--out", train.out_dir, "Output directory")->required();
  train_cmd->add_option("--config", train.config_path, "key=value config file");
  train_cmd->add_option("--checkpoint-every", train.checkpoint_every, "Timesteps between checkpoints (0 = end only)")
      ->check(CLI::NonNegativeNumber);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Greedy evaluation of saved weights");
  eval_cmd->add_option("--weights", eval.weights, "Weight file or checkpoint")->required();
  eval_cmd->add_option("--seed", eval.seed, "Environment seed")->required();
  eval_cmd->add_option("--episodes", eval.episodes, "Episode count")->required()->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", eval.out, "Score list output (CSV)")->required();
  eval_cmd->add_option("--config", eval.config_path, "key=value config file");

  CompareArgs compare;
  auto* compare_cmd = app.add_subcommand("compare", "Summary table over training runs");
  compare_cmd->add_option("run_dirs", compare.run_dirs, "Run directories")->required();
  compare_cmd->add_option("--out", compare.out, "Write the merged summary CSV here");

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render-rollout", "Write one PGM per tick of a greedy rollout");
  render_cmd->add_option("--weights", render.weights, "Weight file or checkpoint")->required();
  render_cmd->add_option("--seed", render.seed, "Environment seed")->required();
  render_cmd->add_option("--ticks", render.ticks, "Frames to write")->required()->check(CLI::PositiveNumber);
  render_cmd->add_option("--out-dir", render.out_dir, "Frame directory")->required();
  render_cmd->add_option("--config", render.config_path, "key=value config file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return do_train(train, out);
    if (*eval_cmd) return do_eval(eval, out);
    if (*compare_cmd) return do_compare(compare, out);
    if (*render_cmd) return do_render(render, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericFault& e) {
    err << "numeric fault in layer " << e.layer() << ": " << e.what() << '\n';
    return kExitFault;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFault;
  }
  return kExitUsage;
}

}  // namespace dino::cli
