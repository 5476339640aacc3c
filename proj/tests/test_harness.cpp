#include <doctest.h>

#include <sstream>

#include "dino/binio.hpp"
#include "dino/errors.hpp"
#include "dino/harness.hpp"
#include "dino/nn/serialize.hpp"
#include "test_support.hpp"

using namespace dino;
using namespace dino::harness;

namespace {

agents::TrainConfig quick_config() {
  agents::TrainConfig c;
  c.conv1_filters = 4;
  c.conv2_filters = 8;
  c.conv3_filters = 8;
  c.dense_units = 16;
  c.batch_size = 4;
  c.observe_steps = 50;
  c.explore_until = 300;
  c.replay_capacity = 400;
  c.target_sync_period = 25;
  return c;
}

std::string metrics_text(const MetricsLog& log) {
  std::ostringstream out;
  write_metrics_csv(out, log);
  return out.str();
}

MetricsLog log_from(const std::string& csv) {
  std::istringstream in(csv);
  return parse_metrics_csv(in);
}

// Two finished episodes, lengths 3 and 5 with scores 3 and 5, then one
// unfinished step.
const char* kTwoEpisodes =
    "t,episode,epsilon,loss,score,event\n"
    "0,0,1,,1,step\n"
    "1,0,1,,2,step\n"
    "2,0,1,,3,death\n"
    "3,1,1,,1,step\n"
    "4,1,1,,2,step\n"
    "5,1,1,,3,step\n"
    "6,1,1,,4,step\n"
    "7,1,1,,5,death\n"
    "8,2,1,,1,step\n";

}  // namespace

TEST_CASE("epoch_averages: windows of ten") {
  const std::vector<std::int64_t> constant(20, 7);
  const auto e = epoch_averages(constant);
  REQUIRE(e.size() == 2);
  CHECK(e[0].mean_score == 7.0);
  CHECK(e[1].mean_score == 7.0);
  CHECK_FALSE(e[1].partial);

  const std::vector<std::int64_t> one_to_ten{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(epoch_averages(one_to_ten)[0].mean_score == 5.5);

  std::vector<std::int64_t> twelve(12, 1);
  twelve[10] = 4;
  const auto p = epoch_averages(twelve);
  REQUIRE(p.size() == 2);
  CHECK_FALSE(p[0].partial);
  CHECK(p[0].count == 10);
  CHECK(p[1].partial);
  CHECK(p[1].count == 2);
  CHECK(p[1].mean_score == 2.5);
  CHECK(epoch_averages({}).empty());
}

TEST_CASE("property: epoch k depends only on its own ten episodes") {
  Prng p(5);
  std::vector<std::int64_t> scores(57);
  for (auto& s : scores) s = static_cast<std::int64_t>(p.next() % 500);
  const auto base = epoch_averages(scores);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto changed = scores;
    changed[i] += 1000;
    const auto e = epoch_averages(changed);
    for (std::size_t k = 0; k < e.size(); ++k) {
      if (k == i / 10) {
        CHECK(e[k].mean_score != base[k].mean_score);
      } else {
        CHECK(e[k].mean_score == base[k].mean_score);
      }
    }
  }
}

TEST_CASE("metrics file parse rebuilds episodes") {
  const auto log = log_from(kTwoEpisodes);
  CHECK(log.total_timesteps() == 9);
  REQUIRE(log.episodes.size() == 2);
  CHECK(log.episodes[0] == EpisodeRow{0, 3, 3, 3});
  CHECK(log.episodes[1] == EpisodeRow{1, 5, 5, 8});
  CHECK(log.partial_episode_length() == 1);
  CHECK(metrics_text(log) == kTwoEpisodes);

  CHECK_THROWS(log_from("t,episode\n"));
  CHECK_THROWS(log_from(std::string(kMetricsHeader) + "\n0,0,1,,1,jump\n"));
  CHECK_THROWS(log_from(std::string(kMetricsHeader) + "\n0,0,1,,1,step\n2,0,1,,2,step\n"));
}

TEST_CASE("compare_runs: lengths 3 and 5, scores 3 and 5") {
  const auto log = log_from(kTwoEpisodes);
  const auto row = summarize("a", log);
  REQUIRE(row.max_score.has_value());
  CHECK(*row.max_score == 5);
  CHECK(row.episodes == 2);
  CHECK(row.avg_episode_length == 4.0);
  CHECK(row.timestep == 8);
  CHECK(row.total_timesteps == 9);
  CHECK(row.score_per_timestep == 5.0 / 8.0);

  const auto empty = summarize("e", log_from("t,episode,epsilon,loss,score,event\n0,0,1,,1,step\n"));
  CHECK(empty.episodes == 0);
  CHECK_FALSE(empty.max_score.has_value());
  CHECK(empty.score_per_timestep == 0.0);

  const NamedLog named[] = {{"a", &log}, {"b", &log}};
  CHECK(compare_runs(named).size() == 2);
}

TEST_CASE("reference comparison values parse and render") {
  const std::string csv =
      "run,timestep,max_score,episodes,avg_episode_length,total_timesteps,score_per_timestep\n"
      "SARSA,300990,405,4114,73.16,300990,0.0013455596531446228\n"
      "DQN,429400,2351,2295,187.10,429400,0.005475081509082441\n"
      "DDQN,260861,2800,2647,98.54,260861,0.010733686676045863\n";
  std::istringstream in(csv);
  const auto rows = parse_summary_csv(in);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].run == "SARSA");
  CHECK(*rows[0].max_score == 405);
  CHECK(rows[0].timestep == 300990);
  CHECK(rows[0].episodes == 4114);
  CHECK(rows[0].avg_episode_length == 73.16);
  CHECK(*rows[1].max_score == 2351);
  CHECK(rows[1].timestep == 429400);
  CHECK(rows[1].episodes == 2295);
  CHECK(rows[1].avg_episode_length == 187.10);
  CHECK(*rows[2].max_score == 2800);
  CHECK(rows[2].timestep == 260861);
  CHECK(rows[2].episodes == 2647);
  CHECK(rows[2].avg_episode_length == 98.54);

  const auto table = render_summary_table(rows);
  std::istringstream lines(table);
  std::string header, line;
  std::getline(lines, header);
  for (const char* col : {"Timestep", "Max Score", "No. of Episodes", "Average length of episode"}) {
    CHECK(header.find(col) != std::string::npos);
  }
  std::vector<std::string> body;
  while (std::getline(lines, line)) body.push_back(line);
  REQUIRE(body.size() == 3);
  for (const char* cell : {"SARSA", "300990", "405", "4114", "73.16"}) CHECK(body[0].find(cell) != std::string::npos);
  for (const char* cell : {"DQN", "429400", "2351", "2295", "187.10"}) CHECK(body[1].find(cell) != std::string::npos);
  for (const char* cell : {"DDQN", "260861", "2800", "2647", "98.54"}) CHECK(body[2].find(cell) != std::string::npos);

  std::ostringstream again;
  write_summary_csv(again, rows);
  std::istringstream back(again.str());
  const auto reparsed = parse_summary_csv(back);
  REQUIRE(reparsed.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(reparsed[i].run == rows[i].run);
    CHECK(reparsed[i].max_score == rows[i].max_score);
    CHECK(reparsed[i].avg_episode_length == rows[i].avg_episode_length);
    CHECK(reparsed[i].score_per_timestep == rows[i].score_per_timestep);
  }
}

TEST_CASE("run_training: one batch when max_timesteps is observe_steps + 1") {
  const auto cfg = quick_config();
  Trainer trainer(agents::AgentKind::Dqn, 1, cfg);
  trainer.run(cfg.observe_steps + 1);
  CHECK(trainer.batches_trained() == 1);
  int with_loss = 0;
  for (const auto& row : trainer.log().steps) with_loss += row.loss.has_value();
  CHECK(with_loss == 1);
  CHECK(trainer.log().steps.back().loss.has_value());
  CHECK(trainer.agent().train_steps == 1);
}

TEST_CASE("property: schedule and timestep conservation along a run") {
  const auto cfg = quick_config();
  for (auto kind : {agents::AgentKind::Dqn, agents::AgentKind::Ddqn, agents::AgentKind::ESarsa}) {
    Trainer trainer(kind, 3, cfg);
    for (int i = 0; i < 400; ++i) {
      const auto& row = trainer.step();
      CHECK(row.loss.has_value() == (row.t >= cfg.observe_steps));
      CHECK(row.epsilon == agents::epsilon_at(row.t, cfg));
      const auto& log = trainer.log();
      std::int64_t sum = 0;
      for (const auto& e : log.episodes) sum += e.length;
      REQUIRE(sum + log.partial_episode_length() == trainer.timestep());
    }
    CHECK(trainer.batches_trained() == 400u - static_cast<std::uint64_t>(cfg.observe_steps));
    CHECK(trainer.replay().size() == 400u);
    CHECK(trainer.log().episodes.size() >= 2u);
  }
}

TEST_CASE("run_training: identical inputs give identical metrics") {
  const auto cfg = quick_config();
  for (auto kind : {agents::AgentKind::Dqn, agents::AgentKind::Ddqn, agents::AgentKind::ESarsa}) {
    std::ostringstream a, b;
    const auto la = run_training(kind, 9, cfg, 250, {}, &a);
    const auto lb = run_training(kind, 9, cfg, 250, {}, &b);
    CHECK(la == lb);
    CHECK(a.str() == b.str());
    CHECK(a.str() == metrics_text(la));
  }
  std::ostringstream other;
  run_training(agents::AgentKind::Dqn, 10, cfg, 250, {}, &other);
  std::ostringstream first;
  run_training(agents::AgentKind::Dqn, 9, cfg, 250, {}, &first);
  CHECK(other.str() != first.str());
}

TEST_CASE("episode start acts NOOP and transitions store the next greedy action") {
  const auto cfg = quick_config();
  Trainer trainer(agents::AgentKind::ESarsa, 4, cfg);
  trainer.run(120);
  const auto& buf = trainer.replay();
  bool start = true;
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const auto& t = buf.at(i);
    if (start) CHECK(t.action == sim::Action::Noop);
    CHECK(t.next_action.has_value() == !t.terminal);
    start = t.terminal;
  }
}

TEST_CASE("checkpoint: round trip and resumed runs agree") {
  testing::TempDir dir("ckpt");
  const auto cfg = quick_config();
  for (auto kind : {agents::AgentKind::Dqn, agents::AgentKind::Ddqn}) {
    Trainer trainer(kind, 21, cfg);
    trainer.run(150);
    const auto ckpt = trainer.checkpoint();
    const auto bytes = encode_checkpoint(ckpt);
    CHECK(decode_checkpoint(bytes) == ckpt);
    checkpoint_save(dir.file("c.bin"), ckpt);
    CHECK(binio::read_file(dir.file("c.bin")) == bytes);
    const auto loaded = checkpoint_load(dir.file("c.bin"));
    CHECK(loaded == ckpt);
    CHECK(encode_checkpoint(loaded) == bytes);

    Trainer from_memory(ckpt), from_disk(loaded);
    CHECK(from_disk.timestep() == 150);
    CHECK(from_disk.training_starts_at() == 150 + cfg.observe_steps);
    std::ostringstream a, b;
    from_memory.run(250, &a);
    from_disk.run(250, &b);
    CHECK(a.str() == b.str());
    CHECK(from_memory.log() == from_disk.log());
    CHECK(from_memory.checkpoint() == from_disk.checkpoint());
    CHECK(from_disk.log().start_t == 150);
    CHECK(from_disk.log().steps.front().t == 150);
  }
}

TEST_CASE("checkpoint: corruption is reported with offsets") {
  const auto cfg = quick_config();
  Trainer trainer(agents::AgentKind::Ddqn, 2, cfg);
  trainer.run(60);
  const auto bytes = encode_checkpoint(trainer.checkpoint());

  auto magic = bytes;
  magic[0] = 'X';
  try {
    (void)decode_checkpoint(magic);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }

  auto v2 = bytes;
  v2[6] = 0x02;
  CHECK_THROWS_AS((void)decode_checkpoint(v2), UnsupportedVersion);

  for (std::size_t cut : {std::size_t{4}, std::size_t{20}, bytes.size() / 3, bytes.size() - 3}) {
    const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    try {
      (void)decode_checkpoint(part);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CAPTURE(cut);
      CHECK(e.offset() == cut);
    }
  }
  auto extra = bytes;
  extra.push_back(1);
  CHECK_THROWS_AS((void)decode_checkpoint(extra), FormatError);
}

TEST_CASE("evaluate_greedy: zero weights act NOOP and die at the first jump-mandatory obstacle") {
  const nn::QNetwork<float> zero(quick_config().network_spec());
  const auto scores = evaluate_greedy(zero, 11, 3);
  REQUIRE(scores.size() == 3);

  // Replay the same stream with a hand NOOP policy.
  sim::EnvConfig c;
  auto game = sim::new_env(11, c);
  for (int e = 0; e < 3; ++e) {
    if (e > 0) game = sim::reset(game, c);
    while (game.alive) {
      sim::step_inplace(game, sim::Action::Noop, c);
    }
    CHECK(scores[static_cast<std::size_t>(e)] == game.score);
  }
  CHECK(scores[0] == sim::random_policy_survival(11, 0, c, 0.0));
  CHECK(evaluate_greedy(zero, 11, 3) == scores);
}

TEST_CASE("evaluate_policy: episode cap and determinism") {
  const Policy scripted = [](const sim::GameState& g, const raster::Observation&) {
    return sim::scripted_action(g, sim::EnvConfig{}, 8);
  };
  const auto capped = evaluate_policy(scripted, 0, 2, {}, 300);
  CHECK(capped[0] == 300);
  CHECK(evaluate_random(5, 6, 4) == evaluate_random(5, 6, 4));
}
