#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "dino/harness.hpp"
#include "dino/kv.hpp"

namespace dino::harness {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::runtime_error bad_line(const char* what, std::size_t line_no, const std::string& detail) {
  return std::runtime_error(std::string(what) + " line " + std::to_string(line_no) + ": " + detail);
}

template <class T>
T number_at(const std::string& text, const char* column, std::size_t line_no, const char* what) {
  try {
    return kv::parse_number<T>(column, kv::trim(text));
  } catch (const ConfigError& e) {
    throw bad_line(what, line_no, e.what());
  }
}

}  // namespace

std::int64_t MetricsLog::partial_episode_length() const {
  const std::int64_t covered = episodes.empty() ? start_t : episodes.back().end_t;
  return start_t + total_timesteps() - covered;
}

std::vector<std::int64_t> MetricsLog::episode_scores() const {
  std::vector<std::int64_t> s;
  s.reserve(episodes.size());
  for (const auto& e : episodes) s.push_back(e.score);
  return s;
}

std::vector<EpochRow> epoch_averages(std::span<const std::int64_t> scores) {
  std::vector<EpochRow> rows;
  for (std::size_t begin = 0; begin < scores.size(); begin += kEpisodesPerEpoch) {
    const std::size_t end = std::min(scores.size(), begin + kEpisodesPerEpoch);
    double sum = 0;
    for (std::size_t i = begin; i < end; ++i) sum += static_cast<double>(scores[i]);
    const int count = static_cast<int>(end - begin);
    rows.push_back({static_cast<std::int64_t>(rows.size()), sum / count, count, count < kEpisodesPerEpoch});
  }
  return rows;
}

std::string format_step_row(const StepRow& row) {
  std::string s = std::to_string(row.t) + ',' + std::to_string(row.episode) + ',' + kv::format_number(row.epsilon) +
                  ',';
  if (row.loss) s += kv::format_number(*row.loss);
  s += ',' + std::to_string(row.score) + ',' + (row.death ? "death" : "step");
  return s;
}

void write_metrics_csv(std::ostream& out, const MetricsLog& log) {
  out << kMetricsHeader << '\n';
  for (const auto& row : log.steps) out << format_step_row(row) << '\n';
}

MetricsLog parse_metrics_csv(std::istream& in) {
  MetricsLog log;
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || kv::trim(line) != kMetricsHeader) {
    throw bad_line("metrics", line_no, "expected header '" + std::string(kMetricsHeader) + "'");
  }
  std::int64_t episode_begin = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (kv::trim(line).empty()) continue;
    const auto cells = split_csv(std::string(kv::trim(line)));
    if (cells.size() != 6) throw bad_line("metrics", line_no, "expected 6 columns");
    StepRow row;
    row.t = number_at<std::int64_t>(cells[0], "t", line_no, "metrics");
    row.episode = number_at<std::int64_t>(cells[1], "episode", line_no, "metrics");
    row.epsilon = number_at<double>(cells[2], "epsilon", line_no, "metrics");
    if (!cells[3].empty()) row.loss = number_at<double>(cells[3], "loss", line_no, "metrics");
    row.score = number_at<std::int64_t>(cells[4], "score", line_no, "metrics");
    if (cells[5] == "death") {
      row.death = true;
    } else if (cells[5] != "step") {
      throw bad_line("metrics", line_no, "event must be step or death");
    }
    if (log.steps.empty()) {
      log.start_t = row.t;
      episode_begin = row.t;
    } else if (row.t != log.steps.back().t + 1) {
      throw bad_line("metrics", line_no, "timesteps are not consecutive");
    }
    if (row.death) {
      log.episodes.push_back({row.episode, row.score, row.t + 1 - episode_begin, row.t + 1});
      episode_begin = row.t + 1;
    }
    log.steps.push_back(row);
  }
  return log;
}

MetricsLog read_metrics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics file " + path);
  return parse_metrics_csv(in);
}

void write_epochs_csv(std::ostream& out, std::span<const EpochRow> epochs) {
  out << "epoch,mean_score,episodes,partial\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << kv::format_number(e.mean_score) << ',' << e.count << ',' << (e.partial ? 1 : 0) << '\n';
  }
}

SummaryRow summarize(const std::string& run, const MetricsLog& log) {
  SummaryRow row;
  row.run = run;
  row.episodes = static_cast<std::int64_t>(log.episodes.size());
  row.total_timesteps = log.total_timesteps();
  double length_sum = 0;
  for (const auto& e : log.episodes) {
    length_sum += static_cast<double>(e.length);
    if (!row.max_score || e.score > *row.max_score) {
      row.max_score = e.score;
      row.timestep = e.end_t;
    }
  }
  if (row.episodes > 0) row.avg_episode_length = length_sum / static_cast<double>(row.episodes);
  if (row.max_score && row.timestep > 0) {
    row.score_per_timestep = static_cast<double>(*row.max_score) / static_cast<double>(row.timestep);
  }
  return row;
}

std::vector<SummaryRow> compare_runs(std::span<const NamedLog> logs) {
  std::vector<SummaryRow> rows;
  for (const auto& l : logs) rows.push_back(summarize(l.run, *l.log));
  return rows;
}

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows) {
  out << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    out << r.run << ',' << r.timestep << ',' << (r.max_score ? std::to_string(*r.max_score) : "") << ','
        << r.episodes << ',' << kv::format_number(r.avg_episode_length) << ',' << r.total_timesteps << ','
        << kv::format_number(r.score_per_timestep) << '\n';
  }
}

std::vector<SummaryRow> parse_summary_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || kv::trim(line) != kSummaryHeader) {
    throw bad_line("summary", line_no, "expected header '" + std::string(kSummaryHeader) + "'");
  }
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (kv::trim(line).empty()) continue;
    const auto cells = split_csv(std::string(kv::trim(line)));
    if (cells.size() != 7) throw bad_line("summary", line_no, "expected 7 columns");
    SummaryRow r;
    r.run = cells[0];
    r.timestep = number_at<std::int64_t>(cells[1], "timestep", line_no, "summary");
    if (!cells[2].empty()) r.max_score = number_at<std::int64_t>(cells[2], "max_score", line_no, "summary");
    r.episodes = number_at<std::int64_t>(cells[3], "episodes", line_no, "summary");
    r.avg_episode_length = number_at<double>(cells[4], "avg_episode_length", line_no, "summary");
    r.total_timesteps = number_at<std::int64_t>(cells[5], "total_timesteps", line_no, "summary");
    r.score_per_timestep = number_at<double>(cells[6], "score_per_timestep", line_no, "summary");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string render_summary_table(std::span<const SummaryRow> rows) {
  std::size_t name_width = 3;
  for (const auto& r : rows) name_width = std::max(name_width, r.run.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %10s %10s %16s %26s\n", static_cast<int>(name_width), "Run", "Timestep",
                "Max Score", "No. of Episodes", "Average length of episode");
  out += buf;
  for (const auto& r : rows) {
    const std::string max = r.max_score ? std::to_string(*r.max_score) : "-";
    std::snprintf(buf, sizeof buf, "%-*s %10lld %10s %16lld %26.2f\n", static_cast<int>(name_width), r.run.c_str(),
                  static_cast<long long>(r.timestep), max.c_str(), static_cast<long long>(r.episodes),
                  r.avg_episode_length);
    out += buf;
  }
  return out;
}

}  // namespace dino::harness
