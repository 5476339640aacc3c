#include <fstream>
#include <istream>

#include "dino/cli.hpp"
#include "dino/errors.hpp"
#include "dino/kv.hpp"

namespace dino::cli {

RunConfig parse_config(std::istream& in, const std::string& source) {
  RunConfig cfg;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto where = source + ":" + std::to_string(line_no);
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = kv::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key=value, got '" + std::string(line) + "'");
    const std::string key(kv::trim(line.substr(0, eq)));
    const std::string value(kv::trim(line.substr(eq + 1)));
    try {
      if (!agents::set_field(cfg.train, key, value) && !sim::set_field(cfg.env, key, value)) {
        throw ConfigError("unknown key '" + key + "'");
      }
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  try {
    cfg.train.validate();
    cfg.env.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  return parse_config(in, path);
}

}  // namespace dino::cli
