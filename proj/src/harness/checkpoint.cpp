#include <algorithm>
#include <sstream>

#include "dino/binio.hpp"
#include "dino/harness.hpp"
#include "dino/kv.hpp"
#include "dino/nn/serialize.hpp"

namespace dino::harness {

namespace {

void put_floats(binio::ByteWriter& out, const nn::AlignedVector<float>& values) {
  out.put_u64(values.size());
  for (float v : values) out.put_f32(v);
}

void get_floats(binio::ByteReader& in, nn::AlignedVector<float>& values, const char* what) {
  const auto at = in.offset();
  const auto n = in.get_u64();
  if (n != values.size()) {
    throw FormatError(at, std::string(what) + ": expected " + std::to_string(values.size()) + " values, found " +
                              std::to_string(n));
  }
  for (auto& v : values) v = in.get_f32();
}

void put_blob(binio::ByteWriter& out, const std::vector<std::uint8_t>& blob) {
  out.put_u64(blob.size());
  out.put_raw(blob);
}

nn::QNetwork<float> get_network(binio::ByteReader& in, const nn::NetworkSpec& spec) {
  const auto n = in.get_u64();
  const auto base = in.offset();
  const auto blob = in.get_raw(static_cast<std::size_t>(n), "weight blob");
  return nn::decode_weights(blob, spec, base);
}

// Applies key=value lines from an embedded config echo.
template <class Config>
Config get_config(binio::ByteReader& in, const char* what) {
  const auto at = in.offset();
  const std::string text = in.get_string(what);
  Config cfg;
  std::istringstream lines(text);
  std::string line;
  try {
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos || !set_field(cfg, line.substr(0, eq), line.substr(eq + 1))) {
        throw FormatError(at, std::string("unrecognised ") + what + " entry '" + line + "'");
      }
    }
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(at, std::string(what) + ": " + e.what());
  }
  return cfg;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  binio::ByteWriter out;
  out.put_raw(std::string_view(kCheckpointMagic, sizeof kCheckpointMagic));
  out.put_u8(kCheckpointVersion);
  out.put_u8(static_cast<std::uint8_t>(c.kind));
  out.put_u64(c.seed);
  out.put_string(agents::to_key_value(c.train));
  out.put_string(sim::to_key_value(c.env));
  out.put_u64(static_cast<std::uint64_t>(c.t));
  out.put_u64(static_cast<std::uint64_t>(c.episodes));
  out.put_u64(c.agent.train_steps);
  out.put_u64(c.env_prng);
  out.put_u64(c.agent_prng);
  put_blob(out, nn::encode_weights(c.agent.online));
  out.put_u8(c.agent.target ? 1 : 0);
  if (c.agent.target) put_blob(out, nn::encode_weights(*c.agent.target));
  const auto& adam = c.agent.adam;
  out.put_u64(adam.step);
  out.put_f64(adam.beta1);
  out.put_f64(adam.beta2);
  out.put_f64(adam.eps);
  for (std::size_t i = 0; i < adam.m.size(); ++i) {
    put_floats(out, adam.m[i].weight);
    put_floats(out, adam.m[i].bias);
    put_floats(out, adam.v[i].weight);
    put_floats(out, adam.v[i].bias);
  }
  return out.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  binio::ByteReader in(bytes);
  const auto magic = in.get_raw(sizeof kCheckpointMagic, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kCheckpointMagic))) {
    throw FormatError(0, "bad checkpoint magic");
  }
  const auto version_at = in.offset();
  const auto version = in.get_u8();
  if (version != kCheckpointVersion) throw UnsupportedVersion(version_at, version);

  Checkpoint c;
  const auto kind_at = in.offset();
  const auto kind = in.get_u8();
  if (kind > static_cast<std::uint8_t>(agents::AgentKind::ESarsa)) {
    throw FormatError(kind_at, "unknown agent kind " + std::to_string(kind));
  }
  c.kind = static_cast<agents::AgentKind>(kind);
  c.seed = in.get_u64();
  c.train = get_config<agents::TrainConfig>(in, "train config");
  c.env = get_config<sim::EnvConfig>(in, "env config");
  c.t = static_cast<std::int64_t>(in.get_u64());
  c.episodes = static_cast<std::int64_t>(in.get_u64());
  c.agent.kind = c.kind;
  c.agent.train_steps = in.get_u64();
  c.env_prng = in.get_u64();
  c.agent_prng = in.get_u64();

  const auto spec = c.train.network_spec();
  c.agent.online = get_network(in, spec);
  const auto flag_at = in.offset();
  const auto has_target = in.get_u8();
  if (has_target > 1) throw FormatError(flag_at, "bad target-network flag");
  if ((has_target == 1) != (c.kind == agents::AgentKind::Ddqn)) {
    throw FormatError(flag_at, "target network presence does not match agent kind");
  }
  if (has_target) c.agent.target = get_network(in, spec);

  auto& adam = c.agent.adam;
  adam = nn::AdamState<float>::for_network(c.agent.online);
  adam.step = in.get_u64();
  adam.beta1 = in.get_f64();
  adam.beta2 = in.get_f64();
  adam.eps = in.get_f64();
  for (std::size_t i = 0; i < adam.m.size(); ++i) {
    get_floats(in, adam.m[i].weight, "adam m");
    get_floats(in, adam.m[i].bias, "adam m");
    get_floats(in, adam.v[i].weight, "adam v");
    get_floats(in, adam.v[i].bias, "adam v");
  }
  if (!in.at_end()) in.fail("trailing bytes after checkpoint");
  return c;
}

void checkpoint_save(const std::string& path, const Checkpoint& ckpt) {
  binio::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint checkpoint_load(const std::string& path) { return decode_checkpoint(binio::read_file(path)); }

}  // namespace dino::harness
