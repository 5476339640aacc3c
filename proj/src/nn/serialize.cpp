#include "dino/nn/serialize.hpp"

#include <algorithm>
#include <cstring>

#include "dino/binio.hpp"
#include "dino/errors.hpp"

namespace dino::nn {

namespace {

struct RawLayer {
  Shape dims;
  std::uint64_t offset;  // where the dim count was read
  std::vector<float> weight;
  std::vector<float> bias;
};

void read_header(binio::ByteReader& in) {
  auto magic = in.get_raw(sizeof kWeightsMagic, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kWeightsMagic))) {
    throw FormatError(in.offset() - sizeof kWeightsMagic, "bad weight file magic");
  }
  const auto version_offset = in.offset();
  const auto version = in.get_u8();
  if (version != kWeightsVersion) throw UnsupportedVersion(version_offset, version);
}

std::vector<RawLayer> read_layers(binio::ByteReader& in) {
  std::vector<RawLayer> layers;
  while (!in.at_end()) {
    RawLayer raw;
    raw.offset = in.offset();
    const auto rank = in.get_u32();
    if (rank != 2 && rank != 4) in.fail("layer dim count must be 2 or 4, got " + std::to_string(rank));
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = in.get_u32();
      if (d == 0 || d > (1u << 24)) in.fail("implausible layer dimension " + std::to_string(d));
      raw.dims.push_back(static_cast<int>(d));
      count *= d;
    }
    raw.weight.resize(static_cast<std::size_t>(count));
    for (auto& w : raw.weight) w = in.get_f32();
    raw.bias.resize(static_cast<std::size_t>(raw.dims[0]));
    for (auto& b : raw.bias) b = in.get_f32();
    layers.push_back(std::move(raw));
  }
  return layers;
}

QNetwork<float> assemble(const std::vector<RawLayer>& raw, const NetworkSpec& spec, std::uint64_t end_offset) {
  QNetwork<float> net(spec);
  auto& layers = net.layers();
  if (raw.size() != layers.size()) {
    const auto at = raw.size() < layers.size() ? end_offset : raw[layers.size()].offset;
    throw FormatError(at, "weight file holds " + std::to_string(raw.size()) + " layers, network expects " +
                              std::to_string(layers.size()));
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (raw[i].dims != layers[i].weight.shape()) {
      throw FormatError(raw[i].offset, "layer " + layers[i].name + " has shape " + shape_string(raw[i].dims) +
                                           ", expected " + shape_string(layers[i].weight.shape()));
    }
    layers[i].weight.values().assign(raw[i].weight.begin(), raw[i].weight.end());
    layers[i].bias.values().assign(raw[i].bias.begin(), raw[i].bias.end());
  }
  return net;
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const QNetwork<float>& net) {
  binio::ByteWriter out;
  out.put_raw(std::string_view(kWeightsMagic, sizeof kWeightsMagic));
  out.put_u8(kWeightsVersion);
  for (const auto& l : net.layers()) {
    out.put_u32(static_cast<std::uint32_t>(l.weight.rank()));
    for (int d : l.weight.shape()) out.put_u32(static_cast<std::uint32_t>(d));
    for (float w : l.weight.values()) out.put_f32(w);
    for (float b : l.bias.values()) out.put_f32(b);
  }
  return out.take();
}

QNetwork<float> decode_weights(std::span<const std::uint8_t> bytes, const NetworkSpec& spec,
                               std::uint64_t base_offset) {
  binio::ByteReader in(bytes, base_offset);
  read_header(in);
  const auto raw = read_layers(in);
  return assemble(raw, spec, in.offset());
}

QNetwork<float> decode_weights(std::span<const std::uint8_t> bytes, std::uint64_t base_offset) {
  binio::ByteReader in(bytes, base_offset);
  read_header(in);
  const auto raw = read_layers(in);
  if (raw.size() != 5) {
    const auto at = raw.size() < 5 ? in.offset() : raw[5].offset;
    throw FormatError(at, "weight file holds " + std::to_string(raw.size()) + " layers, the conv pyramid has 5");
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].dims.size() != (i < 3 ? 4u : 2u)) {
      throw FormatError(raw[i].offset, "weight file is not a three-conv pyramid; load it with an explicit NetworkSpec");
    }
  }
  const auto spec = NetworkSpec::dqn(raw[0].dims[0], raw[1].dims[0], raw[2].dims[0], raw[3].dims[0]);
  return assemble(raw, spec, in.offset());
}

void save_weights(const QNetwork<float>& net, const std::string& path) {
  binio::write_file_atomic(path, encode_weights(net));
}

QNetwork<float> load_weights(const std::string& path) { return decode_weights(binio::read_file(path)); }

QNetwork<float> load_weights(const std::string& path, const NetworkSpec& spec) {
  return decode_weights(binio::read_file(path), spec);
}

}  // namespace dino::nn
