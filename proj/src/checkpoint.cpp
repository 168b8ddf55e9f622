#include <cstring>
#include <fstream>
#include <sstream>

#include "physgnn/binary_io.hpp"
#include "physgnn/error.hpp"
#include "physgnn/gnn.hpp"

namespace physgnn::gnn {

namespace {

constexpr char kMagic[8] = {'P', 'G', 'N', 'N', 'C', 'K', '0', '1'};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, sizeof kMagic);
  io::put_u32(out, kCheckpointVersion);
  io::put_string(out, model_config_to_json(c.model.config()));
  io::put_u64(out, c.manifest_hash);
  io::put_u64(out, c.normalization.mean.size());
  io::put_f64s(out, c.normalization.mean);
  io::put_u64(out, c.normalization.scale.size());
  io::put_f64s(out, c.normalization.scale);
  const auto params = c.model.named_parameters();
  io::put_u64(out, params.size());
  for (const auto& p : params) {
    io::put_string(out, p.name);
    io::put_u32(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) io::put_u64(out, d);
    for (double v : p.tensor.values()) io::put_f64(out, v);
  }
  return out.str();
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source) {
  std::istringstream in(bytes, std::ios::binary);
  try {
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
      throw InputError("not a checkpoint file");
    const auto version = io::get_u32(in);
    if (version != kCheckpointVersion)
      throw InputError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    const auto config = model_config_from_json(io::get_string(in));
    c.manifest_hash = io::get_u64(in);
    const std::size_t limit = bytes.size() / 8;
    auto count = io::get_u64(in);
    if (count > limit) throw InputError("corrupt normalization block");
    c.normalization.mean = io::get_f64s(in, count);
    count = io::get_u64(in);
    if (count > limit) throw InputError("corrupt normalization block");
    c.normalization.scale = io::get_f64s(in, count);

    c.model = Model::init(config, 0);
    const auto expected = c.model.named_parameters();
    const auto n = io::get_u64(in);
    if (n != expected.size())
      throw InputError("checkpoint holds " + std::to_string(n) + " tensors, config needs " +
                       std::to_string(expected.size()));
    std::vector<std::vector<double>> values;
    for (const auto& p : expected) {
      const auto name = io::get_string(in, 256);
      if (name != p.name) throw InputError("expected tensor " + p.name + ", found " + name);
      const auto rank = io::get_u32(in);
      if (rank != p.tensor.rank()) throw InputError("tensor " + name + " has the wrong rank");
      for (std::size_t d = 0; d < rank; ++d)
        if (io::get_u64(in) != p.tensor.shape()[d]) throw InputError("tensor " + name + " has the wrong shape");
      values.push_back(io::get_f64s(in, p.tensor.size()));
    }
    c.model.load_values(values);
    return c;
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  const auto bytes = serialize_checkpoint(c);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str(), path);
}

}  // namespace physgnn::gnn
