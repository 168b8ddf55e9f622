#include <fstream>
#include "json.hpp"

#include "physgnn/binary_io.hpp"
#include "physgnn/datagen.hpp"

namespace physgnn::datagen {

namespace {
constexpr char kMagic[8] = {'P', 'G', 'N', 'N', 'D', 'S', '0', '1'};
}

void write_samples(const std::string& path, const std::vector<GraphSample>& samples, std::size_t node_count) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out.write(kMagic, sizeof kMagic);
  io::put_u32(out, kDatasetFormatVersion);
  io::put_u64(out, node_count);
  io::put_u32(out, kFeatureWidth);
  io::put_u32(out, kLabelWidth);
  io::put_u64(out, samples.size());
  for (const auto& s : samples) {
    if (s.node_count != node_count || s.features.size() != node_count * kFeatureWidth ||
        s.labels.size() != node_count * kLabelWidth)
      throw InputError("sample " + std::to_string(s.provenance.sample_id) + " row count does not match node count");
    const auto& p = s.provenance;
    io::put_u64(out, p.sample_id);
    for (int v : {p.dataset_id, p.selection_id, p.direction_id, p.time_step, p.step_count}) io::put_i32(out, v);
    io::put_u32(out, static_cast<std::uint32_t>(p.load_nodes.size()));
    for (auto n : p.load_nodes) io::put_i32(out, n);
    io::put_f64s(out, s.features);
    io::put_f64s(out, s.labels);
  }
  if (!out) throw InputError("write failed for " + path);
}

std::vector<GraphSample> read_samples(const std::string& path, std::shared_ptr<const mesh::MeshGraph> graph) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kMagic))
    throw InputError(path + " is not a dataset container");
  const auto version = io::get_u32(in);
  if (version != kDatasetFormatVersion)
    throw InputError(path + ": unsupported dataset format version " + std::to_string(version));
  const auto nodes = io::get_u64(in);
  const auto fw = io::get_u32(in);
  const auto lw = io::get_u32(in);
  if (fw != kFeatureWidth || lw != kLabelWidth) throw InputError(path + ": unexpected feature/label width");
  if (graph && graph->node_count() != nodes) throw InputError(path + ": node count does not match the mesh graph");
  const auto count = io::get_u64(in);
  std::vector<GraphSample> samples;
  samples.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    GraphSample s;
    s.graph = graph;
    s.node_count = nodes;
    auto& p = s.provenance;
    p.sample_id = io::get_u64(in);
    p.dataset_id = io::get_i32(in);
    p.selection_id = io::get_i32(in);
    p.direction_id = io::get_i32(in);
    p.time_step = io::get_i32(in);
    p.step_count = io::get_i32(in);
    const auto l = io::get_u32(in);
    if (l > nodes) throw InputError(path + ": load node count exceeds node count");
    p.load_nodes.resize(l);
    for (auto& n : p.load_nodes) n = io::get_i32(in);
    s.features = io::get_f64s(in, nodes * kFeatureWidth);
    s.labels = io::get_f64s(in, nodes * kLabelWidth);
    samples.push_back(std::move(s));
  }
  return samples;
}

std::string manifest_to_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["format_version"] = kDatasetFormatVersion;
  j["sample_count"] = m.sample_count;
  j["seed"] = m.seed;
  j["split_mode"] = m.mode == SplitMode::shuffle ? "shuffle" : "node_holdout";
  j["counts"] = {{"train", m.count(Split::train)},
                 {"validation", m.count(Split::validation)},
                 {"test", m.count(Split::test)}};
  std::string assignment;
  for (auto s : m.assignment) assignment.push_back(static_cast<char>('0' + static_cast<int>(s)));
  j["assignment"] = assignment;
  j["oracle"] = m.oracle_snapshot.empty() ? nlohmann::ordered_json::object()
                                          : nlohmann::ordered_json::parse(m.oracle_snapshot);
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("manifest is not valid JSON: ") + e.what());
  }
  DatasetManifest m;
  try {
    if (j.at("format_version").get<std::uint32_t>() != kDatasetFormatVersion)
      throw InputError("unsupported manifest version");
    m.sample_count = j.at("sample_count").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.mode = j.at("split_mode").get<std::string>() == "node_holdout" ? SplitMode::node_holdout : SplitMode::shuffle;
    const auto a = j.at("assignment").get<std::string>();
    if (a.size() != m.sample_count) throw InputError("manifest assignment length does not match sample count");
    for (char c : a) {
      if (c < '0' || c > '2') throw InputError("manifest assignment has invalid split code");
      m.assignment.push_back(static_cast<Split>(c - '0'));
    }
    if (j.contains("oracle")) m.oracle_snapshot = j["oracle"].dump();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("manifest missing field: ") + e.what());
  }
  return m;
}

}  // namespace physgnn::datagen
