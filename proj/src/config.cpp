#include "physgnn/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "physgnn/error.hpp"

namespace physgnn::config {

using nlohmann::json;
using nlohmann::ordered_json;

gnn::ModelConfig ModelSection::resolve() const {
  gnn::ModelConfig c = kinds.empty() ? gnn::ModelConfig::default_config(datagen::kFeatureWidth, width)
                                     : gnn::ModelConfig::stack(kinds, aggregators, datagen::kFeatureWidth, width);
  c.jk = jk;
  c.jk_hidden = jk_hidden;
  c.dropout_p = dropout_p;
  c.validate();
  return c;
}

namespace {

// A JSON object whose keys must all be consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  const json& at(const std::string& key) { return (seen_.insert(key), j_.at(key)); }
  std::string path(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<mesh::BoxSide> parse_sides(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array of box sides");
  std::vector<mesh::BoxSide> out;
  for (const auto& s : j) {
    if (!s.is_string()) throw ConfigError(path + ": expected side names");
    try {
      out.push_back(mesh::parse_box_side(s.get<std::string>()));
    } catch (const InputError& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }
  return out;
}

mesh::Vec3 parse_vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(path + ": expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void parse_mesh(Section s, MeshSource& m) {
  if (s.has("source")) {
    const auto src = s.at("source").get<std::string>();
    if (src == "generate") m.kind = MeshSource::Kind::generate;
    else if (src == "tetgen") m.kind = MeshSource::Kind::tetgen;
    else throw ConfigError(s.path("source") + ": expected generate or tetgen");
  }
  s.read("nx", m.nx);
  s.read("ny", m.ny);
  s.read("nz", m.nz);
  s.read("spacing", m.spacing);
  if (s.has("tumour_box")) {
    const auto& b = s.at("tumour_box");
    if (!b.is_array() || b.size() != 6) throw ConfigError(s.path("tumour_box") + ": expected 6 numbers");
    m.tumour_box = {{b[0], b[1], b[2]}, {b[3], b[4], b[5]}};
  }
  s.read("node", m.node_path);
  s.read("ele", m.ele_path);
  s.finish();
  if (m.kind == MeshSource::Kind::generate && (m.nx < 2 || m.ny < 2 || m.nz < 2 || !(m.spacing > 0)))
    throw ConfigError("mesh: generated grids need nx, ny, nz >= 2 and spacing > 0");
  if (m.kind == MeshSource::Kind::tetgen && (m.node_path.empty() || m.ele_path.empty()))
    throw ConfigError("mesh: tetgen source needs node and ele paths");
}

void parse_material(Section s, fem::Material& m) {
  s.read("density", m.density);
  s.read("youngs_modulus", m.youngs_modulus);
  s.read("poisson_ratio", m.poisson_ratio);
  s.read("alpha", m.alpha);
  s.finish();
  try {
    m.validate();
  } catch (const InputError& e) {
    throw ConfigError(std::string("materials: ") + e.what());
  }
}

void parse_dataset(Section s, DatasetConfig& d) {
  auto& spec = d.spec;
  if (s.has("style")) {
    const auto style = s.at("style").get<std::string>();
    if (style == "single") spec.style = datagen::LoadStyle::single;
    else if (style == "patch") spec.style = datagen::LoadStyle::patch;
    else throw ConfigError(s.path("style") + ": expected single or patch");
  }
  s.read("load_node_count", spec.load_node_count);
  s.read("direction_count", spec.direction_count);
  s.read("step_count", spec.step_count);
  s.read("total_force", spec.total_force);
  s.read("load_nodes", spec.load_nodes);
  if (s.has("load_center")) spec.load_center = parse_vec3(s.at("load_center"), s.path("load_center"));
  if (s.has("oracle")) {
    const auto o = s.at("oracle").get<std::string>();
    if (o == "linear") d.oracle.kind = datagen::Oracle::linear;
    else if (o == "nonlinear") d.oracle.kind = datagen::Oracle::nonlinear;
    else throw ConfigError(s.path("oracle") + ": expected linear or nonlinear");
  }
  s.read("nonlinear_increments", d.oracle.nonlinear_increments);
  if (s.has("split_mode")) {
    const auto m = s.at("split_mode").get<std::string>();
    if (m == "shuffle") d.split_mode = datagen::SplitMode::shuffle;
    else if (m == "node_holdout") d.split_mode = datagen::SplitMode::node_holdout;
    else throw ConfigError(s.path("split_mode") + ": expected shuffle or node_holdout");
  }
  s.finish();
  if (spec.load_node_count < 1 || spec.direction_count < 1 || spec.step_count < 1)
    throw ConfigError("dataset: load_node_count, direction_count and step_count must be >= 1");
  if (!(spec.total_force >= 0)) throw ConfigError("dataset: total_force must be non-negative");
  if (d.oracle.nonlinear_increments < 1) throw ConfigError("dataset: nonlinear_increments must be >= 1");
}

void parse_model(Section s, ModelSection& m) {
  if (s.has("layers")) {
    const auto& layers = s.at("layers");
    if (!layers.is_array() || layers.empty()) throw ConfigError("model.layers: expected a non-empty array");
    m.kinds.clear();
    m.aggregators.clear();
    for (std::size_t k = 0; k < layers.size(); ++k) {
      Section l(layers[k], "model.layers[" + std::to_string(k) + "]");
      std::string kind = "graphsage", agg = "max";
      l.read("kind", kind);
      l.read("aggregator", agg);
      l.finish();
      m.kinds.push_back(gnn::parse_layer_kind(kind));
      m.aggregators.push_back(gnn::parse_aggregator(agg));
    }
  }
  s.read("width", m.width);
  if (s.has("jk")) m.jk = gnn::parse_jk_mode(s.at("jk").get<std::string>());
  s.read("jk_hidden", m.jk_hidden);
  s.read("dropout_p", m.dropout_p);
  s.finish();
  m.resolve();
}

void parse_train(Section s, train::TrainOptions& t) {
  s.read("lr", t.adamw.lr);
  s.read("beta1", t.adamw.beta1);
  s.read("beta2", t.adamw.beta2);
  s.read("eps", t.adamw.eps);
  s.read("weight_decay", t.adamw.weight_decay);
  s.read("max_epochs", t.max_epochs);
  s.read("batch_size", t.batch_size);
  s.read("lr_factor", t.schedule.factor);
  s.read("lr_patience", t.schedule.patience);
  s.read("min_lr", t.schedule.min_lr);
  s.read("improvement_threshold", t.schedule.threshold);
  s.read("early_stop_patience", t.schedule.early_stop_patience);
  s.read("normalize_features", t.normalize_features);
  s.finish();
  if (!(t.adamw.lr > 0)) throw ConfigError("train.lr must be positive");
  if (t.max_epochs < 1 || t.batch_size < 1) throw ConfigError("train: max_epochs and batch_size must be >= 1");
  if (t.schedule.patience < 1 || t.schedule.early_stop_patience < 1)
    throw ConfigError("train: patience values must be >= 1");
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const std::string& source) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(source + ": invalid JSON: " + e.what());
  }
  RunConfig c;
  try {
    Section root(j, source);
    root.read("seed", c.seed);
    root.read("threads", c.threads);
    root.read("out", c.out);
    if (root.has("mesh")) parse_mesh(Section(root.at("mesh"), "mesh"), c.mesh);
    if (root.has("materials")) {
      Section m(root.at("materials"), "materials");
      if (m.has("healthy")) parse_material(Section(m.at("healthy"), "materials.healthy"), c.materials[mesh::Region::healthy]);
      if (m.has("tumour")) parse_material(Section(m.at("tumour"), "materials.tumour"), c.materials[mesh::Region::tumour]);
      m.finish();
    }
    if (root.has("boundary")) {
      Section b(root.at("boundary"), "boundary");
      if (b.has("fixed_sides")) c.boundary.fixed_sides = parse_sides(b.at("fixed_sides"), "boundary.fixed_sides");
      if (b.has("load_sides")) c.boundary.load_sides = parse_sides(b.at("load_sides"), "boundary.load_sides");
      b.read("tol", c.boundary.tol);
      b.finish();
    }
    if (root.has("dataset")) parse_dataset(Section(root.at("dataset"), "dataset"), c.dataset);
    if (root.has("model")) parse_model(Section(root.at("model"), "model"), c.model);
    if (root.has("train")) parse_train(Section(root.at("train"), "train"), c.train);
    if (root.has("metrics")) {
      Section m(root.at("metrics"), "metrics");
      m.read("threshold_mm", c.metrics.threshold);
      m.read("free_only", c.metrics.free_only);
      m.finish();
    }
    root.finish();
  } catch (const json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
  c.dataset.spec.seed = c.seed;
  c.train.seed = c.seed;
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path);
}

std::string to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["out"] = c.out;

  ordered_json m;
  m["source"] = c.mesh.kind == MeshSource::Kind::generate ? "generate" : "tetgen";
  m["nx"] = c.mesh.nx;
  m["ny"] = c.mesh.ny;
  m["nz"] = c.mesh.nz;
  m["spacing"] = c.mesh.spacing;
  const auto& b = c.mesh.tumour_box;
  m["tumour_box"] = {b.lo[0], b.lo[1], b.lo[2], b.hi[0], b.hi[1], b.hi[2]};
  m["node"] = c.mesh.node_path;
  m["ele"] = c.mesh.ele_path;
  j["mesh"] = m;

  ordered_json mats;
  for (const auto& [region, mat] : c.materials)
    mats[region == mesh::Region::tumour ? "tumour" : "healthy"] = {{"density", mat.density},
                                                                   {"youngs_modulus", mat.youngs_modulus},
                                                                   {"poisson_ratio", mat.poisson_ratio},
                                                                   {"alpha", mat.alpha}};
  j["materials"] = mats;

  ordered_json bnd;
  bnd["fixed_sides"] = ordered_json::array();
  for (auto s : c.boundary.fixed_sides) bnd["fixed_sides"].push_back(mesh::to_string(s));
  bnd["load_sides"] = ordered_json::array();
  for (auto s : c.boundary.load_sides) bnd["load_sides"].push_back(mesh::to_string(s));
  bnd["tol"] = c.boundary.tol;
  j["boundary"] = bnd;

  const auto& spec = c.dataset.spec;
  ordered_json d;
  d["style"] = spec.style == datagen::LoadStyle::single ? "single" : "patch";
  d["load_node_count"] = spec.load_node_count;
  d["direction_count"] = spec.direction_count;
  d["step_count"] = spec.step_count;
  d["total_force"] = spec.total_force;
  d["load_nodes"] = spec.load_nodes;
  if (spec.load_center) d["load_center"] = *spec.load_center;
  d["oracle"] = c.dataset.oracle.kind == datagen::Oracle::linear ? "linear" : "nonlinear";
  d["nonlinear_increments"] = c.dataset.oracle.nonlinear_increments;
  d["split_mode"] = c.dataset.split_mode == datagen::SplitMode::shuffle ? "shuffle" : "node_holdout";
  j["dataset"] = d;

  const auto model = c.model.resolve();
  ordered_json md;
  md["layers"] = ordered_json::array();
  for (const auto& l : model.layers)
    md["layers"].push_back({{"kind", gnn::to_string(l.kind)}, {"aggregator", gnn::to_string(l.aggregator)}});
  md["width"] = c.model.width;
  md["jk"] = gnn::to_string(c.model.jk);
  md["jk_hidden"] = c.model.jk_hidden;
  md["dropout_p"] = c.model.dropout_p;
  j["model"] = md;

  const auto& t = c.train;
  j["train"] = {{"lr", t.adamw.lr},
                {"beta1", t.adamw.beta1},
                {"beta2", t.adamw.beta2},
                {"eps", t.adamw.eps},
                {"weight_decay", t.adamw.weight_decay},
                {"max_epochs", t.max_epochs},
                {"batch_size", t.batch_size},
                {"lr_factor", t.schedule.factor},
                {"lr_patience", t.schedule.patience},
                {"min_lr", t.schedule.min_lr},
                {"improvement_threshold", t.schedule.threshold},
                {"early_stop_patience", t.schedule.early_stop_patience},
                {"normalize_features", t.normalize_features}};
  j["metrics"] = {{"threshold_mm", c.metrics.threshold}, {"free_only", c.metrics.free_only}};
  return j.dump(2) + "\n";
}

}  // namespace physgnn::config
