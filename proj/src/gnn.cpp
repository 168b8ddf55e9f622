#include "physgnn/gnn.hpp"

#include <cmath>
#include <random>

#include "json.hpp"
#include "physgnn/error.hpp"

namespace physgnn::gnn {

using namespace physgnn::ad;

const char* to_string(LayerKind k) { return k == LayerKind::graphsage ? "graphsage" : "graphconv"; }
const char* to_string(Aggregator a) { return a == Aggregator::sum ? "sum" : "max"; }
const char* to_string(JkMode m) { return m == JkMode::lstm_attention ? "lstm_attention" : "none"; }

LayerKind parse_layer_kind(const std::string& s) {
  if (s == "graphsage") return LayerKind::graphsage;
  if (s == "graphconv") return LayerKind::graphconv;
  throw ConfigError("unknown layer kind '" + s + "' (expected graphsage or graphconv)");
}

Aggregator parse_aggregator(const std::string& s) {
  if (s == "sum") return Aggregator::sum;
  if (s == "max") return Aggregator::max;
  throw ConfigError("unknown aggregator '" + s + "' (expected sum or max)");
}

JkMode parse_jk_mode(const std::string& s) {
  if (s == "lstm_attention") return JkMode::lstm_attention;
  if (s == "none") return JkMode::none;
  throw ConfigError("unknown jk mode '" + s + "' (expected lstm_attention or none)");
}

ModelConfig ModelConfig::stack(const std::vector<LayerKind>& kinds, const std::vector<Aggregator>& aggs,
                               std::size_t in_width, std::size_t width) {
  if (kinds.size() != aggs.size()) throw ConfigError("layer kinds and aggregators differ in length");
  ModelConfig c;
  std::size_t in = in_width;
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    c.layers.push_back({kinds[k], aggs[k], in, width});
    in = 2 * width;
  }
  return c;
}

ModelConfig ModelConfig::default_config(std::size_t in_width, std::size_t width) {
  using enum LayerKind;
  return stack({graphconv, graphconv, graphconv, graphsage, graphsage, graphsage},
               std::vector<Aggregator>(6, Aggregator::max), in_width, width);
}

std::size_t ModelConfig::jk_width() const {
  if (jk == JkMode::none) return layers.back().emitted_width();
  std::size_t w = 0;
  for (const auto& l : layers) w = std::max(w, l.emitted_width());
  return w;
}

bool ModelConfig::needs_jk_projection() const {
  if (jk == JkMode::none) return false;
  for (const auto& l : layers)
    if (l.emitted_width() != layers.front().emitted_width()) return true;
  return false;
}

void ModelConfig::validate() const {
  if (layers.empty()) throw ConfigError("model needs at least one layer");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    if (l.in_width < 1 || l.out_width < 1) throw ConfigError("layer " + std::to_string(k) + ": widths must be >= 1");
    if (k > 0 && l.in_width != layers[k - 1].emitted_width())
      throw ConfigError("layer " + std::to_string(k) + ": in_width " + std::to_string(l.in_width) +
                        " does not match the previous layer's output width " +
                        std::to_string(layers[k - 1].emitted_width()));
  }
  if (jk == JkMode::lstm_attention && jk_hidden < 1) throw ConfigError("jk_hidden must be >= 1");
  if (head_width < 1) throw ConfigError("head_width must be >= 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must be in [0, 1)");
}

std::string model_config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : c.layers)
    j["layers"].push_back({{"kind", to_string(l.kind)},
                           {"aggregator", to_string(l.aggregator)},
                           {"in_width", l.in_width},
                           {"out_width", l.out_width}});
  j["jk"] = to_string(c.jk);
  j["jk_hidden"] = c.jk_hidden;
  j["head_width"] = c.head_width;
  j["dropout_p"] = c.dropout_p;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    ModelConfig c;
    for (const auto& l : j.at("layers"))
      c.layers.push_back({parse_layer_kind(l.at("kind")), parse_aggregator(l.at("aggregator")),
                          l.at("in_width").get<std::size_t>(), l.at("out_width").get<std::size_t>()});
    c.jk = parse_jk_mode(j.at("jk"));
    c.jk_hidden = j.at("jk_hidden").get<std::size_t>();
    c.head_width = j.at("head_width").get<std::size_t>();
    c.dropout_p = j.at("dropout_p").get<double>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

namespace {

Tensor glorot(std::size_t out, std::size_t in, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> uni(-a, a);
  std::vector<double> v(out * in);
  for (auto& x : v) x = uni(rng);
  return Tensor::parameter({out, in}, std::move(v));
}

Tensor zeros_param(std::size_t n) { return Tensor::parameter({n}, std::vector<double>(n, 0.0)); }

}  // namespace

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config_ = config;
  std::mt19937_64 rng(seed);
  for (const auto& l : config.layers)
    m.layers_.push_back({glorot(l.out_width, l.in_width, rng), glorot(l.out_width, l.in_width, rng),
                         zeros_param(l.out_width)});
  const std::size_t d = config.jk_width();
  if (config.jk == JkMode::lstm_attention) {
    if (config.needs_jk_projection())
      for (const auto& l : config.layers) {
        m.jk_.proj_w.push_back(glorot(d, l.emitted_width(), rng));
        m.jk_.proj_b.push_back(zeros_param(d));
      }
    const std::size_t h = config.jk_hidden;
    m.jk_.w_ih = glorot(4 * h, d, rng);
    m.jk_.w_hh = glorot(4 * h, h, rng);
    m.jk_.b_lstm = zeros_param(4 * h);
    m.jk_.w_score = glorot(1, h, rng);
    m.jk_.b_score = zeros_param(1);
  }
  m.head_w_ = glorot(config.head_width, d, rng);
  m.head_b_ = zeros_param(config.head_width);
  return m;
}

std::vector<NamedTensor> Model::named_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto p = "layer" + std::to_string(k) + ".";
    out.push_back({p + "w_self", layers_[k].w_self});
    out.push_back({p + "w_neigh", layers_[k].w_neigh});
    out.push_back({p + "b", layers_[k].b});
  }
  for (std::size_t k = 0; k < jk_.proj_w.size(); ++k) {
    out.push_back({"jk.proj" + std::to_string(k) + ".w", jk_.proj_w[k]});
    out.push_back({"jk.proj" + std::to_string(k) + ".b", jk_.proj_b[k]});
  }
  if (jk_.w_ih.defined()) {
    out.push_back({"jk.lstm.w_ih", jk_.w_ih});
    out.push_back({"jk.lstm.w_hh", jk_.w_hh});
    out.push_back({"jk.lstm.b", jk_.b_lstm});
    out.push_back({"jk.score.w", jk_.w_score});
    out.push_back({"jk.score.b", jk_.b_score});
  }
  out.push_back({"head.w", head_w_});
  out.push_back({"head.b", head_b_});
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.size();
  return n;
}

void Model::load_values(const std::vector<std::vector<double>>& values) {
  auto params = named_parameters();
  if (values.size() != params.size())
    throw InputError("expected " + std::to_string(params.size()) + " parameter tensors, got " +
                     std::to_string(values.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor.mutable_values();
    if (values[i].size() != dst.size())
      throw InputError("parameter " + params[i].name + " has " + std::to_string(dst.size()) + " values, got " +
                       std::to_string(values[i].size()));
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

Model Model::clone() const {
  Model m = init(config_, 0);
  std::vector<std::vector<double>> values;
  for (const auto& p : named_parameters()) values.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  m.load_values(values);
  return m;
}

Tensor aggregate(const Tensor& messages, std::span<const std::int64_t> offsets, Aggregator mode) {
  return mode == Aggregator::sum ? segment_sum(messages, offsets) : segment_max(messages, offsets);
}

namespace {

void check_layer_input(const char* op, const Tensor& h, const mesh::MeshGraph& graph, const LayerParams& p) {
  if (h.rank() != 2 || h.cols() != p.w_self.cols())
    throw ShapeError(std::string(op) + ": input " + shape_string(h.shape()) + " does not match in_width " +
                     std::to_string(p.w_self.cols()));
  if (h.rows() != graph.node_count())
    throw ShapeError(std::string(op) + ": " + std::to_string(h.rows()) + " embedding rows for a graph of " +
                     std::to_string(graph.node_count()) + " nodes");
}

Tensor combine(const Tensor& h, const Tensor& agg, const LayerParams& p) {
  return concat({matmul_bt(h, p.w_self), add_bias(matmul_bt(agg, p.w_neigh), p.b)});
}

}  // namespace

Tensor graphsage_update(const Tensor& h, const mesh::MeshGraph& graph, const LayerParams& p, Aggregator mode) {
  check_layer_input("graphsage_layer", h, graph, p);
  const Tensor messages = gather_rows(h, graph.arc_src);
  return combine(h, aggregate(messages, graph.in_offsets, mode), p);
}

Tensor graphconv_update(const Tensor& h, const mesh::MeshGraph& graph, const LayerParams& p, Aggregator mode) {
  check_layer_input("graphconv_layer", h, graph, p);
  if (graph.arc_weight.size() != graph.arc_src.size()) throw InputError("graphconv_layer: graph has no edge weights");
  const Tensor messages = scale_rows(gather_rows(h, graph.arc_src), graph.arc_weight);
  return combine(h, aggregate(messages, graph.in_offsets, mode), p);
}

Tensor graphsage_layer(const Tensor& h, const mesh::MeshGraph& graph, const LayerParams& p, Aggregator mode) {
  return relu(graphsage_update(h, graph, p, mode));
}

Tensor graphconv_layer(const Tensor& h, const mesh::MeshGraph& graph, const LayerParams& p, Aggregator mode) {
  return relu(graphconv_update(h, graph, p, mode));
}

JkResult jk_lstm_attention(const std::vector<Tensor>& embeddings, const JkParams& params) {
  if (embeddings.empty()) throw ShapeError("jk_lstm_attention: needs at least one embedding");
  for (const auto& e : embeddings)
    if (e.shape() != embeddings.front().shape())
      throw ShapeError("jk_lstm_attention: embeddings " + shape_string(embeddings.front().shape()) + " and " +
                       shape_string(e.shape()) + " differ");
  const std::size_t hidden = params.w_hh.cols();
  Tensor h, c;
  std::vector<Tensor> scores;
  for (std::size_t t = 0; t < embeddings.size(); ++t) {
    Tensor gates = matmul_bt(embeddings[t], params.w_ih);
    if (t > 0) gates = add(gates, matmul_bt(h, params.w_hh));
    gates = add_bias(gates, params.b_lstm);
    const Tensor i = sigmoid(slice_cols(gates, 0, hidden));
    const Tensor f = sigmoid(slice_cols(gates, hidden, 2 * hidden));
    const Tensor g = tanh(slice_cols(gates, 2 * hidden, 3 * hidden));
    const Tensor o = sigmoid(slice_cols(gates, 3 * hidden, 4 * hidden));
    c = t > 0 ? add(mul(f, c), mul(i, g)) : mul(i, g);
    h = mul(o, tanh(c));
    scores.push_back(add_bias(matmul_bt(h, params.w_score), params.b_score));
  }
  const Tensor alpha = softmax(concat(scores));
  Tensor out;
  for (std::size_t t = 0; t < embeddings.size(); ++t) {
    const Tensor term = scale_rows(embeddings[t], slice_cols(alpha, t, t + 1));
    out = t > 0 ? add(out, term) : term;
  }
  return {out, alpha};
}

ForwardResult physgnn_forward_detailed(const Model& model, const mesh::MeshGraph& graph, const Tensor& features,
                                       const ForwardOptions& options) {
  const auto& cfg = model.config();
  if (features.rank() != 2 || features.cols() != cfg.input_width())
    throw ShapeError("physgnn_forward: features " + shape_string(features.shape()) + " but the model expects " +
                     std::to_string(cfg.input_width()) + " columns");
  const std::size_t depth = cfg.depth();
  std::vector<Tensor> embeddings;
  Tensor h = features;
  for (std::size_t k = 0; k < depth; ++k) {
    const auto& l = cfg.layers[k];
    const auto& p = model.layers()[k];
    h = l.kind == LayerKind::graphsage ? graphsage_layer(h, graph, p, l.aggregator)
                                       : graphconv_layer(h, graph, p, l.aggregator);
    if (depth >= 2 && k == depth - 2) h = dropout(h, cfg.dropout_p, options.train, options.dropout_seed);
    embeddings.push_back(h);
  }
  ForwardResult res;
  Tensor readout = h;
  if (cfg.jk == JkMode::lstm_attention) {
    const auto& jk = model.jk();
    if (!jk.proj_w.empty())
      for (std::size_t k = 0; k < depth; ++k)
        embeddings[k] = add_bias(matmul_bt(embeddings[k], jk.proj_w[k]), jk.proj_b[k]);
    auto r = jk_lstm_attention(embeddings, jk);
    readout = r.output;
    res.attention = r.attention;
  }
  res.output = add_bias(matmul_bt(readout, model.head_w()), model.head_b());
  return res;
}

Tensor physgnn_forward(const Model& model, const mesh::MeshGraph& graph, const Tensor& features,
                       const ForwardOptions& options) {
  return physgnn_forward_detailed(model, graph, features, options).output;
}

void InputNormalization::apply(std::vector<double>& features, std::size_t width) const {
  if (empty()) return;
  if (mean.size() != width || scale.size() != width)
    throw InputError("normalization width " + std::to_string(mean.size()) + " does not match feature width " +
                     std::to_string(width));
  for (std::size_t i = 0; i < features.size(); ++i) features[i] = (features[i] - mean[i % width]) / scale[i % width];
}

}  // namespace physgnn::gnn
