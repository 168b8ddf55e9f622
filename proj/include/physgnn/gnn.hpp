#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "physgnn/autodiff.hpp"
#include "physgnn/mesh.hpp"

namespace physgnn::gnn {

using ad::Tensor;

enum class LayerKind { graphsage, graphconv };
enum class Aggregator { sum, max };
enum class JkMode { lstm_attention, none };

const char* to_string(LayerKind k);
const char* to_string(Aggregator a);
const char* to_string(JkMode m);
LayerKind parse_layer_kind(const std::string& s);
Aggregator parse_aggregator(const std::string& s);
JkMode parse_jk_mode(const std::string& s);

struct LayerConfig {
  LayerKind kind = LayerKind::graphsage;
  Aggregator aggregator = Aggregator::max;
  std::size_t in_width = 0;
  std::size_t out_width = 32;  // per branch; the layer emits 2 * out_width

  std::size_t emitted_width() const { return 2 * out_width; }
  std::size_t parameter_count() const { return 2 * out_width * in_width + out_width; }
  bool operator==(const LayerConfig&) const = default;
};

struct ModelConfig {
  std::vector<LayerConfig> layers;
  JkMode jk = JkMode::lstm_attention;
  std::size_t jk_hidden = 32;
  std::size_t head_width = 3;  // output width of the linear head
  double dropout_p = 0.1;      // on the output of the second-last layer

  // K layers of the given kinds and aggregators, each `width` per branch,
  // chained from `in_width` input features.
  static ModelConfig stack(const std::vector<LayerKind>& kinds, const std::vector<Aggregator>& aggs,
                           std::size_t in_width = 7, std::size_t width = 32);
  // Three GraphConv layers followed by three GraphSAGE layers, max
  // aggregation throughout.
  static ModelConfig default_config(std::size_t in_width = 7, std::size_t width = 32);

  std::size_t depth() const { return layers.size(); }
  std::size_t input_width() const { return layers.front().in_width; }
  // Common width of the embeddings the readout combines.
  std::size_t jk_width() const;
  bool needs_jk_projection() const;
  // Throws ConfigError when widths do not chain or values are out of range.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

std::string model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const std::string& text);

struct LayerParams {
  Tensor w_self;   // out x in
  Tensor w_neigh;  // out x in
  Tensor b;        // out
};

struct JkParams {
  // Per-layer maps to the JK width; empty when all layers already match.
  std::vector<Tensor> proj_w;  // jk_width x emitted_width(k)
  std::vector<Tensor> proj_b;  // jk_width
  Tensor w_ih;                 // 4H x jk_width, gate order i, f, g, o
  Tensor w_hh;                 // 4H x H
  Tensor b_lstm;               // 4H
  Tensor w_score;              // 1 x H
  Tensor b_score;              // 1
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class Model {
 public:
  Model() = default;
  // Glorot-uniform weights and zero biases drawn from `seed`.
  static Model init(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::vector<LayerParams>& layers() { return layers_; }
  const std::vector<LayerParams>& layers() const { return layers_; }
  JkParams& jk() { return jk_; }
  const JkParams& jk() const { return jk_; }
  Tensor& head_w() { return head_w_; }
  Tensor& head_b() { return head_b_; }
  const Tensor& head_w() const { return head_w_; }
  const Tensor& head_b() const { return head_b_; }

  // Every trainable tensor in a fixed order with stable names.
  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  // Replaces parameter values (same order and shapes as named_parameters).
  void load_values(const std::vector<std::vector<double>>& values);
  Model clone() const;

 private:
  ModelConfig config_;
  std::vector<LayerParams> layers_;
  JkParams jk_;
  Tensor head_w_;  // head_width x jk_width
  Tensor head_b_;  // head_width
};

// Per-node sum or elementwise max over incoming messages grouped by
// `offsets`; nodes without messages get zeros.
Tensor aggregate(const Tensor& messages, std::span<const std::int64_t> offsets, Aggregator mode);

// Pre-activation update concat(h W_self^T, agg(h_v) W_neigh^T + b).
Tensor graphsage_update(const Tensor& h, const mesh::MeshGraph& graph, const LayerParams& p, Aggregator mode);
Tensor graphconv_update(const Tensor& h, const mesh::MeshGraph& graph, const LayerParams& p, Aggregator mode);

Tensor graphsage_layer(const Tensor& h, const mesh::MeshGraph& graph, const LayerParams& p, Aggregator mode);
Tensor graphconv_layer(const Tensor& h, const mesh::MeshGraph& graph, const LayerParams& p, Aggregator mode);

struct JkResult {
  Tensor output;     // N x width
  Tensor attention;  // N x T, rows sum to 1
};

// All embeddings must already share one width.
JkResult jk_lstm_attention(const std::vector<Tensor>& embeddings, const JkParams& params);

struct ForwardOptions {
  bool train = false;
  std::uint64_t dropout_seed = 0;
};

struct ForwardResult {
  Tensor output;     // N x head_width
  Tensor attention;  // N x K, undefined without JK
};

// `features` is N x input_width.
ForwardResult physgnn_forward_detailed(const Model& model, const mesh::MeshGraph& graph, const Tensor& features,
                                       const ForwardOptions& options = {});
Tensor physgnn_forward(const Model& model, const mesh::MeshGraph& graph, const Tensor& features,
                       const ForwardOptions& options = {});

// Optional per-column feature standardization stored with a checkpoint.
struct InputNormalization {
  std::vector<double> mean;
  std::vector<double> scale;  // divide by this

  bool empty() const { return mean.empty(); }
  void apply(std::vector<double>& features, std::size_t width) const;
};

struct Checkpoint {
  Model model;
  std::uint64_t manifest_hash = 0;
  InputNormalization normalization;
};

// Binary layout (little-endian):
//   char[8] magic "PGNNCK01"; u32 version (1)
//   string  model config JSON (u64 length + bytes)
//   u64     manifest hash
//   u64 M; f64[M] normalization mean; u64 M; f64[M] normalization scale
//   u64 P; P records of: string name; u32 rank; u64[rank] dims; f64[] values
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source = "checkpoint");
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace physgnn::gnn
