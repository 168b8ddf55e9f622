#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "physgnn/autodiff.hpp"
#include "physgnn/datagen.hpp"
#include "physgnn/gnn.hpp"

namespace physgnn::train {

using ad::Tensor;

// ---- Optimizer ----

struct AdamWOptions {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// One in-place AdamW update of a single parameter: decoupled decay
// (param -= lr * wd * param) first, then the bias-corrected Adam step.
// `step` is the 1-based step number.
void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  std::uint64_t step, double lr, const AdamWOptions& o);

class AdamW {
 public:
  AdamW(std::vector<gnn::NamedTensor> params, AdamWOptions options);

  // Reads each parameter's accumulated gradient (zero when none flowed) and
  // updates it. Throws NumericalError naming the first parameter with a
  // non-finite gradient, before anything is modified.
  void step();
  void zero_grad();

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::uint64_t step_count() const { return step_; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<gnn::NamedTensor> params_;
  AdamWOptions options_;
  double lr_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// ---- Schedule and early stopping ----

struct ScheduleOptions {
  double factor = 0.1;
  int patience = 5;
  double min_lr = 1e-8;
  double threshold = 1e-6;  // absolute; improvement means val < best - threshold
  int early_stop_patience = 15;
};

class PlateauScheduler {
 public:
  explicit PlateauScheduler(ScheduleOptions o = {}) : o_(o) {}
  // Returns the learning rate to use from the next epoch on.
  double step(double val_loss, double lr);
  int stagnant_epochs() const { return stagnant_; }
  double best() const { return best_; }

 private:
  ScheduleOptions o_;
  double best_ = std::numeric_limits<double>::infinity();
  int stagnant_ = 0;
};

class EarlyStopper {
 public:
  explicit EarlyStopper(ScheduleOptions o = {}) : o_(o) {}
  // True once `early_stop_patience` consecutive epochs failed to improve.
  bool update(double val_loss);
  bool improved() const { return improved_; }
  int stagnant_epochs() const { return stagnant_; }
  double best() const { return best_; }

 private:
  ScheduleOptions o_;
  double best_ = std::numeric_limits<double>::infinity();
  int stagnant_ = 0;
  bool improved_ = false;
};

// ---- Loss and metrics ----

inline constexpr double kSqrtGuard = 1e-12;

// (1/|V|) sum_v sqrt(|y_v - z_v|^2 + 1e-12) over rows of two |V| x 3 tensors.
Tensor loss_mean_euclidean(const Tensor& pred, const Tensor& labels);

// Per-node Euclidean error |y_v - z_v| (no smoothing).
std::vector<double> euclidean_errors(std::span<const double> pred, std::span<const double> labels);
// Per-node | |y_v| - |z_v| |.
std::vector<double> absolute_position_errors(std::span<const double> pred, std::span<const double> labels);

struct MetricsOptions {
  double threshold = 1.0;  // mm
  bool free_only = false;  // skip nodes with fixed boundary conditions
};

struct MetricsReport {
  std::size_t sample_count = 0;
  std::size_t node_count = 0;  // evaluated node rows over all samples
  double threshold = 1.0;
  bool free_only = false;
  std::array<double, 3> mae{0, 0, 0};
  double euclidean_mean = 0, euclidean_std = 0;
  double euclidean_within = 0;  // percent of nodes with error <= threshold
  double absolute_mean = 0, absolute_std = 0;
  double absolute_within = 0;
  double max_euclidean_mean = 0, max_euclidean_std = 0;  // per-sample max, over samples
  double loss = 0;  // mean per-sample loss
  // Nodes where the absolute position error exceeded the Euclidean error.
  std::size_t triangle_violations = 0;

  std::string to_table() const;
  std::string to_json() const;
};

// Associative accumulator; merge in a fixed order for reproducible sums.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(MetricsOptions o = {}) : o_(o) {}
  // `fixed` may be empty; it is consulted only when free_only is set.
  void add(std::span<const double> pred, std::span<const double> labels, const std::vector<bool>& fixed = {});
  void merge(const MetricsAccumulator& other);
  MetricsReport report() const;

 private:
  MetricsOptions o_;
  std::size_t samples_ = 0, nodes_ = 0;
  std::array<double, 3> abs_axis_{0, 0, 0};
  double e_sum_ = 0, e_sq_ = 0, a_sum_ = 0, a_sq_ = 0, max_sum_ = 0, max_sq_ = 0, loss_sum_ = 0;
  std::size_t e_within_ = 0, a_within_ = 0, violations_ = 0;
};

// Feature tensor for a sample, normalized when `norm` is non-empty.
Tensor feature_tensor(const datagen::GraphSample& s, const gnn::InputNormalization& norm = {});
Tensor label_tensor(const datagen::GraphSample& s);

// Mean/std per feature column over the given samples (std 1 for constant
// columns).
gnn::InputNormalization fit_normalization(const std::vector<datagen::GraphSample>& samples,
                                          const std::vector<std::size_t>& indices);

// Predictions for the given samples, fanned out over OpenMP threads.
std::vector<std::vector<double>> predict(const gnn::Model& model, const std::vector<datagen::GraphSample>& samples,
                                         const std::vector<std::size_t>& indices,
                                         const gnn::InputNormalization& norm = {});

MetricsReport evaluate(const gnn::Model& model, const std::vector<datagen::GraphSample>& samples,
                       const std::vector<std::size_t>& indices, const MetricsOptions& options = {},
                       const gnn::InputNormalization& norm = {}, const std::vector<bool>& fixed = {});

// ---- Training ----

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;
};

std::string history_to_jsonl(const std::vector<EpochRecord>& history);

struct TrainOptions {
  AdamWOptions adamw;
  ScheduleOptions schedule;
  int max_epochs = 500;
  std::size_t batch_size = 1;  // samples per optimizer step
  std::uint64_t seed = 0;
  bool normalize_features = false;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  gnn::Checkpoint checkpoint;  // best-validation parameters
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_loss = 0;
  bool early_stopped = false;
};

// Trains `model` in place; on return it holds the best-validation
// parameters. Throws NumericalError naming the epoch and sample on a
// non-finite loss.
TrainResult train_loop(gnn::Model& model, const std::vector<datagen::GraphSample>& samples,
                       const datagen::DatasetManifest& manifest, const TrainOptions& options,
                       std::uint64_t manifest_hash = 0);

struct LatencyStats {
  std::vector<double> seconds;
  double mean = 0, stddev = 0, min = 0, max = 0;
  std::size_t node_count = 0;
};

// Wall-clock forward latency of one sample in inference mode.
LatencyStats benchmark_inference(const gnn::Model& model, const datagen::GraphSample& sample, std::size_t repeats,
                                 std::size_t warmup = 3, const gnn::InputNormalization& norm = {});

// ---- Ablation ----

struct AblationEntry {
  std::string sweep;  // "aggregator" or "kind"
  std::string label;  // per-layer code, e.g. "C+ C+ Cm Sm Sm Sm"
  gnn::ModelConfig config;
  double best_val_loss = 0;
  int epochs = 0;
  MetricsReport test;
};

struct AblationOptions {
  std::size_t width = 32;
  TrainOptions train;
  MetricsOptions metrics;
  std::uint64_t init_seed = 0;
};

// Short code per layer: C/S for GraphConv/GraphSAGE, m/+ for max/sum.
std::string layer_code(const gnn::ModelConfig& c);

// Aggregator sweep: starting from 3 GraphConv + 3 GraphSAGE layers with max
// aggregation, replace max by sum in layers 1..j for j = 0..6. Kind sweep:
// starting from six GraphSAGE layers with the aggregators of the best
// aggregator variant (lowest validation loss), replace GraphSAGE by
// GraphConv in layers 1..j for j = 0..6.
std::vector<AblationEntry> run_ablation(const std::vector<datagen::GraphSample>& samples,
                                        const datagen::DatasetManifest& manifest, const AblationOptions& options);

std::string ablation_table(const std::vector<AblationEntry>& entries);

}  // namespace physgnn::train
