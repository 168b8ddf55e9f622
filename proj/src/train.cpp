#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "json.hpp"
#include "physgnn/error.hpp"
#include "physgnn/train.hpp"

namespace physgnn::train {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const mesh::MeshGraph& graph_of(const datagen::GraphSample& s) {
  if (!s.graph) throw InputError("sample " + std::to_string(s.provenance.sample_id) + " has no graph attached");
  return *s.graph;
}

double mean_loss(std::span<const double> pred, std::span<const double> labels) {
  const std::size_t n = pred.size() / 3;
  double total = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double d = pred[3 * v + k] - labels[3 * v + k];
      s += d * d;
    }
    total += std::sqrt(s + kSqrtGuard);
  }
  return total / static_cast<double>(n);
}

}  // namespace

Tensor feature_tensor(const datagen::GraphSample& s, const gnn::InputNormalization& norm) {
  std::vector<double> f = s.features;
  norm.apply(f, datagen::kFeatureWidth);
  return Tensor::from({s.node_count, datagen::kFeatureWidth}, std::move(f));
}

Tensor label_tensor(const datagen::GraphSample& s) {
  return Tensor::from({s.node_count, datagen::kLabelWidth}, s.labels);
}

gnn::InputNormalization fit_normalization(const std::vector<datagen::GraphSample>& samples,
                                          const std::vector<std::size_t>& indices) {
  constexpr std::size_t w = datagen::kFeatureWidth;
  std::vector<double> sum(w, 0.0), sq(w, 0.0);
  double rows = 0.0;
  for (auto i : indices) {
    const auto& f = samples[i].features;
    for (std::size_t r = 0; r < samples[i].node_count; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        sum[c] += f[r * w + c];
        sq[c] += f[r * w + c] * f[r * w + c];
      }
    rows += static_cast<double>(samples[i].node_count);
  }
  if (rows == 0.0) throw InputError("cannot fit feature normalization on an empty split");
  gnn::InputNormalization n;
  for (std::size_t c = 0; c < w; ++c) {
    const double m = sum[c] / rows;
    const double sd = std::sqrt(std::max(0.0, sq[c] / rows - m * m));
    n.mean.push_back(m);
    n.scale.push_back(sd > 1e-12 ? sd : 1.0);
  }
  return n;
}

std::vector<std::vector<double>> predict(const gnn::Model& model, const std::vector<datagen::GraphSample>& samples,
                                         const std::vector<std::size_t>& indices,
                                         const gnn::InputNormalization& norm) {
  for (auto i : indices) {
    if (i >= samples.size()) throw InputError("sample index " + std::to_string(i) + " out of range");
    graph_of(samples[i]);
  }
  std::vector<std::vector<double>> out(indices.size());
  std::string failure;
  const auto n = static_cast<std::int64_t>(indices.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t k = 0; k < n; ++k) {
    try {
      const auto& s = samples[indices[k]];
      const Tensor y = gnn::physgnn_forward(model, *s.graph, feature_tensor(s, norm));
      out[k].assign(y.values().begin(), y.values().end());
    } catch (const std::exception& e) {
#pragma omp critical
      if (failure.empty()) failure = e.what();
    }
  }
  if (!failure.empty()) throw Error("prediction failed: " + failure);
  return out;
}

MetricsReport evaluate(const gnn::Model& model, const std::vector<datagen::GraphSample>& samples,
                       const std::vector<std::size_t>& indices, const MetricsOptions& options,
                       const gnn::InputNormalization& norm, const std::vector<bool>& fixed) {
  if (indices.empty()) throw InputError("cannot evaluate an empty split");
  const auto preds = predict(model, samples, indices, norm);
  MetricsAccumulator acc(options);
  for (std::size_t k = 0; k < indices.size(); ++k) acc.add(preds[k], samples[indices[k]].labels, fixed);
  return acc.report();
}

std::string history_to_jsonl(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const auto& r : history) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["val_loss"] = r.val_loss;
    j["lr"] = r.lr;
    out += j.dump() + "\n";
  }
  return out;
}

TrainResult train_loop(gnn::Model& model, const std::vector<datagen::GraphSample>& samples,
                       const datagen::DatasetManifest& manifest, const TrainOptions& options,
                       std::uint64_t manifest_hash) {
  if (manifest.sample_count != samples.size())
    throw InputError("manifest describes " + std::to_string(manifest.sample_count) + " samples, dataset has " +
                     std::to_string(samples.size()));
  const auto train_idx = manifest.indices(datagen::Split::train);
  const auto val_idx = manifest.indices(datagen::Split::validation);
  if (train_idx.empty() || val_idx.empty()) throw InputError("training needs non-empty train and validation splits");
  if (options.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (options.max_epochs < 1) throw ConfigError("max_epochs must be >= 1");

  TrainResult result;
  const auto norm = options.normalize_features ? fit_normalization(samples, train_idx) : gnn::InputNormalization{};
  std::vector<Tensor> features(samples.size()), labels(samples.size());
  for (auto i : train_idx) {
    graph_of(samples[i]);
    features[i] = feature_tensor(samples[i], norm);
    labels[i] = label_tensor(samples[i]);
  }

  AdamW opt(model.named_parameters(), options.adamw);
  PlateauScheduler scheduler(options.schedule);
  EarlyStopper stopper(options.schedule);
  std::mt19937_64 rng(options.seed);
  gnn::Model best = model.clone();
  double best_val = std::numeric_limits<double>::infinity();
  std::uint64_t step = 0;

  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    auto order = train_idx;
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += options.batch_size) {
      const std::size_t e = std::min(order.size(), b + options.batch_size);
      opt.zero_grad();
      for (std::size_t k = b; k < e; ++k) {
        const auto i = order[k];
        ad::Tape tape;
        ad::TapeScope scope(tape);
        const gnn::ForwardOptions fo{true, splitmix(options.seed ^ splitmix(++step))};
        const Tensor loss = loss_mean_euclidean(gnn::physgnn_forward(model, *samples[i].graph, features[i], fo), labels[i]);
        if (!std::isfinite(loss.item()))
          throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                               std::to_string(samples[i].provenance.sample_id));
        total += loss.item();
        tape.backward(ad::scale(loss, 1.0 / static_cast<double>(e - b)));
      }
      opt.step();
    }

    const auto preds = predict(model, samples, val_idx, norm);
    double val = 0.0;
    for (std::size_t k = 0; k < val_idx.size(); ++k) val += mean_loss(preds[k], samples[val_idx[k]].labels);
    val /= static_cast<double>(val_idx.size());
    if (!std::isfinite(val)) throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));

    EpochRecord rec{epoch, total / static_cast<double>(order.size()), val, opt.lr()};
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    const bool stop = stopper.update(val);
    if (stopper.improved()) {
      best = model.clone();
      best_val = val;
      result.best_epoch = epoch;
    }
    opt.set_lr(scheduler.step(val, opt.lr()));
    if (stop) {
      result.early_stopped = true;
      break;
    }
  }

  std::vector<std::vector<double>> values;
  for (const auto& p : best.named_parameters()) values.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  model.load_values(values);
  result.best_val_loss = best_val;
  result.checkpoint = {model.clone(), manifest_hash, norm};
  return result;
}

LatencyStats benchmark_inference(const gnn::Model& model, const datagen::GraphSample& sample, std::size_t repeats,
                                 std::size_t warmup, const gnn::InputNormalization& norm) {
  if (repeats < 10) throw InputError("benchmark needs at least 10 repeats");
  const auto& graph = graph_of(sample);
  const Tensor x = feature_tensor(sample, norm);
  for (std::size_t i = 0; i < warmup; ++i) gnn::physgnn_forward(model, graph, x);
  LatencyStats st;
  st.node_count = sample.node_count;
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor y = gnn::physgnn_forward(model, graph, x);
    const auto t1 = std::chrono::steady_clock::now();
    st.seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  double sum = 0.0, sq = 0.0;
  for (double s : st.seconds) sum += s;
  st.mean = sum / static_cast<double>(repeats);
  for (double s : st.seconds) sq += (s - st.mean) * (s - st.mean);
  st.stddev = std::sqrt(sq / static_cast<double>(repeats));
  st.min = *std::min_element(st.seconds.begin(), st.seconds.end());
  st.max = *std::max_element(st.seconds.begin(), st.seconds.end());
  return st;
}

}  // namespace physgnn::train
