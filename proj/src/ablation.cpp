#include <cstdio>

#include "physgnn/error.hpp"
#include "physgnn/train.hpp"

namespace physgnn::train {

std::string layer_code(const gnn::ModelConfig& c) {
  std::string out;
  for (const auto& l : c.layers) {
    if (!out.empty()) out += ' ';
    out += l.kind == gnn::LayerKind::graphconv ? 'C' : 'S';
    out += l.aggregator == gnn::Aggregator::sum ? '+' : 'm';
  }
  return out;
}

namespace {

AblationEntry run_variant(const std::string& sweep, const gnn::ModelConfig& config,
                          const std::vector<datagen::GraphSample>& samples, const datagen::DatasetManifest& manifest,
                          const AblationOptions& options) {
  gnn::Model model = gnn::Model::init(config, options.init_seed);
  const auto r = train_loop(model, samples, manifest, options.train);
  AblationEntry e;
  e.sweep = sweep;
  e.label = layer_code(config);
  e.config = config;
  e.best_val_loss = r.best_val_loss;
  e.epochs = static_cast<int>(r.history.size());
  e.test = evaluate(model, samples, manifest.indices(datagen::Split::test), options.metrics,
                    r.checkpoint.normalization);
  return e;
}

}  // namespace

std::vector<AblationEntry> run_ablation(const std::vector<datagen::GraphSample>& samples,
                                        const datagen::DatasetManifest& manifest, const AblationOptions& options) {
  using gnn::Aggregator;
  using gnn::LayerKind;
  constexpr std::size_t depth = 6;
  std::vector<AblationEntry> entries;

  const std::vector<LayerKind> base_kinds{LayerKind::graphconv, LayerKind::graphconv, LayerKind::graphconv,
                                          LayerKind::graphsage, LayerKind::graphsage, LayerKind::graphsage};
  std::size_t best = 0;
  for (std::size_t j = 0; j <= depth; ++j) {
    std::vector<Aggregator> aggs(depth, Aggregator::max);
    std::fill(aggs.begin(), aggs.begin() + j, Aggregator::sum);
    entries.push_back(run_variant("aggregator", gnn::ModelConfig::stack(base_kinds, aggs, datagen::kFeatureWidth,
                                                                        options.width),
                                  samples, manifest, options));
    if (entries.back().best_val_loss < entries[best].best_val_loss) best = j;
  }

  std::vector<Aggregator> best_aggs;
  for (const auto& l : entries[best].config.layers) best_aggs.push_back(l.aggregator);
  for (std::size_t j = 0; j <= depth; ++j) {
    std::vector<LayerKind> kinds(depth, LayerKind::graphsage);
    std::fill(kinds.begin(), kinds.begin() + j, LayerKind::graphconv);
    entries.push_back(run_variant(
        "kind", gnn::ModelConfig::stack(kinds, best_aggs, datagen::kFeatureWidth, options.width), samples, manifest,
        options));
  }
  return entries;
}

std::string ablation_table(const std::vector<AblationEntry>& entries) {
  std::string out = "sweep       layers              epochs  best val (mm)  test mean (mm)  test <= thr (%)\n";
  char buf[256];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%-11s %-19s %6d  %13.4f  %14.4f  %15.2f\n", e.sweep.c_str(), e.label.c_str(),
                  e.epochs, e.best_val_loss, e.test.euclidean_mean, e.test.euclidean_within);
    out += buf;
  }
  return out;
}

}  // namespace physgnn::train
