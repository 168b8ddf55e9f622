#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "physgnn/error.hpp"
#include "physgnn/train.hpp"

namespace physgnn::train {

Tensor loss_mean_euclidean(const Tensor& pred, const Tensor& labels) {
  if (pred.shape() != labels.shape() || pred.rank() != 2 || pred.cols() != 3)
    throw ShapeError("loss_mean_euclidean: prediction " + ad::shape_string(pred.shape()) + " vs labels " +
                     ad::shape_string(labels.shape()));
  const Tensor d = ad::sub(pred, labels);
  return ad::mean(ad::sqrt(ad::add_scalar(ad::row_sum(ad::mul(d, d)), kSqrtGuard)));
}

namespace {

void check_rows(std::span<const double> pred, std::span<const double> labels) {
  if (pred.size() != labels.size() || pred.size() % 3 != 0)
    throw ShapeError("metrics: prediction has " + std::to_string(pred.size()) + " values, labels " +
                     std::to_string(labels.size()));
}

double norm3(const double* p) { return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]); }

double stddev(double sum, double sq, std::size_t n) {
  if (n == 0) return 0.0;
  const double m = sum / static_cast<double>(n);
  return std::sqrt(std::max(0.0, sq / static_cast<double>(n) - m * m));
}

}  // namespace

std::vector<double> euclidean_errors(std::span<const double> pred, std::span<const double> labels) {
  check_rows(pred, labels);
  std::vector<double> out(pred.size() / 3);
  for (std::size_t v = 0; v < out.size(); ++v) {
    const double d[3] = {labels[3 * v] - pred[3 * v], labels[3 * v + 1] - pred[3 * v + 1],
                         labels[3 * v + 2] - pred[3 * v + 2]};
    out[v] = norm3(d);
  }
  return out;
}

std::vector<double> absolute_position_errors(std::span<const double> pred, std::span<const double> labels) {
  check_rows(pred, labels);
  std::vector<double> out(pred.size() / 3);
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = std::abs(norm3(&labels[3 * v]) - norm3(&pred[3 * v]));
  return out;
}

void MetricsAccumulator::add(std::span<const double> pred, std::span<const double> labels,
                             const std::vector<bool>& fixed) {
  const auto e = euclidean_errors(pred, labels);
  const auto a = absolute_position_errors(pred, labels);
  if (o_.free_only && fixed.size() != e.size())
    throw InputError("free-only metrics need a fixed-node mask for every node");
  double sample_max = 0.0, sample_sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t v = 0; v < e.size(); ++v) {
    if (o_.free_only && fixed[v]) continue;
    ++counted;
    for (int k = 0; k < 3; ++k) abs_axis_[k] += std::abs(labels[3 * v + k] - pred[3 * v + k]);
    e_sum_ += e[v];
    e_sq_ += e[v] * e[v];
    a_sum_ += a[v];
    a_sq_ += a[v] * a[v];
    if (e[v] <= o_.threshold) ++e_within_;
    if (a[v] <= o_.threshold) ++a_within_;
    if (a[v] > e[v] * (1.0 + 1e-12) + 1e-15) ++violations_;
    sample_max = std::max(sample_max, e[v]);
    sample_sum += e[v];
  }
  ++samples_;
  nodes_ += counted;
  max_sum_ += sample_max;
  max_sq_ += sample_max * sample_max;
  loss_sum_ += counted ? sample_sum / static_cast<double>(counted) : 0.0;
}

void MetricsAccumulator::merge(const MetricsAccumulator& o) {
  samples_ += o.samples_;
  nodes_ += o.nodes_;
  for (int k = 0; k < 3; ++k) abs_axis_[k] += o.abs_axis_[k];
  e_sum_ += o.e_sum_;
  e_sq_ += o.e_sq_;
  a_sum_ += o.a_sum_;
  a_sq_ += o.a_sq_;
  max_sum_ += o.max_sum_;
  max_sq_ += o.max_sq_;
  loss_sum_ += o.loss_sum_;
  e_within_ += o.e_within_;
  a_within_ += o.a_within_;
  violations_ += o.violations_;
}

MetricsReport MetricsAccumulator::report() const {
  if (samples_ == 0 || nodes_ == 0) throw InputError("cannot evaluate an empty split");
  MetricsReport r;
  const double n = static_cast<double>(nodes_);
  const double s = static_cast<double>(samples_);
  r.sample_count = samples_;
  r.node_count = nodes_;
  r.threshold = o_.threshold;
  r.free_only = o_.free_only;
  for (int k = 0; k < 3; ++k) r.mae[k] = abs_axis_[k] / n;
  r.euclidean_mean = e_sum_ / n;
  r.euclidean_std = stddev(e_sum_, e_sq_, nodes_);
  r.euclidean_within = 100.0 * static_cast<double>(e_within_) / n;
  r.absolute_mean = a_sum_ / n;
  r.absolute_std = stddev(a_sum_, a_sq_, nodes_);
  r.absolute_within = 100.0 * static_cast<double>(a_within_) / n;
  r.max_euclidean_mean = max_sum_ / s;
  r.max_euclidean_std = stddev(max_sum_, max_sq_, samples_);
  r.loss = loss_sum_ / s;
  r.triangle_violations = violations_;
  return r;
}

std::string MetricsReport::to_table() const {
  char buf[1024];
  std::snprintf(buf, sizeof buf,
                "samples                      %zu\n"
                "nodes evaluated              %zu%s\n"
                "MAE x / y / z (mm)           %.4f / %.4f / %.4f\n"
                "Euclidean error (mm)         %.4f +- %.4f\n"
                "Euclidean error <= %g mm (%%) %.2f\n"
                "Abs. position error (mm)     %.4f +- %.4f\n"
                "Abs. position <= %g mm (%%)   %.2f\n"
                "Max Euclidean error (mm)     %.4f +- %.4f\n",
                sample_count, node_count, free_only ? " (free nodes only)" : "", mae[0], mae[1], mae[2],
                euclidean_mean, euclidean_std, threshold, euclidean_within, absolute_mean, absolute_std, threshold,
                absolute_within, max_euclidean_mean, max_euclidean_std);
  return buf;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["sample_count"] = sample_count;
  j["node_count"] = node_count;
  j["threshold_mm"] = threshold;
  j["free_only"] = free_only;
  j["mae_mm"] = mae;
  j["euclidean_mean_mm"] = euclidean_mean;
  j["euclidean_std_mm"] = euclidean_std;
  j["euclidean_within_pct"] = euclidean_within;
  j["absolute_mean_mm"] = absolute_mean;
  j["absolute_std_mm"] = absolute_std;
  j["absolute_within_pct"] = absolute_within;
  j["max_euclidean_mean_mm"] = max_euclidean_mean;
  j["max_euclidean_std_mm"] = max_euclidean_std;
  j["loss_mm"] = loss;
  j["triangle_violations"] = triangle_violations;
  return j.dump(2) + "\n";
}

}  // namespace physgnn::train
