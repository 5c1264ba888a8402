#include "flowfuse/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "flowfuse/errors.hpp"

namespace flowfuse::nn {

std::string Shape::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
         std::to_string(w) + ")";
}

TensorData::TensorData(Shape s, std::vector<double> values)
    : shape(s), value(std::move(values)), grad(s.size(), 0.0) {
  if (value.size() != s.size()) {
    throw std::invalid_argument("TensorData: " + std::to_string(value.size()) +
                                " values for shape " + s.str());
  }
}

const Shape& Tensor::shape() const { return tape_->data(id_).shape; }
std::span<const double> Tensor::value() const { return tape_->data(id_).value; }
std::span<double> Tensor::grad() const { return tape_->data(id_).grad; }
bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }

double Tensor::item() const {
  const auto v = value();
  if (v.size() != 1) throw std::logic_error("item() on tensor of shape " + shape().str());
  return v[0];
}

Tensor Tape::constant(Shape shape, std::vector<double> values) {
  nodes_.push_back({std::make_shared<TensorData>(shape, std::move(values)), nullptr, true, false});
  return {this, nodes_.size() - 1};
}

Tensor Tape::variable(TensorDataPtr data) {
  if (data->grad.size() != data->value.size()) data->grad.assign(data->value.size(), 0.0);
  nodes_.push_back({std::move(data), nullptr, true, true});
  return {this, nodes_.size() - 1};
}

Tensor Tape::record(Shape shape, std::vector<double> values, std::span<const Tensor> inputs,
                    BackwardFn backward) {
  bool needs = false;
  for (const Tensor& t : inputs) {
    if (t.tape() != this) throw std::logic_error("Tape::record: input from another tape");
    needs = needs || nodes_[t.id()].requires_grad;
  }
  nodes_.push_back({std::make_shared<TensorData>(shape, std::move(values)),
                    needs ? std::move(backward) : nullptr, false, needs});
  return {this, nodes_.size() - 1};
}

void Tape::backward(const Tensor& root) {
  if (root.tape() != this) throw std::logic_error("Tape::backward: root from another tape");
  if (root.shape().size() != 1) {
    throw std::logic_error("Tape::backward: root must be a scalar, got " + root.shape().str());
  }
  for (Node& node : nodes_) {
    if (!node.leaf) node.data->zero_grad();
  }
  nodes_[root.id()].data->grad[0] += 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this, i);
  }
}

TrainConfig TrainConfig::single_output() {
  TrainConfig cfg;
  cfg.alpha_levels = {0.005};
  return cfg;
}

void TrainConfig::validate() const {
  if (alpha_levels.empty()) throw ConfigError("train: alpha_levels must not be empty");
  if (!(epsilon > 0.0)) throw ConfigError("train: epsilon must be > 0");
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("train: q must lie in (0, 1]");
  if (!(gamma >= 0.0)) throw ConfigError("train: gamma must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (steps < 0) throw ConfigError("train: steps must be >= 0");
  if (crop_size < 8) throw ConfigError("train: crop_size must be >= 8");
}

void he_uniform(TensorData& w, int fan_in, std::uint64_t seed, double slope) {
  const double gain = std::sqrt(2.0 / (1.0 + slope * slope));
  const double bound = gain * std::sqrt(3.0 / fan_in);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& x : w.value) x = dist(rng);
}

GradCheckReport gradient_check_report(const GraphFn& graph, std::span<const TensorDataPtr> inputs,
                                      const GradCheckOptions& options) {
  if (options.order != 2 && options.order != 4) {
    throw std::invalid_argument("gradient_check: order must be 2 or 4");
  }
  auto evaluate = [&]() {
    Tape tape;
    std::vector<Tensor> bound;
    for (const auto& in : inputs) bound.push_back(tape.variable(in));
    return graph(tape, bound).item();
  };

  std::vector<std::vector<double>> analytic;
  {
    for (const auto& in : inputs) in->zero_grad();
    Tape tape;
    std::vector<Tensor> bound;
    for (const auto& in : inputs) bound.push_back(tape.variable(in));
    const Tensor out = graph(tape, bound);
    tape.backward(out);
    for (const auto& in : inputs) analytic.push_back(in->grad);
  }

  std::size_t total = 0;
  for (const auto& in : inputs) total += in->value.size();
  const std::size_t stride =
      options.max_coordinates == 0 || options.max_coordinates >= total
          ? 1
          : (total + options.max_coordinates - 1) / options.max_coordinates;

  GradCheckReport report;
  std::size_t flat = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& values = inputs[k]->value;
    for (std::size_t i = 0; i < values.size(); ++i, ++flat) {
      if (flat % stride != 0) continue;
      const double saved = values[i];
      auto at = [&](double offset) {
        values[i] = saved + offset;
        const double f = evaluate();
        values[i] = saved;
        return f;
      };
      auto estimate = [&](double h) {
        if (options.order == 2) return (at(h) - at(-h)) / (2.0 * h);
        return (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
      };
      double numeric = estimate(options.h);
      if (options.stability > 0.0) {
        const double finer = estimate(0.5 * options.h);
        const double scale = std::max({std::abs(numeric), std::abs(finer), 1e-12});
        if (std::abs(numeric - finer) > options.stability * scale) {
          ++report.skipped;
          continue;
        }
        numeric = finer;
      }
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
      report.max_error = std::max(report.max_error, std::abs(a - numeric) / denom);
      ++report.checked;
    }
  }
  return report;
}

double gradient_check(const GraphFn& graph, std::span<const TensorDataPtr> inputs,
                      const GradCheckOptions& options) {
  return gradient_check_report(graph, inputs, options).max_error;
}

}  // namespace flowfuse::nn
