#pragma once

// Minimal reverse-mode differentiation over NCHW double tensors.
//
// A Tape records every tensor produced during a forward pass together with
// a closure that pushes the output gradient back to its inputs. Tensors are
// light handles (tape, node id). Parameters live outside the tape in shared
// TensorData buffers; binding one with Tape::variable makes backward()
// accumulate straight into the parameter's gradient.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace flowfuse {
struct FlowField;
}

namespace flowfuse::nn {

struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t size() const { return static_cast<std::size_t>(n) * c * h * w; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::string str() const;
  bool operator==(const Shape&) const = default;
};

struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;

  TensorData() = default;
  explicit TensorData(Shape s, double fill = 0.0)
      : shape(s), value(s.size(), fill), grad(s.size(), 0.0) {}
  TensorData(Shape s, std::vector<double> values);

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

using TensorDataPtr = std::shared_ptr<TensorData>;

class Tape;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Shape& shape() const;
  std::span<const double> value() const;
  std::span<double> grad() const;
  bool requires_grad() const;
  // Value of a single-element tensor.
  double item() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Pushes the gradient of node `self` into its inputs.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Shape shape, std::vector<double> values);
  // Binds externally owned storage as a differentiable leaf.
  Tensor variable(TensorDataPtr data);
  Tensor record(Shape shape, std::vector<double> values, std::span<const Tensor> inputs,
                BackwardFn backward);

  // Zeroes every interior gradient, seeds d(root)/d(root) = 1 and replays the
  // tape in reverse. Leaf gradients accumulate across calls.
  void backward(const Tensor& root);

  TensorData& data(std::size_t id) { return *nodes_[id].data; }
  const TensorData& data(std::size_t id) const { return *nodes_[id].data; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    TensorDataPtr data;
    BackwardFn backward;
    bool leaf = false;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// ---- Layer kernels ---------------------------------------------------------

// Zero-padded cross-correlation; w is (out, in, k, k), b is (1, out, 1, 1)
// or an empty handle for no bias.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);
Tensor leaky_relu(const Tensor& x, double slope = 0.1);
// Align-corners-false: output index i samples input coordinate (i + 0.5) / 2 - 0.5.
Tensor bilinear_upsample2x(const Tensor& x);
Tensor concat_channels(std::span<const Tensor> xs);
// 2x2 mean; odd trailing rows/columns are dropped.
Tensor avgpool2x(const Tensor& x);
// Keeps the top-left (h, w) window.
Tensor crop(const Tensor& x, int h, int w);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& x);
// sum_i weights[i] * x[i] with constant weights; handy for scalar probes.
Tensor weighted_sum(const Tensor& x, std::span<const double> weights);

// ---- Parameters ------------------------------------------------------------

struct Parameter {
  std::string name;
  TensorDataPtr data;
  bool decay = true;  // weights are decayed, biases are not
};

// ---- Training recipe -------------------------------------------------------

enum class FlowNorm { kL1, kL2 };

struct TrainConfig {
  std::vector<double> alpha_levels{0.005, 0.01, 0.02, 0.08, 0.32};
  double epsilon = 0.01;
  double q = 0.4;
  double gamma = 0.0004;
  double learning_rate = 0.0001;
  int batch_size = 4;
  int steps = 20000;
  std::uint64_t seed = 1;
  int crop_size = 64;
  FlowNorm norm = FlowNorm::kL1;

  // The single fused output is weighted by alpha_levels[0] alone.
  static TrainConfig single_output();
  void validate() const;
};

// sum_l alpha_l sum_x (|pred_l(x) - gt_l(x)| + eps)^q + gamma ||W||^2.
// pred_levels[l] is (N, 2, H / 2^l, W / 2^l); gt holds the N full-resolution
// ground-truth fields. Level targets are 2x2 mean pools of the valid
// children with displacements halved per level; invalid pixels are skipped.
// Throws if no valid pixel remains.
Tensor robust_loss(std::span<const Tensor> pred_levels, std::span<const FlowField> gt,
                   const TrainConfig& cfg, std::span<const Tensor> decayed_weights);

// ---- Optimiser -------------------------------------------------------------

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

struct AdamHyper {
  double lr = 0.0001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamHyper& hyper);

class Adam {
 public:
  Adam(std::vector<Parameter> params, AdamHyper hyper);
  void step();
  void zero_grad();
  const AdamHyper& hyper() const { return hyper_; }

 private:
  std::vector<Parameter> params_;
  std::vector<AdamState> states_;
  AdamHyper hyper_;
};

// ---- Verification ----------------------------------------------------------

using GraphFn = std::function<Tensor(Tape&, std::span<const Tensor> inputs)>;

struct GradCheckOptions {
  double h = 1e-6;
  // When nonzero, only this many coordinates (spread evenly across all
  // inputs) are probed.
  std::size_t max_coordinates = 0;
  // 2: (f(x+h) - f(x-h)) / 2h. 4: the five-point stencil, which tolerates a
  // larger h and so less rounding noise on deep graphs.
  int order = 2;
  // When positive, every coordinate is also estimated at h/2 and skipped if
  // the two estimates differ by more than this relative amount: the stencil
  // straddles a kink (leaky ReLU at 0) and the function is not smooth there.
  double stability = 0.0;
};

struct GradCheckReport {
  double max_error = 0.0;  // max |a - n| / max(|a|, |n|, 1e-12)
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// Finite differences per input coordinate against the recorded backward
// pass. Input values are restored before returning.
GradCheckReport gradient_check_report(const GraphFn& graph, std::span<const TensorDataPtr> inputs,
                                      const GradCheckOptions& options = {});

// gradient_check_report(...).max_error.
double gradient_check(const GraphFn& graph, std::span<const TensorDataPtr> inputs,
                      const GradCheckOptions& options = {});

// ---- He initialisation -----------------------------------------------------

// Uniform in +-sqrt(6 / fan_in) scaled for leaky-ReLU with the given slope.
void he_uniform(TensorData& w, int fan_in, std::uint64_t seed, double slope = 0.1);

// ---- Checkpoints -----------------------------------------------------------

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  TrainConfig config;
  std::map<std::string, std::string> meta;
  std::vector<NamedTensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace flowfuse::nn
