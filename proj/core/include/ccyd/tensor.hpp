#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ccyd {

// Shared state of one tensor node. Nodes form the reverse-mode tape:
// `parents` are the inputs of the op that produced this node and
// `backward_fn` scatters this node's grad into theirs.
struct TensorData {
  std::vector<int> shape;
  std::vector<float> data;
  bool requires_grad = false;
  std::vector<float> grad;
  std::vector<std::shared_ptr<TensorData>> parents;
  std::function<void()> backward_fn;

  std::size_t size() const { return data.size(); }
  bool is_leaf() const { return !backward_fn; }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
  }
};

// Value-semantics handle over a graph node. Copying shares the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, float value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<float> data,
                          bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const std::vector<int>& shape() const { return d_->shape; }
  int dim(int i) const { return d_->shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(d_->shape.size()); }
  std::size_t size() const { return d_->size(); }

  float* data() { return d_->data.data(); }
  const float* data() const { return d_->data.data(); }
  std::vector<float>& vec() { return d_->data; }
  const std::vector<float>& vec() const { return d_->data; }

  float item() const;

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool rg) { d_->requires_grad = rg; }
  float* grad() {
    d_->ensure_grad();
    return d_->grad.data();
  }
  const std::vector<float>& grad_vec() const { return d_->grad; }
  void zero_grad() { d_->grad.assign(d_->data.size(), 0.0f); }

  // Copy of values with no graph attachment.
  Tensor detach() const;

  std::shared_ptr<TensorData> node() const { return d_; }

 private:
  std::shared_ptr<TensorData> d_;
};

// Taping can be suspended (inference, oracles) with an RAII guard.
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// --- ops ---------------------------------------------------------------

// input N×C×H×W, weight O×I×k×k, bias O.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad);

Tensor leaky_relu(const Tensor& x, float slope);
Tensor sigmoid(const Tensor& x);

// kernel k, stride, symmetric zero pad; gradient routes to the argmax,
// first (lowest flat index) wins on ties.
Tensor maxpool2d(const Tensor& x, int k, int stride, int pad);

Tensor upsample_nearest_2x(const Tensor& x);
Tensor concat_channels(const std::vector<Tensor>& xs);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, float s);
Tensor mul_scalar(const Tensor& a, float s);
Tensor sqrt_op(const Tensor& a);
Tensor atan_op(const Tensor& a);
Tensor clamp_min(const Tensor& a, float lo);

Tensor matmul(const Tensor& a, const Tensor& b);  // 2-D × 2-D
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Picks flat elements; backward scatter-adds.
Tensor gather(const Tensor& a, const std::vector<std::int64_t>& flat_indices);

// Mean of the stable logit-form binary cross entropy over all elements.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);
// Same, restricted to positions where mask != 0 (mean over those).
Tensor bce_with_logits_masked(const Tensor& logits, const std::vector<float>& targets,
                              const std::vector<std::uint8_t>& mask);

// Reverse pass from a scalar loss. Leaf grads accumulate across calls,
// intermediate grads are recomputed fresh each call.
void backward(const Tensor& loss);

std::string shape_str(const std::vector<int>& shape);

}  // namespace ccyd
