#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace ptlab {

class Graph;

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Value storage. float32 data; scalar results of reductions additionally
// keep their float64-accumulated value in `precise` so that loss values and
// the finite-difference oracle are not limited by float32 resolution.
struct TensorData {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // empty until first needed; same length as value
  bool requires_grad = false;
  bool has_precise = false;
  double precise = 0.0;

  void ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> v, bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return d != nullptr; }
  const Shape& shape() const { return d->shape; }
  int64_t numel() const { return static_cast<int64_t>(d->value.size()); }
  int64_t dim(size_t i) const { return d->shape[i]; }
  int64_t rank() const { return static_cast<int64_t>(d->shape.size()); }

  std::span<float> data() { return d->value; }
  std::span<const float> data() const { return d->value; }
  float at(int64_t i) const { return d->value[static_cast<size_t>(i)]; }

  bool has_grad() const { return !d->grad.empty(); }
  std::span<float> grad();              // allocates zeros on first use
  std::span<const float> grad() const;  // empty span if never allocated
  void zero_grad();

  bool requires_grad() const { return d->requires_grad; }
  void set_requires_grad(bool rg) { d->requires_grad = rg; }

  float item() const;    // requires numel() == 1
  double item64() const; // precise value when available, else item()

  Tensor clone() const;  // deep copy of values (not grad)

  std::shared_ptr<TensorData> d;
};

// Dynamic tape. One Graph records one forward pass; backward() walks it in
// reverse and is callable once. Graphs are single-threaded; tensors that are
// not attached to any live graph are plain immutable values and may be
// shared across threads.
//
// Ops only record nodes when gradients can flow (an input requires grad or
// is itself a recorded result). Forward passes through frozen parameters
// build no tape at all.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Populates .grad on every requires_grad tensor reachable from `loss`.
  // loss must be a scalar recorded in this graph. Callable once.
  void backward(const Tensor& loss);

  size_t node_count() const { return nodes_.size(); }
  // How many times each node's backward rule has executed (instrumentation).
  const std::vector<int>& backward_exec_counts() const { return exec_counts_; }
  bool backward_has_run() const { return backward_done_; }
  // Unique id of a tensor within this graph, -1 if not recorded here.
  int node_id(const Tensor& t) const;

  // -- used by op implementations --
  bool tracked(const Tensor& t) const;
  int track_input(const Tensor& t);
  int add_node(const char* op, std::vector<int> inputs, const Tensor& out,
               std::function<void()> backward_fn);

 private:
  struct Node {
    const char* op;
    std::vector<int> inputs;
    int out_slot;
    std::function<void()> backward_fn;  // empty for leaf slots
  };

  std::vector<Node> nodes_;                         // op records, topological order
  std::vector<std::shared_ptr<TensorData>> slots_;  // slot id -> data
  std::unordered_map<const TensorData*, int> ids_;
  std::vector<int> exec_counts_;  // parallel to nodes_
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Ops. All take the recording graph first. Shapes are validated eagerly;
// mismatches throw Error(internal) naming both shapes. Binary elementwise
// ops allow a single-element operand as a scalar broadcast; there is no
// other broadcasting.
// ---------------------------------------------------------------------------

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);     // [m,k]x[k,n] -> [m,n]
Tensor matmul_nt(Graph& g, const Tensor& a, const Tensor& b);  // [m,k]x[n,k]^T -> [m,n]

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor neg(Graph& g, const Tensor& a);
Tensor add_scalar(Graph& g, const Tensor& a, double c);
Tensor scale(Graph& g, const Tensor& a, double c);
Tensor add_bias(Graph& g, const Tensor& x, const Tensor& b);  // [m,n] + [n] per row

Tensor exp(Graph& g, const Tensor& a);
Tensor log(Graph& g, const Tensor& a);  // throws on non-positive input
Tensor sigmoid(Graph& g, const Tensor& a);
Tensor softplus(Graph& g, const Tensor& a);
Tensor gelu(Graph& g, const Tensor& a);

Tensor sum(Graph& g, const Tensor& a);   // -> scalar, float64 accumulation
Tensor mean(Graph& g, const Tensor& a);  // -> scalar
Tensor sum_axis(Graph& g, const Tensor& a, int axis);   // 2-D only
Tensor mean_axis(Graph& g, const Tensor& a, int axis);  // 2-D only

Tensor slice_rows(Graph& g, const Tensor& a, int64_t r0, int64_t nrows);
Tensor slice_cols(Graph& g, const Tensor& a, int64_t c0, int64_t ncols);
Tensor concat_cols(Graph& g, std::span<const Tensor> parts);

Tensor embedding_lookup(Graph& g, const Tensor& table, std::span<const int32_t> ids);

Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& shift,
                  double eps = 1e-5);

// Row-wise softmax of a [T,T] score matrix where row t attends to columns
// <= t only; strictly-upper entries of the result are 0.
Tensor causal_softmax(Graph& g, const Tensor& scores);

// Mean over unmasked positions of -log softmax(logits)[t, targets[t]].
// Throws Error(data) "empty loss" when the mask has no active position.
Tensor softmax_cross_entropy(Graph& g, const Tensor& logits,
                             std::span<const int32_t> targets,
                             std::span<const uint8_t> mask);

// Sum over unmasked positions of log softmax(logits)[t, targets[t]].
Tensor picked_logprob_sum(Graph& g, const Tensor& logits,
                          std::span<const int32_t> targets,
                          std::span<const uint8_t> mask);

}  // namespace ptlab
