#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hynt/common.hpp"

namespace hynt {

namespace detail {

struct Node {
  int rows = 0;
  int cols = 0;
  std::vector<real> value;
  std::vector<real> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::int64_t tape_id = -1;  // index on the tape that recorded this op
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // pulls this node's grad into parents

  std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), real(0));
  }
};

}  // namespace detail

// Dense row-major matrix handle. Column-vector convention: a sequence of n
// positions of width d is stored as a d x n matrix; scalars are 1 x 1.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor full(int rows, int cols, real fill, bool requires_grad = false);
  static Tensor from_data(int rows, int cols, std::vector<real> data, bool requires_grad = false);
  static Tensor randn(int rows, int cols, Rng& rng, real stddev, bool requires_grad = false);
  static Tensor scalar_value(real v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  std::size_t size() const { return node_->size(); }
  bool requires_grad() const { return node_->requires_grad; }
  std::int64_t tape_id() const { return node_->tape_id; }

  const std::vector<real>& values() const { return node_->value; }
  real at(int r, int c) const { return node_->value[static_cast<std::size_t>(r) * node_->cols + c]; }
  real scalar() const;

  // Direct mutation; only sound between tapes (optimizer updates, tests).
  std::vector<real>& raw_values() { return node_->value; }
  void set_at(int r, int c, real v) { node_->value[static_cast<std::size_t>(r) * node_->cols + c] = v; }

  const std::vector<real>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }

  std::shared_ptr<detail::Node> node() const { return node_; }

  // Internal: wraps an existing node. Op implementations use this.
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Records ops in execution order; recording order is a topological order and
// backward visits it exactly once in reverse. One tape is active per thread.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }

  // Reverse-mode gradients of a scalar loss w.r.t. every requires_grad leaf.
  // Throws if the loss is not scalar, was not recorded here, or if backward
  // already ran on this tape.
  void backward(const Tensor& loss);

  static Tape* active();

  // Internal: records an op node in execution order.
  void push(std::shared_ptr<detail::Node> n);

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
  bool backward_done_ = false;
};

// Disables recording within a scope; forwards still compute values.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- Core ops -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise (Hadamard)
Tensor scale(const Tensor& a, real c);
// s is a 1x1 tensor broadcast over a (s may be learnable).
Tensor mul_scalar_tensor(const Tensor& a, const Tensor& s);
// Column j scaled by factors[j]; factors are plain data, not differentiated.
Tensor colwise_scale(const Tensor& a, const std::vector<real>& factors);
// b (d x 1) added to every column of a (d x n).
Tensor add_col_broadcast(const Tensor& a, const Tensor& b);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int row0, int count);
Tensor slice_cols(const Tensor& a, int col0, int count);
// Gathers columns by index (repeats allowed); backward scatter-adds.
Tensor select_cols(const Tensor& a, const std::vector<int>& ids);
// Gathers rows by index, keeping them as rows.
Tensor row_select(const Tensor& a, const std::vector<int>& ids);
// Gathers rows of an (N x d) table as the columns of a (d x B) matrix.
Tensor embed_rows(const Tensor& table, const std::vector<int>& ids);
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& a);
// Each column normalized to sum 1.
Tensor softmax_cols(const Tensor& a);
// Per column: standardize to zero mean / unit variance, then gain * x + bias.
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias);
// Inverted dropout. Identity when train is false or rate is 0.
Tensor dropout(const Tensor& a, real rate, bool train, Rng* rng);
// y_b = dot(w.row(b), m.col(b)); w is (B x d), m is (d x B), result (1 x B).
Tensor rows_dot_cols(const Tensor& w, const Tensor& m);
Tensor sum_all(const Tensor& a);

// Contiguous column ranges treated as independent attention groups.
struct Segment {
  int start = 0;
  int length = 0;
};

// Scaled dot-product attention per segment: within each segment S of columns,
// out_S = V_S softmax_cols((K_S^T Q_S) * scale), so each query column mixes
// value columns with weights normalized over the segment's key positions.
// Columns outside every segment are passed through as zeros.
Tensor segment_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                         const std::vector<Segment>& segments, real scale);

// ---- Losses ---------------------------------------------------------------

// Mean over columns of -sum_j t_j log softmax(logits_col)_j with
// t = (1-eps) * onehot(target) + eps / C.
Tensor cross_entropy_smoothed(const Tensor& logits, const std::vector<int>& targets, real eps);
// Mean over columns of (pred - target)^2; pred is 1 x B.
Tensor mse(const Tensor& pred, const std::vector<real>& targets);

}  // namespace hynt
