#include "hynt/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <utility>

namespace hynt {

namespace {

using MatRM = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<MatRM>;
using CMap = Eigen::Map<const MatRM>;

thread_local Tape* g_active_tape = nullptr;
thread_local bool g_grad_enabled = true;

constexpr real kLayerNormEps = real(1e-8);

CMap cmap(const detail::Node& n) { return CMap(n.value.data(), n.rows, n.cols); }

[[noreturn]] void fail(const char* op, const std::string& what) {
  throw NumericError(std::string(op) + ": " + what);
}

std::string shape_str(const Tensor& t) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%dx%d", t.rows(), t.cols());
  return buf;
}

void ensure_finite(const char* op, const std::vector<real>& v) {
  for (real x : v) {
    if (!std::isfinite(x)) fail(op, "produced a non-finite value");
  }
}

// Builds the result node for an op: checks finiteness, wires parents, and
// records on the active tape when gradients are being tracked.
Tensor finish_op(const char* op, int rows, int cols, std::vector<real>&& value,
                 std::vector<Tensor> parents, std::function<void(detail::Node&)> backward_fn) {
  ensure_finite(op, value);
  auto node = std::make_shared<detail::Node>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(value);
  bool any_grad = false;
  for (const Tensor& p : parents) any_grad = any_grad || p.requires_grad();
  Tape* tape = Tape::active();
  if (any_grad && g_grad_enabled && tape != nullptr) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const Tensor& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
    tape->push(node);
  }
  return Tensor(std::move(node));
}

// Accumulates src into parent->grad if the parent participates in backward.
void accumulate(const std::shared_ptr<detail::Node>& parent, const real* src, std::size_t n) {
  if (!parent->requires_grad) return;
  parent->ensure_grad();
  real* dst = parent->grad.data();
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

Map grad_target(const std::shared_ptr<detail::Node>& parent) {
  parent->ensure_grad();
  return Map(parent->grad.data(), parent->rows, parent->cols);
}

}  // namespace

// ---- Tensor factories -------------------------------------------------------

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  return from_data(rows, cols, std::vector<real>(static_cast<std::size_t>(rows) * cols, real(0)),
                   requires_grad);
}

Tensor Tensor::full(int rows, int cols, real fill, bool requires_grad) {
  return from_data(rows, cols, std::vector<real>(static_cast<std::size_t>(rows) * cols, fill),
                   requires_grad);
}

Tensor Tensor::from_data(int rows, int cols, std::vector<real> data, bool requires_grad) {
  if (rows <= 0 || cols <= 0) throw NumericError("tensor: dimensions must be positive");
  if (data.size() != static_cast<std::size_t>(rows) * cols) {
    throw NumericError("tensor: data length does not match shape");
  }
  ensure_finite("tensor", data);
  auto node = std::make_shared<detail::Node>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::randn(int rows, int cols, Rng& rng, real stddev, bool requires_grad) {
  std::vector<real> data(static_cast<std::size_t>(rows) * cols);
  for (real& x : data) x = static_cast<real>(rng.normal()) * stddev;
  return from_data(rows, cols, std::move(data), requires_grad);
}

Tensor Tensor::scalar_value(real v, bool requires_grad) {
  return from_data(1, 1, {v}, requires_grad);
}

real Tensor::scalar() const {
  if (size() != 1) throw NumericError("scalar: tensor is not 1x1");
  return node_->value[0];
}

// ---- Tape -------------------------------------------------------------------

Tape::Tape() {
  if (g_active_tape != nullptr) {
    throw NumericError("tape: a tape is already active on this thread");
  }
  g_active_tape = this;
}

Tape::~Tape() {
  if (g_active_tape == this) g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

void Tape::push(std::shared_ptr<detail::Node> n) {
  n->tape_id = static_cast<std::int64_t>(nodes_.size());
  nodes_.push_back(std::move(n));
}

void Tape::backward(const Tensor& loss) {
  if (backward_done_) throw NumericError("backward: tape already consumed");
  if (!loss.defined() || loss.size() != 1) throw NumericError("backward: loss must be 1x1");
  auto loss_node = loss.node();
  std::int64_t id = loss_node->tape_id;
  if (id < 0 || id >= static_cast<std::int64_t>(nodes_.size()) ||
      nodes_[static_cast<std::size_t>(id)] != loss_node) {
    throw NumericError("backward: loss was not recorded on this tape");
  }
  backward_done_ = true;
  loss_node->grad.assign(1, real(1));
  for (std::int64_t i = id; i >= 0; --i) {
    detail::Node& n = *nodes_[static_cast<std::size_t>(i)];
    if (n.grad.empty()) continue;  // not on the path to the loss
    if (n.backward_fn) n.backward_fn(n);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---- Elementwise and linear ops ----------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    fail("matmul", "inner dimensions differ (" + shape_str(a) + " vs " + shape_str(b) + ")");
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<real> out(static_cast<std::size_t>(m) * n);
  {
    CMap A(a.values().data(), m, k), B(b.values().data(), k, n);
    Map C(out.data(), m, n);
    C.noalias() = A * B;
  }
  return finish_op("matmul", m, n, std::move(out), {a, b}, [](detail::Node& self) {
    auto pa = self.parents[0];
    auto pb = self.parents[1];
    CMap G(self.grad.data(), self.rows, self.cols);
    if (pa->requires_grad) grad_target(pa).noalias() += G * cmap(*pb).transpose();
    if (pb->requires_grad) grad_target(pb).noalias() += cmap(*pa).transpose() * G;
  });
}

namespace {

Tensor pointwise_binary(const char* op, const Tensor& a, const Tensor& b,
                        std::function<real(real, real)> f,
                        std::function<void(detail::Node&)> backward_fn) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(op, "shape mismatch (" + shape_str(a) + " vs " + shape_str(b) + ")");
  }
  std::vector<real> out(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
  return finish_op(op, a.rows(), a.cols(), std::move(out), {a, b}, std::move(backward_fn));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return pointwise_binary(
      "add", a, b, [](real x, real y) { return x + y; },
      [](detail::Node& self) {
        accumulate(self.parents[0], self.grad.data(), self.grad.size());
        accumulate(self.parents[1], self.grad.data(), self.grad.size());
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return pointwise_binary(
      "sub", a, b, [](real x, real y) { return x - y; },
      [](detail::Node& self) {
        accumulate(self.parents[0], self.grad.data(), self.grad.size());
        auto pb = self.parents[1];
        if (!pb->requires_grad) return;
        pb->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return pointwise_binary(
      "mul", a, b, [](real x, real y) { return x * y; },
      [](detail::Node& self) {
        auto pa = self.parents[0];
        auto pb = self.parents[1];
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) {
            pa->grad[i] += self.grad[i] * pb->value[i];
          }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) {
            pb->grad[i] += self.grad[i] * pa->value[i];
          }
        }
      });
}

Tensor scale(const Tensor& a, real c) {
  if (!std::isfinite(c)) fail("scale", "non-finite factor");
  std::vector<real> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  return finish_op("scale", a.rows(), a.cols(), std::move(out), {a}, [c](detail::Node& self) {
    auto pa = self.parents[0];
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * c;
  });
}

Tensor mul_scalar_tensor(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) fail("mul_scalar_tensor", "scale tensor must be 1x1");
  const real c = s.values()[0];
  std::vector<real> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  return finish_op("mul_scalar_tensor", a.rows(), a.cols(), std::move(out), {a, s},
                   [](detail::Node& self) {
                     auto pa = self.parents[0];
                     auto ps = self.parents[1];
                     const real c = ps->value[0];
                     if (pa->requires_grad) {
                       pa->ensure_grad();
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         pa->grad[i] += self.grad[i] * c;
                       }
                     }
                     if (ps->requires_grad) {
                       ps->ensure_grad();
                       real acc = 0;
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         acc += self.grad[i] * pa->value[i];
                       }
                       ps->grad[0] += acc;
                     }
                   });
}

Tensor colwise_scale(const Tensor& a, const std::vector<real>& factors) {
  if (static_cast<int>(factors.size()) != a.cols()) {
    fail("colwise_scale", "factor count does not match column count");
  }
  ensure_finite("colwise_scale", factors);
  const int r = a.rows(), c = a.cols();
  std::vector<real> out(a.size());
  const auto& av = a.values();
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) {
      out[static_cast<std::size_t>(i) * c + j] = av[static_cast<std::size_t>(i) * c + j] * factors[j];
    }
  }
  return finish_op("colwise_scale", r, c, std::move(out), {a},
                   [factors](detail::Node& self) {
                     auto pa = self.parents[0];
                     if (!pa->requires_grad) return;
                     pa->ensure_grad();
                     const int r = self.rows, c = self.cols;
                     for (int i = 0; i < r; ++i) {
                       for (int j = 0; j < c; ++j) {
                         const std::size_t idx = static_cast<std::size_t>(i) * c + j;
                         pa->grad[idx] += self.grad[idx] * factors[j];
                       }
                     }
                   });
}

Tensor add_col_broadcast(const Tensor& a, const Tensor& b) {
  if (b.cols() != 1 || b.rows() != a.rows()) {
    fail("add_col_broadcast", "bias must be " + std::to_string(a.rows()) + "x1, got " + shape_str(b));
  }
  const int r = a.rows(), c = a.cols();
  std::vector<real> out(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < r; ++i) {
    const real bi = bv[static_cast<std::size_t>(i)];
    for (int j = 0; j < c; ++j) {
      out[static_cast<std::size_t>(i) * c + j] = av[static_cast<std::size_t>(i) * c + j] + bi;
    }
  }
  return finish_op("add_col_broadcast", r, c, std::move(out), {a, b}, [](detail::Node& self) {
    auto pa = self.parents[0];
    auto pb = self.parents[1];
    const int r = self.rows, c = self.cols;
    accumulate(pa, self.grad.data(), self.grad.size());
    if (!pb->requires_grad) return;
    pb->ensure_grad();
    for (int i = 0; i < r; ++i) {
      real acc = 0;
      for (int j = 0; j < c; ++j) acc += self.grad[static_cast<std::size_t>(i) * c + j];
      pb->grad[static_cast<std::size_t>(i)] += acc;
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail("concat_rows", "no inputs");
  const int c = parts.front().cols();
  int total_rows = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != c) fail("concat_rows", "column counts differ");
    total_rows += p.rows();
  }
  std::vector<real> out(static_cast<std::size_t>(total_rows) * c);
  int row0 = 0;
  for (const Tensor& p : parts) {
    std::copy(p.values().begin(), p.values().end(),
              out.begin() + static_cast<std::ptrdiff_t>(row0) * c);
    row0 += p.rows();
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return finish_op("concat_rows", total_rows, c, std::move(out), std::move(parents),
                   [](detail::Node& self) {
                     const int c = self.cols;
                     int row0 = 0;
                     for (auto& parent : self.parents) {
                       accumulate(parent, self.grad.data() + static_cast<std::ptrdiff_t>(row0) * c,
                                  parent->size());
                       row0 += parent->rows;
                     }
                   });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail("concat_cols", "no inputs");
  const int r = parts.front().rows();
  int total_cols = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != r) fail("concat_cols", "row counts differ");
    total_cols += p.cols();
  }
  std::vector<real> out(static_cast<std::size_t>(r) * total_cols);
  {
    Map O(out.data(), r, total_cols);
    int col0 = 0;
    for (const Tensor& p : parts) {
      O.middleCols(col0, p.cols()) = CMap(p.values().data(), r, p.cols());
      col0 += p.cols();
    }
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return finish_op("concat_cols", r, total_cols, std::move(out), std::move(parents),
                   [](detail::Node& self) {
                     CMap G(self.grad.data(), self.rows, self.cols);
                     int col0 = 0;
                     for (auto& parent : self.parents) {
                       if (parent->requires_grad) {
                         grad_target(parent) += G.middleCols(col0, parent->cols);
                       }
                       col0 += parent->cols;
                     }
                   });
}

Tensor slice_rows(const Tensor& a, int row0, int count) {
  if (row0 < 0 || count <= 0 || row0 + count > a.rows()) fail("slice_rows", "range out of bounds");
  const int c = a.cols();
  std::vector<real> out(static_cast<std::size_t>(count) * c);
  std::copy(a.values().begin() + static_cast<std::ptrdiff_t>(row0) * c,
            a.values().begin() + static_cast<std::ptrdiff_t>(row0 + count) * c, out.begin());
  return finish_op("slice_rows", count, c, std::move(out), {a}, [row0](detail::Node& self) {
    auto pa = self.parents[0];
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    const std::size_t offset = static_cast<std::size_t>(row0) * self.cols;
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[offset + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, int col0, int count) {
  if (col0 < 0 || count <= 0 || col0 + count > a.cols()) fail("slice_cols", "range out of bounds");
  const int r = a.rows();
  std::vector<real> out(static_cast<std::size_t>(r) * count);
  {
    Map O(out.data(), r, count);
    O = CMap(a.values().data(), r, a.cols()).middleCols(col0, count);
  }
  return finish_op("slice_cols", r, count, std::move(out), {a}, [col0](detail::Node& self) {
    auto pa = self.parents[0];
    if (!pa->requires_grad) return;
    grad_target(pa).middleCols(col0, self.cols) += CMap(self.grad.data(), self.rows, self.cols);
  });
}

Tensor select_cols(const Tensor& a, const std::vector<int>& ids) {
  if (ids.empty()) fail("select_cols", "no indices");
  for (int id : ids) {
    if (id < 0 || id >= a.cols()) fail("select_cols", "index out of range");
  }
  const int r = a.rows(), n = static_cast<int>(ids.size());
  std::vector<real> out(static_cast<std::size_t>(r) * n);
  {
    Map O(out.data(), r, n);
    CMap A(a.values().data(), r, a.cols());
    for (int j = 0; j < n; ++j) O.col(j) = A.col(ids[static_cast<std::size_t>(j)]);
  }
  return finish_op("select_cols", r, n, std::move(out), {a}, [ids](detail::Node& self) {
    auto pa = self.parents[0];
    if (!pa->requires_grad) return;
    Map PG = grad_target(pa);
    CMap G(self.grad.data(), self.rows, self.cols);
    for (int j = 0; j < self.cols; ++j) PG.col(ids[static_cast<std::size_t>(j)]) += G.col(j);
  });
}

Tensor row_select(const Tensor& a, const std::vector<int>& ids) {
  if (ids.empty()) fail("row_select", "no indices");
  for (int id : ids) {
    if (id < 0 || id >= a.rows()) fail("row_select", "index out of range");
  }
  const int c = a.cols(), n = static_cast<int>(ids.size());
  std::vector<real> out(static_cast<std::size_t>(n) * c);
  for (int j = 0; j < n; ++j) {
    const real* src = a.values().data() + static_cast<std::size_t>(ids[static_cast<std::size_t>(j)]) * c;
    std::copy(src, src + c, out.begin() + static_cast<std::ptrdiff_t>(j) * c);
  }
  return finish_op("row_select", n, c, std::move(out), {a}, [ids](detail::Node& self) {
    auto pa = self.parents[0];
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    const int c = self.cols;
    for (int j = 0; j < self.rows; ++j) {
      real* dst = pa->grad.data() + static_cast<std::size_t>(ids[static_cast<std::size_t>(j)]) * c;
      const real* src = self.grad.data() + static_cast<std::size_t>(j) * c;
      for (int i = 0; i < c; ++i) dst[i] += src[i];
    }
  });
}

Tensor embed_rows(const Tensor& table, const std::vector<int>& ids) {
  if (ids.empty()) fail("embed_rows", "no indices");
  for (int id : ids) {
    if (id < 0 || id >= table.rows()) fail("embed_rows", "index out of range");
  }
  const int d = table.cols(), n = static_cast<int>(ids.size());
  std::vector<real> out(static_cast<std::size_t>(d) * n);
  {
    Map O(out.data(), d, n);
    CMap T(table.values().data(), table.rows(), d);
    for (int j = 0; j < n; ++j) O.col(j) = T.row(ids[static_cast<std::size_t>(j)]).transpose();
  }
  return finish_op("embed_rows", d, n, std::move(out), {table}, [ids](detail::Node& self) {
    auto pt = self.parents[0];
    if (!pt->requires_grad) return;
    Map TG = grad_target(pt);
    CMap G(self.grad.data(), self.rows, self.cols);
    for (int j = 0; j < self.cols; ++j) {
      TG.row(ids[static_cast<std::size_t>(j)]) += G.col(j).transpose();
    }
  });
}

Tensor transpose(const Tensor& a) {
  const int r = a.rows(), c = a.cols();
  std::vector<real> out(a.size());
  {
    Map O(out.data(), c, r);
    O = CMap(a.values().data(), r, c).transpose();
  }
  return finish_op("transpose", c, r, std::move(out), {a}, [](detail::Node& self) {
    auto pa = self.parents[0];
    if (!pa->requires_grad) return;
    grad_target(pa) += CMap(self.grad.data(), self.rows, self.cols).transpose();
  });
}

Tensor relu(const Tensor& a) {
  std::vector<real> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > real(0) ? av[i] : real(0);
  return finish_op("relu", a.rows(), a.cols(), std::move(out), {a}, [](detail::Node& self) {
    auto pa = self.parents[0];
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa->value[i] > real(0)) pa->grad[i] += self.grad[i];
    }
  });
}

// ---- Normalization, attention, dropout ---------------------------------------

Tensor softmax_cols(const Tensor& a) {
  const int r = a.rows(), c = a.cols();
  std::vector<real> probs(a.size());
  const auto& av = a.values();
  for (int j = 0; j < c; ++j) {
    real m = -std::numeric_limits<real>::infinity();
    for (int i = 0; i < r; ++i) m = std::max(m, av[static_cast<std::size_t>(i) * c + j]);
    real sum = 0;
    for (int i = 0; i < r; ++i) {
      const real e = std::exp(av[static_cast<std::size_t>(i) * c + j] - m);
      probs[static_cast<std::size_t>(i) * c + j] = e;
      sum += e;
    }
    const real inv = real(1) / sum;
    for (int i = 0; i < r; ++i) probs[static_cast<std::size_t>(i) * c + j] *= inv;
  }
  std::vector<real> saved = probs;
  return finish_op("softmax_cols", r, c, std::move(probs), {a},
                   [saved = std::move(saved)](detail::Node& self) {
                     auto pa = self.parents[0];
                     if (!pa->requires_grad) return;
                     pa->ensure_grad();
                     const int r = self.rows, c = self.cols;
                     for (int j = 0; j < c; ++j) {
                       real dot = 0;
                       for (int i = 0; i < r; ++i) {
                         const std::size_t idx = static_cast<std::size_t>(i) * c + j;
                         dot += saved[idx] * self.grad[idx];
                       }
                       for (int i = 0; i < r; ++i) {
                         const std::size_t idx = static_cast<std::size_t>(i) * c + j;
                         pa->grad[idx] += saved[idx] * (self.grad[idx] - dot);
                       }
                     }
                   });
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias) {
  const int r = a.rows(), c = a.cols();
  if (gain.rows() != r || gain.cols() != 1 || bias.rows() != r || bias.cols() != 1) {
    fail("layer_norm", "gain/bias must be " + std::to_string(r) + "x1");
  }
  std::vector<real> normalized(a.size());
  std::vector<real> inv_std(static_cast<std::size_t>(c));
  std::vector<real> out(a.size());
  const auto& av = a.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  for (int j = 0; j < c; ++j) {
    real mean = 0;
    for (int i = 0; i < r; ++i) mean += av[static_cast<std::size_t>(i) * c + j];
    mean /= r;
    real var = 0;
    for (int i = 0; i < r; ++i) {
      const real d = av[static_cast<std::size_t>(i) * c + j] - mean;
      var += d * d;
    }
    var /= r;
    const real is = real(1) / std::sqrt(var + kLayerNormEps);
    inv_std[static_cast<std::size_t>(j)] = is;
    for (int i = 0; i < r; ++i) {
      const std::size_t idx = static_cast<std::size_t>(i) * c + j;
      const real y = (av[idx] - mean) * is;
      normalized[idx] = y;
      out[idx] = gv[static_cast<std::size_t>(i)] * y + bv[static_cast<std::size_t>(i)];
    }
  }
  return finish_op(
      "layer_norm", r, c, std::move(out), {a, gain, bias},
      [normalized = std::move(normalized), inv_std = std::move(inv_std)](detail::Node& self) {
        auto pa = self.parents[0];
        auto pg = self.parents[1];
        auto pb = self.parents[2];
        const int r = self.rows, c = self.cols;
        if (pg->requires_grad) {
          pg->ensure_grad();
          for (int i = 0; i < r; ++i) {
            real acc = 0;
            for (int j = 0; j < c; ++j) {
              const std::size_t idx = static_cast<std::size_t>(i) * c + j;
              acc += self.grad[idx] * normalized[idx];
            }
            pg->grad[static_cast<std::size_t>(i)] += acc;
          }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (int i = 0; i < r; ++i) {
            real acc = 0;
            for (int j = 0; j < c; ++j) acc += self.grad[static_cast<std::size_t>(i) * c + j];
            pb->grad[static_cast<std::size_t>(i)] += acc;
          }
        }
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (int j = 0; j < c; ++j) {
          real mean_dy = 0, mean_dyy = 0;
          for (int i = 0; i < r; ++i) {
            const std::size_t idx = static_cast<std::size_t>(i) * c + j;
            const real dy = self.grad[idx] * pg->value[static_cast<std::size_t>(i)];
            mean_dy += dy;
            mean_dyy += dy * normalized[idx];
          }
          mean_dy /= r;
          mean_dyy /= r;
          const real is = inv_std[static_cast<std::size_t>(j)];
          for (int i = 0; i < r; ++i) {
            const std::size_t idx = static_cast<std::size_t>(i) * c + j;
            const real dy = self.grad[idx] * pg->value[static_cast<std::size_t>(i)];
            pa->grad[idx] += is * (dy - mean_dy - normalized[idx] * mean_dyy);
          }
        }
      });
}

Tensor dropout(const Tensor& a, real rate, bool train, Rng* rng) {
  if (rate < real(0) || rate >= real(1)) fail("dropout", "rate must be in [0, 1)");
  if (!train || rate == real(0)) return a;
  if (rng == nullptr) fail("dropout", "training-mode dropout needs an rng");
  const real keep_scale = real(1) / (real(1) - rate);
  std::vector<real> mask(a.size());
  for (real& m : mask) m = (rng->uniform01() < static_cast<double>(rate)) ? real(0) : keep_scale;
  std::vector<real> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * mask[i];
  return finish_op("dropout", a.rows(), a.cols(), std::move(out), {a},
                   [mask = std::move(mask)](detail::Node& self) {
                     auto pa = self.parents[0];
                     if (!pa->requires_grad) return;
                     pa->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i) {
                       pa->grad[i] += self.grad[i] * mask[i];
                     }
                   });
}

Tensor rows_dot_cols(const Tensor& w, const Tensor& m) {
  if (w.rows() != m.cols() || w.cols() != m.rows()) {
    fail("rows_dot_cols", "shapes must be BxD and DxB, got " + shape_str(w) + " and " + shape_str(m));
  }
  const int b = w.rows(), d = w.cols();
  std::vector<real> out(static_cast<std::size_t>(b));
  {
    CMap W(w.values().data(), b, d), M(m.values().data(), d, b);
    for (int j = 0; j < b; ++j) out[static_cast<std::size_t>(j)] = W.row(j).dot(M.col(j));
  }
  return finish_op("rows_dot_cols", 1, b, std::move(out), {w, m}, [](detail::Node& self) {
    auto pw = self.parents[0];
    auto pm = self.parents[1];
    const int b = pw->rows;
    for (int j = 0; j < b; ++j) {
      const real g = self.grad[static_cast<std::size_t>(j)];
      if (g == real(0)) continue;
      if (pw->requires_grad) {
        pw->ensure_grad();
        Map(pw->grad.data(), pw->rows, pw->cols).row(j) +=
            g * cmap(*pm).col(j).transpose();
      }
      if (pm->requires_grad) {
        pm->ensure_grad();
        Map(pm->grad.data(), pm->rows, pm->cols).col(j) += g * cmap(*pw).row(j).transpose();
      }
    }
  });
}

Tensor sum_all(const Tensor& a) {
  real total = 0;
  for (real x : a.values()) total += x;
  return finish_op("sum_all", 1, 1, {total}, {a}, [](detail::Node& self) {
    auto pa = self.parents[0];
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    const real g = self.grad[0];
    for (real& x : pa->grad) x += g;
  });
}

Tensor segment_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                         const std::vector<Segment>& segments, real scale) {
  const int d = q.rows(), n = q.cols();
  if (k.rows() != d || k.cols() != n || v.rows() != d || v.cols() != n) {
    fail("segment_attention", "q, k, v must share one shape");
  }
  for (const Segment& s : segments) {
    if (s.start < 0 || s.length <= 0 || s.start + s.length > n) {
      fail("segment_attention", "segment out of bounds");
    }
  }
  std::vector<real> out(q.size(), real(0));
  std::vector<std::vector<real>> saved_probs(segments.size());
  {
    CMap Q(q.values().data(), d, n), K(k.values().data(), d, n), V(v.values().data(), d, n);
    Map O(out.data(), d, n);
    for (std::size_t si = 0; si < segments.size(); ++si) {
      const int s0 = segments[si].start, len = segments[si].length;
      // S(i, j) = k_i . q_j: output column j (query j) normalizes over the
      // key positions i, so each output is a convex mix of value columns.
      MatRM S(len, len);
      S.noalias() = K.middleCols(s0, len).transpose() * Q.middleCols(s0, len);
      S *= scale;
      for (int j = 0; j < len; ++j) {
        const real m = S.col(j).maxCoeff();
        S.col(j) = (S.col(j).array() - m).exp();
        S.col(j) /= S.col(j).sum();
      }
      saved_probs[si].assign(S.data(), S.data() + static_cast<std::size_t>(len) * len);
      O.middleCols(s0, len).noalias() = V.middleCols(s0, len) * S;
    }
  }
  return finish_op(
      "segment_attention", d, n, std::move(out), {q, k, v},
      [segments, scale, saved_probs = std::move(saved_probs)](detail::Node& self) {
        auto pq = self.parents[0];
        auto pk = self.parents[1];
        auto pv = self.parents[2];
        const int d = self.rows, n = self.cols;
        CMap G(self.grad.data(), d, n);
        CMap Q(pq->value.data(), d, n), K(pk->value.data(), d, n), V(pv->value.data(), d, n);
        for (std::size_t si = 0; si < segments.size(); ++si) {
          const int s0 = segments[si].start, len = segments[si].length;
          // Forward used S = scale * K^T Q, A = colsoftmax(S), O = V A.
          CMap A(saved_probs[si].data(), len, len);
          MatRM dA(len, len);
          dA.noalias() = V.middleCols(s0, len).transpose() * G.middleCols(s0, len);
          if (pv->requires_grad) {
            grad_target(pv).middleCols(s0, len).noalias() +=
                G.middleCols(s0, len) * A.transpose();
          }
          MatRM dS(len, len);
          for (int j = 0; j < len; ++j) {
            const real dot = A.col(j).dot(dA.col(j));
            dS.col(j) = A.col(j).array() * (dA.col(j).array() - dot);
          }
          dS *= scale;
          if (pq->requires_grad) {
            grad_target(pq).middleCols(s0, len).noalias() += K.middleCols(s0, len) * dS;
          }
          if (pk->requires_grad) {
            grad_target(pk).middleCols(s0, len).noalias() += Q.middleCols(s0, len) * dS.transpose();
          }
        }
      });
}

// ---- Losses -------------------------------------------------------------------

Tensor cross_entropy_smoothed(const Tensor& logits, const std::vector<int>& targets, real eps) {
  const int classes = logits.rows(), batch = logits.cols();
  if (static_cast<int>(targets.size()) != batch) {
    fail("cross_entropy_smoothed", "target count does not match batch");
  }
  if (eps < real(0) || eps >= real(1)) fail("cross_entropy_smoothed", "eps must be in [0, 1)");
  for (int t : targets) {
    if (t < 0 || t >= classes) fail("cross_entropy_smoothed", "target out of range");
  }
  const auto& lv = logits.values();
  std::vector<real> probs(logits.size());
  real total = 0;
  for (int j = 0; j < batch; ++j) {
    real m = -std::numeric_limits<real>::infinity();
    for (int i = 0; i < classes; ++i) m = std::max(m, lv[static_cast<std::size_t>(i) * batch + j]);
    real sum = 0;
    for (int i = 0; i < classes; ++i) {
      const real e = std::exp(lv[static_cast<std::size_t>(i) * batch + j] - m);
      probs[static_cast<std::size_t>(i) * batch + j] = e;
      sum += e;
    }
    const real lse = m + std::log(sum);
    const real inv = real(1) / sum;
    real mean_logit = 0;
    for (int i = 0; i < classes; ++i) {
      probs[static_cast<std::size_t>(i) * batch + j] *= inv;
      mean_logit += lv[static_cast<std::size_t>(i) * batch + j];
    }
    mean_logit /= classes;
    const real gold = lv[static_cast<std::size_t>(targets[static_cast<std::size_t>(j)]) * batch + j];
    total += lse - (real(1) - eps) * gold - eps * mean_logit;
  }
  total /= batch;
  return finish_op("cross_entropy_smoothed", 1, 1, {total}, {logits},
                   [targets, eps, probs = std::move(probs)](detail::Node& self) {
                     auto pl = self.parents[0];
                     if (!pl->requires_grad) return;
                     pl->ensure_grad();
                     const int batch = static_cast<int>(targets.size());
                     const int classes = pl->rows;
                     const real g = self.grad[0] / batch;
                     const real eps_share = eps / classes;
                     for (int j = 0; j < batch; ++j) {
                       for (int i = 0; i < classes; ++i) {
                         const std::size_t idx = static_cast<std::size_t>(i) * batch + j;
                         real target_mass = eps_share;
                         if (i == targets[static_cast<std::size_t>(j)]) target_mass += real(1) - eps;
                         pl->grad[idx] += g * (probs[idx] - target_mass);
                       }
                     }
                   });
}

Tensor mse(const Tensor& pred, const std::vector<real>& targets) {
  if (pred.rows() != 1 || pred.cols() != static_cast<int>(targets.size())) {
    fail("mse", "pred must be 1xB matching target count");
  }
  ensure_finite("mse", targets);
  const int b = pred.cols();
  const auto& pv = pred.values();
  real total = 0;
  for (int j = 0; j < b; ++j) {
    const real d = pv[static_cast<std::size_t>(j)] - targets[static_cast<std::size_t>(j)];
    total += d * d;
  }
  total /= b;
  return finish_op("mse", 1, 1, {total}, {pred}, [targets](detail::Node& self) {
    auto pp = self.parents[0];
    if (!pp->requires_grad) return;
    pp->ensure_grad();
    const int b = static_cast<int>(targets.size());
    const real g = self.grad[0] * real(2) / b;
    for (int j = 0; j < b; ++j) {
      pp->grad[static_cast<std::size_t>(j)] +=
          g * (pp->value[static_cast<std::size_t>(j)] - targets[static_cast<std::size_t>(j)]);
    }
  });
}

}  // namespace hynt
