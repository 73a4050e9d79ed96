#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ncopt/common.hpp"
#include "ncopt/tensor.hpp"

namespace ncopt {

enum class Aggregation { Sum, Mean, Max };

inline const char* to_string(Aggregation a) {
  switch (a) {
    case Aggregation::Sum: return "sum";
    case Aggregation::Mean: return "mean";
    case Aggregation::Max: return "max";
  }
  return "?";
}

namespace detail {

// C += A * B. Loop order keeps B and C rows streaming.
template <typename T>
void gemm_nn(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
  const int r = a.rows, k = a.cols, n = b.cols;
  for (int i = 0; i < r; ++i) {
    const T* arow = &a.data[static_cast<size_t>(i) * k];
    T* crow = &c.data[static_cast<size_t>(i) * n];
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = &b.data[static_cast<size_t>(p) * n];
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A * B^T. Rows of both operands are contiguous dot products.
template <typename T>
void gemm_nt(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
  const int r = a.rows, k = a.cols, n = b.rows;
  for (int i = 0; i < r; ++i) {
    const T* arow = &a.data[static_cast<size_t>(i) * k];
    T* crow = &c.data[static_cast<size_t>(i) * n];
    for (int j = 0; j < n; ++j) {
      const T* brow = &b.data[static_cast<size_t>(j) * k];
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C += A^T * B.
template <typename T>
void gemm_tn(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
  const int k = a.rows, r = a.cols, n = b.cols;
  for (int p = 0; p < k; ++p) {
    const T* arow = &a.data[static_cast<size_t>(p) * r];
    const T* brow = &b.data[static_cast<size_t>(p) * n];
    for (int i = 0; i < r; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* crow = &c.data[static_cast<size_t>(i) * n];
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

template <typename T>
class Tape;

template <typename T>
struct TapeNode {
  Tensor<T> value;
  Tensor<T> grad;  // data stays empty until a backward pass touches the node
  bool requires_grad = false;
  std::string name;  // non-empty only for named leaves (parameters)
  std::function<void()> backward;

  void ensure_grad() {
    if (grad.data.empty()) grad = Tensor<T>(value.rows, value.cols);
  }
};

// Lightweight handle into a tape. Invalidated if the owning tape is destroyed
// or truncated past the node.
template <typename T>
class Var {
 public:
  Var() = default;

  bool defined() const { return node_ != nullptr; }
  int rows() const { return node_->value.rows; }
  int cols() const { return node_->value.cols; }
  const Tensor<T>& value() const { return node_->value; }

  T scalar() const {
    NC_REQUIRE(node_->value.numel() == 1,
               "scalar() on tensor of shape " << node_->value.shape_str());
    return node_->value.data[0];
  }

  // Valid after Tape::backward; zero tensor if the node was never reached.
  Tensor<T> grad() const {
    if (node_->grad.data.empty()) return Tensor<T>(rows(), cols());
    return node_->grad;
  }

 private:
  friend class Tape<T>;
  Var(TapeNode<T>* n, const Tape<T>* t) : node_(n), tape_(t) {}
  TapeNode<T>* node_ = nullptr;
  const Tape<T>* tape_ = nullptr;
};

template <typename T>
using GradMap = std::map<std::string, Tensor<T>>;

// Reverse-mode tape. Every forward op appends a node; node creation order is
// a topological order, so one reverse sweep propagates all gradients. The
// same graph serves training and inference; with grads disabled no closures
// are allocated and the tape may be truncated back to a watermark.
template <typename T>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  size_t size() const { return nodes_.size(); }

  // ---- leaves ----

  Var<T> leaf(Tensor<T> v, bool requires_grad = false, const std::string& name = {}) {
    if (!name.empty()) {
      NC_REQUIRE(!named_.count(name), "duplicate named leaf on tape: " << name);
      named_[name] = nodes_.size();
    }
    TapeNode<T>* n = push(std::move(v));
    n->requires_grad = grad_enabled_ && requires_grad;
    n->name = name;
    return wrap(n);
  }

  // Existing named leaf, or an undefined Var. Lets shared weights map to one
  // node per tape so reuse accumulates gradient in a single place.
  Var<T> find_named(const std::string& name) {
    auto it = named_.find(name);
    if (it == named_.end()) return Var<T>();
    return wrap(nodes_[it->second].get());
  }

  Var<T> constant(Tensor<T> v) { return leaf(std::move(v), false); }

  // ---- linear algebra ----

  Var<T> matmul(Var<T> a, Var<T> b) {
    own(a); own(b);
    NC_REQUIRE(a.cols() == b.rows(), "matmul: " << a.value().shape_str() << " * "
                                                << b.value().shape_str());
    Tensor<T> out(a.rows(), b.cols());
    detail::gemm_nn(a.value(), b.value(), out);
    TapeNode<T>* n = push_checked(std::move(out), "matmul");
    attach(n, {a, b}, [na = a.node_, nb = b.node_, n]() {
      if (na->requires_grad) {
        na->ensure_grad();
        detail::gemm_nt(n->grad, nb->value, na->grad);
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        detail::gemm_tn(na->value, n->grad, nb->grad);
      }
    });
    return wrap(n);
  }

  // a * b^T; used for attention scores against row-major key matrices.
  Var<T> matmul_nt(Var<T> a, Var<T> b) {
    own(a); own(b);
    NC_REQUIRE(a.cols() == b.cols(), "matmul_nt: " << a.value().shape_str() << " * "
                                                   << b.value().shape_str() << "^T");
    Tensor<T> out(a.rows(), b.rows());
    detail::gemm_nt(a.value(), b.value(), out);
    TapeNode<T>* n = push_checked(std::move(out), "matmul_nt");
    attach(n, {a, b}, [na = a.node_, nb = b.node_, n]() {
      if (na->requires_grad) {
        na->ensure_grad();
        detail::gemm_nn(n->grad, nb->value, na->grad);
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        detail::gemm_tn(n->grad, na->value, nb->grad);
      }
    });
    return wrap(n);
  }

  Var<T> add(Var<T> a, Var<T> b) { return binary_elementwise(a, b, /*sub=*/false); }
  Var<T> sub(Var<T> a, Var<T> b) { return binary_elementwise(a, b, /*sub=*/true); }

  // a (r x c) + bias (1 x c) broadcast over rows.
  Var<T> add_bias(Var<T> a, Var<T> bias) {
    own(a); own(bias);
    NC_REQUIRE(bias.rows() == 1 && bias.cols() == a.cols(),
               "add_bias: " << a.value().shape_str() << " + " << bias.value().shape_str());
    Tensor<T> out = a.value();
    for (int i = 0; i < out.rows; ++i)
      for (int j = 0; j < out.cols; ++j) out.at(i, j) += bias.value().data[j];
    TapeNode<T>* n = push_checked(std::move(out), "add_bias");
    attach(n, {a, bias}, [na = a.node_, nb = bias.node_, n]() {
      if (na->requires_grad) {
        na->ensure_grad();
        for (size_t i = 0; i < na->grad.data.size(); ++i) na->grad.data[i] += n->grad.data[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (int i = 0; i < n->grad.rows; ++i)
          for (int j = 0; j < n->grad.cols; ++j) nb->grad.data[j] += n->grad.at(i, j);
      }
    });
    return wrap(n);
  }

  // mul * x + shift, elementwise with scalar coefficients.
  Var<T> affine(Var<T> x, T mul, T shift) {
    own(x);
    Tensor<T> out = x.value();
    for (T& v : out.data) v = mul * v + shift;
    TapeNode<T>* n = push_checked(std::move(out), "affine");
    attach(n, {x}, [nx = x.node_, n, mul]() {
      if (!nx->requires_grad) return;
      nx->ensure_grad();
      for (size_t i = 0; i < nx->grad.data.size(); ++i) nx->grad.data[i] += mul * n->grad.data[i];
    });
    return wrap(n);
  }

  Var<T> scale(Var<T> x, T c) { return affine(x, c, T(0)); }

  Var<T> mul(Var<T> a, Var<T> b) {
    own(a); own(b);
    NC_REQUIRE(a.value().same_shape(b.value()),
               "mul: shape mismatch " << a.value().shape_str() << " vs " << b.value().shape_str());
    Tensor<T> out(a.rows(), a.cols());
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.value().data[i] * b.value().data[i];
    TapeNode<T>* n = push_checked(std::move(out), "mul");
    attach(n, {a, b}, [na = a.node_, nb = b.node_, n]() {
      if (na->requires_grad) {
        na->ensure_grad();
        for (size_t i = 0; i < na->grad.data.size(); ++i)
          na->grad.data[i] += n->grad.data[i] * nb->value.data[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (size_t i = 0; i < nb->grad.data.size(); ++i)
          nb->grad.data[i] += n->grad.data[i] * na->value.data[i];
      }
    });
    return wrap(n);
  }

  Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    NC_REQUIRE(!parts.empty(), "concat_cols: no inputs");
    int rows = parts[0].rows(), cols = 0;
    for (const Var<T>& p : parts) {
      own(p);
      NC_REQUIRE(p.rows() == rows, "concat_cols: row mismatch");
      cols += p.cols();
    }
    Tensor<T> out(rows, cols);
    int off = 0;
    for (const Var<T>& p : parts) {
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < p.cols(); ++j) out.at(i, off + j) = p.value().at(i, j);
      off += p.cols();
    }
    TapeNode<T>* n = push_checked(std::move(out), "concat_cols");
    std::vector<TapeNode<T>*> srcs;
    for (const Var<T>& p : parts) srcs.push_back(p.node_);
    attach(n, parts, [srcs, n]() {
      int off = 0;
      for (TapeNode<T>* s : srcs) {
        if (s->requires_grad) {
          s->ensure_grad();
          for (int i = 0; i < s->value.rows; ++i)
            for (int j = 0; j < s->value.cols; ++j) s->grad.at(i, j) += n->grad.at(i, off + j);
        }
        off += s->value.cols;
      }
    });
    return wrap(n);
  }

  Var<T> slice_cols(Var<T> x, int start, int len) {
    own(x);
    NC_REQUIRE(start >= 0 && len > 0 && start + len <= x.cols(),
               "slice_cols [" << start << ", " << start + len << ") of " << x.value().shape_str());
    Tensor<T> out(x.rows(), len);
    for (int i = 0; i < out.rows; ++i)
      for (int j = 0; j < len; ++j) out.at(i, j) = x.value().at(i, start + j);
    TapeNode<T>* n = push_checked(std::move(out), "slice_cols");
    attach(n, {x}, [nx = x.node_, n, start, len]() {
      if (!nx->requires_grad) return;
      nx->ensure_grad();
      for (int i = 0; i < n->grad.rows; ++i)
        for (int j = 0; j < len; ++j) nx->grad.at(i, start + j) += n->grad.at(i, j);
    });
    return wrap(n);
  }

  Var<T> broadcast_rows(Var<T> rowvec, int nrows) {
    own(rowvec);
    NC_REQUIRE(rowvec.rows() == 1, "broadcast_rows wants a 1 x c input, got "
                                       << rowvec.value().shape_str());
    NC_REQUIRE(nrows > 0, "broadcast_rows: nrows must be positive");
    Tensor<T> out(nrows, rowvec.cols());
    for (int i = 0; i < nrows; ++i)
      for (int j = 0; j < out.cols; ++j) out.at(i, j) = rowvec.value().data[j];
    TapeNode<T>* n = push_checked(std::move(out), "broadcast_rows");
    attach(n, {rowvec}, [nx = rowvec.node_, n]() {
      if (!nx->requires_grad) return;
      nx->ensure_grad();
      for (int i = 0; i < n->grad.rows; ++i)
        for (int j = 0; j < n->grad.cols; ++j) nx->grad.data[j] += n->grad.at(i, j);
    });
    return wrap(n);
  }

  Var<T> gather_rows(Var<T> x, std::vector<int> idx) {
    own(x);
    for (int i : idx)
      NC_REQUIRE(i >= 0 && i < x.rows(), "gather_rows: index " << i << " out of " << x.rows());
    Tensor<T> out(static_cast<int>(idx.size()), x.cols());
    for (size_t r = 0; r < idx.size(); ++r)
      for (int j = 0; j < x.cols(); ++j) out.at(static_cast<int>(r), j) = x.value().at(idx[r], j);
    TapeNode<T>* n = push_checked(std::move(out), "gather_rows");
    attach(n, {x}, [nx = x.node_, n, idx = std::move(idx)]() {
      if (!nx->requires_grad) return;
      nx->ensure_grad();
      for (size_t r = 0; r < idx.size(); ++r)  // ascending output row: deterministic scatter order
        for (int j = 0; j < nx->value.cols; ++j)
          nx->grad.at(idx[r], j) += n->grad.at(static_cast<int>(r), j);
    });
    return wrap(n);
  }

  // ---- nonlinearities ----

  Var<T> relu(Var<T> x) {
    own(x);
    Tensor<T> out = x.value();
    for (T& v : out.data) v = v > T(0) ? v : T(0);
    TapeNode<T>* n = push_checked(std::move(out), "relu");
    attach(n, {x}, [nx = x.node_, n]() {
      if (!nx->requires_grad) return;
      nx->ensure_grad();
      // subgradient at 0 is 0
      for (size_t i = 0; i < nx->grad.data.size(); ++i)
        if (nx->value.data[i] > T(0)) nx->grad.data[i] += n->grad.data[i];
    });
    return wrap(n);
  }

  Var<T> sigmoid(Var<T> x) {
    own(x);
    Tensor<T> out = x.value();
    for (T& v : out.data) v = T(1) / (T(1) + std::exp(-v));
    TapeNode<T>* n = push_checked(std::move(out), "sigmoid");
    attach(n, {x}, [nx = x.node_, n]() {
      if (!nx->requires_grad) return;
      nx->ensure_grad();
      for (size_t i = 0; i < nx->grad.data.size(); ++i) {
        const T y = n->value.data[i];
        nx->grad.data[i] += n->grad.data[i] * y * (T(1) - y);
      }
    });
    return wrap(n);
  }

  Var<T> tanh(Var<T> x) {
    own(x);
    Tensor<T> out = x.value();
    for (T& v : out.data) v = std::tanh(v);
    TapeNode<T>* n = push_checked(std::move(out), "tanh");
    attach(n, {x}, [nx = x.node_, n]() {
      if (!nx->requires_grad) return;
      nx->ensure_grad();
      for (size_t i = 0; i < nx->grad.data.size(); ++i) {
        const T y = n->value.data[i];
        nx->grad.data[i] += n->grad.data[i] * (T(1) - y * y);
      }
    });
    return wrap(n);
  }

  // Strictly positive domain; renormalized step probabilities stay inside it.
  Var<T> log(Var<T> x) {
    own(x);
    Tensor<T> out = x.value();
    for (T& v : out.data) {
      NC_CHECK(v > T(0), "log of a non-positive value " << v);
      v = std::log(v);
    }
    TapeNode<T>* n = push_checked(std::move(out), "log");
    attach(n, {x}, [nx = x.node_, n]() {
      if (!nx->requires_grad) return;
      nx->ensure_grad();
      for (size_t i = 0; i < nx->grad.data.size(); ++i)
        nx->grad.data[i] += n->grad.data[i] / nx->value.data[i];
    });
    return wrap(n);
  }

  // ---- softmax family ----
  // Max subtraction before exp; exp(-inf) underflows to exactly 0, so masked
  // entries come out as exact zero probabilities.

  Var<T> softmax_rows(Var<T> x) {
    own(x);
    Tensor<T> out(x.rows(), x.cols());
    softmax_forward(x.value(), out, /*log_form=*/false);
    TapeNode<T>* n = push_checked(std::move(out), "softmax_rows");
    attach(n, {x}, [nx = x.node_, n]() {
      if (!nx->requires_grad) return;
      nx->ensure_grad();
      for (int i = 0; i < n->value.rows; ++i) {
        T dot = T(0);
        for (int j = 0; j < n->value.cols; ++j) dot += n->grad.at(i, j) * n->value.at(i, j);
        for (int j = 0; j < n->value.cols; ++j)
          nx->grad.at(i, j) += n->value.at(i, j) * (n->grad.at(i, j) - dot);
      }
    });
    return wrap(n);
  }

  Var<T> log_softmax_rows(Var<T> x) {
    own(x);
    Tensor<T> out(x.rows(), x.cols());
    softmax_forward(x.value(), out, /*log_form=*/true);
    TapeNode<T>* n = push(std::move(out));
    check_finite(n->value, "log_softmax_rows", /*allow_neg_inf=*/true);
    attach(n, {x}, [nx = x.node_, n]() {
      if (!nx->requires_grad) return;
      nx->ensure_grad();
      for (int i = 0; i < n->value.rows; ++i) {
        T gsum = T(0);
        for (int j = 0; j < n->value.cols; ++j) gsum += n->grad.at(i, j);
        for (int j = 0; j < n->value.cols; ++j) {
          const T p = std::exp(n->value.at(i, j));  // exp(-inf) = 0 at masked entries
          nx->grad.at(i, j) += n->grad.at(i, j) - p * gsum;
        }
      }
    });
    return wrap(n);
  }

  // mask[i]=1 replaces the entry with `fill`. The only op allowed to
  // introduce -inf; gradients at masked positions are exactly zero.
  Var<T> masked_fill(Var<T> x, std::vector<uint8_t> mask, T fill) {
    own(x);
    NC_REQUIRE(static_cast<int64_t>(mask.size()) == x.value().numel(),
               "masked_fill: mask size " << mask.size() << " vs tensor "
                                         << x.value().shape_str());
    NC_REQUIRE(!(fill > T(0) && std::isinf(static_cast<double>(fill))),
               "masked_fill: +inf fill is not allowed");
    Tensor<T> out = x.value();
    for (size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) out.data[i] = fill;
    TapeNode<T>* n = push(std::move(out));
    check_finite(n->value, "masked_fill", /*allow_neg_inf=*/true);
    attach(n, {x}, [nx = x.node_, n, mask = std::move(mask)]() {
      if (!nx->requires_grad) return;
      nx->ensure_grad();
      for (size_t i = 0; i < mask.size(); ++i)
        if (!mask[i]) nx->grad.data[i] += n->grad.data[i];
    });
    return wrap(n);
  }

  // ---- segment aggregation ----
  // Rows of x are grouped by segment id into [0, num_segments) outputs.
  // Iteration is in ascending row order, which fixes the summation order and
  // breaks max ties toward the lowest row index.

  Var<T> segment_aggregate(Var<T> x, std::vector<int> seg, int num_segments, Aggregation agg) {
    own(x);
    NC_REQUIRE(static_cast<int>(seg.size()) == x.rows(),
               "segment_aggregate: " << seg.size() << " ids for " << x.rows() << " rows");
    NC_REQUIRE(num_segments > 0, "segment_aggregate: need at least one segment");
    for (int s : seg)
      NC_REQUIRE(s >= 0 && s < num_segments, "segment id " << s << " out of " << num_segments);

    const int c = x.cols();
    std::vector<int> count(num_segments, 0);
    for (int s : seg) ++count[s];
    if (agg != Aggregation::Sum) {
      for (int s = 0; s < num_segments; ++s)
        NC_CHECK(count[s] > 0, "segment " << s << " is empty; " << to_string(agg)
                                          << " aggregation is undefined");
    }

    Tensor<T> out(num_segments, c);
    std::vector<int> argmax;  // flat out index -> source row
    if (agg == Aggregation::Max) {
      argmax.assign(static_cast<size_t>(num_segments) * c, -1);
      for (int r = 0; r < x.rows(); ++r) {
        const int s = seg[r];
        for (int j = 0; j < c; ++j) {
          const size_t o = static_cast<size_t>(s) * c + j;
          const T v = x.value().at(r, j);
          if (argmax[o] < 0 || v > out.data[o]) {  // strict > keeps the lowest row on ties
            out.data[o] = v;
            argmax[o] = r;
          }
        }
      }
    } else {
      for (int r = 0; r < x.rows(); ++r) {
        const int s = seg[r];
        for (int j = 0; j < c; ++j) out.at(s, j) += x.value().at(r, j);
      }
      if (agg == Aggregation::Mean) {
        for (int s = 0; s < num_segments; ++s)
          for (int j = 0; j < c; ++j) out.at(s, j) /= static_cast<T>(count[s]);
      }
    }

    TapeNode<T>* n = push_checked(std::move(out), "segment_aggregate");
    attach(n, {x}, [nx = x.node_, n, seg = std::move(seg), count = std::move(count),
                    argmax = std::move(argmax), agg]() {
      if (!nx->requires_grad) return;
      nx->ensure_grad();
      const int c = nx->value.cols;
      if (agg == Aggregation::Max) {
        for (size_t o = 0; o < argmax.size(); ++o) {
          if (argmax[o] < 0) continue;
          nx->grad.data[static_cast<size_t>(argmax[o]) * c + o % c] += n->grad.data[o];
        }
      } else {
        for (int r = 0; r < nx->value.rows; ++r) {
          const int s = seg[r];
          const T w = agg == Aggregation::Mean ? T(1) / static_cast<T>(count[s]) : T(1);
          for (int j = 0; j < c; ++j) nx->grad.at(r, j) += w * n->grad.at(s, j);
        }
      }
    });
    return wrap(n);
  }

  // ---- reductions ----

  Var<T> reduce_sum(Var<T> x) { return reduce_full(x, /*mean=*/false); }
  Var<T> reduce_mean(Var<T> x) { return reduce_full(x, /*mean=*/true); }

  // ---- normalization ----

  // Training-mode batch normalization over rows per feature column,
  // differentiable through the batch statistics. Biased variance. Observed
  // statistics are written out for running-buffer updates.
  Var<T> batchnorm_train(Var<T> x, Var<T> gamma, Var<T> beta, T eps,
                         Tensor<T>* obs_mean = nullptr, Tensor<T>* obs_var = nullptr) {
    own(x); own(gamma); own(beta);
    norm_shape_check(x, gamma, beta);
    const int r = x.rows(), c = x.cols();
    NC_REQUIRE(r >= 1, "batchnorm_train: empty batch");
    Tensor<T> mean(1, c), var(1, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) mean.data[j] += x.value().at(i, j);
    for (int j = 0; j < c; ++j) mean.data[j] /= static_cast<T>(r);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) {
        const T d = x.value().at(i, j) - mean.data[j];
        var.data[j] += d * d;
      }
    for (int j = 0; j < c; ++j) var.data[j] /= static_cast<T>(r);
    if (obs_mean) *obs_mean = mean;
    if (obs_var) *obs_var = var;

    Tensor<T> xhat(r, c), out(r, c);
    std::vector<T> inv(c);
    for (int j = 0; j < c; ++j) inv[j] = T(1) / std::sqrt(var.data[j] + eps);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) {
        xhat.at(i, j) = (x.value().at(i, j) - mean.data[j]) * inv[j];
        out.at(i, j) = gamma.value().data[j] * xhat.at(i, j) + beta.value().data[j];
      }

    TapeNode<T>* n = push_checked(std::move(out), "batchnorm_train");
    attach(n, {x, gamma, beta},
           [nx = x.node_, ng = gamma.node_, nb = beta.node_, n, xhat = std::move(xhat),
            inv = std::move(inv)]() {
             const int r = xhat.rows, c = xhat.cols;
             std::vector<T> gsum(c, T(0)), gxsum(c, T(0));
             for (int i = 0; i < r; ++i)
               for (int j = 0; j < c; ++j) {
                 gsum[j] += n->grad.at(i, j);
                 gxsum[j] += n->grad.at(i, j) * xhat.at(i, j);
               }
             if (ng->requires_grad) {
               ng->ensure_grad();
               for (int j = 0; j < c; ++j) ng->grad.data[j] += gxsum[j];
             }
             if (nb->requires_grad) {
               nb->ensure_grad();
               for (int j = 0; j < c; ++j) nb->grad.data[j] += gsum[j];
             }
             if (nx->requires_grad) {
               nx->ensure_grad();
               const T invr = T(1) / static_cast<T>(r);
               for (int i = 0; i < r; ++i)
                 for (int j = 0; j < c; ++j) {
                   const T g = n->grad.at(i, j) * ng->value.data[j];
                   const T gs = gsum[j] * ng->value.data[j];
                   const T gx = gxsum[j] * ng->value.data[j];
                   nx->grad.at(i, j) += inv[j] * (g - invr * gs - invr * xhat.at(i, j) * gx);
                 }
             }
           });
    return wrap(n);
  }

  // Inference-mode batch normalization against fixed running statistics.
  Var<T> batchnorm_eval(Var<T> x, Var<T> gamma, Var<T> beta, const Tensor<T>& run_mean,
                        const Tensor<T>& run_var, T eps) {
    own(x); own(gamma); own(beta);
    norm_shape_check(x, gamma, beta);
    NC_REQUIRE(run_mean.numel() == x.cols() && run_var.numel() == x.cols(),
               "batchnorm_eval: running stats size mismatch");
    const int r = x.rows(), c = x.cols();
    Tensor<T> xhat(r, c), out(r, c);
    std::vector<T> inv(c);
    for (int j = 0; j < c; ++j) inv[j] = T(1) / std::sqrt(run_var.data[j] + eps);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) {
        xhat.at(i, j) = (x.value().at(i, j) - run_mean.data[j]) * inv[j];
        out.at(i, j) = gamma.value().data[j] * xhat.at(i, j) + beta.value().data[j];
      }
    TapeNode<T>* n = push_checked(std::move(out), "batchnorm_eval");
    attach(n, {x, gamma, beta},
           [nx = x.node_, ng = gamma.node_, nb = beta.node_, n, xhat = std::move(xhat),
            inv = std::move(inv)]() {
             const int r = xhat.rows, c = xhat.cols;
             if (ng->requires_grad || nb->requires_grad) {
               if (ng->requires_grad) ng->ensure_grad();
               if (nb->requires_grad) nb->ensure_grad();
               for (int i = 0; i < r; ++i)
                 for (int j = 0; j < c; ++j) {
                   if (ng->requires_grad) ng->grad.data[j] += n->grad.at(i, j) * xhat.at(i, j);
                   if (nb->requires_grad) nb->grad.data[j] += n->grad.at(i, j);
                 }
             }
             if (nx->requires_grad) {
               nx->ensure_grad();
               for (int i = 0; i < r; ++i)
                 for (int j = 0; j < c; ++j)
                   nx->grad.at(i, j) += n->grad.at(i, j) * ng->value.data[j] * inv[j];
             }
           });
    return wrap(n);
  }

  // Per-row normalization over features. Biased variance.
  Var<T> layernorm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
    own(x); own(gamma); own(beta);
    norm_shape_check(x, gamma, beta);
    const int r = x.rows(), c = x.cols();
    NC_REQUIRE(c >= 1, "layernorm: empty feature axis");
    Tensor<T> xhat(r, c), out(r, c);
    std::vector<T> inv(r);
    for (int i = 0; i < r; ++i) {
      T mean = T(0);
      for (int j = 0; j < c; ++j) mean += x.value().at(i, j);
      mean /= static_cast<T>(c);
      T var = T(0);
      for (int j = 0; j < c; ++j) {
        const T d = x.value().at(i, j) - mean;
        var += d * d;
      }
      var /= static_cast<T>(c);
      inv[i] = T(1) / std::sqrt(var + eps);
      for (int j = 0; j < c; ++j) {
        xhat.at(i, j) = (x.value().at(i, j) - mean) * inv[i];
        out.at(i, j) = gamma.value().data[j] * xhat.at(i, j) + beta.value().data[j];
      }
    }
    TapeNode<T>* n = push_checked(std::move(out), "layernorm");
    attach(n, {x, gamma, beta},
           [nx = x.node_, ng = gamma.node_, nb = beta.node_, n, xhat = std::move(xhat),
            inv = std::move(inv)]() {
             const int r = xhat.rows, c = xhat.cols;
             if (ng->requires_grad || nb->requires_grad) {
               if (ng->requires_grad) ng->ensure_grad();
               if (nb->requires_grad) nb->ensure_grad();
               for (int i = 0; i < r; ++i)
                 for (int j = 0; j < c; ++j) {
                   if (ng->requires_grad) ng->grad.data[j] += n->grad.at(i, j) * xhat.at(i, j);
                   if (nb->requires_grad) nb->grad.data[j] += n->grad.at(i, j);
                 }
             }
             if (nx->requires_grad) {
               nx->ensure_grad();
               const T invc = T(1) / static_cast<T>(c);
               for (int i = 0; i < r; ++i) {
                 T gs = T(0), gx = T(0);
                 for (int j = 0; j < c; ++j) {
                   const T g = n->grad.at(i, j) * ng->value.data[j];
                   gs += g;
                   gx += g * xhat.at(i, j);
                 }
                 for (int j = 0; j < c; ++j) {
                   const T g = n->grad.at(i, j) * ng->value.data[j];
                   nx->grad.at(i, j) += inv[i] * (g - invc * gs - invc * xhat.at(i, j) * gx);
                 }
               }
             }
           });
    return wrap(n);
  }

  // ---- backward ----

  // Single reverse sweep from a scalar loss. A tape can be consumed once.
  GradMap<T> backward(Var<T> loss) {
    own(loss);
    NC_REQUIRE(grad_enabled_, "backward on a gradient-disabled tape");
    NC_REQUIRE(!consumed_, "tape already consumed by a previous backward");
    NC_REQUIRE(loss.value().numel() == 1,
               "backward needs a scalar loss, got " << loss.value().shape_str());
    consumed_ = true;
    loss.node_->ensure_grad();
    loss.node_->grad.data[0] = T(1);
    for (size_t i = nodes_.size(); i-- > 0;) {
      TapeNode<T>* n = nodes_[i].get();
      if (n->backward && !n->grad.data.empty()) n->backward();
    }
    GradMap<T> grads;
    for (const auto& node : nodes_) {
      if (node->name.empty() || !node->requires_grad) continue;
      grads[node->name] =
          node->grad.data.empty() ? Tensor<T>(node->value.rows, node->value.cols) : node->grad;
    }
    return grads;
  }

  // ---- truncation (inference reuse) ----
  // Rolls the tape back to a watermark so per-step scratch nodes are freed.
  // Only meaningful without gradients; handles past the mark become invalid.

  size_t mark() const { return nodes_.size(); }

  void truncate(size_t watermark) {
    NC_REQUIRE(!grad_enabled_, "truncate is only allowed on gradient-disabled tapes");
    NC_REQUIRE(watermark <= nodes_.size(), "truncate past end of tape");
    nodes_.resize(watermark);
    for (auto it = named_.begin(); it != named_.end();) {
      if (it->second >= watermark) it = named_.erase(it);
      else ++it;
    }
  }

 private:
  Var<T> wrap(TapeNode<T>* n) { return Var<T>(n, this); }

  void own(const Var<T>& v) const {
    NC_REQUIRE(v.defined(), "operation on an undefined Var");
    NC_REQUIRE(v.tape_ == this, "Var belongs to a different tape");
  }

  TapeNode<T>* push(Tensor<T> v) {
    nodes_.push_back(std::make_unique<TapeNode<T>>());
    nodes_.back()->value = std::move(v);
    return nodes_.back().get();
  }

  TapeNode<T>* push_checked(Tensor<T> v, const char* op) {
    TapeNode<T>* n = push(std::move(v));
    check_finite(n->value, op, /*allow_neg_inf=*/false);
    return n;
  }

  static void check_finite(const Tensor<T>& t, const char* op, bool allow_neg_inf) {
    for (const T v : t.data) {
      if (std::isfinite(static_cast<double>(v))) continue;
      if (allow_neg_inf && v < T(0) && std::isinf(static_cast<double>(v))) continue;
      NC_CHECK(false, op << " produced a non-finite value");
    }
  }

  template <typename F>
  void attach(TapeNode<T>* n, const std::vector<Var<T>>& inputs, F&& fn) {
    bool rg = false;
    for (const Var<T>& v : inputs) rg = rg || v.node_->requires_grad;
    n->requires_grad = grad_enabled_ && rg;
    if (n->requires_grad) n->backward = std::forward<F>(fn);
  }

  Var<T> binary_elementwise(Var<T> a, Var<T> b, bool sub) {
    own(a); own(b);
    NC_REQUIRE(a.value().same_shape(b.value()), "elementwise: shape mismatch "
                                                    << a.value().shape_str() << " vs "
                                                    << b.value().shape_str());
    Tensor<T> out(a.rows(), a.cols());
    for (size_t i = 0; i < out.data.size(); ++i)
      out.data[i] = sub ? a.value().data[i] - b.value().data[i]
                        : a.value().data[i] + b.value().data[i];
    TapeNode<T>* n = push_checked(std::move(out), sub ? "sub" : "add");
    attach(n, {a, b}, [na = a.node_, nb = b.node_, n, sub]() {
      if (na->requires_grad) {
        na->ensure_grad();
        for (size_t i = 0; i < na->grad.data.size(); ++i) na->grad.data[i] += n->grad.data[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (size_t i = 0; i < nb->grad.data.size(); ++i)
          nb->grad.data[i] += sub ? -n->grad.data[i] : n->grad.data[i];
      }
    });
    return wrap(n);
  }

  Var<T> reduce_full(Var<T> x, bool mean) {
    own(x);
    T acc = T(0);
    for (const T v : x.value().data) acc += v;
    const T denom = mean ? static_cast<T>(x.value().numel()) : T(1);
    NC_REQUIRE(!mean || x.value().numel() > 0, "reduce_mean of an empty tensor");
    TapeNode<T>* n = push_checked(Tensor<T>::scalar(acc / denom), mean ? "reduce_mean" : "reduce_sum");
    attach(n, {x}, [nx = x.node_, n, denom]() {
      if (!nx->requires_grad) return;
      nx->ensure_grad();
      const T g = n->grad.data[0] / denom;
      for (T& v : nx->grad.data) v += g;
    });
    return wrap(n);
  }

  static void norm_shape_check(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta) {
    NC_REQUIRE(gamma.rows() == 1 && gamma.cols() == x.cols() && beta.rows() == 1 &&
                   beta.cols() == x.cols(),
               "normalization affine shapes must be 1 x " << x.cols());
  }

  // Shared row-wise softmax. A fully masked row (all -inf) has no valid
  // distribution and raises.
  static void softmax_forward(const Tensor<T>& x, Tensor<T>& out, bool log_form) {
    for (int i = 0; i < x.rows; ++i) {
      T m = x.at(i, 0);
      for (int j = 1; j < x.cols; ++j) m = std::max(m, x.at(i, j));
      NC_CHECK(!(std::isinf(static_cast<double>(m)) && m < T(0)),
               "softmax over a fully masked row");
      T sum = T(0);
      for (int j = 0; j < x.cols; ++j) sum += std::exp(x.at(i, j) - m);
      if (log_form) {
        const T lse = m + std::log(sum);
        for (int j = 0; j < x.cols; ++j) out.at(i, j) = x.at(i, j) - lse;
      } else {
        for (int j = 0; j < x.cols; ++j) out.at(i, j) = std::exp(x.at(i, j) - m) / sum;
      }
    }
  }

  std::vector<std::unique_ptr<TapeNode<T>>> nodes_;
  std::map<std::string, size_t> named_;
  bool grad_enabled_;
  bool consumed_ = false;
};

}  // namespace ncopt
