#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <type_traits>
#include <string>
#include <vector>

#include "hierbias/rng.hpp"

namespace hierbias {

/// Dense row-major array with an optional gradient buffer. The last
/// dimension is the "column" dimension; everything before it is flattened
/// into rows by the ops below.
template <class T>
struct Node {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until needed
  bool requires_grad = false;

  std::size_t size() const { return value.size(); }
  int cols() const { return shape.empty() ? 1 : shape.back(); }
  int rows() const { return cols() == 0 ? 0 : static_cast<int>(value.size() / cols()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> make_var(std::vector<int> shape, bool requires_grad = false);

/// Reverse-mode tape. Ops append closures while recording; backward() runs
/// them in reverse creation order. A non-recording tape computes values only.
template <class T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  bool recording() const { return recording_; }

  /// Output node; requires_grad when recording and any input requires it.
  Var<T> output(std::vector<int> shape, std::initializer_list<const Var<T>*> inputs);
  void on_backward(std::function<void()> fn) { closures_.push_back(std::move(fn)); }
  /// Seeds d(loss)/d(loss)=1 and accumulates into every reachable grad.
  void backward(const Var<T>& scalar);
  std::size_t size() const { return closures_.size(); }

  /// When set, piecewise-linear ops append their active/inactive pattern
  /// (used to detect finite-difference steps that straddle a kink).
  std::vector<std::uint8_t>* activation_pattern = nullptr;

 private:
  bool recording_;
  std::vector<std::function<void()>> closures_;
};

// Row-major GEMM, C = alpha * op(A) * op(B) + beta * C.
template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda, const T* b,
          int ldb, T beta, T* c, int ldc);

/// Restricts the BLAS backend to one thread for reproducible reductions.
void set_strict_determinism(bool strict);

namespace ops {

/// rows of table [V, D] selected by ids -> [ids.size(), D]. Throws DataError
/// on an out-of-range id.
template <class T>
Var<T> embedding(Tape<T>& tape, const Var<T>& table, const std::vector<std::int32_t>& ids);

/// x [N, in] times w [in, out].
template <class T>
Var<T> matmul(Tape<T>& tape, const Var<T>& x, const Var<T>& w);

/// scale * x [N, D] times w[M, D]^T -> [N, M] (tied output projection).
template <class T>
Var<T> matmul_nt(Tape<T>& tape, const Var<T>& x, const Var<T>& w, T scale);

template <class T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> relu(Tape<T>& tape, const Var<T>& x);

/// x / rms(x) * gain, per row.
template <class T>
Var<T> rms_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gain, T eps = T(1e-6));

/// Inverted dropout; identity when p == 0.
template <class T>
Var<T> dropout(Tape<T>& tape, const Var<T>& x, double p, Rng& rng);

struct AttentionSpec {
  int batch = 1;
  int q_len = 1;
  int k_len = 1;
  int heads = 1;
  int head_dim = 1;
  /// Rows per batch element in k/v (>= k_len; larger for preallocated caches).
  int k_rows_per_batch = 0;
  /// Absolute position of query row 0 (incremental decoding).
  int q_offset = 0;
  bool causal = false;
  bool bidirectional = true;
  /// Valid key count per batch element; null means all k_len keys.
  const std::vector<int>* key_len = nullptr;
  int num_buckets = 32;
  int max_distance = 128;
};

/// Multi-head scaled dot-product attention over q [B*Lq, H*K] and k, v
/// [B*rows, H*K]. bias, when given, is a [num_buckets, H] relative position
/// table. If probs is non-null it receives the [B, H, Lq, Lk] weights.
template <class T>
Var<T> attention(Tape<T>& tape, const Var<T>& q, const Var<T>& k, const Var<T>& v,
                 const Var<std::type_identity_t<T>>* bias,
                 const AttentionSpec& spec, std::vector<T>* probs = nullptr);

/// Mean token cross-entropy of logits [N, V] against labels; label < 0 is
/// ignored. Throws DataError when no label is active.
template <class T>
Var<T> cross_entropy(Tape<T>& tape, const Var<T>& logits, const std::vector<std::int32_t>& labels);

}  // namespace ops

/// T5 relative-position bucket of (key_pos - query_pos).
int relative_bucket(int relative_position, bool bidirectional, int num_buckets, int max_distance);

}  // namespace hierbias
