#include "hierbias/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <cblas.h>

#include "hierbias/errors.hpp"

extern "C" void openblas_set_num_threads(int num_threads);

namespace hierbias {

template <class T>
Var<T> make_var(std::vector<int> shape, bool requires_grad) {
  auto v = std::make_shared<Node<T>>();
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw UsageError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  v->shape = std::move(shape);
  v->value.assign(n, T(0));
  v->requires_grad = requires_grad;
  if (requires_grad) v->ensure_grad();
  return v;
}

template <class T>
Var<T> Tape<T>::output(std::vector<int> shape, std::initializer_list<const Var<T>*> inputs) {
  bool rg = false;
  if (recording_) {
    for (const Var<T>* in : inputs) rg = rg || (*in && (*in)->requires_grad);
  }
  return make_var<T>(std::move(shape), rg);
}

template <class T>
void Tape<T>::backward(const Var<T>& scalar) {
  if (!recording_) throw UsageError("backward on a non-recording tape");
  if (scalar->size() != 1) throw UsageError("backward needs a scalar");
  if (!scalar->requires_grad) return;
  scalar->ensure_grad();
  scalar->grad[0] = T(1);
  for (auto it = closures_.rbegin(); it != closures_.rend(); ++it) (*it)();
  closures_.clear();
}

template <>
void gemm<float>(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda, const float* b,
                 int ldb, float beta, float* c, int ldc) {
  if (m == 0 || n == 0) return;
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a,
              lda, b, ldb, beta, c, ldc);
}

template <>
void gemm<double>(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
                  const double* b, int ldb, double beta, double* c, int ldc) {
  if (m == 0 || n == 0) return;
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a,
              lda, b, ldb, beta, c, ldc);
}

void set_strict_determinism(bool strict) {
  if (strict) openblas_set_num_threads(1);
}

int relative_bucket(int relative_position, bool bidirectional, int num_buckets, int max_distance) {
  int ret = 0;
  int n = -relative_position;
  if (bidirectional) {
    num_buckets /= 2;
    if (n < 0) ret += num_buckets;
    n = std::abs(n);
  } else {
    n = std::max(n, 0);
  }
  const int max_exact = num_buckets / 2;
  if (n < max_exact) return ret + n;
  const int large = max_exact + static_cast<int>(std::log(static_cast<double>(n) / max_exact) /
                                                 std::log(static_cast<double>(max_distance) / max_exact) *
                                                 (num_buckets - max_exact));
  return ret + std::min(large, num_buckets - 1);
}

namespace ops {

template <class T>
Var<T> embedding(Tape<T>& tape, const Var<T>& table, const std::vector<std::int32_t>& ids) {
  const int vocab = table->rows(), dim = table->cols();
  auto out = tape.output({static_cast<int>(ids.size()), dim}, {&table});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= vocab) {
      throw DataError("token id " + std::to_string(ids[r]) + " outside vocabulary of size " + std::to_string(vocab));
    }
    std::copy_n(table->value.data() + static_cast<std::size_t>(ids[r]) * dim, dim, out->value.data() + r * dim);
  }
  if (out->requires_grad) {
    tape.on_backward([table, out, ids, dim] {
      for (std::size_t r = 0; r < ids.size(); ++r) {
        T* g = table->grad.data() + static_cast<std::size_t>(ids[r]) * dim;
        const T* d = out->grad.data() + r * dim;
        for (int c = 0; c < dim; ++c) g[c] += d[c];
      }
    });
  }
  return out;
}

template <class T>
Var<T> matmul(Tape<T>& tape, const Var<T>& x, const Var<T>& w) {
  const int n = x->rows(), in = x->cols(), o = w->cols();
  if (w->rows() != in) throw UsageError("matmul shape mismatch");
  auto out = tape.output({n, o}, {&x, &w});
  gemm<T>(false, false, n, o, in, T(1), x->value.data(), in, w->value.data(), o, T(0), out->value.data(), o);
  if (out->requires_grad) {
    tape.on_backward([x, w, out, n, in, o] {
      if (x->requires_grad) {
        gemm<T>(false, true, n, in, o, T(1), out->grad.data(), o, w->value.data(), o, T(1), x->grad.data(), in);
      }
      if (w->requires_grad) {
        gemm<T>(true, false, in, o, n, T(1), x->value.data(), in, out->grad.data(), o, T(1), w->grad.data(), o);
      }
    });
  }
  return out;
}

template <class T>
Var<T> matmul_nt(Tape<T>& tape, const Var<T>& x, const Var<T>& w, T scale) {
  const int n = x->rows(), d = x->cols(), m = w->rows();
  if (w->cols() != d) throw UsageError("matmul_nt shape mismatch");
  auto out = tape.output({n, m}, {&x, &w});
  gemm<T>(false, true, n, m, d, scale, x->value.data(), d, w->value.data(), d, T(0), out->value.data(), m);
  if (out->requires_grad) {
    tape.on_backward([x, w, out, n, d, m, scale] {
      if (x->requires_grad) {
        gemm<T>(false, false, n, d, m, scale, out->grad.data(), m, w->value.data(), d, T(1), x->grad.data(), d);
      }
      if (w->requires_grad) {
        gemm<T>(true, false, m, d, n, scale, out->grad.data(), m, x->value.data(), d, T(1), w->grad.data(), d);
      }
    });
  }
  return out;
}

template <class T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  if (a->size() != b->size()) throw UsageError("add shape mismatch");
  auto out = tape.output(a->shape, {&a, &b});
  for (std::size_t i = 0; i < a->size(); ++i) out->value[i] = a->value[i] + b->value[i];
  if (out->requires_grad) {
    tape.on_backward([a, b, out] {
      for (const auto* in : {&a, &b}) {
        if (!(*in)->requires_grad) continue;
        for (std::size_t i = 0; i < out->size(); ++i) (*in)->grad[i] += out->grad[i];
      }
    });
  }
  return out;
}

template <class T>
Var<T> relu(Tape<T>& tape, const Var<T>& x) {
  auto out = tape.output(x->shape, {&x});
  for (std::size_t i = 0; i < x->size(); ++i) out->value[i] = x->value[i] > T(0) ? x->value[i] : T(0);
  if (tape.activation_pattern) {
    for (std::size_t i = 0; i < x->size(); ++i) tape.activation_pattern->push_back(x->value[i] > T(0));
  }
  if (out->requires_grad) {
    tape.on_backward([x, out] {
      for (std::size_t i = 0; i < x->size(); ++i) {
        if (x->value[i] > T(0)) x->grad[i] += out->grad[i];
      }
    });
  }
  return out;
}

template <class T>
Var<T> rms_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gain, T eps) {
  const int n = x->rows(), d = x->cols();
  if (gain->size() != static_cast<std::size_t>(d)) throw UsageError("rms_norm gain size mismatch");
  auto out = tape.output(x->shape, {&x, &gain});
  std::vector<T> inv(n);
  for (int r = 0; r < n; ++r) {
    const T* xr = x->value.data() + static_cast<std::size_t>(r) * d;
    T ss = 0;
    for (int c = 0; c < d; ++c) ss += xr[c] * xr[c];
    inv[r] = T(1) / std::sqrt(ss / d + eps);
    T* yr = out->value.data() + static_cast<std::size_t>(r) * d;
    for (int c = 0; c < d; ++c) yr[c] = xr[c] * inv[r] * gain->value[c];
  }
  if (out->requires_grad) {
    tape.on_backward([x, gain, out, inv = std::move(inv), n, d] {
      std::vector<T> dxh(d);
      for (int r = 0; r < n; ++r) {
        const T* xr = x->value.data() + static_cast<std::size_t>(r) * d;
        const T* dy = out->grad.data() + static_cast<std::size_t>(r) * d;
        T dot = 0;
        for (int c = 0; c < d; ++c) {
          const T xh = xr[c] * inv[r];
          if (gain->requires_grad) gain->grad[c] += dy[c] * xh;
          dxh[c] = dy[c] * gain->value[c];
          dot += dxh[c] * xh;
        }
        if (!x->requires_grad) continue;
        dot /= d;
        T* dx = x->grad.data() + static_cast<std::size_t>(r) * d;
        for (int c = 0; c < d; ++c) dx[c] += inv[r] * (dxh[c] - xr[c] * inv[r] * dot);
      }
    });
  }
  return out;
}

template <class T>
Var<T> dropout(Tape<T>& tape, const Var<T>& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw UsageError("dropout rate must be below 1");
  auto out = tape.output(x->shape, {&x});
  std::vector<T> mask(x->size());
  const T keep_scale = T(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < x->size(); ++i) {
    mask[i] = rng.chance(p) ? T(0) : keep_scale;
    out->value[i] = x->value[i] * mask[i];
  }
  if (out->requires_grad) {
    tape.on_backward([x, out, mask = std::move(mask)] {
      for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += out->grad[i] * mask[i];
    });
  }
  return out;
}

template <class T>
Var<T> attention(Tape<T>& tape, const Var<T>& q, const Var<T>& k, const Var<T>& v,
                 const Var<std::type_identity_t<T>>* bias, const AttentionSpec& s, std::vector<T>* probs_out) {
  const int B = s.batch, Lq = s.q_len, Lk = s.k_len, H = s.heads, K = s.head_dim, HK = H * K;
  const int krows = s.k_rows_per_batch > 0 ? s.k_rows_per_batch : Lk;
  if (q->cols() != HK || k->cols() != HK || v->cols() != HK) throw UsageError("attention width mismatch");
  if (q->rows() != B * Lq || k->rows() < (B - 1) * krows + Lk || v->rows() != k->rows()) {
    throw UsageError("attention row count mismatch");
  }
  const Var<T> no_bias;
  const Var<T>& bias_var = bias ? *bias : no_bias;
  auto out = tape.output({B * Lq, HK}, {&q, &k, &v, &bias_var});
  const T scale = T(1) / std::sqrt(static_cast<T>(K));

  std::vector<int> bucket;
  if (bias_var) {
    bucket.resize(static_cast<std::size_t>(Lq) * Lk);
    for (int i = 0; i < Lq; ++i) {
      for (int j = 0; j < Lk; ++j) {
        bucket[static_cast<std::size_t>(i) * Lk + j] =
            relative_bucket(j - (i + s.q_offset), s.bidirectional, s.num_buckets, s.max_distance);
      }
    }
  }
  auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(B) * H * Lq * Lk);
  const T neg_inf = -std::numeric_limits<T>::infinity();
  for (int b = 0; b < B; ++b) {
    const int valid = s.key_len ? std::min((*s.key_len)[b], Lk) : Lk;
    for (int h = 0; h < H; ++h) {
      T* P = probs->data() + (static_cast<std::size_t>(b) * H + h) * Lq * Lk;
      const T* qb = q->value.data() + static_cast<std::size_t>(b) * Lq * HK + h * K;
      const T* kb = k->value.data() + static_cast<std::size_t>(b) * krows * HK + h * K;
      const T* vb = v->value.data() + static_cast<std::size_t>(b) * krows * HK + h * K;
      gemm<T>(false, true, Lq, Lk, K, scale, qb, HK, kb, HK, T(0), P, Lk);
      for (int i = 0; i < Lq; ++i) {
        T* row = P + static_cast<std::size_t>(i) * Lk;
        const int limit = s.causal ? std::min(valid, i + s.q_offset + 1) : valid;
        T mx = neg_inf;
        for (int j = 0; j < limit; ++j) {
          if (bias_var) row[j] += bias_var->value[bucket[static_cast<std::size_t>(i) * Lk + j] * H + h];
          mx = std::max(mx, row[j]);
        }
        T sum = 0;
        for (int j = 0; j < limit; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        for (int j = 0; j < limit; ++j) row[j] /= sum;
        for (int j = std::max(limit, 0); j < Lk; ++j) row[j] = T(0);
      }
      gemm<T>(false, false, Lq, K, Lk, T(1), P, Lk, vb, HK, T(0),
              out->value.data() + static_cast<std::size_t>(b) * Lq * HK + h * K, HK);
    }
  }
  if (probs_out) *probs_out = *probs;
  if (out->requires_grad) {
    tape.on_backward([q, k, v, bias_var, out, probs, bucket = std::move(bucket), B, Lq, Lk, H, K, HK, krows,
                      scale] {
      std::vector<T> dP(static_cast<std::size_t>(Lq) * Lk);
      for (int b = 0; b < B; ++b) {
        for (int h = 0; h < H; ++h) {
          const T* P = probs->data() + (static_cast<std::size_t>(b) * H + h) * Lq * Lk;
          const std::size_t qoff = static_cast<std::size_t>(b) * Lq * HK + h * K;
          const std::size_t koff = static_cast<std::size_t>(b) * krows * HK + h * K;
          const T* dO = out->grad.data() + qoff;
          if (v->requires_grad) gemm<T>(true, false, Lk, K, Lq, T(1), P, Lk, dO, HK, T(1), v->grad.data() + koff, HK);
          gemm<T>(false, true, Lq, Lk, K, T(1), dO, HK, v->value.data() + koff, HK, T(0), dP.data(), Lk);
          for (int i = 0; i < Lq; ++i) {
            const T* p = P + static_cast<std::size_t>(i) * Lk;
            T* d = dP.data() + static_cast<std::size_t>(i) * Lk;
            T dot = 0;
            for (int j = 0; j < Lk; ++j) dot += p[j] * d[j];
            for (int j = 0; j < Lk; ++j) d[j] = p[j] * (d[j] - dot);
            if (bias_var && bias_var->requires_grad) {
              for (int j = 0; j < Lk; ++j) bias_var->grad[bucket[static_cast<std::size_t>(i) * Lk + j] * H + h] += d[j];
            }
          }
          if (q->requires_grad) {
            gemm<T>(false, false, Lq, K, Lk, scale, dP.data(), Lk, k->value.data() + koff, HK, T(1),
                    q->grad.data() + qoff, HK);
          }
          if (k->requires_grad) {
            gemm<T>(true, false, Lk, K, Lq, scale, dP.data(), Lk, q->value.data() + qoff, HK, T(1),
                    k->grad.data() + koff, HK);
          }
        }
      }
    });
  }
  return out;
}

template <class T>
Var<T> cross_entropy(Tape<T>& tape, const Var<T>& logits, const std::vector<std::int32_t>& labels) {
  const int n = logits->rows(), V = logits->cols();
  if (static_cast<int>(labels.size()) != n) throw UsageError("cross_entropy label count mismatch");
  auto out = tape.output({1}, {&logits});
  auto soft = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n) * V);
  int active = 0;
  double total = 0;
  for (int r = 0; r < n; ++r) {
    if (labels[r] < 0) continue;
    if (labels[r] >= V) throw DataError("label " + std::to_string(labels[r]) + " outside vocabulary");
    ++active;
    const T* row = logits->value.data() + static_cast<std::size_t>(r) * V;
    T* p = soft->data() + static_cast<std::size_t>(r) * V;
    T mx = *std::max_element(row, row + V);
    T sum = 0;
    for (int c = 0; c < V; ++c) {
      p[c] = std::exp(row[c] - mx);
      sum += p[c];
    }
    for (int c = 0; c < V; ++c) p[c] /= sum;
    total += static_cast<double>(mx + std::log(sum) - row[labels[r]]);
  }
  if (active == 0) throw DataError("cross-entropy over an empty target");
  out->value[0] = static_cast<T>(total / active);
  if (out->requires_grad) {
    tape.on_backward([logits, out, soft, labels, n, V, active] {
      const T g = out->grad[0] / static_cast<T>(active);
      for (int r = 0; r < n; ++r) {
        if (labels[r] < 0) continue;
        const T* p = soft->data() + static_cast<std::size_t>(r) * V;
        T* d = logits->grad.data() + static_cast<std::size_t>(r) * V;
        for (int c = 0; c < V; ++c) d[c] += g * p[c];
        d[labels[r]] -= g;
      }
    });
  }
  return out;
}

#define HIERBIAS_INSTANTIATE_OPS(T)                                                                        \
  template Var<T> embedding<T>(Tape<T>&, const Var<T>&, const std::vector<std::int32_t>&);                \
  template Var<T> matmul<T>(Tape<T>&, const Var<T>&, const Var<T>&);                                     \
  template Var<T> matmul_nt<T>(Tape<T>&, const Var<T>&, const Var<T>&, T);                                \
  template Var<T> add<T>(Tape<T>&, const Var<T>&, const Var<T>&);                                        \
  template Var<T> relu<T>(Tape<T>&, const Var<T>&);                                                      \
  template Var<T> rms_norm<T>(Tape<T>&, const Var<T>&, const Var<T>&, T);                                 \
  template Var<T> dropout<T>(Tape<T>&, const Var<T>&, double, Rng&);                                     \
  template Var<T> attention<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&,                   \
                               const Var<std::type_identity_t<T>>*,                                     \
                               const AttentionSpec&, std::vector<T>*);                                    \
  template Var<T> cross_entropy<T>(Tape<T>&, const Var<T>&, const std::vector<std::int32_t>&);

HIERBIAS_INSTANTIATE_OPS(float)
HIERBIAS_INSTANTIATE_OPS(double)

}  // namespace ops

template Var<float> make_var<float>(std::vector<int>, bool);
template Var<double> make_var<double>(std::vector<int>, bool);
template class Tape<float>;
template class Tape<double>;

}  // namespace hierbias
