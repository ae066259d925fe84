#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hierbias/tensor.hpp"

namespace hierbias {

using TokenId = std::int32_t;

/// Encoder-decoder shape. Attention inner width is heads * kv and is
/// independent of dm.
struct ArchConfig {
  int el = 2;
  int dl = 2;
  int dm = 64;
  int ff = 256;
  int nh = 4;
  int kv = 16;
  int vocab = 0;
  int max_len = 128;
  bool tie_embeddings = true;

  void validate() const;
  /// Stable short identifier, e.g. "EL2-DL2-DM64-FF256-NH4-KV16-V128-tied".
  std::string fingerprint() const;
  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

/// Named presets: tiny, mini, small, base (with the given vocabulary) and
/// desk (EL2/DL2 DM64 FF256 NH4 KV16).
ArchConfig arch_preset(std::string_view name, int vocab);

inline constexpr int kRelBuckets = 32;
inline constexpr int kRelMaxDistance = 128;

/// Closed form:
///   embeddings     vocab*dm            (twice when untied: separate lm_head)
///   encoder layer  4*dm*nh*kv + 2*dm*ff + 2*dm
///   decoder layer  8*dm*nh*kv + 2*dm*ff + 3*dm
///   final norms    2*dm
///   relative bias  2*32*nh             (one table per stack)
/// Projections carry no bias terms; norms are gain-only RMS norms.
std::int64_t count_params(const ArchConfig& c);

/// Per-parameter shapes in canonical order; sums to count_params.
std::vector<std::pair<std::string, std::vector<int>>> parameter_shapes(const ArchConfig& c);

/// Padded teacher-forcing batch. Decoder input is the target shifted right
/// behind a pad start token; labels are -1 under padding.
struct Seq2SeqBatch {
  int batch = 0;
  int src_len = 0;
  int tgt_len = 0;
  std::vector<TokenId> src;
  std::vector<int> src_lengths;
  std::vector<TokenId> dec_in;
  std::vector<TokenId> labels;
};

/// Throws DataError on an empty source or target or one longer than max_len.
Seq2SeqBatch make_batch(const std::vector<std::vector<TokenId>>& srcs,
                        const std::vector<std::vector<TokenId>>& tgts, int max_len);

struct ParamBlock {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

/// On-disk layout, little-endian:
///   magic "HBCKPT" + 2 zero bytes, version u8 (=1),
///   el dl dm ff nh kv vocab max_len as u32, tie u8,
///   step u64, rng fingerprint u64, tokenizer fingerprint u64,
///   block count u32, then per block: name length u32, name bytes,
///   rank u32, dims u32..., values f32...
struct Checkpoint {
  ArchConfig arch;
  std::uint64_t step = 0;
  std::uint64_t rng_fingerprint = 0;
  std::uint64_t tokenizer_fingerprint = 0;
  std::vector<ParamBlock> blocks;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Autoregressive source of next-token logits, one row per batch element.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual int vocab() const = 0;
  virtual void begin(const std::vector<std::vector<TokenId>>& srcs) = 0;
  /// last holds the previous token per row (pad at step 0). Fills logits
  /// [rows * vocab].
  virtual void step(int t, const std::vector<TokenId>& last, std::vector<double>& logits) = 0;
};

/// Argmax decoding (lowest id on ties) until eos or max_len tokens. Returned
/// sequences exclude eos.
std::vector<std::vector<TokenId>> greedy_decode(StepScorer& scorer, const std::vector<std::vector<TokenId>>& srcs,
                                                int max_len);

template <class T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

/// Per-call attention weights, captured for inspection.
template <class T>
struct AttentionTrace {
  struct Entry {
    std::string name;
    ops::AttentionSpec spec;
    std::vector<T> probs;
  };
  std::vector<Entry> entries;
};

/// Pre-norm T5-style encoder-decoder: RMS norm before each sublayer, ReLU
/// feed-forward, bucketed relative position bias shared across the layers
/// of each self-attention stack, no bias vectors. Weights are drawn from
/// N(0, 1/fan_in); norm gains start at 1 and position biases at 0.
template <class T>
class Transformer {
 public:
  Transformer(const ArchConfig& config, std::uint64_t seed);
  static Transformer from_checkpoint(const Checkpoint& ckpt);
  Transformer(const Transformer&) = delete;
  Transformer& operator=(const Transformer&) = delete;
  Transformer(Transformer&&) noexcept = default;
  Transformer& operator=(Transformer&&) noexcept = default;

  const ArchConfig& config() const { return config_; }
  const std::vector<NamedParam<T>>& parameters() const { return params_; }
  const Var<T>& param(std::string_view name) const;
  std::int64_t num_params() const;

  /// Dropout on embeddings and sublayer outputs while recording (default 0).
  void set_dropout(double p, std::uint64_t seed);

  /// Logits [batch * tgt_len, vocab].
  Var<T> logits(Tape<T>& tape, const Seq2SeqBatch& batch, AttentionTrace<T>* trace = nullptr);
  /// Mean cross-entropy over non-pad target tokens.
  Var<T> loss(Tape<T>& tape, const Seq2SeqBatch& batch);
  void zero_grad();
  /// Name of the first parameter holding a non-finite value or gradient;
  /// empty when all are finite.
  std::string find_nonfinite() const;

  Checkpoint to_checkpoint(std::uint64_t step, std::uint64_t rng_fingerprint,
                           std::uint64_t tokenizer_fingerprint) const;

  /// Batched greedy decoding with cached keys/values.
  std::vector<std::vector<TokenId>> greedy_decode(const std::vector<std::vector<TokenId>>& srcs, int max_len,
                                                  int batch_size = 256) const;

 private:
  class Scorer;
  friend class Scorer;

  void add_param(const std::string& name, std::vector<int> shape, double stddev, double constant, Rng& rng);
  Var<T> encode(Tape<T>& tape, const std::vector<TokenId>& src, int batch, int src_len,
                const std::vector<int>& src_lengths, AttentionTrace<T>* trace) const;
  Var<T> output_logits(Tape<T>& tape, const Var<T>& h) const;
  Var<T> ffn(Tape<T>& tape, const std::string& prefix, const Var<T>& x) const;
  Var<T> maybe_dropout(Tape<T>& tape, const Var<T>& x) const;

  ArchConfig config_;
  std::vector<NamedParam<T>> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
  double dropout_ = 0.0;
  mutable Rng dropout_rng_{0};
};

/// Largest relative error |analytic - numeric| / max(|analytic|, |numeric|, floor)
/// over `samples` parameter entries (every tensor sampled at least once),
/// using central differences with step eps on a double-precision model.
/// Entries whose +-eps evaluations differ in ReLU activation pattern are
/// replaced by a fresh draw from the same tensor and counted in skipped_kinks.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  int checked = 0;
  int skipped_kinks = 0;
};
GradCheckResult grad_check(Transformer<double>& model, const Seq2SeqBatch& batch, double eps, int samples,
                           std::uint64_t seed, double floor = 1e-8);

}  // namespace hierbias
